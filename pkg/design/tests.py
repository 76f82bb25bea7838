import json
import os
import tempfile
from functools import lru_cache

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from config import Config
from design.io.results import design_to_dict, dump_design, load_design
from design.logic.inputdesign import (
    check_input_set, design_input, extract_input, performance_index,
)
from design.logic.margins import robust_margin_check
from design.logic.maxmin import ellipsoid_factor, maxmin_optimize, sphere_lower_bound
from systems.io.modelfile import parse_model_file
from systems.logic.algebra import final_state, simulate
from systems.logic.gramians import reach_gramian, reachability_matrix
from systems.models import InputSetError, Signal, StateSpaceModel


@lru_cache(maxsize=None)
def benchmark_models():
    return parse_model_file(Config.DEFAULT_MODEL_FILE)


@lru_cache(maxsize=None)
def benchmark_design():
    return design_input(benchmark_models())


def random_system(seed: int, n: int = 4) -> StateSpaceModel:
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A *= 0.8 / np.max(np.abs(np.linalg.eigvals(A)))
    return StateSpaceModel(A, rng.standard_normal((n, 1)), rng.standard_normal((1, n)), [[0.0]])


class MaxMinTests(SimpleTestCase):
    Q1 = np.array([[2.0, 0.5], [0.5, 0.3]])
    Q2 = np.array([[0.2, 0.0], [0.0, 1.5]])
    P = np.array([[1.0, 0.2], [0.2, 0.5]])

    def test_single_form_is_top_eigenvalue(self):
        Q = np.diag([3.0, 1.0, 2.0])
        result = maxmin_optimize(np.eye(3), [Q], starts=4, seed=0)
        self.assertAlmostEqual(result.value, 3.0, delta=3e-9)
        assert_allclose(np.abs(result.zeta), [1.0, 0.0, 0.0], atol=1e-6)
        self.assertTrue(result.feasible)

    def test_two_dimensional_grid(self):
        L = np.linalg.cholesky(self.P)
        theta = np.linspace(0.0, np.pi, 200001)
        Z = L @ np.vstack([np.cos(theta), np.sin(theta)])
        values = np.minimum(np.einsum('is,ij,js->s', Z, self.Q1, Z), np.einsum('is,ij,js->s', Z, self.Q2, Z))
        grid_max = float(np.max(values))

        result = maxmin_optimize(self.P, [self.Q1, self.Q2], starts=16, seed=0)
        self.assertGreaterEqual(result.value, grid_max - 1e-12)
        self.assertLessEqual(result.value, grid_max * (1 + 1e-4))
        zeta = result.zeta
        self.assertAlmostEqual(zeta @ np.linalg.solve(self.P, zeta), 1.0, delta=1e-8)

    def test_random_low_dimensional_instances(self):
        rng = np.random.default_rng(11)
        k = np.arange(400000) + 0.5
        polar = np.arccos(1 - 2 * k / k.size)
        azimuth = np.pi * (1 + 5 ** 0.5) * k
        sphere = np.vstack([np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)])
        for _ in range(20):
            A = rng.standard_normal((3, 3))
            P = A @ A.T + 0.1 * np.eye(3)
            Q_list = []
            for _ in range(3):
                B = rng.standard_normal((3, 3))
                Q_list.append(B @ B.T)
            Z = np.linalg.cholesky(P) @ sphere
            grid_max = float(np.max(np.min([np.einsum('is,ij,js->s', Z, Q, Z) for Q in Q_list], axis=0)))
            result = maxmin_optimize(P, Q_list)
            self.assertGreaterEqual(result.value, 0.98 * grid_max)

    def test_scale_invariance(self):
        base = maxmin_optimize(self.P, [self.Q1, self.Q2], starts=8, seed=3)
        scaled_P = maxmin_optimize(4 * self.P, [self.Q1, self.Q2], starts=8, seed=3)
        scaled_Q = maxmin_optimize(self.P, [4 * self.Q1, 4 * self.Q2], starts=8, seed=3)
        self.assertAlmostEqual(scaled_P.value / base.value, 4.0, delta=4e-9)
        self.assertAlmostEqual(scaled_Q.value / base.value, 4.0, delta=4e-9)

    def test_trace(self):
        result = maxmin_optimize(self.P, [self.Q1, self.Q2], starts=5, seed=2)
        trace = result.trace
        self.assertEqual(len(trace.start_values), 5)
        self.assertEqual(len(trace.local_optima), 5)
        self.assertEqual(trace.local_optima[trace.chosen], max(trace.local_optima))
        self.assertEqual(trace.reduced_dimension, 2)

    def test_vanishing_forms(self):
        result = maxmin_optimize(np.eye(2), [np.zeros((2, 2))], starts=3, seed=0)
        self.assertEqual(result.value, 0.0)
        self.assertFalse(result.feasible)

    def test_rank_deficient_ellipsoid(self):
        P = np.diag([1.0, 0.0])
        L = ellipsoid_factor(P)
        self.assertEqual(L.shape, (2, 1))
        result = maxmin_optimize(P, [np.eye(2)], starts=2, seed=0)
        self.assertAlmostEqual(result.value, 1.0)
        self.assertAlmostEqual(result.zeta[1], 0.0)


class InputExtractionTests(SimpleTestCase):
    def test_boundary_state_is_reached_with_unit_energy(self):
        ss = random_system(0)
        R, P = reachability_matrix(ss, 8), reach_gramian(ss, 8)
        L = ellipsoid_factor(P)
        eta = np.random.default_rng(1).standard_normal(L.shape[1])
        zeta = L @ (eta / np.linalg.norm(eta))
        u = extract_input(R, P, zeta, 8)
        self.assertEqual((u.start, len(u)), (-8, 8))
        self.assertAlmostEqual(u.energy(), 1.0, delta=1e-8)
        assert_allclose(final_state(ss, u), zeta, atol=1e-8 * np.linalg.norm(zeta))

    def test_single_sample_window(self):
        ss = random_system(2)
        B = ss.B[:, 0]
        u = extract_input(reachability_matrix(ss, 1), reach_gramian(ss, 1), B, 1)
        self.assertEqual(u.start, -1)
        assert_allclose(u.values, [[1.0]])

    def test_unreachable_state(self):
        ss = random_system(3)
        B = ss.B[:, 0]
        orthogonal = np.linalg.svd(B.reshape(-1, 1))[0][:, 1]
        with self.assertRaises(ValueError):
            extract_input(reachability_matrix(ss, 1), reach_gramian(ss, 1), orthogonal, 1)


class InputSetTests(SimpleTestCase):
    def test_unit_energy_past_input_is_accepted(self):
        u = Signal(np.full(4, 0.5), -4)
        self.assertEqual(check_input_set(u, 4).start, -4)
        # trailing zeros on the measurement window are allowed
        check_input_set(u.extended(-4, 3), 4)

    def test_rejections(self):
        with self.assertRaises(InputSetError):
            check_input_set(Signal(np.full(4, 0.25), -4), 4)
        values = np.zeros(6)
        values[0] = 1.0
        values[-1] = 1e-3
        with self.assertRaises(InputSetError):
            check_input_set(Signal(values, -4), 4)
        with self.assertRaises(InputSetError):
            check_input_set(Signal(np.full(5, np.sqrt(0.2)), -5), 4)
        with self.assertRaises(InputSetError):
            check_input_set(Signal(np.full((4, 2), np.sqrt(0.125)), -4), 4)


class BenchmarkDesignTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.ms = benchmark_models()
        cls.dr = benchmark_design()

    def test_design_is_feasible(self):
        dr = self.dr
        self.assertTrue(dr.feasible)
        self.assertGreater(dr.gamma_norm, 0.04)
        self.assertAlmostEqual(dr.gamma_norm ** 2, dr.gamma_energy)
        self.assertEqual(len(dr.per_block_values), 12)
        self.assertAlmostEqual(min(dr.per_block_values), dr.gamma_energy, delta=1e-8)

    def test_input_reaches_the_optimal_state(self):
        dr = self.dr
        self.assertAlmostEqual(dr.u_star.energy(), 1.0, delta=1e-8)
        self.assertEqual((dr.u_star.start, len(dr.u_star)), (-32, 32))
        zeta = final_state(dr.bank.F, dr.u_star)
        assert_allclose(zeta, dr.zeta0_star, atol=1e-8 * np.linalg.norm(zeta))

    def test_gamma_matches_simulated_residuals(self):
        dr = self.dr
        bank = dr.bank
        v = simulate(bank.F, dr.u_star.extended(-32, 33), window=(0, 33))
        energies = [float(np.sum(v.values[:, rows] ** 2)) for rows in bank.block_rows]
        assert_allclose(energies, dr.per_block_values, atol=1e-8)
        self.assertAlmostEqual(min(energies), dr.gamma_energy, delta=1e-8)

        u = Signal(np.random.default_rng(0).standard_normal(32), -32)
        index = performance_index(bank, u.scaled(1 / u.norm()))
        v = simulate(bank.F, u.scaled(1 / u.norm()).extended(-32, 33), window=(0, 33))
        energies = [float(np.sum(v.values[:, rows] ** 2)) for rows in bank.block_rows]
        self.assertAlmostEqual(index.gamma_energy, min(energies), delta=1e-8)

    def test_beats_random_inputs(self):
        dr = self.dr
        rng = np.random.default_rng(5)
        U = rng.standard_normal((32, 10000))
        U /= np.linalg.norm(U, axis=0)
        Z = dr.gramians.Rmat @ U
        values = np.min([np.einsum('is,ij,js->s', Z, Q, Z) for Q in dr.gramians.Q], axis=0)
        self.assertGreaterEqual(dr.gamma_energy, float(np.max(values)))

        bound = sphere_lower_bound(dr.gramians.P, dr.gramians.Q, 100000, seed=1)
        self.assertGreaterEqual(dr.gamma_energy, bound)

    def test_fewer_models_do_not_lower_gamma(self):
        pair = design_input(self.ms.subset([0, 1]), margins=False)
        relevant = [self.dr.per_block_values[l] for l, (i, j) in self.dr.block_index.items()
                    if {i, j} == {0, 1}]
        self.assertEqual(len(relevant), 2)
        self.assertGreaterEqual(pair.gamma_energy, min(relevant) * (1 - 1e-6))

    def test_per_model_design(self):
        dr = design_input(self.ms, scope='model', i=1, margins=False)
        self.assertEqual(dr.model_index, 1)
        self.assertEqual(sorted(dr.block_index.values()), [(1, 0), (1, 2), (1, 3)])
        self.assertTrue(dr.feasible)
        with self.assertRaises(ValueError):
            design_input(self.ms, scope='model', margins=False)

    def test_duplicate_models_are_infeasible(self):
        dr = design_input(self.ms.subset([0, 0]), margins=False)
        self.assertFalse(dr.feasible)
        self.assertLessEqual(dr.gamma_energy, Config.FEASIBILITY_TOL)
        self.assertEqual(dr.bank.degenerate_blocks, (0, 1))

    def test_margins(self):
        report = self.dr.margin_report
        self.assertEqual(len(report.models), 4)
        exact = report.models[0]
        self.assertLessEqual(exact.delta_hankel_estimate, 1e-12)
        self.assertTrue(exact.satisfied)
        self.assertEqual(exact.samples_evaluated, 1)
        # G_2 has four unstable vertices that are skipped
        self.assertEqual(report.models[2].samples_evaluated, 4 + Config.MARGIN_RANDOM_SAMPLES)
        for margin in report.models[1:]:
            self.assertGreater(margin.delta_hankel_estimate, 0)
            self.assertIsNotNone(margin.nominal_separation)

    def test_inflated_boxes_violate_the_condition(self):
        report = robust_margin_check(self.ms.with_box_scale(100), self.dr, random_samples=20, seed=0)
        self.assertFalse(report.satisfied)
        self.assertTrue(report.violated)
        self.assertTrue(report.models[0].satisfied)

    def test_unsampleable_box_fails_the_check(self):
        report = robust_margin_check(self.ms.with_box_scale(1e4), self.dr, random_samples=5, indices=[0, 2])
        exact, unstable = report.models
        self.assertTrue(exact.satisfied)
        self.assertEqual(unstable.samples_evaluated, 0)
        self.assertFalse(unstable.satisfied)
        self.assertFalse(unstable.separation_satisfied)
        self.assertFalse(unstable.output_check_satisfied)
        self.assertFalse(report.satisfied)
        self.assertEqual(report.violated, [unstable])

    def test_separation_condition_is_reported(self):
        report = self.dr.margin_report
        for margin in report.models:
            self.assertIsNotNone(margin.separation_satisfied)
        self.assertIn('separation_satisfied', report.to_dict())
        # exact model: zero deviation leaves every nominal separation intact
        self.assertTrue(report.models[0].separation_satisfied)


class DesignFileTests(SimpleTestCase):
    def test_json_is_deterministic(self):
        ms = benchmark_models()
        first = json.dumps(design_to_dict(design_input(ms, starts=8, margins=False)))
        second = json.dumps(design_to_dict(design_input(ms, starts=8, margins=False)))
        self.assertEqual(first, second)

    def test_saved_design_reloads(self):
        dr = benchmark_design()
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'design.json')
            dump_design(path, dr)
            with open(path) as f:
                data = json.load(f)
            self.assertIn('gamma_convention', data)
            self.assertEqual(len(data['u_star']['values']), 32)
            loaded = load_design(path)
        self.assertEqual(design_to_dict(loaded), design_to_dict(dr))
        self.assertEqual(loaded.separation(1, 0), dr.separation(1, 0))
        self.assertIsNone(loaded.bank)
