import json
import os
import tempfile

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase
from numpy.testing import assert_allclose
from scipy.linalg import svdvals

from config import Config
from systems.io.modelfile import parse_model_file
from systems.io.signals import read_signal_csv, write_signal_csv
from systems.logic.algebra import (
    build_bank, build_output_nulling, cross_residual, final_state, identity, parallel, series,
    simulate, stack, static_gain,
)
from systems.logic.gramians import (
    gramian_hankel_norm, hankel_matrix, hankel_norm, l2_induced_norm, normalize, obs_gramian,
    reach_gramian, reachability_matrix, scale_factor, toeplitz_matrix,
)
from systems.logic.initstate import (
    build_MN, free_response, least_squares_x0, past_input_x0, residual_from_state,
)
from systems.logic.realization import (
    box_samples, delta_system, frequency_grid, realize, sample_model, sample_uncertainty, vertex_count,
    vertex_parameters, worst_case_vertex,
)
from systems.models import (
    DegenerateSystemError, ModelFileError, NormKind, SampleMode, Section, Signal,
    StateSpaceModel, TransferFunctionSpec, UnstableModelError,
)

BENCHMARK_FILE = Config.DEFAULT_MODEL_FILE


def scalar_system(a, b, c, d) -> StateSpaceModel:
    return StateSpaceModel([[a]], [[b]], [[c]], [[d]])


def random_system(rng, n=4, radius=0.8) -> StateSpaceModel:
    A = rng.standard_normal((n, n))
    A *= radius / np.max(np.abs(np.linalg.eigvals(A)))
    return StateSpaceModel(A, rng.standard_normal((n, 1)), rng.standard_normal((1, n)),
                           rng.standard_normal((1, 1)))


def impulse_response(ss: StateSpaceModel, samples: int) -> np.ndarray:
    u = np.zeros((samples, ss.n_inputs))
    u[0] = 1.0
    return simulate(ss, Signal(u, 0)).values


def benchmark_data():
    with open(BENCHMARK_FILE, 'r', encoding='utf-8') as f:
        return json.load(f)


class ModelFileTests(SimpleTestCase):
    def write(self, data) -> str:
        handle, path = tempfile.mkstemp(suffix='.json')
        with os.fdopen(handle, 'w') as f:
            json.dump(data, f)
        self.addCleanup(os.remove, path)
        return path

    def test_benchmark_set_is_loaded(self):
        ms = parse_model_file(BENCHMARK_FILE)
        self.assertEqual(ms.indices, [0, 1, 2, 3])
        self.assertEqual(ms.labels, ['G_0', 'G_1', 'G_2', 'G_3'])
        self.assertEqual((ms.t_minus, ms.t_plus), (32, 32))
        self.assertEqual(ms.sample_rate, 2e6)
        self.assertTrue(ms[0].uncertainty.is_exact)
        self.assertEqual(ms[2].uncertainty.uncertain_parameters, ['a1', 'a3', 'a4'])

    def test_single_model_is_rejected(self):
        data = benchmark_data()
        data['models'] = data['models'][:1]
        with self.assertRaisesMessage(ValidationError, 'need at least one fault model'):
            parse_model_file(self.write(data))

    def test_unstable_model_is_rejected(self):
        data = benchmark_data()
        data['models'][0]['sections'][1]['a2'] = 1.2
        with self.assertRaises(UnstableModelError) as ctx:
            parse_model_file(self.write(data))
        self.assertEqual(ctx.exception.parameters['a4'], 1.2)

    def test_schema_violations(self):
        data = benchmark_data()
        del data['t_plus']
        with self.assertRaises(ModelFileError):
            parse_model_file(self.write(data))

        data = benchmark_data()
        data['models'][1]['sections'][0]['b1'] = 'large'
        with self.assertRaises(ModelFileError):
            parse_model_file(self.write(data))

        data = benchmark_data()
        data['models'][1]['uncertainty'] = {'a9': 0.1}
        with self.assertRaises(ModelFileError):
            parse_model_file(self.write(data))

        with self.assertRaises(ModelFileError):
            parse_model_file('/nonexistent/models.json')

    def test_negative_half_width(self):
        data = benchmark_data()
        data['models'][1]['uncertainty'] = {'a6': -0.02}
        with self.assertRaises(ValidationError):
            parse_model_file(self.write(data))


class RealizationTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.ms = parse_model_file(BENCHMARK_FILE)

    def test_state_dimensions(self):
        models = self.ms.nominal_models()
        self.assertEqual([ss.n_states for ss in models], [4, 6, 4, 4])
        for ss in models:
            self.assertLess(ss.spectral_radius, 1.0)

    def test_frequency_response_matches_sections(self):
        omegas = frequency_grid(Config.REALIZATION_CHECK_POINTS)
        for entry in self.ms:
            expected = entry.tf.frequency_response(omegas)
            actual = realize(entry.tf).frequency_response(omegas)[:, 0, 0]
            assert_allclose(actual, expected, rtol=1e-10, atol=1e-10 * np.max(np.abs(expected)))

    def test_pure_gain(self):
        tf = TransferFunctionSpec(gain=0.3, sections=(Section(0, 0, 0, 0),))
        ss = realize(tf)
        self.assertTrue(ss.is_static)
        assert_allclose(ss.D, [[0.3]])

    def test_section_stability(self):
        with self.assertRaises(UnstableModelError):
            TransferFunctionSpec(gain=1.0, sections=(Section(0.0, 0.0, -2.0, 1.1),))
        with self.assertRaises(ValidationError):
            TransferFunctionSpec(gain=1.0, sections=())


class SamplingTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.ms = parse_model_file(BENCHMARK_FILE)

    def assertSameSystem(self, a: StateSpaceModel, b: StateSpaceModel):
        for name in 'ABCD':
            assert_allclose(getattr(a, name), getattr(b, name))

    def test_exact_model_ignores_mode(self):
        nominal = realize(self.ms[0].tf)
        for mode in (SampleMode.nominal(), SampleMode.random(3), SampleMode.at_vertex(0),
                     SampleMode.worst_case()):
            self.assertSameSystem(sample_uncertainty(self.ms, 0, mode), nominal)

    def test_nominal_is_center(self):
        self.assertSameSystem(sample_uncertainty(self.ms, 2, SampleMode.nominal()), realize(self.ms[2].tf))

    def test_worst_case_against_enumeration(self):
        entry = self.ms[1]
        omegas = frequency_grid(Config.WORST_CASE_GRID_POINTS)
        nominal = entry.tf.frequency_response(omegas)
        values = []
        for code in range(vertex_count(entry)):
            spec = entry.tf.with_parameters(vertex_parameters(entry, code))
            values.append(np.max(np.abs(spec.frequency_response(omegas) - nominal)))
        code, value = worst_case_vertex(entry)
        self.assertEqual(vertex_count(entry), 4)
        self.assertEqual(code, int(np.argmax(values)))
        self.assertAlmostEqual(value, max(values))
        sample = sample_model(self.ms, 1, SampleMode.worst_case())
        self.assertEqual(sample.vertex, code)

    def test_unstable_vertex(self):
        # lower a1 bound of G_2 puts a real pole outside the unit circle
        with self.assertRaises(UnstableModelError):
            sample_uncertainty(self.ms, 2, SampleMode.at_vertex(0))
        code, _ = worst_case_vertex(self.ms[2])
        self.assertEqual(code % 2, 1)

    def test_box_samples_keep_stable_vertices(self):
        samples = box_samples(self.ms[2], 5, seed=0)
        self.assertEqual([s.vertex for s in samples[:4]], [1, 3, 5, 7])
        self.assertEqual(len(samples), 4 + 5)

    def test_box_samples_of_an_unstable_box(self):
        entry = self.ms.with_box_scale(1e4)[2]
        self.assertEqual(box_samples(entry, 5, seed=Config.MARGIN_SEED + 2), [])

    def test_random_draw_is_seeded_and_in_box(self):
        a = sample_model(self.ms, 2, SampleMode.random(7))
        b = sample_model(self.ms, 2, SampleMode.random(7))
        self.assertEqual(a.parameters, b.parameters)
        bounds = self.ms[2].uncertainty.bounds(self.ms[2].tf.parameters())
        for name, value in a.parameters.items():
            self.assertLessEqual(bounds[name][0], value)
            self.assertLessEqual(value, bounds[name][1])
        self.assertLess(a.realize().spectral_radius, 1.0)

    def test_vertex_code_range(self):
        with self.assertRaises(ValueError):
            sample_uncertainty(self.ms, 1, SampleMode.at_vertex(4))

    def test_box_scale(self):
        shrunk = self.ms.with_box_scale(0.5)
        self.assertEqual(shrunk[1].uncertainty.half_widths['a6'], 0.01)
        self.assertEqual(self.ms[1].uncertainty.half_widths['a6'], 0.02)


class DeltaSystemTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.ms = parse_model_file(BENCHMARK_FILE)
        cls.samples = 4 * (cls.ms.t_minus + cls.ms.t_plus)

    def test_zero_perturbation(self):
        for ss in self.ms.nominal_models():
            delta = delta_system(ss, ss)
            assert_allclose(impulse_response(delta, self.samples), 0, atol=1e-10)
            self.assertLessEqual(hankel_norm(delta, self.ms.t_minus, self.ms.t_plus), 1e-10)

    def test_vertex_difference(self):
        nominal = realize(self.ms[1].tf)
        vertex = sample_uncertainty(self.ms, 1, SampleMode.at_vertex(3))
        delta = delta_system(nominal, vertex)
        expected = impulse_response(vertex, self.samples) - impulse_response(nominal, self.samples)
        assert_allclose(impulse_response(delta, self.samples), expected, atol=1e-10)
        self.assertGreater(hankel_norm(delta, self.ms.t_minus, self.ms.t_plus), 0)

    def test_static_gains(self):
        delta = delta_system(static_gain(0.2), static_gain(0.5))
        assert_allclose(delta.D, [[0.3]])

    def test_dimension_mismatch(self):
        with self.assertRaises(ValueError):
            delta_system(static_gain(1.0), static_gain(np.ones((2, 1))))


class AlgebraTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.ms = parse_model_file(BENCHMARK_FILE)
        cls.models = cls.ms.nominal_models()

    def test_static_output_nulling(self):
        rep = build_output_nulling(static_gain(0.7))
        v = simulate(rep.system, Signal([[1.0, 0.7]], 0))
        assert_allclose(v.values, 0, atol=1e-15)
        v = simulate(rep.system, Signal([[1.0, 0.0]], 0))
        assert_allclose(v.values, [[-0.7]])

    def test_compatible_trajectory_has_zero_residual(self):
        ss = self.models[0]
        rng = np.random.default_rng(0)
        t_minus, t_plus = self.ms.t_minus, self.ms.t_plus
        u = Signal(rng.standard_normal((t_minus, 1)), -t_minus).extended(-t_minus, t_plus + 1)
        y = simulate(ss, u)
        rep = build_output_nulling(ss)
        self.assertEqual(rep.n_states, ss.n_states)
        x0 = past_input_x0(ss, u.window(-t_minus, 0))
        w = u.window(0, t_plus + 1).stacked_with(y.window(0, t_plus + 1))
        v = simulate(rep.system, w, x_init=x0)
        self.assertLessEqual(np.max(np.abs(v.values)), 1e-9)

        # same check over the whole horizon from a zero state
        v = simulate(rep.system, u.stacked_with(y))
        self.assertLessEqual(np.max(np.abs(v.values)), 1e-9)

    def test_cross_model_residual(self):
        rng = np.random.default_rng(1)
        u = Signal(rng.standard_normal((40, 1)), 0)
        y = simulate(self.models[1], u)
        v = simulate(build_output_nulling(self.models[0]).system, u.stacked_with(y))
        self.assertGreater(v.norm(), 0)

    def test_series_with_identity(self):
        ss = self.models[0]
        assert_allclose(impulse_response(series(identity(1), ss), 64), impulse_response(ss, 64), atol=1e-12)
        assert_allclose(impulse_response(series(ss, identity(1)), 64), impulse_response(ss, 64), atol=1e-12)

    def test_series_composes(self):
        a, b = self.models[0], self.models[3]
        u = Signal(np.random.default_rng(2).standard_normal((50, 1)), 0)
        assert_allclose(simulate(series(a, b), u).values, simulate(b, simulate(a, u)).values, atol=1e-10)

    def test_stack_and_parallel(self):
        ss = self.models[0]
        doubled = stack(ss, ss)
        self.assertEqual((doubled.n_inputs, doubled.n_outputs), (1, 2))
        summed = parallel(ss, ss)
        assert_allclose(impulse_response(summed, 64), 2 * impulse_response(ss, 64), atol=1e-12)
        with self.assertRaises(ValueError):
            series(stack(ss, ss), ss)

    def test_cross_residual_dimensions(self):
        F = cross_residual(self.models[1], [build_output_nulling(self.models[0])])
        self.assertEqual((F.n_inputs, F.n_outputs), (1, 1))

    def test_bank_sizes(self):
        t_minus, t_plus = self.ms.t_minus, self.ms.t_plus
        bank = build_bank(self.models, t_minus, t_plus, i=0)
        self.assertEqual(bank.n_blocks, 3)
        self.assertEqual(bank.block_index, {0: (0, 1), 1: (0, 2), 2: (0, 3)})

        full = build_bank(self.models, t_minus, t_plus)
        self.assertEqual(full.n_blocks, 12)
        self.assertEqual(full.block_index[4], (1, 2))
        self.assertEqual(full.blocks_for_model(3), [9, 10, 11])

        pair = build_bank(self.models[:2], t_minus, t_plus)
        self.assertEqual(pair.n_blocks, 2)

    def test_bank_blocks_are_normalized(self):
        bank = build_bank(self.models, self.ms.t_minus, self.ms.t_plus)
        for l in range(bank.n_blocks):
            self.assertAlmostEqual(hankel_norm(bank.block(l), bank.t_minus, bank.t_plus), 1.0, delta=1e-6)

    def test_duplicate_models_give_degenerate_blocks(self):
        bank = build_bank([self.models[0], self.models[0]], self.ms.t_minus, self.ms.t_plus)
        self.assertEqual(bank.degenerate_blocks, (0, 1))

    def test_simulation(self):
        delay = scalar_system(0.0, 1.0, 1.0, 0.0)
        assert_allclose(simulate(delay, Signal.zeros(-3, 5)).values, 0)
        u = np.zeros((6, 1))
        u[0] = 1.0
        y = simulate(delay, Signal(u, -3))
        self.assertEqual(y.values[1, 0], 1.0)
        self.assertEqual(np.count_nonzero(y.values), 1)

    def test_superposition(self):
        rng = np.random.default_rng(3)
        ss = self.models[1]
        u1 = Signal(rng.standard_normal((65, 1)), -32)
        u2 = Signal(rng.standard_normal((65, 1)), -32)
        assert_allclose(simulate(ss, u1 + u2).values, (simulate(ss, u1) + simulate(ss, u2)).values,
                        atol=1e-12)

    def test_simulation_length_mismatch(self):
        with self.assertRaises(ValueError):
            simulate(self.models[0], Signal(np.zeros((5, 2)), 0))
        with self.assertRaises(ValueError):
            simulate(self.models[0], Signal.zeros(0, 5), x_init=np.zeros(3))


class GramianTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.ms = parse_model_file(BENCHMARK_FILE)
        cls.models = cls.ms.nominal_models()

    def test_reachability_gramian(self):
        assert_allclose(reach_gramian(scalar_system(0.0, 1.0, 1.0, 0.0), 32), [[1.0]])
        assert_allclose(reach_gramian(scalar_system(0.5, 1.0, 1.0, 0.0), 2), [[1.25]])
        for ss in self.models:
            R = reachability_matrix(ss, 32)
            self.assertEqual(R.shape, (ss.n_states, 32))
            assert_allclose(reach_gramian(ss, 32), R @ R.T, atol=1e-10)

    def test_reachability_matrix_column_order(self):
        ss = self.models[0]
        R = reachability_matrix(ss, 3)
        assert_allclose(R[:, 2:3], ss.A @ ss.A @ ss.B)

    def test_hankel_norm_small_cases(self):
        self.assertEqual(hankel_norm(static_gain(2.0), 4, 4), 0.0)
        ss = scalar_system(0.5, 1.0, 1.0, 0.0)
        self.assertAlmostEqual(hankel_norm(ss, 1, 0), 1.0)
        self.assertAlmostEqual(hankel_norm(ss, 1, 1), np.sqrt(1.25))
        assert_allclose(hankel_matrix(ss, 1, 1), [[1.0], [0.5]])

    def test_hankel_norm_matches_svd(self):
        for ss in self.models:
            H = hankel_matrix(ss, 32, 32)
            self.assertEqual(H.shape, (33, 32))
            expected = svdvals(H)[0]
            self.assertLessEqual(abs(gramian_hankel_norm(ss, 32, 32) - expected), 1e-8 * expected)
            self.assertAlmostEqual(hankel_norm(ss, 32, 32), expected)

    def test_l2_induced_norm(self):
        self.assertAlmostEqual(l2_induced_norm(static_gain(-0.4), 5), 0.4)
        self.assertAlmostEqual(l2_induced_norm(scalar_system(0.0, 1.0, 1.0, 0.0), 1), 1.0)

    def test_l2_induced_norm_bounds_power_iteration(self):
        # top singular values of this T nearly coincide, so the iterate only gives a lower bound
        ss = random_system(np.random.default_rng(4))
        T = toeplitz_matrix(ss, 20)
        x = np.ones(T.shape[1])
        for _ in range(5000):
            x = T.T @ (T @ x)
            x /= np.linalg.norm(x)
        norm = l2_induced_norm(ss, 20)
        self.assertGreaterEqual(norm, np.linalg.norm(T @ x) - 1e-8)
        self.assertAlmostEqual(norm, np.sqrt(np.linalg.eigvalsh(T.T @ T)[-1]), delta=1e-8 * norm)

    def test_l2_induced_norm_power_iteration_with_gap(self):
        ss = scalar_system(0.5, 1.0, 1.0, 1.0)
        T = toeplitz_matrix(ss, 1)
        assert_allclose(T, [[1.0, 0.0], [1.0, 1.0]])
        gaps = svdvals(T)
        self.assertLess(gaps[1] / gaps[0], 0.5)
        x = np.ones(T.shape[1])
        for _ in range(200):
            x = T.T @ (T @ x)
            x /= np.linalg.norm(x)
        self.assertAlmostEqual(l2_induced_norm(ss, 1), np.linalg.norm(T @ x), delta=1e-10)
        self.assertAlmostEqual(l2_induced_norm(ss, 1), (1 + np.sqrt(5)) / 2)

    def test_toeplitz_matches_simulation(self):
        ss = random_system(np.random.default_rng(5))
        u = np.random.default_rng(6).standard_normal(11)
        assert_allclose(toeplitz_matrix(ss, 10) @ u, simulate(ss, Signal(u, 0)).values[:, 0], atol=1e-12)

    def test_normalize(self):
        ss = scalar_system(0.5, 1.0, 1.0, 0.0)
        self.assertAlmostEqual(scale_factor(ss.scaled_outputs(2.0 / np.sqrt(1.25)), NormKind.HANKEL, 1, 1),
                               0.5, delta=1e-8)
        rep = build_output_nulling(self.models[1])
        once = normalize(rep, NormKind.L2_INDUCED, 32, 32)
        self.assertAlmostEqual(l2_induced_norm(once.system, 32), 1.0, delta=1e-6)
        twice = normalize(once, NormKind.L2_INDUCED, 32, 32)
        self.assertAlmostEqual(twice.scalar_scale / once.scalar_scale, 1.0, delta=1e-6)

        hankel = normalize(rep, NormKind.HANKEL, 32, 32)
        self.assertAlmostEqual(hankel_norm(hankel.system, 32, 32), 1.0, delta=1e-6)

    def test_normalization_keeps_zero_residuals(self):
        ss = self.models[2]
        rep = build_output_nulling(ss)
        scaled = normalize(rep, NormKind.L2_INDUCED, 32, 32)
        rng = np.random.default_rng(7)
        for _ in range(100):
            u = Signal(rng.standard_normal((20, 1)), 0)
            y = simulate(ss, u)
            w = u.stacked_with(y)
            self.assertLessEqual(simulate(scaled.system, w).norm(), 1e-9)
            w = u.stacked_with(y + Signal(rng.standard_normal((20, 1)) * 1e-3, 0))
            self.assertGreater(simulate(scaled.system, w).norm(), 1e-9)
            self.assertGreater(simulate(rep.system, w).norm(), 1e-9)

    def test_zero_norm_cannot_be_normalized(self):
        with self.assertRaises(DegenerateSystemError):
            scale_factor(static_gain(1.0), NormKind.HANKEL, 4, 4)

    def test_residual_energy_from_gramian(self):
        bank = build_bank(self.models, 32, 32, i=1)
        u = Signal(np.random.default_rng(8).standard_normal((32, 1)), -32)
        u = u.scaled(1 / u.norm())
        zeta = final_state(bank.F, u)
        v = simulate(bank.F, u.extended(-32, 33), window=(0, 33))
        for l, rows in enumerate(bank.block_rows):
            energy = zeta @ obs_gramian(bank.F, 32, rows) @ zeta
            self.assertAlmostEqual(np.sum(v.values[:, rows] ** 2), energy, delta=1e-8)


class InitialStateTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.ms = parse_model_file(BENCHMARK_FILE)
        cls.models = cls.ms.nominal_models()

    def test_single_sample_window(self):
        rep = build_output_nulling(self.models[0])
        prob = build_MN(rep, 0)
        assert_allclose(prob.M, rep.Ccal)
        assert_allclose(prob.N, rep.Dcal)

    def test_nilpotent_dynamics(self):
        rep = build_output_nulling(StateSpaceModel(np.zeros((2, 2)), [[1.0], [0.0]], [[1.0, 2.0]], [[0.0]]))
        prob = build_MN(rep, 3)
        assert_allclose(prob.M[:1], rep.Ccal)
        assert_allclose(prob.M[1:], 0)

    def test_matrices_reproduce_simulation(self):
        rng = np.random.default_rng(9)
        rep = build_output_nulling(random_system(rng))
        prob = build_MN(rep, 12)
        for _ in range(100):
            x0 = rng.standard_normal(4)
            w = Signal(rng.standard_normal((13, 2)), 0)
            assert_allclose(residual_from_state(prob, x0, w).values,
                            simulate(rep.system, w, x_init=x0).values, atol=1e-10)

    def test_least_squares_initial_state(self):
        for ss in self.models:
            prob = build_MN(build_output_nulling(ss), 32)
            assert_allclose(least_squares_x0(prob, Signal.zeros(0, 33, 2)), 0)
            rng = np.random.default_rng(10)
            for _ in range(50):
                x0 = rng.standard_normal(ss.n_states)
                w = Signal.zeros(0, 33, 1).stacked_with(free_response(ss, x0, 32))
                assert_allclose(least_squares_x0(prob, w), x0, atol=1e-8 * max(1.0, np.linalg.norm(x0)))

    def test_least_squares_cross_model(self):
        x1 = np.random.default_rng(11).standard_normal(6)
        w = Signal.zeros(0, 33, 1).stacked_with(free_response(self.models[1], x1, 32))
        prob = build_MN(build_output_nulling(self.models[0]), 32)
        self.assertGreater(residual_from_state(prob, least_squares_x0(prob, w), w).norm(), 0)

    def test_least_squares_never_worse_than_past_input(self):
        rng = np.random.default_rng(12)
        u = Signal(rng.standard_normal((32, 1)), -32)
        for truth in self.models:
            w = Signal.zeros(0, 33, 1).stacked_with(free_response(truth, final_state(truth, u), 32))
            for candidate in self.models:
                prob = build_MN(build_output_nulling(candidate), 32)
                ls = residual_from_state(prob, least_squares_x0(prob, w), w).norm()
                past = residual_from_state(prob, past_input_x0(candidate, u), w).norm()
                self.assertLessEqual(ls, past + 1e-12)

    def test_rank_deficient_initial_state(self):
        # second state is unobservable
        rep = build_output_nulling(StateSpaceModel(np.diag([0.5, 0.3]), [[1.0], [1.0]], [[1.0, 0.0]], [[0.0]]))
        prob = build_MN(rep, 5)
        w = Signal.zeros(0, 6, 1).stacked_with(Signal(0.5 ** np.arange(6), 0))
        assert_allclose(least_squares_x0(prob, w), [1.0, 0.0], atol=1e-10)

    def test_past_input(self):
        ss = self.models[0]
        assert_allclose(past_input_x0(ss, Signal.zeros(-32, 0)), 0)
        u = np.zeros((32, 1))
        u[-1] = 1.0
        assert_allclose(past_input_x0(ss, Signal(u, -32)), ss.B[:, 0])
        with self.assertRaises(ValueError):
            past_input_x0(ss, Signal.zeros(-32, 1))

    def test_past_input_in_reachability_ellipsoid(self):
        ss = self.models[3]
        R = reachability_matrix(ss, 32)
        rng = np.random.default_rng(13)
        for _ in range(20):
            u = Signal(rng.standard_normal((32, 1)), -32)
            u = u.scaled(1 / u.norm())
            # minimum energy needed to reach x never exceeds the energy spent
            v = np.linalg.lstsq(R, past_input_x0(ss, u), rcond=None)[0]
            self.assertLessEqual(v @ v, 1 + 1e-8)

    def test_scalar_ambiguity(self):
        ss = self.models[1]
        doubled = ss.scaled_outputs(2.0)
        u = Signal(np.random.default_rng(14).standard_normal((32, 1)), -32)
        w = Signal.zeros(0, 33, 1).stacked_with(free_response(ss, final_state(ss, u), 32))
        prob = build_MN(build_output_nulling(doubled), 32)
        self.assertLessEqual(residual_from_state(prob, least_squares_x0(prob, w), w).norm(), 1e-9)
        self.assertGreater(residual_from_state(prob, past_input_x0(doubled, u), w).norm(), 1e-3)


class SignalFileTests(SimpleTestCase):
    def test_csv_keeps_times_and_values(self):
        signal = Signal([0.1, -2.5, 1e-17], start=-3)
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'u.csv')
            write_signal_csv(path, signal)
            with open(path) as f:
                self.assertEqual(f.readline().strip(), 'k,value')
            loaded = read_signal_csv(path, expected_length=3, expected_start=-3)
            self.assertEqual(loaded.start, -3)
            assert_allclose(loaded.values, signal.values, rtol=0)
            with self.assertRaises(ValueError):
                read_signal_csv(path, expected_length=4)
