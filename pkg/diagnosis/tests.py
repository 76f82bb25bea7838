import json
import os
import shutil
import tempfile
from functools import lru_cache

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from config import Config
from design.logic.inputdesign import design_input, performance_index
from design.logic.margins import robust_margin_check
from diagnosis.io.report import format_table, write_report
from diagnosis.logic.engine import (
    DiagnosisEngine, create_default_engine, residual_for_candidate, run_diagnosis,
)
from diagnosis.logic.experiments import (
    monte_carlo, run_experiment, run_suite, simulate_measurement,
)
from diagnosis.models import InitScheme
from systems.io.modelfile import parse_model_file
from systems.logic.algebra import build_bank
from systems.models import InputSetError, SampleMode, Signal


@lru_cache(maxsize=None)
def benchmark_models():
    return parse_model_file(Config.DEFAULT_MODEL_FILE)


@lru_cache(maxsize=None)
def benchmark_design():
    return design_input(benchmark_models(), margins=False)


@lru_cache(maxsize=None)
def benchmark_engine():
    return create_default_engine(benchmark_models())


class DiagnosisTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.ms = benchmark_models()
        cls.dr = benchmark_design()
        cls.engine = benchmark_engine()

    def test_exact_models_are_recognized(self):
        for i in self.ms.indices:
            record = run_experiment(self.ms, self.dr, i, SampleMode.nominal(), self.engine, 'past')
            self.assertTrue(record.correct)
            self.assertLessEqual(record.result.residual_norms[i], 1e-9)
            self.assertEqual(record.result.init_scheme, InitScheme.PAST_INPUT)

    def test_wall_time_is_measured_but_not_serialized(self):
        record = run_experiment(self.ms, self.dr, 1, SampleMode.nominal(), self.engine)
        result = run_diagnosis(self.ms, self.dr.u_star, record.y, engine=self.engine)
        self.assertGreater(result.wall_time, 0.0)
        self.assertNotIn('wall_time', result.to_dict())
        self.assertEqual(result.j_star, 1)

    def test_least_squares_cannot_separate_scaled_models(self):
        # G_3 is G_0 with half the gain, so both fit the free response exactly
        record = run_experiment(self.ms, self.dr, 3, SampleMode.nominal(), self.engine, 'ls')
        self.assertLessEqual(record.result.residual_norms[3], 1e-9)
        self.assertLessEqual(record.result.residual_norms[0], 1e-9)
        record = run_experiment(self.ms, self.dr, 2, SampleMode.nominal(), self.engine, 'ls')
        self.assertTrue(record.correct)
        self.assertLessEqual(record.result.residual_norms[2], 1e-9)

    def test_wrong_candidates_see_the_design_separation(self):
        i = 2
        record = run_experiment(self.ms, self.dr, i, SampleMode.nominal(), self.engine)
        for j in self.ms.indices:
            if j == i:
                continue
            separation = self.dr.separation(i, j)
            self.assertGreater(separation, 0)
            self.assertAlmostEqual(record.result.unnormalized_norms[j], separation,
                                   delta=1e-6 * separation + 1e-12)

    def test_worst_case_suite(self):
        records = run_suite(self.ms, self.dr, engine=self.engine)
        self.assertEqual([r.truth_index for r in records], [0, 1, 2, 3])
        for record in records:
            self.assertTrue(record.correct, record.result.residual_norms)
        self.assertLessEqual(records[0].result.residual_norms[0], 1e-9)
        for record in records[1:]:
            self.assertGreater(min(record.result.residual_norms), 0)
            self.assertIn('worst_case (vertex', record.sample)

    def test_residual_for_candidate(self):
        y = simulate_measurement(self.engine.candidates[1].model, self.dr.u_star, self.ms.t_plus)
        v, norm = residual_for_candidate(self.ms, 1, self.dr.u_star, y, engine=self.engine)
        self.assertEqual((v.start, len(v)), (0, self.ms.t_plus + 1))
        self.assertLessEqual(norm, 1e-9)
        _, norm = residual_for_candidate(self.ms, 0, self.dr.u_star, y, engine=self.engine)
        self.assertGreater(norm, 0)
        with self.assertRaises(ValueError):
            residual_for_candidate(self.ms, 4, self.dr.u_star, y, engine=self.engine)

    def test_perturbed_truth_has_nonzero_residual(self):
        record = run_experiment(self.ms, self.dr, 2, SampleMode.random(7), self.engine)
        self.assertGreater(record.result.residual_norms[2], 0)
        self.assertEqual(set(record.parameters), {'a1', 'a3', 'a4'})

    def test_zero_measurement(self):
        y = Signal.zeros(0, self.ms.t_plus + 1)
        result = run_diagnosis(self.ms, self.dr.u_star, y, engine=self.engine)
        self.assertIn(result.j_star, self.ms.indices)
        self.assertTrue(all(np.isfinite(result.residual_norms)))
        self.assertEqual(result.residual_norms[result.j_star], min(result.residual_norms))

    def test_invalid_data(self):
        y = Signal.zeros(0, self.ms.t_plus + 1)
        with self.assertRaises(InputSetError):
            self.engine.diagnose(Signal.zeros(-self.ms.t_minus, 0), y)
        with self.assertRaises(InputSetError):
            self.engine.diagnose(self.dr.u_star.scaled(2.0), y)
        with self.assertRaises(ValueError):
            self.engine.diagnose(self.dr.u_star, Signal.zeros(0, self.ms.t_plus))
        with self.assertRaises(ValueError):
            self.engine.diagnose(self.dr.u_star, Signal.zeros(-1, self.ms.t_plus))

    def test_ties_go_to_the_lowest_index(self):
        model = self.engine.candidates[0].model
        engine = DiagnosisEngine(self.ms.t_minus, self.ms.t_plus)
        engine.add_candidate('first', model)
        engine.add_candidate('second', model)
        result = engine.diagnose(self.dr.u_star, simulate_measurement(model, self.dr.u_star, self.ms.t_plus))
        self.assertTrue(result.tie)
        self.assertEqual(result.j_star, 0)
        self.assertEqual(result.diagnosed_label, 'first')

    def test_normalized_candidates(self):
        engine = self.engine
        self.assertEqual(engine.labels, tuple(self.ms.labels))
        self.assertEqual(engine.sigma_fd().n_outputs, 4)
        for candidate in engine.candidates:
            self.assertGreater(candidate.scale, 0)

    def test_result_serialization(self):
        y = simulate_measurement(self.engine.candidates[2].model, self.dr.u_star, self.ms.t_plus)
        data = self.engine.diagnose(self.dr.u_star, y, InitScheme.LEAST_SQUARES, gamma_ref=0.1).to_dict()
        self.assertEqual(data['diagnosis'], 'G_2')
        self.assertEqual(data['init_scheme'], 'least_squares')
        self.assertEqual(data['gamma_ref'], 0.1)
        json.dumps(data)


class ExactDiagnosisPropertyTests(SimpleTestCase):
    def test_random_inputs_on_two_models(self):
        ms = benchmark_models().subset([0, 1])
        models = ms.nominal_models()
        bank = build_bank(models, ms.t_minus, ms.t_plus)
        engine = create_default_engine(ms)
        rng = np.random.default_rng(21)
        tested = 0
        for _ in range(100):
            u = Signal(rng.standard_normal(ms.t_minus), -ms.t_minus)
            u = u.scaled(1 / u.norm())
            if performance_index(bank, u).gamma_energy <= 1e-6:
                continue
            tested += 1
            for i, model in enumerate(models):
                result = engine.diagnose(u, simulate_measurement(model, u, ms.t_plus))
                self.assertEqual(result.j_star, i)
        self.assertGreater(tested, 0)


class MonteCarloTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.ms = benchmark_models()
        cls.dr = benchmark_design()

    def test_nominal_trials(self):
        summary = monte_carlo(self.ms, self.dr, trials=1, mode='nominal')
        self.assertEqual(len(summary.models), 4)
        self.assertEqual(summary.misdiagnoses, 0)
        for model in summary.models:
            self.assertGreater(model.min_margin, 0)

    def test_results_do_not_depend_on_workers(self):
        serial = monte_carlo(self.ms, self.dr, trials=3, seed=4, workers=1)
        threaded = monte_carlo(self.ms, self.dr, trials=3, seed=4, workers=3)
        self.assertEqual(json.dumps(serial.to_dict()), json.dumps(threaded.to_dict()))
        self.assertNotIn('wall_time', serial.to_dict())

    def test_small_boxes_are_always_diagnosed(self):
        scale = 1.0
        for _ in range(16):
            report = robust_margin_check(self.ms.with_box_scale(scale), self.dr)
            if report.satisfied and report.separation_satisfied:
                break
            scale /= 2
        else:
            self.fail('Robustness condition never held')

        summary = monte_carlo(self.ms, self.dr, trials=250, seed=3, box_scale=scale / 2, workers=4)
        self.assertTrue(summary.condition_satisfied)
        self.assertEqual(summary.misdiagnoses, 0)
        self.assertTrue(summary.separation_satisfied)
        self.assertFalse(summary.guarantee_broken)

    def test_inflated_boxes_flag_the_violation(self):
        summary = monte_carlo(self.ms, self.dr, trials=2, seed=5, box_scale=100.0)
        self.assertFalse(summary.condition_satisfied)
        self.assertEqual(sum(m.trials for m in summary.models), 8)

    def test_unsampleable_boxes_reject_trials(self):
        summary = monte_carlo(self.ms, self.dr, trials=2, seed=5, box_scale=1e4)
        self.assertFalse(summary.condition_satisfied)
        self.assertFalse(summary.guarantee_broken)
        exact, _, unstable, gain = summary.models
        self.assertEqual(unstable.rejected, 2)
        self.assertIsNone(unstable.min_margin)
        self.assertFalse(unstable.condition_satisfied)
        self.assertEqual((exact.rejected, gain.rejected), (0, 0))
        self.assertEqual(exact.misdiagnoses, 0)
        self.assertGreaterEqual(summary.to_dict()['rejected'], 2)

    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            monte_carlo(self.ms, self.dr, trials=0)
        with self.assertRaises(ValueError):
            monte_carlo(self.ms, self.dr, trials=1, mode='vertex')
        with self.assertRaises(ValueError):
            monte_carlo(self.ms.subset([0, 1]), self.dr, trials=1)


class ReportTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.ms = benchmark_models()
        cls.dr = benchmark_design()
        cls.records = run_suite(cls.ms, cls.dr, engine=benchmark_engine())

    def test_table(self):
        lines = format_table(self.records, self.ms.labels).splitlines()
        self.assertEqual(len(lines), 6)
        for line in lines[2:]:
            self.assertEqual(line.count('*'), 1)
        with self.assertRaises(ValueError):
            format_table([], self.ms.labels)

    def test_files(self):
        with tempfile.TemporaryDirectory() as directory:
            written = write_report(directory, self.ms, self.dr, self.records)
            names = {p.name for p in written}
            self.assertEqual(len(written), 3 + 4 * 4 + 4 + 4)
            self.assertIn('residual_1_1_0.csv', names)
            self.assertIn('measurement_3_3.csv', names)
            with open(os.path.join(directory, 'residual_2_2_1.csv')) as f:
                self.assertEqual(len(f.read().splitlines()), 1 + 33)
            with open(os.path.join(directory, 'bode_0.csv')) as f:
                self.assertEqual(len(f.read().splitlines()), 1 + Config.BODE_GRID_POINTS)
            with open(os.path.join(directory, 'report.json')) as f:
                data = json.load(f)
            self.assertEqual(data['correct'], 4)
            self.assertEqual(len(data['experiments']), 4)
            with self.assertRaises(ValueError):
                write_report(directory, self.ms, self.dr, [])


class CommandTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.directory = tempfile.mkdtemp()
        cls.design = os.path.join(cls.directory, 'design.json')
        cls.input = os.path.join(cls.directory, 'input.csv')
        call_command('design', out=cls.design, input_csv=cls.input, no_margins=True)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.directory)
        super().tearDownClass()

    def path(self, name: str) -> str:
        return os.path.join(self.directory, name)

    def test_design_output(self):
        with open(self.design) as f:
            data = json.load(f)
        self.assertTrue(data['feasible'])
        self.assertEqual(data['optimizer_trace']['starts'], Config.OPTIMIZER_STARTS)
        with open(self.input) as f:
            self.assertEqual(len(f.read().splitlines()), 1 + 32)

    def test_simulate_then_diagnose(self):
        call_command('simulate', design=self.design, truth=2, mode='worst', out=self.path('experiment2.json'))
        with open(self.path('experiment2.json')) as f:
            self.assertTrue(json.load(f)['correct'])

        call_command('simulate', design=self.design, truth=2, mode='nominal', measurement_out=self.path('y2.csv'))

        call_command('diagnose', input=self.input, measurement=self.path('y2.csv'),
                     design=self.design, init='ls', out=self.path('diagnosis2.json'))
        with open(self.path('diagnosis2.json')) as f:
            data = json.load(f)
        self.assertEqual(data['diagnosis'], 'G_2')
        self.assertEqual(data['init_scheme'], 'least_squares')

    def test_diagnose_rejects_short_measurement(self):
        with open(self.path('short.csv'), 'w') as f:
            f.write('k,value\n0,0.0\n1,0.0\n')
        with self.assertRaises(CommandError):
            call_command('diagnose', input=self.input, measurement=self.path('short.csv'))

    def test_report(self):
        out_dir = self.path('report')
        call_command('report', design=self.design, out_dir=out_dir)
        self.assertTrue(os.path.exists(os.path.join(out_dir, 'table.txt')))
        self.assertTrue(os.path.exists(os.path.join(out_dir, 'bode_3.csv')))

    def test_infeasible_design_exit_code(self):
        with open(Config.DEFAULT_MODEL_FILE) as f:
            data = json.load(f)
        data['models'] = [data['models'][0], dict(data['models'][0], label='G_0 copy')]
        models = self.path('duplicate.json')
        with open(models, 'w') as f:
            json.dump(data, f)
        with self.assertRaises(CommandError) as ctx:
            call_command('design', models=models, out=self.path('duplicate_design.json'), no_margins=True)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_strict_monte_carlo_exit_code(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('montecarlo', design=self.design, trials=1, box_scale=100.0, strict=True,
                         out=self.path('mc.json'))
        self.assertEqual(ctx.exception.returncode, 3)
        with open(self.path('mc.json')) as f:
            self.assertFalse(json.load(f)['condition_satisfied'])

    def test_verify(self):
        call_command('verify', oracle_samples=2000)
