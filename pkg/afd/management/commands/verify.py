import numpy as np
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError
from loguru import logger
from tqdm import tqdm

from config import Config
from design.logic.inputdesign import design_input
from design.logic.maxmin import sphere_lower_bound
from diagnosis.logic.engine import create_default_engine
from diagnosis.logic.experiments import run_suite
from systems.io.modelfile import parse_model_file
from systems.logic.algebra import build_output_nulling, final_state, simulate
from systems.logic.gramians import (
    gramian_hankel_norm, hankel_norm, min_eigenvalues, reach_gramian, reachability_matrix,
    system_norm,
)
from systems.logic.initstate import (
    build_MN, free_response, least_squares_x0, past_input_x0, residual_from_state,
)
from systems.logic.realization import check_realization, delta_system
from systems.models import NormKind, Signal

EXIT_CHECK_FAILED = 1


class Command(BaseCommand):
    help = 'Run the numerical cross-checks on a model set'

    def add_arguments(self, parser):
        parser.add_argument('--models', type=str, default=str(Config.DEFAULT_MODEL_FILE),
                            help='Model file (JSON)')
        parser.add_argument('--seed', type=int, default=1, help='Seed for random test data')
        parser.add_argument('--starts', type=int, default=Config.OPTIMIZER_STARTS,
                            help='Optimizer starts for the design check')
        parser.add_argument('--oracle-samples', type=int, default=100000,
                            help='Random sphere points for the optimizer lower bound')

    def check(self, name: str, ok: bool, detail: str = ''):
        self.results.append((name, bool(ok)))
        status = 'PASS' if ok else 'FAIL'
        line = f"{status} {name}" + (f" ({detail})" if detail else '')
        if ok:
            logger.info(line)
        else:
            logger.error(line)

    def check_realizations(self):
        for entry, ss in zip(self.ms, self.models):
            error = check_realization(entry.tf, ss, rtol=np.inf)
            self.check(f"realization of {entry.label}", error <= Config.REALIZATION_CHECK_RTOL,
                       f"relative error {error:.2e}, {ss.n_states} states")
            delta = hankel_norm(delta_system(ss, ss), self.ms.t_minus, self.ms.t_plus)
            self.check(f"zero perturbation of {entry.label}", delta <= 1e-10, f"{delta:.2e}")

    def check_hankel(self, label: str, ss, rows=None):
        t_minus, t_plus = self.ms.t_minus, self.ms.t_plus
        system = ss if rows is None else ss.output_rows(rows)
        gramian_value = gramian_hankel_norm(system, t_minus, t_plus)
        svd_value = hankel_norm(system, t_minus, t_plus)
        relative = abs(gramian_value - svd_value) / max(svd_value, 1e-300)
        self.check(f"Hankel norm of {label}", relative <= 1e-8 or gramian_value == svd_value,
                   f"{gramian_value:.10e} vs {svd_value:.10e}")

    def check_bank(self):
        dr = self.design
        bank, pair = dr.bank, dr.gramians
        for entry, ss in zip(self.ms, self.models):
            self.check_hankel(entry.label, ss)
        for l in range(bank.n_blocks):
            i, j = bank.block_index[l]
            if l not in bank.degenerate_blocks:
                self.check_hankel(f"F_{j}^({i})", bank.F, bank.block_rows[l])
                norm = system_norm(bank.block(l), NormKind.HANKEL, bank.t_minus, bank.t_plus)
                self.check(f"normalization of F_{j}^({i})", abs(norm - 1) <= Config.NORMALIZATION_TOL,
                           f"{norm:.9f}")

        P_sum = reach_gramian(bank.F, bank.t_minus)
        Rmat = reachability_matrix(bank.F, bank.t_minus)
        error = np.max(np.abs(P_sum - Rmat @ Rmat.T))
        self.check("reachability Gramian equals R R'", error <= 1e-10 * max(1.0, np.max(np.abs(P_sum))),
                   f"{error:.2e}")
        lowest = min(min_eigenvalues(pair))
        self.check("Gramians are positive semidefinite", lowest >= -1e-10, f"min eigenvalue {lowest:.2e}")

    def check_initial_states(self, rng: np.random.Generator):
        t_minus, t_plus = self.ms.t_minus, self.ms.t_plus
        for entry, ss in zip(self.ms, self.models):
            rep = build_output_nulling(ss)
            prob = build_MN(rep, t_plus)
            worst = 0.0
            for _ in range(50):
                x0 = rng.standard_normal(ss.n_states)
                w = Signal.zeros(0, t_plus + 1, ss.n_inputs).stacked_with(free_response(ss, x0, t_plus))
                x_ls = least_squares_x0(prob, w)
                worst = max(worst, np.linalg.norm(x_ls - x0) / max(np.linalg.norm(x0), 1.0))
            self.check(f"least-squares initial state of {entry.label}", worst <= 1e-8, f"{worst:.2e}")

            u = Signal(rng.standard_normal((t_minus + t_plus + 1, ss.n_inputs)), -t_minus)
            u = u.window(-t_minus, 0).extended(-t_minus, t_plus + 1)
            y = simulate(ss, u, window=(0, t_plus + 1))
            w = Signal.zeros(0, t_plus + 1, ss.n_inputs).stacked_with(y)
            x0 = past_input_x0(ss, u.window(-t_minus, 0))
            residual = residual_from_state(prob, x0, w).norm()
            self.check(f"past-input residual of {entry.label}", residual <= 1e-9, f"{residual:.2e}")

        ss = self.models[1]
        doubled = ss.scaled_outputs(2.0)
        u = Signal(rng.standard_normal((t_minus, ss.n_inputs)), -t_minus)
        x_true = final_state(ss, u)
        w = Signal.zeros(0, t_plus + 1, ss.n_inputs).stacked_with(free_response(ss, x_true, t_plus))
        prob = build_MN(build_output_nulling(doubled), t_plus)
        ls = residual_from_state(prob, least_squares_x0(prob, w), w).norm()
        past = residual_from_state(prob, past_input_x0(doubled, u), w).norm()
        self.check("scalar ambiguity of least squares", ls <= 1e-9 and past > 1e-3,
                   f"least squares {ls:.2e}, past input {past:.2e}")

    def check_design(self, samples: int, seed: int):
        dr = self.design
        self.check("design is feasible", dr.feasible and dr.gamma_norm > 0, f"gamma = {dr.gamma_norm:.6f}")
        self.check("input has unit energy", abs(dr.u_star.energy() - 1) <= 1e-9, f"{dr.u_star.energy():.12f}")
        zeta = final_state(dr.bank.F, dr.u_star)
        self.check("input reaches zeta0", np.linalg.norm(zeta - dr.zeta0_star) <= 1e-8 * np.linalg.norm(zeta))
        bound = sphere_lower_bound(dr.gramians.P, dr.gramians.Q, samples, seed)
        self.check("optimizer beats random sphere search", dr.gamma_energy >= bound,
                   f"{dr.gamma_energy:.6e} vs {bound:.6e}")

    def check_suite(self):
        records = run_suite(self.ms, self.design, engine=create_default_engine(self.ms))
        for record in records:
            self.check(f"worst-case {record.truth_label} diagnosed", record.correct,
                       f"diagnosed {record.result.diagnosed_label}")
        nominal = records[0].result.residual_norms[0]
        self.check(f"exact {self.ms.labels[0]} has zero residual", nominal <= 1e-9, f"{nominal:.2e}")

    def handle(self, *args, **options):
        self.results = []
        rng = np.random.default_rng(options['seed'])
        try:
            self.ms = parse_model_file(options['models'])
            self.models = self.ms.nominal_models()
            self.design = design_input(self.ms, starts=options['starts'], margins=False)
        except (ValidationError, ValueError) as e:
            logger.error(f"Could not set up the checks: {e}")
            raise CommandError(str(e))

        steps = [
            self.check_realizations,
            self.check_bank,
            lambda: self.check_initial_states(rng),
            lambda: self.check_design(options['oracle_samples'], options['seed']),
            self.check_suite,
        ]
        for step in tqdm(steps, desc="Checks"):
            step()

        failed = [name for name, ok in self.results if not ok]
        logger.info(f"{len(self.results) - len(failed)}/{len(self.results)} checks passed")
        if failed:
            raise CommandError(f"{len(failed)} checks failed", returncode=EXIT_CHECK_FAILED)
