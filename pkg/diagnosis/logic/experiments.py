import time
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from tqdm import tqdm
from tqdm.contrib.concurrent import thread_map

from config import Config
from design.logic.margins import robust_margin_check
from design.models import DesignResult, MarginReport
from diagnosis.logic.engine import DiagnosisEngine, create_default_engine
from diagnosis.models import ExperimentRecord, InitScheme, ModelTrials, MonteCarloSummary
from systems.logic.algebra import simulate
from systems.logic.realization import sample_model
from systems.models import ModelSet, SampleMode, Signal, StateSpaceModel, UnstableModelError


def check_design(ms: ModelSet, dr: DesignResult):
    if dr.t_minus != ms.t_minus or dr.t_plus != ms.t_plus:
        raise ValueError(f"Design windows ({dr.t_minus}, {dr.t_plus}) differ from the model file "
                         f"({ms.t_minus}, {ms.t_plus})")
    if tuple(dr.labels) != tuple(ms.labels):
        raise ValueError(f"Design was made for {', '.join(dr.labels)}, not {', '.join(ms.labels)}")


def simulate_measurement(ss: StateSpaceModel, u_star: Signal, t_plus: int) -> Signal:
    """y on [0, t_plus] from a zero state at the start of u*, input off from k = 0"""
    u = u_star.extended(u_star.start, t_plus + 1)
    return simulate(ss, u, window=(0, t_plus + 1))


def run_experiment(ms: ModelSet, dr: DesignResult, truth: int, mode: SampleMode,
                   engine: Optional[DiagnosisEngine] = None,
                   init_scheme=Config.DEFAULT_INIT_SCHEME,
                   keep_residuals: bool = True) -> ExperimentRecord:
    engine = engine or create_default_engine(ms)
    sample = sample_model(ms, truth, mode)
    y = simulate_measurement(sample.realize(), dr.u_star, ms.t_plus)
    result = engine.diagnose(dr.u_star, y, InitScheme.parse(init_scheme), dr.gamma_norm, keep_residuals)
    record = ExperimentRecord(
        truth_index=truth,
        truth_label=ms[truth].label,
        sample=sample.descriptor,
        parameters=dict(sample.parameters),
        u=dr.u_star,
        y=y,
        result=result,
    )
    logger.debug(f"Truth {record.truth_label} ({record.sample}) -> {result.diagnosed_label}")
    return record


def default_suite(ms: ModelSet) -> List[Tuple[int, SampleMode]]:
    """Worst-case sample of every model"""
    return [(i, SampleMode.worst_case()) for i in ms.indices]


def run_suite(ms: ModelSet, dr: DesignResult, suite: Optional[Sequence[Tuple[int, SampleMode]]] = None,
              init_scheme=Config.DEFAULT_INIT_SCHEME,
              engine: Optional[DiagnosisEngine] = None) -> List[ExperimentRecord]:
    check_design(ms, dr)
    engine = engine or create_default_engine(ms)
    suite = default_suite(ms) if suite is None else suite
    records = [run_experiment(ms, dr, i, mode, engine, init_scheme) for i, mode in suite]
    correct = sum(r.correct for r in records)
    logger.info(f"{correct}/{len(records)} experiments diagnosed correctly")
    return records


def correctness_margin(record: ExperimentRecord) -> float:
    """Smallest wrong-candidate residual norm minus the true candidate's; negative when misdiagnosed"""
    norms = record.result.residual_norms
    others = [v for j, v in enumerate(norms) if j != record.truth_index]
    return float(min(others) - norms[record.truth_index]) if others else float('inf')


def monte_carlo(ms: ModelSet, dr: DesignResult, trials: int = Config.MONTE_CARLO_TRIALS,
                seed: int = Config.MONTE_CARLO_SEED, mode: str = 'random', box_scale: float = 1.0,
                workers: int = 1, init_scheme=Config.DEFAULT_INIT_SCHEME,
                margin_report: Optional[MarginReport] = None,
                show_progress: bool = False) -> MonteCarloSummary:
    """
    `trials` draws per model from the (rescaled) uncertainty boxes. Results are
    ordered by (model, trial) whatever the number of workers. A trial whose
    box yields no stable sample is rejected and marks the condition violated.
    """
    if trials < 1:
        raise ValueError("Need at least one trial")
    if mode not in ('random', 'nominal'):
        raise ValueError(f"Monte Carlo mode must be random or nominal, got {mode}")
    check_design(ms, dr)
    started = time.perf_counter()
    boxes = ms.with_box_scale(box_scale)
    engine = create_default_engine(ms)

    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2 ** 63 - 1, size=(len(ms), trials))
    tasks = [(i, t) for i in ms.indices for t in range(trials)]

    def run(task: Tuple[int, int]) -> Optional[ExperimentRecord]:
        i, t = task
        sample_mode = SampleMode.random(int(seeds[i, t])) if mode == 'random' else SampleMode.nominal()
        try:
            return run_experiment(boxes, dr, i, sample_mode, engine, init_scheme, keep_residuals=False)
        except UnstableModelError as e:
            logger.warning(f"Rejected trial {t} of {ms[i].label}: {e.message}")
            return None

    if workers > 1:
        records = thread_map(run, tasks, max_workers=workers, desc="Monte Carlo", disable=not show_progress)
    else:
        records = [run(task) for task in tqdm(tasks, desc="Monte Carlo", disable=not show_progress)]

    if margin_report is None:
        margin_report = dr.margin_report if box_scale == 1.0 and dr.margin_report is not None \
            else robust_margin_check(boxes, dr)
    by_model = {m.index: m for m in margin_report.models}

    per_model = []
    for i in ms.indices:
        own = [r for r in records[i * trials:(i + 1) * trials] if r is not None]
        rejected = trials - len(own)
        margins = np.array([correctness_margin(r) for r in own])
        misdiagnoses = sum(not r.correct for r in own)
        margin = by_model.get(i)
        per_model.append(ModelTrials(
            index=i,
            label=ms[i].label,
            trials=trials,
            misdiagnoses=int(misdiagnoses),
            min_margin=float(np.min(margins)) if own else None,
            median_margin=float(np.median(margins)) if own else None,
            condition_satisfied=None if margin is None else margin.satisfied and not rejected,
            rejected=rejected,
            separation_satisfied=None if margin is None else margin.separation_satisfied,
        ))
        if own:
            logger.info(f"{ms[i].label}: {misdiagnoses}/{len(own)} misdiagnosed, "
                        f"min margin {np.min(margins):.3e}"
                        + (f", {rejected} trials rejected" if rejected else ""))
        else:
            logger.warning(f"{ms[i].label}: every trial rejected")

    rejected = sum(m.rejected for m in per_model)
    summary = MonteCarloSummary(
        trials=trials,
        seed=seed,
        mode=mode,
        box_scale=box_scale,
        models=tuple(per_model),
        condition_satisfied=margin_report.satisfied and not rejected,
        separation_satisfied=margin_report.separation_satisfied,
        wall_time=time.perf_counter() - started,
    )
    if not summary.condition_satisfied:
        logger.warning(f"Sufficient robustness condition is violated at box scale {box_scale}")
    if summary.guarantee_broken:
        logger.error(f"{summary.misdiagnoses} misdiagnoses although the robustness condition holds")
    logger.info(f"Monte Carlo: {summary.misdiagnoses} misdiagnoses in {len(records) - rejected} trials "
                f"({summary.wall_time:.1f} s)")
    return summary
