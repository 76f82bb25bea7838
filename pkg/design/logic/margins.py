from typing import List, Optional, Sequence

from loguru import logger
from tqdm import tqdm

from config import Config
from design.models import DesignResult, MarginReport, ModelMargin
from systems.logic.algebra import build_output_nulling, simulate
from systems.logic.gramians import hankel_norm, normalize
from systems.logic.realization import box_samples, delta_system, realize
from systems.models import ModelSet, NormKind, Signal


def delta_output_norm(delta, u_star: Signal, t_plus: int) -> float:
    """||Delta u*|| on [0, t_plus] with the input switched off from k = 0"""
    u = u_star.extended(u_star.start, t_plus + 1)
    return simulate(delta, u, window=(0, t_plus + 1)).norm()


def diagnosis_scales(ms: ModelSet) -> List[float]:
    """l2-induced output scales of the nominal residual generators the diagnosis compares"""
    return [
        normalize(build_output_nulling(realize(entry.tf)), NormKind.L2_INDUCED, ms.t_minus, ms.t_plus).scalar_scale
        for entry in ms
    ]


def model_margin(ms: ModelSet, dr: DesignResult, i: int, random_samples: int, seed: int,
                 scales: Sequence[float]) -> ModelMargin:
    entry = ms[i]
    nominal = realize(entry.tf)
    samples = box_samples(entry, random_samples, seed)

    hankel_estimate, output_max = 0.0, 0.0
    for sample in samples:
        delta = delta_system(nominal, sample.realize())
        hankel_estimate = max(hankel_estimate, hankel_norm(delta, ms.t_minus, ms.t_plus))
        output_max = max(output_max, delta_output_norm(delta, dr.u_star, ms.t_plus))

    wrong = [dr.block_index[l][1] for l in dr.blocks_for_model(i)]
    separation = min((dr.separation(i, j) for j in wrong), default=None)
    if not samples:
        # nothing in the box could be evaluated
        logger.warning(f"{entry.label}: no stable sample in the uncertainty box")
        satisfied = False
    else:
        satisfied = hankel_estimate < dr.gamma_norm
        if not satisfied:
            logger.warning(f"{entry.label}: estimated max ||Delta||_H = {hankel_estimate:.6f} "
                           f"is not below gamma = {dr.gamma_norm:.6f}")

    # R_i d < R_j (s_ij - d) for every wrong candidate j
    separation_satisfied = None
    if wrong:
        separation_satisfied = bool(samples) and all(
            scales[i] * hankel_estimate < scales[j] * (dr.separation(i, j) - hankel_estimate) for j in wrong
        )

    return ModelMargin(
        index=i,
        label=entry.label,
        delta_hankel_estimate=float(hankel_estimate),
        samples_evaluated=len(samples),
        satisfied=bool(satisfied),
        delta_output_max=float(output_max),
        nominal_separation=None if separation is None else float(separation),
        output_check_satisfied=None if separation is None else bool(samples) and bool(separation >= output_max),
        separation_satisfied=separation_satisfied,
    )


def robust_margin_check(ms: ModelSet, dr: DesignResult,
                        random_samples: int = Config.MARGIN_RANDOM_SAMPLES,
                        seed: int = Config.MARGIN_SEED,
                        indices: Optional[List[int]] = None,
                        show_progress: bool = False) -> MarginReport:
    """
    Compares max ||Delta_i||_H over the vertices and `random_samples` draws of
    every box with gamma_norm. A box with no stable sample fails the check.

    Two diagnostics are reported beside it: the output check compares, under
    u*, the smallest nominal wrong-model residual with the largest output
    deviation, and the separation check tests R_i d < R_j (s_ij - d) with the
    diagnosis scales R, the estimate d and the nominal separations s_ij.
    """
    indices = ms.indices if indices is None else indices
    scales = diagnosis_scales(ms)
    margins = []
    for i in tqdm(indices, desc="Robustness margins", disable=not show_progress):
        margins.append(model_margin(ms, dr, i, random_samples, seed + i, scales))
        logger.debug(f"{ms[i].label}: ||Delta||_H <= {margins[-1].delta_hankel_estimate:.6e} (estimate)")

    report = MarginReport(
        gamma_norm=dr.gamma_norm,
        models=tuple(margins),
        random_samples=random_samples,
        seed=seed,
    )
    if report.satisfied:
        logger.info(f"Robustness condition holds for all {len(margins)} models")
    else:
        logger.warning(f"Robustness condition violated for {', '.join(m.label for m in report.violated)}")
    if report.separation_satisfied is False:
        logger.warning("Separation condition does not hold for every candidate pair")
    return report
