from dataclasses import replace
from typing import Optional

import numpy as np
from loguru import logger
from scipy.linalg import eigh

from config import Config
from design.logic.margins import robust_margin_check
from design.logic.maxmin import maxmin_optimize
from design.models import DesignResult, PerformanceIndex
from systems.logic.algebra import build_bank, final_state
from systems.logic.gramians import gramians, obs_gramian
from systems.models import (
    GramianPair, InputSetError, InterconnectionBank, ModelSet, NormKind, Signal,
)


def check_input_set(u: Signal, t_minus: int, channels: int = 1, tol: float = Config.ENERGY_TOL) -> Signal:
    """
    Returns the past part of u on [-t_minus, 0) after checking that u has
    unit energy there and vanishes from k = 0 on.
    """
    if u.channels != channels:
        raise InputSetError(f"Input has {u.channels} channels, expected {channels}")
    if u.start < -t_minus:
        raise InputSetError(f"Input starts at k={u.start}, before the excitation window [-{t_minus}, 0)")
    future = u.window(0, max(u.stop, 0))
    if np.any(future.values != 0):
        raise InputSetError("Input must vanish on the measurement window")
    past = u.window(-t_minus, 0)
    energy = past.energy()
    if abs(energy - 1.0) > tol:
        raise InputSetError(f"Input energy on the excitation window is {energy:.12f}, expected 1")
    return past


def block_energies(pair_or_Q, zeta0: np.ndarray) -> np.ndarray:
    Q_list = pair_or_Q.Q if isinstance(pair_or_Q, GramianPair) else pair_or_Q
    return np.array([float(zeta0 @ Q @ zeta0) for Q in Q_list])


def performance_index(bank: InterconnectionBank, u: Signal,
                      pair: Optional[GramianPair] = None) -> PerformanceIndex:
    """Smallest residual energy over the blocks of the bank for an input in the unit-energy set"""
    past = check_input_set(u, bank.t_minus, bank.F.n_inputs)
    zeta0 = final_state(bank.F, past)
    if pair is not None:
        per_block = block_energies(pair, zeta0)
    else:
        per_block = np.array([
            float(zeta0 @ obs_gramian(bank.F, bank.t_plus, rows) @ zeta0) for rows in bank.block_rows
        ])
    per_block = np.maximum(per_block, 0.0)
    gamma_energy = float(np.min(per_block))
    return PerformanceIndex(
        gamma_energy=gamma_energy,
        gamma_norm=float(np.sqrt(gamma_energy)),
        per_block=per_block,
        zeta0=zeta0,
    )


def extract_input(Rmat: np.ndarray, P: np.ndarray, zeta0_star: np.ndarray, t_minus: int,
                  rtol: float = Config.PINV_RTOL, range_tol: float = Config.RANGE_TOL,
                  energy_tol: float = Config.ENERGY_TOL) -> Signal:
    """
    Minimum-energy input R' P^+ zeta0 reaching zeta0 at k = 0. Column block k
    of R multiplies u(-1-k), so the stacked input is reversed into time order.
    """
    w, V = eigh((P + P.T) / 2)
    keep = w > rtol * max(w[-1], 0.0) if w.size else np.zeros(0, dtype=bool)
    Vr, wr = V[:, keep], w[keep]
    zeta = np.asarray(zeta0_star, dtype=float).reshape(-1)
    norm = np.linalg.norm(zeta)
    outside = np.linalg.norm(zeta - Vr @ (Vr.T @ zeta))
    if outside > range_tol * max(norm, 1.0):
        raise ValueError(f"zeta0 is not reachable: distance {outside:.3e} from range(P)")

    stacked = Rmat.T @ (Vr @ ((Vr.T @ zeta) / wr))
    m = Rmat.shape[1] // t_minus
    u = Signal(stacked.reshape(t_minus, m)[::-1], start=-t_minus)

    energy = u.energy()
    if energy == 0:
        raise InputSetError("Zero input reaches zeta0, it cannot be scaled to unit energy")
    if abs(energy - 1.0) > energy_tol:
        logger.warning(f"Optimal input has energy {energy:.12f}, rescaling to unit energy")
        u = u.scaled(1.0 / np.sqrt(energy))
    return u


def design_input(ms: ModelSet, scope: str = 'full', i: Optional[int] = None,
                 starts: int = Config.OPTIMIZER_STARTS, seed: int = Config.OPTIMIZER_SEED,
                 margins: bool = True, margin_samples: int = Config.MARGIN_RANDOM_SAMPLES,
                 margin_seed: int = Config.MARGIN_SEED, show_progress: bool = False) -> DesignResult:
    if scope not in ('full', 'model'):
        raise ValueError(f"Unknown design scope {scope}")
    if scope == 'model' and i is None:
        raise ValueError("Per-model design needs a model index")
    if scope == 'full':
        i = None

    models = ms.nominal_models()
    bank = build_bank(models, ms.t_minus, ms.t_plus, i=i, kind=NormKind.HANKEL,
                      degenerate_norm=Config.DEGENERATE_NORM)
    pair = gramians(bank)
    optimum = maxmin_optimize(pair.P, pair.Q, starts=starts, seed=seed, show_progress=show_progress)
    u_star = extract_input(pair.Rmat, pair.P, optimum.zeta, ms.t_minus)
    index = performance_index(bank, u_star, pair)
    feasible = index.gamma_energy > Config.FEASIBILITY_TOL

    where = 'the model set' if i is None else ms.labels[i]
    if feasible:
        logger.info(f"Designed input for {where}: gamma = {index.gamma_norm:.6f} "
                    f"(energy {index.gamma_energy:.6e}), block {index.argmin_block} is the closest")
    else:
        logger.warning(f"No discriminating input exists for {where}: gamma = {index.gamma_energy:.3e}")

    result = DesignResult(
        scope=scope,
        model_index=i,
        labels=tuple(ms.labels),
        t_minus=ms.t_minus,
        t_plus=ms.t_plus,
        u_star=u_star,
        zeta0_star=index.zeta0,
        gamma_energy=index.gamma_energy,
        gamma_norm=index.gamma_norm,
        per_block_values=tuple(float(v) for v in index.per_block),
        block_index=dict(bank.block_index),
        block_scales=tuple(bank.scales),
        optimizer_trace=optimum.trace,
        feasible=feasible,
        bank=bank,
        gramians=pair,
    )
    if margins:
        report = robust_margin_check(ms, result, random_samples=margin_samples, seed=margin_seed,
                                     show_progress=show_progress)
        result = replace(result, margin_report=report)
    return result
