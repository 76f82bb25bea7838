"""
Maximize min_l zeta' Q_l zeta over the reachability ellipsoid zeta' P^+ zeta = 1.

With P = L L' restricted to range(P), zeta = L eta turns the problem into a
max-min of quadratic forms eta' M_l eta on the unit sphere. Every start runs
an annealed log-sum-exp ascent followed by an exact-min polish; all starts
are advanced together as one batch.
"""
from typing import Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.linalg import eigh, eigvalsh
from scipy.special import logsumexp, softmax
from tqdm import tqdm

from config import Config
from design.models import MaxMinResult, OptimizerTrace


def ellipsoid_factor(P: np.ndarray, rtol: float = Config.PINV_RTOL) -> np.ndarray:
    """L with L L' = P on the numerically reachable subspace"""
    if P.size == 0:
        return np.zeros((0, 0))
    w, V = eigh((P + P.T) / 2)
    if w[-1] <= 0:
        return np.zeros((P.shape[0], 0))
    keep = w > rtol * w[-1]
    return V[:, keep] * np.sqrt(w[keep])


def block_values(M: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """q[s, l] = eta_s' M_l eta_s"""
    return np.einsum('si,lij,sj->sl', eta, M, eta)


def _normalized(eta: np.ndarray) -> np.ndarray:
    return eta / np.linalg.norm(eta, axis=1, keepdims=True)


def _smoothed(M: np.ndarray, eta: np.ndarray, temperature: float) -> Tuple[np.ndarray, np.ndarray]:
    """Soft minimum -logsumexp(-t q) / t and its Riemannian gradient"""
    q = block_values(M, eta)
    value = -logsumexp(-temperature * q, axis=1) / temperature
    weights = softmax(-temperature * q, axis=1)
    grad = 2 * np.einsum('sl,lij,sj->si', weights, M, eta)
    return value, grad - np.sum(grad * eta, axis=1, keepdims=True) * eta


def _exact(M: np.ndarray, eta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    q = block_values(M, eta)
    active = np.argmin(q, axis=1)
    grad = 2 * np.einsum('sij,sj->si', M[active], eta)
    return q[np.arange(len(eta)), active], grad - np.sum(grad * eta, axis=1, keepdims=True) * eta


def _ascend(objective, eta: np.ndarray, steps: np.ndarray, iterations: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-start adaptive ascent: grow the step on improvement, halve it otherwise"""
    value, grad = objective(eta)
    for _ in range(iterations):
        trial = _normalized(eta + steps[:, None] * grad)
        trial_value, trial_grad = objective(trial)
        better = trial_value > value
        eta = np.where(better[:, None], trial, eta)
        value = np.where(better, trial_value, value)
        grad = np.where(better[:, None], trial_grad, grad)
        steps = np.where(better, steps * 1.2, steps * 0.5)
        steps = np.maximum(steps, 1e-12)
    return eta, steps


def initial_points(M: np.ndarray, starts: int, rng: np.random.Generator) -> np.ndarray:
    """Top eigenvector of the mean form, then Gaussian directions"""
    r = M.shape[1]
    _, V = eigh(M.mean(axis=0))
    first = V[:, -1].reshape(1, r)
    rest = rng.standard_normal((max(starts - 1, 0), r))
    return _normalized(np.vstack([first, rest]))


def maxmin_optimize(P: np.ndarray, Q_list: Sequence[np.ndarray],
                    starts: int = Config.OPTIMIZER_STARTS,
                    seed: int = Config.OPTIMIZER_SEED,
                    tol: float = Config.FEASIBILITY_TOL,
                    show_progress: bool = False) -> MaxMinResult:
    if starts < 1:
        raise ValueError("Need at least one start")
    if len(Q_list) == 0:
        raise ValueError("Need at least one quadratic form")
    L = ellipsoid_factor(P)
    n, r = L.shape
    M = np.stack([L.T @ Q @ L for Q in Q_list]) if r else np.zeros((len(Q_list), 0, 0))
    M = (M + np.transpose(M, (0, 2, 1))) / 2
    scale = max((float(eigvalsh(Ml)[-1]) for Ml in M), default=0.0) if r else 0.0

    if r == 0 or scale <= 0:
        logger.warning("Every residual block vanishes on the reachable set, no discriminating input exists")
        zeta = L[:, 0] if r else np.zeros(n)
        trace = OptimizerTrace(starts, seed, (0.0,), (0.0,), 0, r)
        return MaxMinResult(zeta=zeta, value=0.0, block_values=np.zeros(len(Q_list)),
                            active_blocks=tuple(range(len(Q_list))), trace=trace, feasible=False)

    Mn = M / scale
    rng = np.random.default_rng(seed)
    eta = initial_points(Mn, starts, rng)
    start_values = _exact(Mn, eta)[0] * scale

    steps = np.full(len(eta), Config.INITIAL_STEP)
    temperatures = np.geomspace(Config.TEMPERATURE_START, Config.TEMPERATURE_END, Config.ANNEALING_STAGES)
    for temperature in tqdm(temperatures, desc="Annealing", disable=not show_progress):
        eta, steps = _ascend(lambda x: _smoothed(Mn, x, temperature), eta, steps, Config.STAGE_ITERATIONS)
    eta, _ = _ascend(lambda x: _exact(Mn, x), eta, steps, Config.POLISH_ITERATIONS)

    optima = _exact(Mn, eta)[0]
    chosen = int(np.argmax(optima))
    best = eta[chosen]
    q = block_values(Mn, best[None, :])[0] * scale
    value = float(np.min(q))
    active = tuple(int(l) for l in np.flatnonzero(q - value <= 1e-6 * scale))
    logger.debug(f"Max-min over {len(Q_list)} blocks in {r} dimensions: best {value:.6e} from start {chosen}")

    trace = OptimizerTrace(
        starts=starts,
        seed=seed,
        start_values=tuple(float(v) for v in start_values),
        local_optima=tuple(float(v) for v in optima * scale),
        chosen=chosen,
        reduced_dimension=r,
    )
    return MaxMinResult(
        zeta=L @ best,
        value=value,
        block_values=q,
        active_blocks=active,
        trace=trace,
        feasible=value > tol,
    )


def sphere_lower_bound(P: np.ndarray, Q_list: Sequence[np.ndarray], samples: int, seed: int) -> float:
    """Best min_l zeta' Q_l zeta over random points of the ellipsoid boundary"""
    L = ellipsoid_factor(P)
    if L.shape[1] == 0:
        return 0.0
    M = np.stack([L.T @ Q @ L for Q in Q_list])
    rng = np.random.default_rng(seed)
    best = 0.0
    for chunk in np.array_split(np.arange(samples), max(1, samples // 10000)):
        eta = _normalized(rng.standard_normal((len(chunk), L.shape[1])))
        best = max(best, float(np.max(np.min(block_values(M, eta), axis=1))))
    return best
