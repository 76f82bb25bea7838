"""
Finite-horizon Gramians, Hankel and Toeplitz operators, norms and output
scaling. The excitation window is [-t_minus, 0) and the measurement window
is [0, t_plus], i.e. t_plus + 1 samples.
"""
from typing import List, Optional

import numpy as np
from loguru import logger
from scipy.linalg import eigvalsh, svdvals

from config import Config
from systems.models import (
    DegenerateSystemError, GramianPair, InterconnectionBank, NormKind, OutputNullingRep,
    StateSpaceModel,
)


def _check_window(name: str, value: int, allow_zero: bool = False):
    if value < 0 or (value == 0 and not allow_zero):
        raise ValueError(f"{name} must be {'non-negative' if allow_zero else 'positive'}, got {value}")


def reachability_matrix(ss: StateSpaceModel, t_minus: int) -> np.ndarray:
    """[B, AB, ..., A^(t_minus-1) B]; column block k multiplies u(-1-k)"""
    _check_window('t_minus', t_minus)
    blocks = []
    AkB = ss.B
    for _ in range(t_minus):
        blocks.append(AkB)
        AkB = ss.A @ AkB
    return np.hstack(blocks)


def reach_gramian(ss: StateSpaceModel, t_minus: int) -> np.ndarray:
    _check_window('t_minus', t_minus)
    P = np.zeros((ss.n_states, ss.n_states))
    AkB = ss.B
    for _ in range(t_minus):
        P += AkB @ AkB.T
        AkB = ss.A @ AkB
    return (P + P.T) / 2


def observability_matrix(ss: StateSpaceModel, t_plus: int, rows=None) -> np.ndarray:
    """col(C, CA, ..., CA^t_plus), restricted to the given output rows"""
    _check_window('t_plus', t_plus, allow_zero=True)
    C = ss.C if rows is None else ss.C[rows, :]
    blocks = []
    CAk = C
    for _ in range(t_plus + 1):
        blocks.append(CAk)
        CAk = CAk @ ss.A
    return np.vstack(blocks)


def obs_gramian(ss: StateSpaceModel, t_plus: int, rows=None) -> np.ndarray:
    """sum_{k=0}^{t_plus} (A^k)' C_l' C_l A^k for the output rows of block l"""
    _check_window('t_plus', t_plus, allow_zero=True)
    C = ss.C if rows is None else ss.C[rows, :]
    Q = np.zeros((ss.n_states, ss.n_states))
    CAk = C
    for _ in range(t_plus + 1):
        Q += CAk.T @ CAk
        CAk = CAk @ ss.A
    return (Q + Q.T) / 2


def gramians(bank: InterconnectionBank, t_minus: Optional[int] = None,
             t_plus: Optional[int] = None) -> GramianPair:
    t_minus = bank.t_minus if t_minus is None else t_minus
    t_plus = bank.t_plus if t_plus is None else t_plus
    F = bank.F
    Rmat = reachability_matrix(F, t_minus)
    P = reach_gramian(F, t_minus)
    Q = [obs_gramian(F, t_plus, rows) for rows in bank.block_rows]
    logger.debug(f"Gramians of a {F.n_states}-state bank: rank P = {np.linalg.matrix_rank(P)}")
    return GramianPair(P=P, Q=tuple(Q), Rmat=Rmat)


def hankel_matrix(ss: StateSpaceModel, t_minus: int, t_plus: int) -> np.ndarray:
    """
    Block (k, kappa) = C A^(k + kappa) B maps u(-1-kappa) to y(k),
    k = 0..t_plus, kappa = 0..t_minus-1.
    """
    if ss.is_static:
        return np.zeros(((t_plus + 1) * ss.n_outputs, t_minus * ss.n_inputs))
    return observability_matrix(ss, t_plus) @ reachability_matrix(ss, t_minus)


def gramian_hankel_norm(ss: StateSpaceModel, t_minus: int, t_plus: int) -> float:
    """sqrt(lambda_max(P Q)) evaluated as the top eigenvalue of R' Q R"""
    _check_window('t_minus', t_minus)
    _check_window('t_plus', t_plus, allow_zero=True)
    if ss.is_static:
        return 0.0
    Rmat = reachability_matrix(ss, t_minus)
    Q = obs_gramian(ss, t_plus)
    W = Rmat.T @ Q @ Rmat
    top = eigvalsh((W + W.T) / 2)[-1]
    return float(np.sqrt(max(top, 0.0)))


def hankel_norm(ss: StateSpaceModel, t_minus: int, t_plus: int) -> float:
    """
    Finite-horizon Hankel norm, the largest singular value of O R. Equal to
    sqrt(lambda_max(P Q)) but without squaring, so exact cancellations
    (e.g. G - G) stay at rounding level.
    """
    _check_window('t_minus', t_minus)
    _check_window('t_plus', t_plus, allow_zero=True)
    if ss.is_static:
        return 0.0
    return float(svdvals(hankel_matrix(ss, t_minus, t_plus))[0])


def toeplitz_matrix(ss: StateSpaceModel, t_plus: int) -> np.ndarray:
    """Lower block-Toeplitz map of u(0..t_plus) to y(0..t_plus) from a zero state"""
    _check_window('t_plus', t_plus, allow_zero=True)
    p, m = ss.n_outputs, ss.n_inputs
    markov = ss.markov_parameters(t_plus + 1)
    T = np.zeros(((t_plus + 1) * p, (t_plus + 1) * m))
    for k in range(t_plus + 1):
        for kappa in range(k + 1):
            T[k * p:(k + 1) * p, kappa * m:(kappa + 1) * m] = markov[k - kappa]
    return T


def l2_induced_norm(ss: StateSpaceModel, t_plus: int) -> float:
    T = toeplitz_matrix(ss, t_plus)
    if T.size == 0:
        return 0.0
    return float(svdvals(T)[0])


def system_norm(ss: StateSpaceModel, kind: NormKind, t_minus: int, t_plus: int) -> float:
    if kind == NormKind.HANKEL:
        return hankel_norm(ss, t_minus, t_plus)
    if kind == NormKind.L2_INDUCED:
        return l2_induced_norm(ss, t_plus)
    raise ValueError(f"Cannot compute a {kind.value} norm")


def scale_factor(ss: StateSpaceModel, kind: NormKind, t_minus: int, t_plus: int,
                 bracket: float = Config.BISECTION_BRACKET,
                 rtol: float = Config.BISECTION_RTOL,
                 tolerance: float = Config.NORMALIZATION_TOL) -> float:
    """
    Scalar r with norm(r * ss) = 1. The closed form 1 / norm(ss) seeds a
    bisection in log r over [guess / bracket, guess * bracket].
    """
    norm = system_norm(ss, kind, t_minus, t_plus)
    if norm <= Config.DEGENERATE_NORM:
        raise DegenerateSystemError(f"Cannot normalize a system with {kind.value} norm {norm:.3e}")
    guess = 1.0 / norm

    def excess(r: float) -> float:
        return system_norm(ss.scaled_outputs(r), kind, t_minus, t_plus) - 1.0

    lo, hi = guess / bracket, guess * bracket
    if excess(lo) > 0 or excess(hi) < 0:
        raise DegenerateSystemError(f"Normalization bracket [{lo:.3e}, {hi:.3e}] does not contain a root")
    while hi / lo - 1.0 > rtol:
        mid = np.sqrt(lo * hi)
        if excess(mid) > 0:
            hi = mid
        else:
            lo = mid
    r = float(np.sqrt(lo * hi))

    achieved = excess(r) + 1.0
    if abs(achieved - 1.0) > tolerance:
        raise DegenerateSystemError(f"Normalized {kind.value} norm is {achieved:.9f}, expected 1")
    if abs(r / guess - 1.0) > tolerance:
        logger.warning(f"Bisection moved the scale factor from {guess:.9e} to {r:.9e}")
    return r


def normalize(rep: OutputNullingRep, kind: NormKind, t_minus: int, t_plus: int) -> OutputNullingRep:
    """Rescale the residual so the chosen norm of the map w -> v is 1. Zero residuals stay zero."""
    if kind == NormKind.UNSCALED:
        raise ValueError("Choose the hankel or l2_induced norm to normalize")
    r = scale_factor(rep.system, kind, t_minus, t_plus)
    return OutputNullingRep(rep.Acal, rep.Bcal, rep.Ccal, rep.Dcal, rep.n_inputs,
                            scale=r * rep.scale, norm_kind=kind)


def min_eigenvalues(pair: GramianPair) -> List[float]:
    """Smallest eigenvalue of P followed by those of every Q_l"""
    return [float(eigvalsh(M)[0]) if M.size else 0.0 for M in (pair.P,) + pair.Q]
