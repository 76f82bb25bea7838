import numpy as np
from loguru import logger
from scipy.linalg import pinv

from config import Config
from systems.logic.algebra import final_state
from systems.logic.gramians import observability_matrix, toeplitz_matrix
from systems.models import InitialStateProblem, OutputNullingRep, Signal, StateSpaceModel


def build_MN(rep: OutputNullingRep, t_plus: int) -> InitialStateProblem:
    """v = M x0 + N w on [0, t_plus] for the scaled residual of `rep`"""
    system = rep.system
    return InitialStateProblem(
        M=observability_matrix(system, t_plus),
        N=toeplitz_matrix(system, t_plus),
        t_plus=t_plus,
        n_residuals=rep.n_residuals,
        n_channels=system.n_inputs,
    )


def stack_trajectory(prob: InitialStateProblem, w: Signal) -> np.ndarray:
    """Time-major vector col(w(0), ..., w(t_plus))"""
    if w.start != 0 or len(w) != prob.t_plus + 1:
        raise ValueError(f"Trajectory must cover [0, {prob.t_plus}], got [{w.start}, {w.stop - 1}]")
    if w.channels != prob.n_channels:
        raise ValueError(f"Trajectory has {w.channels} channels, expected {prob.n_channels}")
    return w.values.reshape(-1)


def residual_from_state(prob: InitialStateProblem, x0: np.ndarray, w: Signal) -> Signal:
    v = prob.M @ np.asarray(x0, dtype=float).reshape(-1) + prob.N @ stack_trajectory(prob, w)
    return Signal(v.reshape(prob.t_plus + 1, prob.n_residuals), 0)


def least_squares_x0(prob: InitialStateProblem, w: Signal, rtol: float = Config.PINV_RTOL) -> np.ndarray:
    """Minimizer of the residual energy over x0: x* = -pinv(M) N w"""
    if prob.n_states == 0:
        return np.zeros(0)
    M_pinv, rank = pinv(prob.M, rtol=rtol, return_rank=True)
    if rank < prob.n_states:
        logger.warning(f"Initial state is not unique (rank {rank} of {prob.n_states}), "
                       f"using the minimum-norm solution")
    return -M_pinv @ (prob.N @ stack_trajectory(prob, w))


def free_response(ss: StateSpaceModel, x0: np.ndarray, t_plus: int) -> Signal:
    """Output on [0, t_plus] from x(0) = x0 with zero input"""
    y = observability_matrix(ss, t_plus) @ np.asarray(x0, dtype=float).reshape(-1)
    return Signal(y.reshape(t_plus + 1, ss.n_outputs), 0)


def past_input_x0(ss: StateSpaceModel, u_past: Signal) -> np.ndarray:
    """x(0) reached from x(-T-) = 0 by the past input"""
    if u_past.stop != 0:
        raise ValueError(f"Past input must end at k=-1, got support [{u_past.start}, {u_past.stop})")
    return final_state(ss, u_past)
