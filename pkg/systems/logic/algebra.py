from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.linalg import block_diag
from scipy.signal import dlsim

from systems.models import (
    BankKind, InterconnectionBank, NormKind, OutputNullingRep, Signal, StateSpaceModel,
)


def static_gain(gain) -> StateSpaceModel:
    D = np.atleast_2d(np.asarray(gain, dtype=float))
    return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, D.shape[1])), np.zeros((D.shape[0], 0)), D)


def identity(m: int) -> StateSpaceModel:
    return static_gain(np.eye(m))


def negate(ss: StateSpaceModel) -> StateSpaceModel:
    return StateSpaceModel(ss.A, ss.B, -ss.C, -ss.D)


def series(first: StateSpaceModel, second: StateSpaceModel) -> StateSpaceModel:
    """u -> first -> second -> y. The state is col(x_first, x_second)."""
    if second.n_inputs != first.n_outputs:
        raise ValueError(f"Cannot feed {first.n_outputs} outputs into {second.n_inputs} inputs")
    n1, n2 = first.n_states, second.n_states
    A = np.block([
        [first.A, np.zeros((n1, n2))],
        [second.B @ first.C, second.A],
    ])
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    D = second.D @ first.D
    return StateSpaceModel(A, B, C, D)


def _check_shared_input(systems: Sequence[StateSpaceModel]):
    if not systems:
        raise ValueError("Need at least one system")
    m = systems[0].n_inputs
    for ss in systems[1:]:
        if ss.n_inputs != m:
            raise ValueError(f"Input dimensions differ: {m} and {ss.n_inputs}")


def stack(*systems: StateSpaceModel) -> StateSpaceModel:
    """Shared input, outputs stacked in argument order"""
    _check_shared_input(systems)
    A = block_diag(*[ss.A for ss in systems])
    B = np.vstack([ss.B for ss in systems])
    C = block_diag(*[ss.C for ss in systems])
    D = np.vstack([ss.D for ss in systems])
    return StateSpaceModel(A, B, C, D)


def parallel(*systems: StateSpaceModel) -> StateSpaceModel:
    """Shared input, outputs summed"""
    _check_shared_input(systems)
    p = systems[0].n_outputs
    for ss in systems[1:]:
        if ss.n_outputs != p:
            raise ValueError(f"Output dimensions differ: {p} and {ss.n_outputs}")
    A = block_diag(*[ss.A for ss in systems])
    B = np.vstack([ss.B for ss in systems])
    C = np.hstack([ss.C for ss in systems])
    D = sum(ss.D for ss in systems)
    return StateSpaceModel(A, B, C, D)


# Output-nulling representations

def build_output_nulling(ss: StateSpaceModel) -> OutputNullingRep:
    """
    Residual generator with the state of `ss`, driven by u only:
        x(k+1) = A x(k) + B u(k)
        v(k)   = y(k) - C x(k) - D u(k)
    """
    n, m, p = ss.n_states, ss.n_inputs, ss.n_outputs
    return OutputNullingRep(
        Acal=ss.A,
        Bcal=np.hstack([ss.B, np.zeros((n, p))]),
        Ccal=-ss.C,
        Dcal=np.hstack([-ss.D, np.eye(p)]),
        n_inputs=m,
    )


def cross_residual(model_i: StateSpaceModel, reps: Sequence[OutputNullingRep]) -> StateSpaceModel:
    """
    Map from u to the stacked residuals of `reps` when y is produced by model_i:
    stack_j(G_j^on) applied to col(u, G_i u). G_i's state comes first.
    """
    source = stack(identity(model_i.n_inputs), model_i)
    return series(source, stack(*[rep.system for rep in reps]))


# Interconnection banks

def _block_norm(ss: StateSpaceModel, kind: NormKind, t_minus: int, t_plus: int) -> float:
    from systems.logic.gramians import system_norm  # Avoid circular import
    return system_norm(ss, kind, t_minus, t_plus)


def model_bank(models: Sequence[StateSpaceModel], i: int, t_minus: int, t_plus: int,
               kind: NormKind = NormKind.HANKEL, degenerate_norm: float = 1e-12) -> InterconnectionBank:
    """Bank F^(i) of the residuals of every candidate j != i under data from model i"""
    from systems.logic.gramians import scale_factor  # Avoid circular import

    candidates = [j for j in range(len(models)) if j != i]
    if not candidates:
        raise ValueError("need at least one fault model")
    reps = [build_output_nulling(models[j]) for j in candidates]
    F = cross_residual(models[i], reps)

    rows, scales, degenerate = [], [], []
    offset = 0
    for l, (j, rep) in enumerate(zip(candidates, reps)):
        block = slice(offset, offset + rep.n_residuals)
        offset += rep.n_residuals
        rows.append(block)
        norm = _block_norm(F.output_rows(block), kind, t_minus, t_plus)
        if norm <= degenerate_norm:
            logger.warning(f"Residual block F_{j}^({i}) has norm {norm:.3e}, left unnormalized")
            degenerate.append(l)
            scales.append(1.0)
        else:
            scales.append(scale_factor(F.output_rows(block), kind, t_minus, t_plus))
        logger.debug(f"F_{j}^({i}): {kind.value} norm {norm:.6e}, scale {scales[-1]:.6e}")

    S = np.diag(np.concatenate([np.full(block.stop - block.start, s) for block, s in zip(rows, scales)]))
    return InterconnectionBank(
        F=F.scaled_outputs(S),
        block_index={l: (i, j) for l, j in enumerate(candidates)},
        block_rows=tuple(rows),
        kind=BankKind.PER_MODEL,
        t_minus=t_minus,
        t_plus=t_plus,
        scales=tuple(scales),
        degenerate_blocks=tuple(degenerate),
    )


def assemble_bank(banks: Sequence[InterconnectionBank]) -> InterconnectionBank:
    """Parallel connection of per-model banks sharing the input u; blocks renumbered in order"""
    if not banks:
        raise ValueError("Need at least one bank")
    block_index: Dict[int, Tuple[int, int]] = {}
    rows: List[slice] = []
    scales: List[float] = []
    degenerate: List[int] = []
    row_offset = 0
    for bank in banks:
        for l in range(bank.n_blocks):
            block = bank.block_rows[l]
            new_l = len(rows)
            block_index[new_l] = bank.block_index[l]
            rows.append(slice(block.start + row_offset, block.stop + row_offset))
            scales.append(bank.scales[l])
            if l in bank.degenerate_blocks:
                degenerate.append(new_l)
        row_offset += bank.F.n_outputs
    return InterconnectionBank(
        F=stack(*[bank.F for bank in banks]),
        block_index=block_index,
        block_rows=tuple(rows),
        kind=BankKind.FULL,
        t_minus=banks[0].t_minus,
        t_plus=banks[0].t_plus,
        scales=tuple(scales),
        degenerate_blocks=tuple(degenerate),
    )


def build_bank(models: Sequence[StateSpaceModel], t_minus: int, t_plus: int, i: Optional[int] = None,
               kind: NormKind = NormKind.HANKEL, degenerate_norm: float = 1e-12) -> InterconnectionBank:
    """
    F^(i) when i is given, otherwise the full bank F with n(n+1) blocks
    ordered by i and then by j.
    """
    if len(models) < 2:
        raise ValueError("need at least one fault model")
    if i is not None:
        if not 0 <= i < len(models):
            raise ValueError(f"Model index {i} not in 0..{len(models) - 1}")
        return model_bank(models, i, t_minus, t_plus, kind, degenerate_norm)
    bank = assemble_bank([
        model_bank(models, source, t_minus, t_plus, kind, degenerate_norm) for source in range(len(models))
    ])
    logger.info(f"Built bank with {bank.n_blocks} residual blocks and {bank.F.n_states} states")
    return bank


# Simulation

def simulate_states(ss: StateSpaceModel, u: Signal, x_init: Optional[np.ndarray] = None
                    ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Runs the recursion over the support of u starting from x(u.start) = x_init
    (zero by default). Returns the outputs (samples, p) and the states
    (samples + 1, n), the last row being the state right after the window.
    """
    if u.channels != ss.n_inputs:
        raise ValueError(f"Input has {u.channels} channels, system expects {ss.n_inputs}")
    n, samples = ss.n_states, len(u)
    x0 = np.zeros(n) if x_init is None else np.asarray(x_init, dtype=float).reshape(-1)
    if x0.shape != (n,):
        raise ValueError(f"Initial state has {x0.size} entries, system has {n} states")
    if samples == 0:
        return np.zeros((0, ss.n_outputs)), x0.reshape(1, n)
    if n == 0:
        return u.values @ ss.D.T, np.zeros((samples + 1, 0))

    _, y, x = dlsim((ss.A, ss.B, ss.C, ss.D, 1), u.values, x0=x0)
    y = np.reshape(y, (samples, ss.n_outputs))
    x = np.reshape(x, (samples, n))
    final = ss.A @ x[-1] + ss.B @ u.values[-1]
    return y, np.vstack([x, final])


def simulate(ss: StateSpaceModel, u: Signal, x_init: Optional[np.ndarray] = None,
             window: Optional[Tuple[int, int]] = None) -> Signal:
    """Output over the support of u, optionally cut to window = (start, stop)"""
    y, _ = simulate_states(ss, u, x_init)
    output = Signal(y, u.start)
    if window is not None:
        start, stop = window
        if start < u.start or stop > u.stop:
            raise ValueError(f"Window [{start}, {stop}) is outside the input support [{u.start}, {u.stop})")
        output = output.window(start, stop)
    return output


def final_state(ss: StateSpaceModel, u: Signal, x_init: Optional[np.ndarray] = None) -> np.ndarray:
    _, x = simulate_states(ss, u, x_init)
    return x[-1]
