import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from config import Config
from design.logic.inputdesign import check_input_set
from diagnosis.models import DiagnosisResult, InitScheme
from systems.logic.algebra import build_output_nulling, stack
from systems.logic.gramians import normalize
from systems.logic.initstate import build_MN, least_squares_x0, past_input_x0, residual_from_state
from systems.logic.realization import realize
from systems.models import (
    InitialStateProblem, ModelSet, NormKind, OutputNullingRep, Signal, StateSpaceModel,
)


@dataclass(frozen=True, eq=False)
class Candidate:
    """One candidate model with its l2-normalized residual generator"""
    index: int
    label: str
    model: StateSpaceModel
    rep: OutputNullingRep
    problem: InitialStateProblem

    @property
    def scale(self) -> float:
        return self.rep.scalar_scale

    def initial_state(self, u_past: Signal, w: Signal, scheme: InitScheme) -> np.ndarray:
        if scheme is InitScheme.PAST_INPUT:
            return past_input_x0(self.model, u_past)
        return least_squares_x0(self.problem, w)

    def residual(self, u_past: Signal, w: Signal, scheme: InitScheme) -> Signal:
        return residual_from_state(self.problem, self.initial_state(u_past, w, scheme), w)


class DiagnosisEngine:
    def __init__(self, t_minus: int, t_plus: int):
        self.t_minus = t_minus
        self.t_plus = t_plus
        self.candidates: List[Candidate] = []

    def add_candidate(self, label: str, model: StateSpaceModel):
        rep = normalize(build_output_nulling(model), NormKind.L2_INDUCED, self.t_minus, self.t_plus)
        self.candidates.append(Candidate(
            index=len(self.candidates),
            label=label,
            model=model,
            rep=rep,
            problem=build_MN(rep, self.t_plus),
        ))
        logger.debug(f"Candidate {label}: l2-induced scale {rep.scalar_scale:.6e}")

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(c.label for c in self.candidates)

    def sigma_fd(self) -> StateSpaceModel:
        """All candidate residual generators driven by the same w"""
        return stack(*[c.rep.system for c in self.candidates])

    def _prepare(self, u_star: Signal, y_measured: Signal) -> Tuple[Signal, Signal]:
        m = self.candidates[0].model.n_inputs
        u_past = check_input_set(u_star, self.t_minus, m)
        if y_measured.start != 0 or len(y_measured) != self.t_plus + 1:
            raise ValueError(f"Measurement must cover [0, {self.t_plus}] ({self.t_plus + 1} samples), "
                             f"got {len(y_measured)} samples from k={y_measured.start}")
        w = Signal.zeros(0, self.t_plus + 1, m).stacked_with(y_measured)
        return u_past, w

    def residual(self, j: int, u_star: Signal, y_measured: Signal,
                 scheme: InitScheme = InitScheme.PAST_INPUT) -> Tuple[Signal, float]:
        u_past, w = self._prepare(u_star, y_measured)
        v = self.candidates[j].residual(u_past, w, InitScheme.parse(scheme))
        return v, v.norm()

    def diagnose(self, u_star: Signal, y_measured: Signal,
                 scheme: InitScheme = InitScheme.PAST_INPUT,
                 gamma_ref: Optional[float] = None,
                 keep_residuals: bool = True) -> DiagnosisResult:
        scheme = InitScheme.parse(scheme)
        started = time.perf_counter()
        u_past, w = self._prepare(u_star, y_measured)

        residuals = [c.residual(u_past, w, scheme) for c in self.candidates]
        norms = np.array([v.norm() for v in residuals])
        j_star = int(np.argmin(norms))
        ordered = np.sort(norms)
        margin = float(ordered[1] - ordered[0]) if len(ordered) > 1 else float('inf')
        tie = margin <= Config.TIE_TOL
        if tie:
            logger.warning(f"Residual norms tie within {margin:.3e}, choosing the lowest index {j_star}")

        elapsed = time.perf_counter() - started
        logger.debug(f"Diagnosis took {elapsed * 1e3:.2f} ms for {len(self.candidates)} candidates")
        return DiagnosisResult(
            residual_norms=tuple(float(v) for v in norms),
            unnormalized_norms=tuple(float(v) / c.scale for v, c in zip(norms, self.candidates)),
            j_star=j_star,
            margin=margin,
            tie=tie,
            init_scheme=scheme,
            gamma_ref=gamma_ref,
            labels=self.labels,
            residuals=tuple(residuals) if keep_residuals else None,
            wall_time=elapsed,
        )


def create_default_engine(ms: ModelSet) -> DiagnosisEngine:
    """Engine with the nominal model set as candidates"""
    engine = DiagnosisEngine(ms.t_minus, ms.t_plus)
    for entry in ms:
        engine.add_candidate(entry.label, realize(entry.tf))
    return engine


def run_diagnosis(ms: ModelSet, u_star: Signal, y_measured: Signal,
                  init_scheme=Config.DEFAULT_INIT_SCHEME, gamma_ref: Optional[float] = None,
                  engine: Optional[DiagnosisEngine] = None) -> DiagnosisResult:
    engine = engine or create_default_engine(ms)
    result = engine.diagnose(u_star, y_measured, InitScheme.parse(init_scheme), gamma_ref)
    logger.info(f"Diagnosis: {result.diagnosed_label} "
                f"(||v|| = {result.residual_norms[result.j_star]:.3e}, margin {result.margin:.3e}, "
                f"{result.wall_time * 1e3:.2f} ms)")
    return result


def residual_for_candidate(ms: ModelSet, j: int, u_star: Signal, y_measured: Signal,
                           init_scheme=Config.DEFAULT_INIT_SCHEME,
                           engine: Optional[DiagnosisEngine] = None) -> Tuple[Signal, float]:
    if not 0 <= j < len(ms):
        raise ValueError(f"Model index {j} not in 0..{len(ms) - 1}")
    engine = engine or create_default_engine(ms)
    return engine.residual(j, u_star, y_measured, InitScheme.parse(init_scheme))
