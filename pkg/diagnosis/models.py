from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from systems.models import Signal


class InitScheme(Enum):
    PAST_INPUT = 'past'
    LEAST_SQUARES = 'ls'

    @classmethod
    def parse(cls, value) -> 'InitScheme':
        if isinstance(value, InitScheme):
            return value
        aliases = {'past': cls.PAST_INPUT, 'past_input': cls.PAST_INPUT,
                   'ls': cls.LEAST_SQUARES, 'least_squares': cls.LEAST_SQUARES}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"Unknown initialization scheme {value}")

    @property
    def label(self) -> str:
        return 'past_input' if self is InitScheme.PAST_INPUT else 'least_squares'


@dataclass(frozen=True, eq=False)
class DiagnosisResult:
    residual_norms: Tuple[float, ...]
    unnormalized_norms: Tuple[float, ...]
    j_star: int
    margin: float
    tie: bool
    init_scheme: InitScheme
    gamma_ref: Optional[float] = None
    labels: Tuple[str, ...] = ()
    residuals: Optional[Tuple[Signal, ...]] = field(default=None, repr=False)
    # logged, not serialized
    wall_time: float = field(default=0.0, compare=False)

    @property
    def diagnosed_label(self) -> str:
        return self.labels[self.j_star] if self.labels else str(self.j_star)

    def to_dict(self) -> Dict:
        return {
            'residual_norms': list(self.residual_norms),
            'unnormalized_norms': list(self.unnormalized_norms),
            'j_star': self.j_star,
            'diagnosis': self.diagnosed_label,
            'margin': self.margin,
            'tie': self.tie,
            'init_scheme': self.init_scheme.label,
            'gamma_ref': self.gamma_ref,
        }


@dataclass(frozen=True, eq=False)
class ExperimentRecord:
    truth_index: int
    truth_label: str
    sample: str
    parameters: Dict[str, float]
    u: Signal
    y: Signal
    result: DiagnosisResult

    @property
    def correct(self) -> bool:
        return self.result.j_star == self.truth_index

    def to_dict(self) -> Dict:
        return {
            'truth_index': self.truth_index,
            'truth_label': self.truth_label,
            'sample': self.sample,
            'parameters': {k: self.parameters[k] for k in sorted(self.parameters)},
            'correct': self.correct,
            'diagnosis': self.result.to_dict(),
        }


@dataclass(frozen=True)
class ModelTrials:
    index: int
    label: str
    trials: int
    misdiagnoses: int
    # None when every trial was rejected
    min_margin: Optional[float]
    median_margin: Optional[float]
    condition_satisfied: Optional[bool]
    rejected: int = 0
    separation_satisfied: Optional[bool] = None

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class MonteCarloSummary:
    trials: int
    seed: int
    mode: str
    box_scale: float
    models: Tuple[ModelTrials, ...]
    condition_satisfied: Optional[bool]
    separation_satisfied: Optional[bool] = None
    wall_time: float = field(default=0.0, compare=False)

    @property
    def misdiagnoses(self) -> int:
        return sum(m.misdiagnoses for m in self.models)

    @property
    def guarantee_broken(self) -> bool:
        """Misdiagnoses although the sufficient condition was reported to hold"""
        return bool(self.condition_satisfied) and self.misdiagnoses > 0

    def to_dict(self) -> Dict:
        # wall time is left out so repeated runs serialize identically
        return {
            'trials': self.trials,
            'seed': self.seed,
            'mode': self.mode,
            'box_scale': self.box_scale,
            'misdiagnoses': self.misdiagnoses,
            'condition_satisfied': self.condition_satisfied,
            'separation_satisfied': self.separation_satisfied,
            'rejected': sum(m.rejected for m in self.models),
            'models': [m.to_dict() for m in self.models],
        }
