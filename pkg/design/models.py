from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from systems.models import GramianPair, InterconnectionBank, Signal

# gamma is a residual energy in the optimization and its square root in every threshold test
GAMMA_CONVENTION = 'gamma_energy = min_l zeta0\' Q_l zeta0; thresholds use gamma_norm = sqrt(gamma_energy)'


@dataclass(frozen=True)
class OptimizerTrace:
    starts: int
    seed: int
    start_values: Tuple[float, ...]
    local_optima: Tuple[float, ...]
    chosen: int
    reduced_dimension: int

    def to_dict(self) -> Dict:
        return {
            'starts': self.starts,
            'seed': self.seed,
            'start_values': list(self.start_values),
            'local_optima': list(self.local_optima),
            'chosen': self.chosen,
            'reduced_dimension': self.reduced_dimension,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'OptimizerTrace':
        return cls(
            starts=data['starts'],
            seed=data['seed'],
            start_values=tuple(data['start_values']),
            local_optima=tuple(data['local_optima']),
            chosen=data['chosen'],
            reduced_dimension=data['reduced_dimension'],
        )


@dataclass(frozen=True, eq=False)
class MaxMinResult:
    zeta: np.ndarray
    value: float
    block_values: np.ndarray
    active_blocks: Tuple[int, ...]
    trace: OptimizerTrace
    feasible: bool


@dataclass(frozen=True, eq=False)
class PerformanceIndex:
    gamma_energy: float
    gamma_norm: float
    per_block: np.ndarray
    zeta0: np.ndarray

    @property
    def argmin_block(self) -> int:
        return int(np.argmin(self.per_block))


@dataclass(frozen=True)
class ModelMargin:
    index: int
    label: str
    delta_hankel_estimate: float
    samples_evaluated: int
    satisfied: bool
    # Output deviation under the designed input vs the smallest nominal separation
    delta_output_max: float
    nominal_separation: Optional[float]
    output_check_satisfied: Optional[bool]
    # R_i d < R_j (s_ij - d) with the diagnosis scales R, None without wrong candidates
    separation_satisfied: Optional[bool] = None

    def to_dict(self) -> Dict:
        return {
            'index': self.index,
            'label': self.label,
            'delta_hankel_estimate': self.delta_hankel_estimate,
            'samples_evaluated': self.samples_evaluated,
            'satisfied': self.satisfied,
            'delta_output_max': self.delta_output_max,
            'nominal_separation': self.nominal_separation,
            'output_check_satisfied': self.output_check_satisfied,
            'separation_satisfied': self.separation_satisfied,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'ModelMargin':
        return cls(**data)


@dataclass(frozen=True)
class MarginReport:
    """
    Per-model estimates of max ||Delta_i||_H over the uncertainty box compared
    with gamma_norm. Estimates come from vertices and random draws, so they
    are lower bounds of the true maximum.
    """
    gamma_norm: float
    models: Tuple[ModelMargin, ...]
    random_samples: int
    seed: int
    estimate_kind: str = 'lower bound (vertices + random samples)'

    @property
    def satisfied(self) -> bool:
        return all(m.satisfied for m in self.models)

    @property
    def violated(self) -> List[ModelMargin]:
        return [m for m in self.models if not m.satisfied]

    @property
    def separation_satisfied(self) -> Optional[bool]:
        checked = [m.separation_satisfied for m in self.models if m.separation_satisfied is not None]
        return all(checked) if checked else None

    def to_dict(self) -> Dict:
        return {
            'gamma_norm': self.gamma_norm,
            'satisfied': self.satisfied,
            'separation_satisfied': self.separation_satisfied,
            'random_samples': self.random_samples,
            'seed': self.seed,
            'estimate_kind': self.estimate_kind,
            'models': [m.to_dict() for m in self.models],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'MarginReport':
        return cls(
            gamma_norm=data['gamma_norm'],
            models=tuple(ModelMargin.from_dict(m) for m in data['models']),
            random_samples=data['random_samples'],
            seed=data['seed'],
            estimate_kind=data['estimate_kind'],
        )


@dataclass(frozen=True, eq=False)
class DesignResult:
    scope: str
    model_index: Optional[int]
    labels: Tuple[str, ...]
    t_minus: int
    t_plus: int
    u_star: Signal
    zeta0_star: np.ndarray
    gamma_energy: float
    gamma_norm: float
    per_block_values: Tuple[float, ...]
    block_index: Dict[int, Tuple[int, int]]
    block_scales: Tuple[float, ...]
    optimizer_trace: OptimizerTrace
    feasible: bool
    margin_report: Optional[MarginReport] = None
    bank: Optional[InterconnectionBank] = field(default=None, repr=False)
    gramians: Optional[GramianPair] = field(default=None, repr=False)

    def blocks_for_model(self, i: int) -> List[int]:
        return [l for l, (source, _) in sorted(self.block_index.items()) if source == i]

    def separation(self, i: int, j: int) -> float:
        """Unnormalized residual norm of candidate j under nominal data of model i"""
        for l, pair in self.block_index.items():
            if pair == (i, j):
                return float(np.sqrt(max(self.per_block_values[l], 0.0)) / self.block_scales[l])
        raise KeyError(f"No residual block for ({i}, {j})")
