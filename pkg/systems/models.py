from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple, Iterator
import numpy as np
from scipy.signal import freqz
from django.core.exceptions import ValidationError


class UnstableModelError(ValidationError):
    """Raised when a model (or a sampled member of an uncertainty box) is not stable."""
    def __init__(self, message, parameters: Optional[Dict[str, float]] = None):
        super().__init__(message)
        self.parameters = dict(parameters or {})


class ModelFileError(ValidationError):
    pass


class InputSetError(ValueError):
    """Input is not a unit-energy signal supported on the excitation window"""
    pass


class DegenerateSystemError(ValueError):
    pass


def _frozen_matrix(value, rows: int = 0, cols: int = 0) -> np.ndarray:
    """Read-only 2-D float copy. Empty input becomes a rows x cols zero matrix."""
    array = np.atleast_2d(np.array(value, dtype=float))
    if array.size == 0:
        array = np.zeros((rows, cols))
    array.setflags(write=False)
    return array


def spectral_radius(A: np.ndarray) -> float:
    if A.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


@dataclass(frozen=True)
class Section:
    """
    One second-order section (1 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
    """
    b1: float
    b2: float
    a1: float
    a2: float

    @property
    def is_identity(self) -> bool:
        return self.b1 == 0 and self.b2 == 0 and self.a1 == 0 and self.a2 == 0

    @property
    def numerator(self) -> List[float]:
        return [1.0, self.b1, self.b2]

    @property
    def denominator(self) -> List[float]:
        return [1.0, self.a1, self.a2]

    def pole_radius(self) -> float:
        roots = np.roots(self.denominator)
        return float(np.max(np.abs(roots))) if roots.size else 0.0


def section_parameter_names(index: int) -> Dict[str, str]:
    """Global parameter names of the local coefficients of section `index`"""
    return {
        'b1': f"b{2 * index + 1}",
        'b2': f"b{2 * index + 2}",
        'a1': f"a{2 * index + 1}",
        'a2': f"a{2 * index + 2}",
    }


@dataclass(frozen=True)
class TransferFunctionSpec:
    """
    Gain times a cascade of biquad sections. Parameters are addressed by their
    global names: `g`, then b1, b2, a1, a2 for the first section, b3, b4, a3, a4
    for the second one and so on.
    """
    gain: float
    sections: Tuple[Section, ...]
    sample_rate: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'sections', tuple(self.sections))
        self.clean()

    def clean(self):
        if len(self.sections) == 0:
            raise ValidationError("Transfer function needs at least one section")
        if self.sample_rate <= 0:
            raise ValidationError(f"Sample rate must be positive, got {self.sample_rate}")
        for index, section in enumerate(self.sections):
            radius = section.pole_radius()
            if radius >= 1.0:
                names = section_parameter_names(index)
                raise UnstableModelError(
                    f"Section {index + 1} has a pole of radius {radius:.6f} "
                    f"({names['a1']}={section.a1}, {names['a2']}={section.a2})",
                    parameters=self.parameters()
                )

    def parameters(self) -> Dict[str, float]:
        params = {'g': float(self.gain)}
        for index, section in enumerate(self.sections):
            for local, name in section_parameter_names(index).items():
                params[name] = float(getattr(section, local))
        return params

    def with_parameters(self, values: Dict[str, float]) -> 'TransferFunctionSpec':
        """Return a copy with the given (global) parameters replaced. Stability is checked."""
        params = self.parameters()
        unknown = set(values) - set(params)
        if unknown:
            raise ValidationError(f"Unknown parameters: {', '.join(sorted(unknown))}")
        params.update(values)
        sections = []
        for index in range(len(self.sections)):
            names = section_parameter_names(index)
            sections.append(Section(**{local: params[name] for local, name in names.items()}))
        return TransferFunctionSpec(gain=params['g'], sections=tuple(sections), sample_rate=self.sample_rate)

    def frequency_response(self, omegas: np.ndarray) -> np.ndarray:
        """Complex response at the given frequencies (rad/sample)"""
        omegas = np.asarray(omegas, dtype=float)
        response = np.full(omegas.shape, complex(self.gain))
        for section in self.sections:
            _, h = freqz(section.numerator, section.denominator, worN=omegas)
            response = response * h
        return response


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """
    Discrete-time realization x(k+1) = A x(k) + B u(k), y(k) = C x(k) + D u(k).
    Static systems have an empty A.
    """
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        D = _frozen_matrix(self.D)
        n = np.atleast_2d(np.asarray(self.A)).shape[0] if np.size(self.A) else 0
        A = _frozen_matrix(self.A, n, n)
        B = _frozen_matrix(self.B, n, D.shape[1])
        C = _frozen_matrix(self.C, D.shape[0], n)
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'B', B)
        object.__setattr__(self, 'C', C)
        object.__setattr__(self, 'D', D)
        self.clean()

    def clean(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.B.shape != (n, self.n_inputs):
            raise ValueError(f"B has shape {self.B.shape}, expected {(n, self.n_inputs)}")
        if self.C.shape != (self.n_outputs, n):
            raise ValueError(f"C has shape {self.C.shape}, expected {(self.n_outputs, n)}")
        radius = spectral_radius(self.A)
        if radius >= 1.0:
            raise UnstableModelError(f"Spectral radius {radius:.6f} is not below 1")

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.D.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.D.shape[0]

    @property
    def is_static(self) -> bool:
        return self.n_states == 0

    @property
    def spectral_radius(self) -> float:
        return spectral_radius(self.A)

    def scaled_outputs(self, scale) -> 'StateSpaceModel':
        """Left-multiply the output equation by a scalar or a matrix"""
        S = np.atleast_2d(np.asarray(scale, dtype=float))
        if S.shape == (1, 1):
            return StateSpaceModel(self.A, self.B, S[0, 0] * self.C, S[0, 0] * self.D)
        return StateSpaceModel(self.A, self.B, S @ self.C, S @ self.D)

    def output_rows(self, rows) -> 'StateSpaceModel':
        return StateSpaceModel(self.A, self.B, self.C[rows, :], self.D[rows, :])

    def markov_parameters(self, count: int) -> List[np.ndarray]:
        """[D, CB, CAB, ...] with `count` entries"""
        params = [self.D.copy()]
        AkB = self.B
        for _ in range(1, count):
            params.append(self.C @ AkB)
            AkB = self.A @ AkB
        return params

    def frequency_response(self, omegas: np.ndarray) -> np.ndarray:
        """Array of shape (len(omegas), p, m)"""
        omegas = np.asarray(omegas, dtype=float)
        n = self.n_states
        response = np.empty((omegas.size, self.n_outputs, self.n_inputs), dtype=complex)
        for index, omega in enumerate(omegas):
            if n == 0:
                response[index] = self.D
                continue
            z = np.exp(1j * omega)
            response[index] = self.C @ np.linalg.solve(z * np.eye(n) - self.A, self.B) + self.D
        return response


@dataclass(frozen=True, eq=False)
class Signal:
    """
    Sampled signal with `values[k - start]` holding the sample at time k.
    Values are stored as (samples, channels).
    """
    values: np.ndarray
    start: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2:
            raise ValueError(f"Signal values must be 1-D or 2-D, got {values.ndim}-D")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'start', int(self.start))

    @classmethod
    def zeros(cls, start: int, stop: int, channels: int = 1) -> 'Signal':
        return cls(np.zeros((stop - start, channels)), start)

    @property
    def stop(self) -> int:
        return self.start + self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.start, self.stop)

    def __len__(self):
        return self.values.shape[0]

    def energy(self) -> float:
        return float(np.sum(self.values ** 2))

    def norm(self) -> float:
        return float(np.sqrt(self.energy()))

    def window(self, start: int, stop: int) -> 'Signal':
        """Samples on [start, stop), zero outside the stored support"""
        out = np.zeros((stop - start, self.channels))
        lo, hi = max(start, self.start), min(stop, self.stop)
        if hi > lo:
            out[lo - start:hi - start] = self.values[lo - self.start:hi - self.start]
        return Signal(out, start)

    def extended(self, start: int, stop: int) -> 'Signal':
        if start > self.start or stop < self.stop:
            raise ValueError(f"[{start}, {stop}) does not cover [{self.start}, {self.stop})")
        return self.window(start, stop)

    def stacked_with(self, other: 'Signal') -> 'Signal':
        """Channel-wise concatenation col(self, other) on a common support"""
        if self.start != other.start or len(self) != len(other):
            raise ValueError("Signals must share their support to be stacked")
        return Signal(np.hstack([self.values, other.values]), self.start)

    def __add__(self, other: 'Signal') -> 'Signal':
        if self.start != other.start or self.values.shape != other.values.shape:
            raise ValueError("Signals must share their support to be added")
        return Signal(self.values + other.values, self.start)

    def __sub__(self, other: 'Signal') -> 'Signal':
        if self.start != other.start or self.values.shape != other.values.shape:
            raise ValueError("Signals must share their support to be subtracted")
        return Signal(self.values - other.values, self.start)

    def scaled(self, factor: float) -> 'Signal':
        return Signal(self.values * factor, self.start)


@dataclass(frozen=True)
class UncertaintySpec:
    """
    Relative half-widths of a parametric interval box, e.g. {'a6': 0.02}
    means a6 varies within ±2% of its nominal value.
    """
    half_widths: Dict[str, float] = field(default_factory=dict)
    structure: str = 'parametric-interval'

    def __post_init__(self):
        object.__setattr__(self, 'half_widths', {k: float(v) for k, v in dict(self.half_widths).items()})
        self.clean()

    def clean(self):
        for name, width in self.half_widths.items():
            if not np.isfinite(width) or width < 0:
                raise ValidationError(f"Half-width of {name} must be a non-negative number, got {width}")
        if self.structure != 'parametric-interval':
            raise ValidationError(f"Unsupported uncertainty structure {self.structure}")

    @property
    def is_exact(self) -> bool:
        return all(width == 0 for width in self.half_widths.values())

    @property
    def uncertain_parameters(self) -> List[str]:
        """Parameters with non-zero width, in sorted order (the vertex-code bit order)"""
        return sorted(name for name, width in self.half_widths.items() if width > 0)

    def scaled(self, factor: float) -> 'UncertaintySpec':
        if factor < 0:
            raise ValidationError("Box scale factor must be non-negative")
        return UncertaintySpec({k: v * factor for k, v in self.half_widths.items()}, self.structure)

    def bounds(self, nominal: Dict[str, float]) -> Dict[str, Tuple[float, float]]:
        result = {}
        for name in self.uncertain_parameters:
            center = nominal[name]
            delta = abs(center) * self.half_widths[name]
            result[name] = (center - delta, center + delta)
        return result


@dataclass(frozen=True)
class ModelEntry:
    label: str
    tf: TransferFunctionSpec
    uncertainty: UncertaintySpec = field(default_factory=UncertaintySpec)

    def __post_init__(self):
        unknown = set(self.uncertainty.half_widths) - set(self.tf.parameters())
        if unknown:
            raise ValidationError(
                f"Model {self.label}: uncertainty on unknown parameters {', '.join(sorted(unknown))}"
            )


@dataclass(frozen=True)
class ModelSet:
    """
    Nominal model (index 0) and n >= 1 fault models with the excitation
    window [-t_minus, 0) and the measurement window [0, t_plus].
    """
    models: Tuple[ModelEntry, ...]
    t_minus: int
    t_plus: int
    sample_rate: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'models', tuple(self.models))
        self.clean()

    def clean(self):
        if len(self.models) < 2:
            raise ValidationError("need at least one fault model")
        if int(self.t_minus) != self.t_minus or self.t_minus <= 0:
            raise ValidationError(f"t_minus must be a positive integer, got {self.t_minus}")
        if int(self.t_plus) != self.t_plus or self.t_plus <= 0:
            raise ValidationError(f"t_plus must be a positive integer, got {self.t_plus}")

    def __len__(self):
        return len(self.models)

    def __iter__(self) -> Iterator[ModelEntry]:
        return iter(self.models)

    def __getitem__(self, index: int) -> ModelEntry:
        return self.models[index]

    @property
    def indices(self) -> List[int]:
        return list(range(len(self.models)))

    @property
    def n_faults(self) -> int:
        return len(self.models) - 1

    @property
    def labels(self) -> List[str]:
        return [entry.label for entry in self.models]

    def nominal_models(self) -> List[StateSpaceModel]:
        from systems.logic.realization import realize  # Avoid circular import
        return [realize(entry.tf) for entry in self.models]

    def with_box_scale(self, factor: float) -> 'ModelSet':
        """Shrink (factor < 1) or inflate (factor > 1) every uncertainty box"""
        models = tuple(replace(entry, uncertainty=entry.uncertainty.scaled(factor)) for entry in self.models)
        return replace(self, models=models)

    def with_models(self, models: List[ModelEntry]) -> 'ModelSet':
        return replace(self, models=tuple(models))

    def subset(self, indices: List[int]) -> 'ModelSet':
        return self.with_models([self.models[i] for i in indices])


@dataclass(frozen=True)
class SampleMode:
    """
    How a member of an uncertainty box is chosen: 'nominal', 'random' (seeded),
    'vertex' (bit code) or 'worst_case' (grid-ℓ∞ maximizing vertex).
    """
    kind: str = 'nominal'
    seed: Optional[int] = None
    vertex: Optional[int] = None

    KINDS = ('nominal', 'random', 'vertex', 'worst_case')

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"Unknown sampling mode {self.kind}")
        if self.kind == 'random' and self.seed is None:
            raise ValueError("Random sampling needs an explicit seed")
        if self.kind == 'vertex' and (self.vertex is None or self.vertex < 0):
            raise ValueError("Vertex sampling needs a non-negative vertex code")

    @classmethod
    def nominal(cls) -> 'SampleMode':
        return cls('nominal')

    @classmethod
    def random(cls, seed: int) -> 'SampleMode':
        return cls('random', seed=int(seed))

    @classmethod
    def at_vertex(cls, code: int) -> 'SampleMode':
        return cls('vertex', vertex=int(code))

    @classmethod
    def worst_case(cls) -> 'SampleMode':
        return cls('worst_case')

    @classmethod
    def parse(cls, text: str, seed: Optional[int] = None, vertex: Optional[int] = None) -> 'SampleMode':
        """Accepts 'nominal', 'worst', 'worst_case', 'random[:seed]', 'vertex[:code]'"""
        name, _, arg = text.partition(':')
        name = name.strip().lower()
        if name in ('worst', 'worst_case', 'worst-case'):
            return cls.worst_case()
        if name == 'nominal':
            return cls.nominal()
        if name == 'random':
            return cls.random(int(arg) if arg else seed)
        if name == 'vertex':
            return cls.at_vertex(int(arg) if arg else vertex)
        raise ValueError(f"Unknown sampling mode {text}")

    def __str__(self):
        if self.kind == 'random':
            return f"random:{self.seed}"
        if self.kind == 'vertex':
            return f"vertex:{self.vertex}"
        return self.kind


class NormKind(Enum):
    UNSCALED = 'unscaled'
    HANKEL = 'hankel'
    L2_INDUCED = 'l2_induced'


@dataclass(frozen=True, eq=False)
class OutputNullingRep:
    """
    Residual generator x(k+1) = Acal x + Bcal w, v = scale (Ccal x + Dcal w)
    driven by w = col(u, y), with the Bcal/Dcal columns split as (m, p).
    """
    Acal: np.ndarray
    Bcal: np.ndarray
    Ccal: np.ndarray
    Dcal: np.ndarray
    n_inputs: int
    scale: Optional[np.ndarray] = None
    norm_kind: NormKind = NormKind.UNSCALED

    def __post_init__(self):
        base = StateSpaceModel(self.Acal, self.Bcal, self.Ccal, self.Dcal)
        object.__setattr__(self, 'Acal', base.A)
        object.__setattr__(self, 'Bcal', base.B)
        object.__setattr__(self, 'Ccal', base.C)
        object.__setattr__(self, 'Dcal', base.D)
        r = base.n_outputs
        scale = _frozen_matrix(np.eye(r) if self.scale is None else self.scale, r, r)
        object.__setattr__(self, 'scale', scale)
        self.clean()

    def clean(self):
        r = self.Ccal.shape[0]
        if self.scale.shape != (r, r):
            raise ValueError(f"Scale must be {r}x{r}, got {self.scale.shape}")
        if abs(np.linalg.det(self.scale)) == 0:
            raise ValueError("Scale must be nonsingular")
        if not 0 <= self.n_inputs <= self.Bcal.shape[1]:
            raise ValueError("Input split does not match the w channels")

    @property
    def n_measurements(self) -> int:
        return self.Bcal.shape[1] - self.n_inputs

    @property
    def n_residuals(self) -> int:
        return self.Ccal.shape[0]

    @property
    def n_states(self) -> int:
        return self.Acal.shape[0]

    @property
    def unscaled_system(self) -> StateSpaceModel:
        return StateSpaceModel(self.Acal, self.Bcal, self.Ccal, self.Dcal)

    @property
    def system(self) -> StateSpaceModel:
        """The scaled map w -> v"""
        return StateSpaceModel(self.Acal, self.Bcal, self.scale @ self.Ccal, self.scale @ self.Dcal)

    @property
    def scalar_scale(self) -> float:
        return float(self.scale[0, 0]) if self.n_residuals else 1.0


@dataclass(frozen=True, eq=False)
class GramianPair:
    """Finite-horizon reachability Gramian, per-block observability Gramians and R"""
    P: np.ndarray
    Q: Tuple[np.ndarray, ...]
    Rmat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'Q', tuple(self.Q))


class BankKind(Enum):
    PER_MODEL = 'F_i'
    FULL = 'F_full'


@dataclass(frozen=True, eq=False)
class InterconnectionBank:
    """
    Parallel connection of cross-model residual generators F_j^(i). Output
    block l holds the residual of candidate j driven by data of model i,
    with block_index[l] == (i, j).
    """
    F: StateSpaceModel
    block_index: Dict[int, Tuple[int, int]]
    block_rows: Tuple[slice, ...]
    kind: BankKind
    t_minus: int
    t_plus: int
    scales: Tuple[float, ...] = ()
    degenerate_blocks: Tuple[int, ...] = ()

    @property
    def n_blocks(self) -> int:
        return len(self.block_rows)

    def block(self, l: int) -> StateSpaceModel:
        return self.F.output_rows(self.block_rows[l])

    def blocks_for_model(self, i: int) -> List[int]:
        return [l for l, (source, _) in self.block_index.items() if source == i]


@dataclass(frozen=True, eq=False)
class InitialStateProblem:
    """v = M x0 + N w over [0, t_plus] for an output-nulling representation"""
    M: np.ndarray
    N: np.ndarray
    t_plus: int
    n_residuals: int
    n_channels: int

    @property
    def n_states(self) -> int:
        return self.M.shape[1]
