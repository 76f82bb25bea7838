from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.signal import tf2ss
from django.core.exceptions import ValidationError

from config import Config
from systems.logic.algebra import series, negate, parallel, static_gain
from systems.models import (
    ModelEntry, ModelSet, SampleMode, StateSpaceModel, TransferFunctionSpec,
    UnstableModelError,
)


def realize_section(section) -> StateSpaceModel:
    A, B, C, D = tf2ss(section.numerator, section.denominator)
    return StateSpaceModel(A, B, C, D)


def realize(tf: TransferFunctionSpec, check: bool = True) -> StateSpaceModel:
    """
    Controllable canonical realization of every non-identity section, cascaded
    in section order, with the gain applied to the output.
    """
    ss = None
    for section in tf.sections:
        if section.is_identity:
            continue
        realized = realize_section(section)
        ss = realized if ss is None else series(ss, realized)
    if ss is None:
        ss = static_gain(1.0)
    ss = ss.scaled_outputs(tf.gain)
    if check:
        check_realization(tf, ss)
    return ss


def frequency_grid(points: int) -> np.ndarray:
    return np.linspace(0.0, np.pi, points)


def check_realization(tf: TransferFunctionSpec, ss: StateSpaceModel,
                      points: int = Config.REALIZATION_CHECK_POINTS,
                      rtol: float = Config.REALIZATION_CHECK_RTOL) -> float:
    omegas = frequency_grid(points)
    expected = tf.frequency_response(omegas)
    actual = ss.frequency_response(omegas)[:, 0, 0]
    error = float(np.max(np.abs(actual - expected)) / max(np.max(np.abs(expected)), np.finfo(float).tiny))
    if error > rtol:
        raise ValidationError(f"Realization differs from the transfer function by {error:.3e} (relative)")
    return error


# Uncertainty boxes

@dataclass(frozen=True)
class ModelSample:
    """One member of a model's uncertainty box and how it was chosen"""
    label: str
    mode: SampleMode
    tf: TransferFunctionSpec
    parameters: Dict[str, float] = field(default_factory=dict)
    vertex: Optional[int] = None
    delta_inf: Optional[float] = None
    grid_points: Optional[int] = None

    @property
    def descriptor(self) -> str:
        if self.mode.kind == 'worst_case' and self.vertex is not None:
            return f"worst_case (vertex {self.vertex})"
        return str(self.mode)

    def realize(self) -> StateSpaceModel:
        return realize(self.tf)


def vertex_count(entry: ModelEntry) -> int:
    return 2 ** len(entry.uncertainty.uncertain_parameters)


def vertex_parameters(entry: ModelEntry, code: int) -> Dict[str, float]:
    """Bit k of `code` picks the upper bound of the k-th uncertain parameter (sorted by name)"""
    names = entry.uncertainty.uncertain_parameters
    if not 0 <= code < 2 ** len(names):
        raise ValueError(f"Vertex code {code} out of range for {entry.label} ({2 ** len(names)} vertices)")
    bounds = entry.uncertainty.bounds(entry.tf.parameters())
    return {name: bounds[name][(code >> bit) & 1] for bit, name in enumerate(names)}


def vertex_spec(entry: ModelEntry, code: int) -> TransferFunctionSpec:
    params = vertex_parameters(entry, code)
    try:
        return entry.tf.with_parameters(params)
    except UnstableModelError as e:
        raise UnstableModelError(f"{entry.label} vertex {code} is unstable: {e.message}", parameters=e.parameters)


def delta_inf_norm(nominal: TransferFunctionSpec, perturbed: TransferFunctionSpec,
                   omegas: np.ndarray) -> float:
    return float(np.max(np.abs(perturbed.frequency_response(omegas) - nominal.frequency_response(omegas))))


def worst_case_vertex(entry: ModelEntry, points: int = Config.WORST_CASE_GRID_POINTS) -> Tuple[int, float]:
    """
    Vertex maximizing max_w |G_theta(e^jw) - G(e^jw)| on a uniform grid over [0, pi].
    Unstable vertices are skipped. Ties go to the lowest code.
    """
    omegas = frequency_grid(points)
    best_code, best_value = None, -1.0
    for code in range(vertex_count(entry)):
        try:
            spec = entry.tf.with_parameters(vertex_parameters(entry, code))
        except UnstableModelError as e:
            logger.warning(f"Skipping unstable vertex {code} of {entry.label}: {e.message}")
            continue
        value = delta_inf_norm(entry.tf, spec, omegas)
        logger.debug(f"{entry.label} vertex {code}: grid max |Delta| = {value:.6e}")
        if value > best_value:
            best_code, best_value = code, value
    if best_code is None:
        raise UnstableModelError(f"Every vertex of {entry.label} is unstable", parameters=entry.tf.parameters())
    return best_code, best_value


def random_parameters(entry: ModelEntry, rng: np.random.Generator) -> Dict[str, float]:
    nominal = entry.tf.parameters()
    widths = entry.uncertainty.half_widths
    return {
        name: nominal[name] * (1.0 + widths[name] * rng.uniform(-1.0, 1.0))
        for name in entry.uncertainty.uncertain_parameters
    }


def sample_entry(entry: ModelEntry, mode: SampleMode) -> ModelSample:
    if mode.kind == 'nominal' or entry.uncertainty.is_exact:
        return ModelSample(entry.label, mode, entry.tf)

    if mode.kind == 'vertex':
        return ModelSample(entry.label, mode, vertex_spec(entry, mode.vertex),
                           parameters=vertex_parameters(entry, mode.vertex), vertex=mode.vertex)

    if mode.kind == 'worst_case':
        code, value = worst_case_vertex(entry)
        return ModelSample(entry.label, mode, vertex_spec(entry, code),
                           parameters=vertex_parameters(entry, code), vertex=code,
                           delta_inf=value, grid_points=Config.WORST_CASE_GRID_POINTS)

    rng = np.random.default_rng(mode.seed)
    for attempt in range(Config.MAX_SAMPLING_ATTEMPTS):
        params = random_parameters(entry, rng)
        try:
            return ModelSample(entry.label, mode, entry.tf.with_parameters(params), parameters=params)
        except UnstableModelError as e:
            logger.debug(f"{entry.label}: rejected unstable draw {attempt} ({e.message})")
    raise UnstableModelError(
        f"No stable sample of {entry.label} in {Config.MAX_SAMPLING_ATTEMPTS} draws (seed {mode.seed})",
        parameters=entry.tf.parameters()
    )


def sample_model(ms: ModelSet, i: int, mode: SampleMode) -> ModelSample:
    if not 0 <= i < len(ms):
        raise ValueError(f"Model index {i} not in 0..{len(ms) - 1}")
    return sample_entry(ms[i], mode)


def sample_uncertainty(ms: ModelSet, i: int, mode: SampleMode) -> StateSpaceModel:
    return sample_model(ms, i, mode).realize()


def delta_system(nominal: StateSpaceModel, perturbed: StateSpaceModel) -> StateSpaceModel:
    """Realization of perturbed - nominal"""
    if nominal.n_inputs != perturbed.n_inputs or nominal.n_outputs != perturbed.n_outputs:
        raise ValueError(
            f"Cannot subtract a {nominal.n_outputs}x{nominal.n_inputs} system "
            f"from a {perturbed.n_outputs}x{perturbed.n_inputs} system"
        )
    return parallel(perturbed, negate(nominal))


def box_samples(entry: ModelEntry, random_samples: int, seed: int) -> List[ModelSample]:
    """Stable vertices followed by seeded random draws from the box"""
    if entry.uncertainty.is_exact:
        return [ModelSample(entry.label, SampleMode.nominal(), entry.tf)]
    samples = []
    for code in range(vertex_count(entry)):
        try:
            samples.append(sample_entry(entry, SampleMode.at_vertex(code)))
        except UnstableModelError as e:
            logger.warning(f"Skipping unstable vertex {code} of {entry.label}: {e.message}")
    rng = np.random.default_rng(seed)
    for k in range(random_samples):
        try:
            samples.append(sample_entry(entry, SampleMode.random(int(rng.integers(2 ** 63 - 1)))))
        except UnstableModelError as e:
            logger.warning(f"Stopping random sampling of {entry.label} after {k} draws: {e.message}")
            break
    return samples
