import json
from pathlib import Path
from typing import Any, Dict, List, Union

from django.core.exceptions import ValidationError
from loguru import logger

from systems.models import (
    ModelEntry, ModelFileError, ModelSet, Section, TransferFunctionSpec,
    UncertaintySpec, UnstableModelError,
)

SECTION_KEYS = ('b1', 'b2', 'a1', 'a2')


class ModelFileParser:
    """
    Reads the JSON model file:

        {"sample_rate_hz": 2e6, "t_minus": 32, "t_plus": 32,
         "models": [{"label": "G_0", "gain": -0.0074,
                     "sections": [{"b1": .., "b2": .., "a1": .., "a2": ..}],
                     "uncertainty": {"a6": 0.02}}]}
    """

    @staticmethod
    def _number(value: Any, where: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ModelFileError(f"{where}: expected a number, got {value!r}")
        return float(value)

    @staticmethod
    def _integer(value: Any, where: str) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ModelFileError(f"{where}: expected an integer, got {value!r}")
        return value

    def parse_section(self, data: Any, where: str) -> Section:
        if not isinstance(data, dict):
            raise ModelFileError(f"{where}: section must be an object")
        missing = [key for key in SECTION_KEYS if key not in data]
        if missing:
            raise ModelFileError(f"{where}: missing {', '.join(missing)}")
        extra = set(data) - set(SECTION_KEYS)
        if extra:
            raise ModelFileError(f"{where}: unknown keys {', '.join(sorted(extra))}")
        return Section(**{key: self._number(data[key], f"{where}.{key}") for key in SECTION_KEYS})

    def parse_model(self, data: Any, index: int, sample_rate: float) -> ModelEntry:
        where = f"models[{index}]"
        if not isinstance(data, dict):
            raise ModelFileError(f"{where}: model must be an object")
        for key in ('label', 'gain', 'sections'):
            if key not in data:
                raise ModelFileError(f"{where}: missing {key}")
        if not isinstance(data['sections'], list):
            raise ModelFileError(f"{where}.sections: expected a list")
        uncertainty = data.get('uncertainty', {})
        if not isinstance(uncertainty, dict):
            raise ModelFileError(f"{where}.uncertainty: expected an object")

        sections = [self.parse_section(s, f"{where}.sections[{k}]") for k, s in enumerate(data['sections'])]
        label = str(data['label'])
        try:
            tf = TransferFunctionSpec(
                gain=self._number(data['gain'], f"{where}.gain"),
                sections=tuple(sections),
                sample_rate=sample_rate,
            )
        except UnstableModelError as e:
            raise UnstableModelError(f"Model {label} is unstable: {e.message}", parameters=e.parameters)
        widths = {name: self._number(w, f"{where}.uncertainty.{name}") for name, w in uncertainty.items()}
        try:
            return ModelEntry(label=label, tf=tf, uncertainty=UncertaintySpec(widths))
        except ValidationError as e:
            raise ModelFileError(f"{where}: {e.message}")

    def parse(self, data: Dict) -> ModelSet:
        if not isinstance(data, dict):
            raise ModelFileError("Model file must contain a JSON object")
        for key in ('sample_rate_hz', 't_minus', 't_plus', 'models'):
            if key not in data:
                raise ModelFileError(f"Model file is missing {key}")
        if not isinstance(data['models'], list):
            raise ModelFileError("models: expected a list")
        sample_rate = self._number(data['sample_rate_hz'], 'sample_rate_hz')
        models: List[ModelEntry] = [
            self.parse_model(entry, index, sample_rate) for index, entry in enumerate(data['models'])
        ]
        return ModelSet(
            models=tuple(models),
            t_minus=self._integer(data['t_minus'], 't_minus'),
            t_plus=self._integer(data['t_plus'], 't_plus'),
            sample_rate=sample_rate,
        )


def parse_model_file(path: Union[str, Path]) -> ModelSet:
    path = Path(path)
    if not path.exists():
        raise ModelFileError(f"Model file {path} does not exist")
    with open(path, 'r', encoding='utf-8') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ModelFileError(f"{path}: invalid JSON ({e})")
    model_set = ModelFileParser().parse(data)
    logger.info(f"Loaded {len(model_set)} models from {path.name} "
                f"(T-={model_set.t_minus}, T+={model_set.t_plus})")
    return model_set
