"""Pipeline configuration: one JSON-serializable object holding every stage's
weights, iteration counts and toggles, with published defaults inline.

Parsing is strict: unknown keys anywhere in the document are rejected so a
config file always means what it says.
"""

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .coarsefit import CoarseFitConfig, CoarseLossWeights
from .errors import ConfigError
from .makeup import ExtractConfig, ExtractionWeights
from .refine import RefineConfig, RefineLossWeights

THREADS_ENV_VAR = "FACELAYERS_THREADS"


@dataclass
class FillConfig:
    iterations: int = 2000
    tolerance: float = 1e-5


@dataclass
class PcaConfig:
    components: int = 10


@dataclass
class PipelineConfig:
    coarse: CoarseFitConfig = field(default_factory=CoarseFitConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    extract: ExtractConfig = field(default_factory=ExtractConfig)
    fill: FillConfig = field(default_factory=FillConfig)
    pca: PcaConfig = field(default_factory=PcaConfig)

    def to_dict(self) -> dict:
        return _to_dict(self)

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        return _from_dict(cls, payload, "config")

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(payload)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())


def _to_dict(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        out[f.name] = _to_dict(value) if dataclasses.is_dataclass(value) else value
    return out


def _from_dict(cls, payload, where: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"{where} must be a JSON object")
    field_map = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(payload) - set(field_map))
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")
    kwargs = {}
    for name, f in field_map.items():
        if name not in payload:
            continue
        value = payload[name]
        if dataclasses.is_dataclass(f.type):
            kwargs[name] = _from_dict(f.type, value, f"{where}.{name}")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def thread_cap() -> int:
    """Worker cap from FACELAYERS_THREADS; defaults to 1. Results never depend
    on the value, it only bounds auxiliary fan-out (file loading, exports)."""
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError(f"{THREADS_ENV_VAR} must be >= 1, got {value}")
    return value


__all__ = [
    "PipelineConfig", "FillConfig", "PcaConfig",
    "CoarseFitConfig", "CoarseLossWeights",
    "RefineConfig", "RefineLossWeights",
    "ExtractConfig", "ExtractionWeights",
    "thread_cap", "THREADS_ENV_VAR",
]
