"""Run configuration: every tunable constant in one JSON document.

Defaults reproduce the full-scale settings.  Unknown sections or keys are
rejected so a typo never silently falls back to a default.
"""

import json
from dataclasses import dataclass, field, fields, replace

from .cqt import CqtConfig
from .datagen import DatagenConfig
from .exceptions import InvalidInputError
from .network import TrainConfig

_SECTIONS = {"cqt": CqtConfig, "datagen": DatagenConfig, "train": TrainConfig}


@dataclass(frozen=True)
class DecodeConfig:
    threshold: float = 0.8


@dataclass(frozen=True)
class EvalConfig:
    tolerance: float = 0.05
    hi: float = 0.8
    lo: float = 0.2
    windows_per_piece: int = 32


_SECTIONS.update(decode=DecodeConfig, eval=EvalConfig)


@dataclass(frozen=True)
class RunConfig:
    cqt: CqtConfig = field(default_factory=CqtConfig)
    datagen: DatagenConfig = field(default_factory=DatagenConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self):
        out = {}
        for name in _SECTIONS:
            section = getattr(self, name)
            out[name] = {f.name: _jsonable(getattr(section, f.name)) for f in fields(section)}
        return out

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise InvalidInputError("config must be a JSON object")
        unknown = set(data) - set(_SECTIONS)
        if unknown:
            raise InvalidInputError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for name, section_cls in _SECTIONS.items():
            values = data.get(name, {})
            if not isinstance(values, dict):
                raise InvalidInputError(f"config section {name!r} must be an object")
            allowed = {f.name for f in fields(section_cls)}
            bad = set(values) - allowed
            if bad:
                raise InvalidInputError(f"unknown keys in {name!r}: {sorted(bad)}")
            try:
                kwargs[name] = section_cls(**values)
            except TypeError as exc:
                raise InvalidInputError(f"bad value in {name!r}: {exc}") from exc
        return cls(**kwargs)

    def override(self, dotted, raw):
        """Return a copy with ``section.key`` set from a JSON (or bare string) literal."""
        section, _, key = dotted.partition(".")
        if section not in _SECTIONS or not key:
            raise InvalidInputError(f"override {dotted!r} must look like section.key")
        current = getattr(self, section)
        if key not in {f.name for f in fields(current)}:
            raise InvalidInputError(f"unknown key {dotted!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        try:
            return replace(self, **{section: replace(current, **{key: value})})
        except TypeError as exc:
            raise InvalidInputError(f"bad value for {dotted}: {exc}") from exc


def _jsonable(value):
    return list(value) if isinstance(value, tuple) else value


def load_config(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: {exc}") from exc
    return RunConfig.from_dict(data)


def save_config(config, path):
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
