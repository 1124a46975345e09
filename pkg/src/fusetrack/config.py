"""Flat ``key=value`` configuration files with dotted namespaces.

Nested dataclasses map to dotted prefixes, e.g. ``noise.event.sigma2_max=64``
sets ``RunConfig.noise.event.sigma2_max``.  Blank lines and ``#`` comments
are ignored.  Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .formats import fmt_float
from .fusion import FusionMode, OOOPolicy
from .kalman import ProcessModel
from .metrics import EvalConfig
from .uncertainty import NoiseMap


class ConfigError(ValueError):
    def __init__(self, msg: str, path=None, line: int | None = None):
        self.path = None if path is None else str(path)
        self.line = line
        self.msg = msg
        where = "" if path is None else f"{path}:{line}: " if line else f"{path}: "
        super().__init__(where + msg)


# Benchmark-tuned run defaults.  The library-level ProcessModel() and
# NoiseMap() keep their conservative defaults; a run config overrides them.
BENCH_PROCESS = ProcessModel(q_pos=0.0, q_vel=4.0e4)


@dataclass(frozen=True)
class NoiseMaps:
    event: NoiseMap = NoiseMap(0.05, 1.0e4)
    frame: NoiseMap = NoiseMap(0.1, 1.0e4)

    def as_mapping(self) -> dict[str, NoiseMap]:
        return {"event": self.event, "frame": self.frame}


@dataclass(frozen=True)
class TrackDefaults:
    init_pos_var: float = 1.0
    init_vel_var: float = 1.0e4


@dataclass(frozen=True)
class RunConfig:
    mode: FusionMode = FusionMode.KALMAN_FUSED
    seed: int = 0
    process: ProcessModel = BENCH_PROCESS
    noise: NoiseMaps = field(default_factory=NoiseMaps)
    track: TrackDefaults = field(default_factory=TrackDefaults)
    ooo: OOOPolicy = field(default_factory=OOOPolicy)


def parse_kv(text: str, path=None) -> dict[str, tuple[str, int]]:
    """``{key: (raw value, line number)}`` from config text."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected key=value, got {raw!r}", path, lineno)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", path, lineno)
        out[key] = (value, lineno)
    return out


def _render(v) -> str:
    if isinstance(v, Enum):
        return str(v.value)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return fmt_float(v)
    if isinstance(v, tuple):
        return ",".join(_render(x) for x in v)
    return str(v)


def to_flat(obj, prefix: str = "") -> dict[str, str]:
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        key = prefix + f.name
        if dataclasses.is_dataclass(v):
            out.update(to_flat(v, key + "."))
        else:
            out[key] = _render(v)
    return out


def dump_kv(obj) -> str:
    return "".join(f"{k}={v}\n" for k, v in to_flat(obj).items())


def _convert(tp, raw: str):
    origin = typing.get_origin(tp)
    if origin is tuple:
        (inner, *_rest) = typing.get_args(tp)
        return tuple(_convert(inner, x.strip()) for x in raw.split(",") if x.strip())
    if isinstance(tp, type) and issubclass(tp, Enum):
        return tp(raw)
    if tp is bool:
        if raw.lower() not in ("true", "false"):
            raise ValueError(f"expected true/false, got {raw!r}")
        return raw.lower() == "true"
    if tp is int:
        return int(raw)
    if tp is float:
        return float(raw)
    if tp is str:
        return raw
    raise TypeError(f"unsupported config field type {tp!r}")


def from_flat(cls, flat: dict[str, tuple[str, int]], path=None, prefix: str = "", base=None):
    """Build ``cls`` from parsed key/values; missing keys keep ``base``'s values.

    ``base`` defaults to ``cls()``, so a nested field missing some keys keeps
    the parent's default for it rather than the nested class's own default.
    """
    hints = typing.get_type_hints(cls)
    base = cls() if base is None else base
    kwargs = {}
    for f in dataclasses.fields(cls):
        tp = hints[f.name]
        key = prefix + f.name
        if dataclasses.is_dataclass(tp):
            if any(k.startswith(key + ".") for k in flat):
                kwargs[f.name] = from_flat(tp, flat, path, key + ".", getattr(base, f.name))
            continue
        if key in flat:
            raw, lineno = flat[key]
            try:
                kwargs[f.name] = _convert(tp, raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {exc}", path, lineno) from None
    try:
        return dataclasses.replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}", path) from None


def _known_keys(cls, prefix: str = "") -> set[str]:
    hints = typing.get_type_hints(cls)
    keys = set()
    for f in dataclasses.fields(cls):
        tp = hints[f.name]
        if dataclasses.is_dataclass(tp):
            keys |= _known_keys(tp, prefix + f.name + ".")
        else:
            keys.add(prefix + f.name)
    return keys


def loads(cls, text: str, path=None):
    flat = parse_kv(text, path)
    unknown = set(flat) - _known_keys(cls)
    if unknown:
        key = min(unknown, key=lambda k: flat[k][1])
        raise ConfigError(f"unknown key {key!r}", path, flat[key][1])
    return from_flat(cls, flat, path)


def load(cls, path):
    if path is None:
        return cls()
    return loads(cls, Path(path).read_text(encoding="utf-8"), path)


def load_run_config(path=None) -> RunConfig:
    return load(RunConfig, path)


def load_eval_config(path=None) -> EvalConfig:
    return load(EvalConfig, path)
