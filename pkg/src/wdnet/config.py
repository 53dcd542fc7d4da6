"""Run configuration: one YAML file with ``synth``, ``train``, ``harvest``,
``augment`` and ``eval`` sections, plus ``key=value`` overrides.

Every key and its default is listed by :func:`default_dict`; a config file
only needs the keys it changes.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .augmentation import HarvestFilter
from .errors import ConfigError
from .synth import SynthesisConfig
from .training import TrainConfig


@dataclass
class AugmentConfig:
    n_samples: int = 30
    seed: int = 0


@dataclass
class EvalConfig:
    split: str = "test"


@dataclass
class RunConfig:
    synth: SynthesisConfig = field(default_factory=SynthesisConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    harvest: HarvestFilter = field(default_factory=HarvestFilter)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def default_dict() -> dict:
    return RunConfig().to_dict()


def _check_keys(d: dict, schema: dict, path: str = "") -> None:
    for k, v in d.items():
        key = f"{path}{k}"
        if k not in schema:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(schema[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {key!r} must be a mapping")
            _check_keys(v, schema[k], key + ".")


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_override(item: str) -> tuple:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value for {key!r}: {exc}") from exc
    return key, value


def apply_override(d: dict, key: str, value) -> None:
    schema = default_dict()
    parts = key.split(".")
    node, snode = d, schema
    for i, p in enumerate(parts):
        if not isinstance(snode, dict) or p not in snode:
            raise ConfigError(f"unknown config key {key!r}")
        if i == len(parts) - 1:
            if isinstance(snode[p], dict):
                raise ConfigError(f"config key {key!r} is a section, not a value")
            node[p] = value
        else:
            node = node.setdefault(p, {})
            snode = snode[p]


def build(d: dict) -> RunConfig:
    _check_keys(d, default_dict())
    full = _merge(default_dict(), d)
    try:
        return RunConfig(
            synth=SynthesisConfig.from_dict(full["synth"]),
            train=TrainConfig.from_dict(full["train"]),
            harvest=HarvestFilter(**{k: tuple(v) for k, v in full["harvest"].items()}),
            augment=AugmentConfig(**full["augment"]),
            eval=EvalConfig(**full["eval"]),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load(path=None, overrides=(), seed=None) -> RunConfig:
    """Read ``path`` (YAML), apply ``section.key=value`` overrides, then ``seed`` to every section."""
    d: dict = {}
    if path:
        path = Path(path)
        try:
            d = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        _check_keys(d, default_dict())
    for item in overrides:
        apply_override(d, *parse_override(item))
    if seed is not None:
        for section in ("synth", "train", "augment"):
            d.setdefault(section, {})["seed"] = int(seed)
    return build(d)


def dump(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)
