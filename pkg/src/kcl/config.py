"""Experiment configuration: dataclass defaults < flat key=value file < CLI flags.

Config file format, one setting per line::

    # comment
    dataset = data/amazon
    extractor = textrank
    n_keywords = 50
    lam = 0.05
    kernel_sizes = 3,4,5

Keys are :class:`ExperimentConfig` or :class:`kcl.trainer.TrainConfig` field
names (``lambda`` is accepted for ``lam``; dashes may replace underscores).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from kcl.keywords.ranking import DEFAULT_N, EXTRACTORS
from kcl.trainer import TrainConfig

ALIASES = {"lambda": "lam", "n": "n_keywords", "n_keywords": "n_keywords"}


class ConfigError(ValueError):
    """Bad key, value or combination; the CLI maps it to exit code 2."""


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str | None = None
    extractor: str = "textrank"
    n_keywords: int = DEFAULT_N
    embedding_file: str | None = None
    shared_features: str | None = None
    split_ratio: float = 0.8
    out: str = "runs/default"
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.extractor not in EXTRACTORS:
            raise ConfigError(f"extractor must be one of {', '.join(EXTRACTORS)}; got {self.extractor!r}")
        if self.n_keywords < 1:
            raise ConfigError("n_keywords must be >= 1")
        if self.extractor == "embedding" and not self.embedding_file:
            raise ConfigError("extractor 'embedding' requires an embedding file (--embedding-file)")

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Hash of everything that affects results; the output directory is left out."""
        rec = self.to_json()
        rec.pop("out")
        return hashlib.sha256(json.dumps(rec, sort_keys=True).encode()).hexdigest()[:16]


def parse_kv_file(path: str | Path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _field_types(cls) -> dict[str, Any]:
    return typing.get_type_hints(cls)


def _coerce(raw: Any, tp: Any, key: str) -> Any:
    if not isinstance(raw, str):
        return raw
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if raw.lower() in ("none", "null", ""):
            if type(None) in args:
                return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(raw, inner[0], key)
    try:
        if tp is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
        if origin is tuple:
            return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {getattr(tp, '__name__', tp)}") from None
    return raw


def resolve(file_values: Mapping[str, Any] | None = None, overrides: Mapping[str, Any] | None = None) -> ExperimentConfig:
    """Merge defaults, file values and overrides (later wins); ``None`` overrides are ignored."""
    exp_types = {k: v for k, v in _field_types(ExperimentConfig).items() if k != "train"}
    train_types = _field_types(TrainConfig)
    exp_kw: dict[str, Any] = {}
    train_kw: dict[str, Any] = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            k = ALIASES.get(key, key).replace("-", "_")
            k = ALIASES.get(k, k)
            if k in exp_types:
                exp_kw[k] = _coerce(value, exp_types[k], k)
            elif k in train_types:
                train_kw[k] = _coerce(value, train_types[k], k)
            else:
                raise ConfigError(f"unknown config key {key!r}")
    try:
        train = TrainConfig(**train_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(train=train, **exp_kw)
