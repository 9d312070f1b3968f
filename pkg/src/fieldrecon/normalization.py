"""Abs-max scaling of channels and targets to roughly [-1, 1]."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .grid import ChannelKind, ScalarField

TARGET = "target"


def _key(kind) -> str:
    if isinstance(kind, ChannelKind):
        return kind.value
    if kind == TARGET or kind in ChannelKind._value2member_map_:
        return str(kind)
    raise KeyError(f"unknown channel kind {kind!r}")


@dataclass(frozen=True)
class Normalizer:
    """Per-kind positive scale constants; ``normalize`` divides by them."""

    scales: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for k, v in self.scales.items():
            v = float(v)
            if not (v > 0 and np.isfinite(v)):
                raise ValueError(f"scale for {k!r} must be positive and finite, got {v}")
            clean[_key(k)] = v
        object.__setattr__(self, "scales", clean)

    @classmethod
    def identity(cls, kinds: Iterable = ()) -> "Normalizer":
        """All-ones scales: used for recipes trained in physical units."""
        return cls({**{_key(k): 1.0 for k in kinds}, TARGET: 1.0})

    def scale(self, kind) -> float:
        key = _key(kind)
        if key not in self.scales:
            raise KeyError(f"normalizer has no scale for {key!r}")
        return self.scales[key]

    def save(self, path) -> None:
        lines = [f"{k}={v!r}" for k, v in sorted(self.scales.items())]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "Normalizer":
        scales = {}
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            k, _, v = line.partition("=")
            scales[k.strip()] = float(v)
        return cls(scales)


def _abs_max(fields) -> float:
    fields = list(fields)
    if not fields:
        raise ValueError("empty training set")
    return max(float(np.max(np.abs(f.values if isinstance(f, ScalarField) else f))) for f in fields)


def fit_normalizer(training_frames, training_channels: Mapping | None = None) -> Normalizer:
    """Fit scales from training data only.

    The target scale is the largest absolute pixel over ``training_frames``;
    each entry of ``training_channels`` (kind -> list of fields) gets its own.
    Binary kinds always get scale 1.
    """
    scales = {}
    target = _abs_max(training_frames)
    if target == 0:
        raise ValueError("training targets are all zero")
    scales[TARGET] = target
    for kind, fields in (training_channels or {}).items():
        key = _key(kind)
        if ChannelKind(key).is_binary:
            scales[key] = 1.0
            continue
        s = _abs_max(fields)
        if s == 0:
            raise ValueError(f"training channel {key!r} is all zero")
        scales[key] = s
    return Normalizer(scales)


def normalize(fld: ScalarField, normalizer: Normalizer, kind) -> ScalarField:
    return fld.with_values(fld.values / normalizer.scale(kind))


def denormalize(fld: ScalarField, normalizer: Normalizer, kind) -> ScalarField:
    return fld.with_values(fld.values * normalizer.scale(kind))
