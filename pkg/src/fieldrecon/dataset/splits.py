"""Train/val/test frame assignment.

Interpolation experiments split whole contiguous chunks of frames so that few
held-out frames sit next to a training frame. Extrapolation experiments train
on a leading time window and test on everything after it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .placement import Prng

PARTITIONED = "partitioned"
EXTRAPOLATION = "extrapolation"


@dataclass(frozen=True)
class SplitPlan:
    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]
    scheme: str
    n_frames: int
    chunk_len: int | None = None
    chunks: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, tuple(sorted(int(i) for i in getattr(self, name))))
        parts = [set(self.train), set(self.val), set(self.test)]
        if sum(len(p) for p in parts) != len(set().union(*parts)):
            raise ValueError("split parts overlap")
        if any(i < 0 or i >= self.n_frames for p in parts for i in p):
            raise ValueError("split index outside [0, N)")

    @property
    def fit_frames(self) -> tuple[int, ...]:
        """Frames available for fitting: train plus the validation hold-out."""
        return tuple(sorted(self.train + self.val))

    def save(self, path) -> None:
        lines = [f"scheme={self.scheme}", f"n_frames={self.n_frames}"]
        if self.chunk_len is not None:
            lines.append(f"chunk_len={self.chunk_len}")
        for name in ("train", "val", "test"):
            lines.append(f"{name}=" + ",".join(str(i) for i in getattr(self, name)))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "SplitPlan":
        kv = {}
        for line in Path(path).read_text().splitlines():
            if "=" in line:
                k, _, v = line.partition("=")
                kv[k.strip()] = v.strip()

        def ints(s):
            return tuple(int(x) for x in s.split(",") if x)

        return cls(
            ints(kv.get("train", "")),
            ints(kv.get("val", "")),
            ints(kv.get("test", "")),
            kv["scheme"],
            int(kv["n_frames"]),
            int(kv["chunk_len"]) if "chunk_len" in kv else None,
        )


def partitioned_split(n_frames: int, chunk_len: int, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitPlan:
    """Shuffle contiguous chunks of ``chunk_len`` frames and deal them to train/val/test."""
    if chunk_len < 1:
        raise ValueError("chunk_len must be at least 1")
    if chunk_len > n_frames:
        raise ValueError(f"chunk_len {chunk_len} exceeds frame count {n_frames}")
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n_chunks = math.ceil(n_frames / chunk_len)
    n_val = round(ratios[1] * n_chunks)
    n_test = round(ratios[2] * n_chunks)
    n_train = n_chunks - n_val - n_test
    if n_train < 0:
        raise ValueError("ratios leave no room for training chunks")
    order = Prng(seed).shuffle(list(range(n_chunks)))
    assign = {}
    for pos, chunk in enumerate(order):
        assign[chunk] = "train" if pos < n_train else "val" if pos < n_train + n_val else "test"
    parts = {"train": [], "val": [], "test": []}
    for chunk in range(n_chunks):
        start = chunk * chunk_len
        parts[assign[chunk]].extend(range(start, min(start + chunk_len, n_frames)))
    return SplitPlan(parts["train"], parts["val"], parts["test"], PARTITIONED, n_frames, chunk_len, assign)


def extrapolation_split(n_frames: int, train_fraction: float, val_fraction: float = 0.1) -> SplitPlan:
    """Chronological split: the first ``train_fraction`` of frames are for fitting.

    The last ``val_fraction`` of that window becomes the validation set; the
    remaining frames form the test set.
    """
    n_fit = math.floor(n_frames * train_fraction)
    if not 0 < train_fraction < 1 or n_fit < 1 or n_fit >= n_frames:
        raise ValueError(f"train_fraction {train_fraction} leaves an empty train or test set")
    if not 0 <= val_fraction < 1:
        raise ValueError("val_fraction must be in [0, 1)")
    n_val = math.floor(n_fit * val_fraction)
    return SplitPlan(
        range(0, n_fit - n_val), range(n_fit - n_val, n_fit), range(n_fit, n_frames), EXTRAPOLATION, n_frames
    )
