"""SplitMix64 streams and reproducible sensor placement."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..grid import SensorSet

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB

FREE = "free"
FIXED_SUBSET = "fixed_subset"

# Unseen-placement seeds; never used for training placements.
UNSEEN_SEEDS = (7, 11, 13, 17, 19)


def prng_next(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns (output, new_state)."""
    state = (state + GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31), state


def splitmix64_block(state: int, n: int) -> np.ndarray:
    """The next ``n`` outputs of the stream starting at ``state``, vectorized.

    Equal to calling :func:`prng_next` ``n`` times, since the k-th state is
    simply ``state + k * GOLDEN``.
    """
    k = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(state & MASK64) + k * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


class Prng:
    """Stateful SplitMix64 stream."""

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        out, self.state = prng_next(self.state)
        return out

    def below(self, n: int) -> int:
        """Uniform integer in [0, n), by rejection."""
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1); advances the stream by ``n`` steps."""
        out = (splitmix64_block(self.state, n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        self.state = (self.state + n * GOLDEN) & MASK64
        return out

    def shuffle(self, items: list) -> list:
        """Fisher-Yates in place (forward form, matching :func:`partial_shuffle`)."""
        return partial_shuffle(items, len(items), self)


def partial_shuffle(items: list, count: int, rng: Prng) -> list:
    """Shuffle the first ``count`` slots of ``items`` in place and return them."""
    n = len(items)
    for i in range(count):
        j = i + rng.below(n - i)
        items[i], items[j] = items[j], items[i]
    return items[:count]


def valid_pixels(shape, valid_mask=None) -> list[tuple[int, int]]:
    """Row-major candidate pixels (all, or those with mask 1)."""
    h, w = shape
    if valid_mask is None:
        return [(r, c) for r in range(h) for c in range(w)]
    rows, cols = np.nonzero(np.asarray(valid_mask) == 1)
    return list(zip(rows.tolist(), cols.tolist()))


def place_sensors(count: int, seed: int, candidates: Sequence[tuple[int, int]]) -> SensorSet:
    """Draw ``count`` distinct candidates with a seeded partial Fisher-Yates shuffle.

    ``candidates`` is either the row-major list of valid pixels (free mode)
    or a known station list (fixed-subset mode); order matters.
    """
    if count < 0:
        raise ValueError("sensor count must be non-negative")
    if count > len(candidates):
        raise ValueError(f"cannot place {count} sensors on {len(candidates)} candidates")
    picked = partial_shuffle(list(candidates), count, Prng(seed))
    return SensorSet(tuple(picked))


@dataclass(frozen=True)
class PlacementSpec:
    sensor_counts: tuple[int, ...]
    seeds: tuple[int, ...]
    mode: str = FREE

    def __post_init__(self):
        if self.mode not in (FREE, FIXED_SUBSET):
            raise ValueError(f"unknown placement mode {self.mode!r}")
        if any(c <= 0 for c in self.sensor_counts):
            raise ValueError("sensor counts must be positive")
        object.__setattr__(self, "sensor_counts", tuple(int(c) for c in self.sensor_counts))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def cases(self) -> list[tuple[int, int]]:
        return [(c, s) for c in self.sensor_counts for s in self.seeds]


@dataclass(frozen=True)
class Placement:
    count: int
    seed: int
    sensors: SensorSet

    @property
    def key(self) -> str:
        return f"n{self.count}_s{self.seed}"


def placement_suite(spec: PlacementSpec, candidates: Sequence[tuple[int, int]]) -> list[Placement]:
    """All distinct placements of a spec, in (count, seed) order.

    A case whose sensor set repeats an earlier one is dropped: drawing every
    station of a fixed list gives the same set for every seed.
    """
    if spec.mode == FIXED_SUBSET and max(spec.sensor_counts, default=0) > len(candidates):
        raise ValueError("fixed-subset count exceeds the station list")
    seen = set()
    out = []
    for count, seed in spec.cases():
        sensors = place_sensors(count, seed, candidates)
        key = frozenset(sensors.locations)
        if key in seen:
            continue
        seen.add(key)
        out.append(Placement(count, seed, sensors))
    return out


def check_unseen_disjoint(train: PlacementSpec, unseen: PlacementSpec) -> None:
    """Unseen placements may not reuse any training (count, seed) case or seed."""
    overlap = set(train.cases()) & set(unseen.cases())
    if overlap:
        raise ValueError(f"unseen placements reuse training cases {sorted(overlap)}")
    shared = set(train.seeds) & set(unseen.seeds)
    if shared:
        raise ValueError(f"unseen seeds {sorted(shared)} also used for training")


def read_stations(path) -> list[tuple[int, int]]:
    """Station list file: one ``row,col`` per line, ``#`` comments allowed."""
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                r, c = line.split(",")
                out.append((int(r), int(c)))
    return out


def write_stations(path, stations: Iterable[tuple[int, int]]) -> None:
    with open(path, "w") as fh:
        for r, c in stations:
            fh.write(f"{r},{c}\n")
