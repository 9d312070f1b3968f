"""Turning (frame, placement) pairs into model inputs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..geometry import GridGeometry
from ..grid import ChannelKind, SampleStack, ScalarField, SensorSet
from ..normalization import TARGET, Normalizer, fit_normalizer, normalize
from .. import tessellation as tess
from .placement import Placement, Prng


class RecipeError(ValueError):
    pass


@dataclass(frozen=True)
class Recipe:
    """Which channels to build and how to treat them.

    ``mask_voronoi`` zeroes the Voronoi channel on land, reproducing the
    older single-image encoding of land.
    """

    kinds: tuple[ChannelKind, ...]
    normalized: bool = True
    masked_loss: bool = False
    mask_voronoi: bool = False

    def __post_init__(self):
        kinds = tuple(ChannelKind(k) for k in self.kinds)
        object.__setattr__(self, "kinds", kinds)
        if not kinds:
            raise RecipeError("recipe needs at least one channel")
        if len(set(kinds)) != len(kinds):
            raise RecipeError("recipe repeats a channel kind")
        if ChannelKind.SPARSE_LOCATION in kinds and ChannelKind.DT_SENSOR in kinds:
            raise RecipeError("sparse_location and dt_sensor are alternatives; use one")

    @classmethod
    def parse(cls, text: str, **flags) -> "Recipe":
        try:
            kinds = tuple(ChannelKind(k.strip()) for k in text.split(",") if k.strip())
        except ValueError as exc:
            raise RecipeError(str(exc)) from None
        return cls(kinds, **flags)

    @property
    def needs_land(self) -> bool:
        return ChannelKind.LAND_MASK in self.kinds or ChannelKind.DT_LAND in self.kinds or self.mask_voronoi


class ChannelBuilder:
    """Builds raw (unnormalized) channels, caching placement-only work.

    Voronoi region maps, sparse masks and sensor DTs depend only on the
    placement, so each is computed once per placement.
    """

    def __init__(self, geometry: GridGeometry, shape, land=None, climatology: Optional[ScalarField] = None):
        self.geometry = geometry
        self.shape = tuple(shape)
        geometry.check_shape(self.shape)
        self.land = None if land is None else np.asarray(land, dtype=np.uint8)
        if self.land is not None and self.land.shape != self.shape:
            raise ValueError(f"land mask shape {self.land.shape} != grid shape {self.shape}")
        self.climatology = climatology
        self._placement_cache: dict = {}
        self._dt_land = None

    def _placement(self, sensors: SensorSet):
        key = sensors.locations
        hit = self._placement_cache.get(key)
        if hit is None:
            sensors.validate(self.shape, self.land)
            index_map, dist = tess._nearest(self.geometry, self.shape, sensors.locations)
            sparse = tess.sparse_location_mask(self.shape, sensors, self.geometry)
            hit = (index_map, ScalarField(dist, geometry=self.geometry), sparse)
            self._placement_cache[key] = hit
        return hit

    def channel(self, kind: ChannelKind, frame: ScalarField, sensors: SensorSet, mask_voronoi=False) -> ScalarField:
        index_map, dt, sparse = self._placement(sensors)
        if kind == ChannelKind.VORONOI:
            vor = tess.voronoi_from_index(index_map, frame, sensors)
            if mask_voronoi:
                vor = tess.masked_voronoi(vor, self._land())
            return vor
        if kind == ChannelKind.SPARSE_LOCATION:
            return sparse
        if kind == ChannelKind.DT_SENSOR:
            return dt
        if kind == ChannelKind.LAND_MASK:
            return ScalarField(self._land().astype(np.float64), geometry=self.geometry)
        if kind == ChannelKind.DT_LAND:
            if self._dt_land is None:
                self._dt_land = tess.dt_land_mask(self.geometry, self._land())
            return self._dt_land
        if kind == ChannelKind.FILLED_SPARSE:
            if self.climatology is None:
                raise RecipeError("filled_sparse needs a climatology")
            return tess.filled_sparse_mask(self.shape, sensors.sample(frame), self.climatology)
        raise RecipeError(f"unhandled channel kind {kind}")

    def _land(self):
        if self.land is None:
            raise RecipeError("recipe needs a land mask but none was given")
        return self.land

    def raw_channels(self, frame, sensors, recipe: Recipe) -> list[ScalarField]:
        return [self.channel(k, frame, sensors, recipe.mask_voronoi) for k in recipe.kinds]


def assemble_sample(
    frame: ScalarField,
    sensors: SensorSet,
    recipe: Recipe,
    normalizer: Optional[Normalizer] = None,
    builder: Optional[ChannelBuilder] = None,
    land=None,
    climatology: Optional[ScalarField] = None,
) -> SampleStack:
    """Build one normalized SampleStack. ``normalizer=None`` means identity scales."""
    if builder is None:
        if land is None and frame.valid_mask is not None:
            land = frame.valid_mask
        builder = ChannelBuilder(frame.geometry, frame.shape, land, climatology)
    if recipe.needs_land:
        builder._land()
    norm = normalizer if normalizer is not None and recipe.normalized else Normalizer.identity(recipe.kinds)
    raw = builder.raw_channels(frame, sensors, recipe)
    channels = tuple(normalize(ch, norm, k) for ch, k in zip(raw, recipe.kinds))
    target = normalize(ScalarField(frame.values, geometry=frame.geometry), norm, TARGET)
    if recipe.masked_loss and builder.land is not None:
        loss_mask = builder.land
    else:
        loss_mask = np.ones(frame.shape, dtype=np.uint8)
    return SampleStack(channels, recipe.kinds, target, loss_mask)


def fit_recipe_normalizer(
    frames: Sequence[ScalarField], placements: Sequence[Placement], recipe: Recipe, builder: ChannelBuilder, pairs=None
) -> Normalizer:
    """Fit scales over the training (frame, placement) pairs of a recipe.

    Returns identity scales for unnormalized recipes.
    """
    if not recipe.normalized:
        return Normalizer.identity(recipe.kinds)
    if pairs is None:
        pairs = [(f, p) for f in range(len(frames)) for p in range(len(placements))]
    peaks = {k: 0.0 for k in recipe.kinds}
    for fi, pi in pairs:
        raw = builder.raw_channels(frames[fi], placements[pi].sensors, recipe)
        for k, ch in zip(recipe.kinds, raw):
            peaks[k] = max(peaks[k], float(np.max(np.abs(ch.values))))
    used = sorted({fi for fi, _ in pairs})
    return fit_normalizer([frames[i] for i in used], {k: [np.array([v])] for k, v in peaks.items()})


def pair_indices(frame_ids: Sequence[int], n_placements: int, pairing: str = "all", seed: int = 0) -> list[tuple[int, int]]:
    """(frame, placement) pairs.

    ``all`` pairs every frame with every placement. ``rotate`` gives frame i
    of the list placement i mod P. ``random`` gives each frame one placement
    drawn from a stream keyed on (seed, frame index).
    """
    if n_placements < 1:
        raise ValueError("need at least one placement")
    if pairing == "all":
        return [(f, p) for f in frame_ids for p in range(n_placements)]
    if pairing == "rotate":
        return [(f, i % n_placements) for i, f in enumerate(frame_ids)]
    if pairing == "random":
        return [(f, Prng(((seed & 0xFFFFFFFF) << 32) | f).below(n_placements)) for f in frame_ids]
    raise ValueError(f"unknown pairing {pairing!r}")


def build_arrays(frames, placements, pairs, recipe: Recipe, normalizer: Normalizer, builder: ChannelBuilder):
    """Stack samples for (frame, placement) pairs into (N,C,H,W), (N,H,W), (N,H,W) arrays."""
    h, w = builder.shape
    n = len(pairs)
    x = np.empty((n, len(recipe.kinds), h, w))
    y = np.empty((n, h, w))
    m = np.empty((n, h, w))
    for i, (fi, pi) in enumerate(pairs):
        s = assemble_sample(frames[fi], placements[pi].sensors, recipe, normalizer, builder)
        x[i] = s.input_array()
        y[i] = s.target.values
        m[i] = s.loss_mask
    return x, y, m
