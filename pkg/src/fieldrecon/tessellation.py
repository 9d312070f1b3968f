"""Input channels derived from sensor placements and land masks.

Nearest-sensor search is an exact scan over sensors, evaluated one sensor at a
time across the whole grid. Sensor counts stay in the hundreds, so this costs
O(H*W*n) and works identically for all three distance metrics.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .geometry import CIRCULAR_X, PLANAR, GridGeometry, distances_from, squared_index_distance
from .grid import ChannelKind, ScalarField, SensorSet

__all__ = [
    "ChannelKind",
    "distance_transform",
    "distance_transform_by_replication",
    "dt_land_mask",
    "dt_sensor_mask",
    "filled_sparse_mask",
    "masked_voronoi",
    "nearest_sensor_index",
    "sparse_location_mask",
    "voronoi_by_replication",
    "voronoi_fill",
]


def _nearest(geom: GridGeometry, shape, locations: Sequence[tuple[int, int]]):
    """Index of the nearest source (lowest index on ties) and its distance."""
    if len(locations) == 0:
        raise ValueError("need at least one source location")
    geom.check_shape(shape)
    h, w = shape
    for r, c in locations:
        if not (0 <= r < h and 0 <= c < w):
            raise IndexError(f"location ({r}, {c}) outside {h}x{w} grid")
    exact = geom.kind in (PLANAR, CIRCULAR_X)
    rows, cols = np.ogrid[:h, :w]
    best = None
    best_idx = np.zeros(shape, dtype=np.int64)
    for i, (r, c) in enumerate(locations):
        if exact:
            d = np.broadcast_to(squared_index_distance(geom, rows, cols, r, c), shape)
        else:
            d = distances_from(geom, shape, r, c)
        if best is None:
            best = d.copy()
            continue
        # strict comparison keeps the earlier sensor on ties
        closer = d < best
        best[closer] = d[closer]
        best_idx[closer] = i
    dist = np.sqrt(best.astype(np.float64)) if exact else best
    return best_idx, dist


def nearest_sensor_index(geom: GridGeometry, shape, locations) -> np.ndarray:
    """Per-pixel index into ``locations`` of the nearest sensor."""
    return _nearest(geom, shape, list(locations))[0]


def voronoi_fill(geom: GridGeometry, sensors: SensorSet, valid_mask=None, shape=None) -> ScalarField:
    """Fill every pixel with the reading of its nearest sensor.

    Masked-out pixels are filled too; use :func:`masked_voronoi` for the
    zeroed-land variant. ``shape`` defaults to ``valid_mask.shape``.
    """
    if len(sensors) == 0:
        raise ValueError("voronoi_fill needs at least one sensor")
    if sensors.values is None:
        raise ValueError("voronoi_fill needs sensor values")
    if shape is None:
        if valid_mask is None:
            raise ValueError("pass shape or valid_mask")
        shape = np.shape(valid_mask)
    sensors.validate(shape, None if valid_mask is None else np.asarray(valid_mask))
    idx = nearest_sensor_index(geom, shape, sensors.locations)
    values = np.asarray(sensors.values, dtype=np.float64)[idx]
    return ScalarField(values, valid_mask, geom)


def voronoi_from_index(index_map: np.ndarray, frame: ScalarField, sensors: SensorSet) -> ScalarField:
    """Voronoi fill of ``frame`` reusing a precomputed nearest-sensor map."""
    readings = frame.values[sensors.rows, sensors.cols]
    return ScalarField(readings[index_map], frame.valid_mask, frame.geometry)


def masked_voronoi(voronoi: ScalarField, land) -> ScalarField:
    """Zero the Voronoi fill on masked-out pixels (the single-image legacy input)."""
    land = np.asarray(land)
    if land.shape != voronoi.shape:
        raise ValueError(f"land mask shape {land.shape} != field shape {voronoi.shape}")
    return ScalarField(np.where(land == 1, voronoi.values, 0.0), voronoi.valid_mask, voronoi.geometry)


def sparse_location_mask(shape, sensors: SensorSet, geometry: Optional[GridGeometry] = None) -> ScalarField:
    sensors.validate(shape)
    out = np.zeros(shape)
    if len(sensors):
        out[sensors.rows, sensors.cols] = 1.0
    return ScalarField(out, geometry=geometry or GridGeometry.planar())


def distance_transform(geom: GridGeometry, shape, sources) -> ScalarField:
    """Distance from each pixel to the nearest source pixel."""
    sources = list(sources)
    if not sources:
        raise ValueError("distance_transform needs at least one source")
    _, dist = _nearest(geom, shape, sources)
    return ScalarField(dist, geometry=geom)


def dt_sensor_mask(geom: GridGeometry, shape, sensors: SensorSet) -> ScalarField:
    return distance_transform(geom, shape, sensors.locations)


def dt_land_mask(geom: GridGeometry, land) -> ScalarField:
    """Distance to the nearest land pixel.

    Land follows the validity-mask convention: 0 marks land (not predicted),
    1 marks sea. Land pixels therefore get distance 0.
    """
    land = np.asarray(land)
    rows, cols = np.nonzero(land == 0)
    if rows.size == 0:
        raise ValueError("land mask has no land (0) pixels")
    return distance_transform(geom, land.shape, zip(rows.tolist(), cols.tolist()))


def filled_sparse_mask(shape, sensors: SensorSet, climatology: ScalarField) -> ScalarField:
    """Climatology everywhere, live readings at sensor pixels."""
    if climatology.shape != tuple(shape):
        raise ValueError(f"climatology shape {climatology.shape} != {tuple(shape)}")
    if len(sensors) and sensors.values is None:
        raise ValueError("filled_sparse_mask needs sensor values")
    sensors.validate(shape)
    out = climatology.values.copy()
    if len(sensors):
        out[sensors.rows, sensors.cols] = sensors.values
    return ScalarField(out, climatology.valid_mask, climatology.geometry)


def _replicated_sources(locations, width):
    return [(r, c + k * width) for k in range(3) for r, c in locations]


def distance_transform_by_replication(shape, sources) -> ScalarField:
    """Column-periodic DT computed the replicate-three-times way.

    The grid is tiled three times horizontally, a planar DT is run on the
    wide image and the center third is kept.
    """
    h, w = shape
    wide = distance_transform(GridGeometry.planar(), (h, 3 * w), _replicated_sources(sources, w))
    return ScalarField(wide.values[:, w : 2 * w], geometry=GridGeometry.circular(w))


def voronoi_by_replication(sensors: SensorSet, shape) -> ScalarField:
    h, w = shape
    wide = SensorSet(_replicated_sources(sensors.locations, w), tuple(sensors.values) * 3)
    fill = voronoi_fill(GridGeometry.planar(), wide, shape=(h, 3 * w))
    return ScalarField(fill.values[:, w : 2 * w], geometry=GridGeometry.circular(w))

