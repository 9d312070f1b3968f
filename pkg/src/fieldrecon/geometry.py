"""Pixel-to-pixel distances on planar, column-periodic and spherical grids.

Every distance used by the tessellation code goes through this module, so the
scalar :func:`pixel_distance` and the vectorized :func:`distances_from` share
one formula per geometry kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_KM = 6371.0

PLANAR = "planar"
CIRCULAR_X = "circular_x"
SPHERICAL = "spherical"
KINDS = (PLANAR, CIRCULAR_X, SPHERICAL)


@dataclass(frozen=True)
class GridGeometry:
    """How distances between pixel centers are measured.

    Spherical grids place pixel (row, col) at latitude ``lat0 + row*dlat`` and
    longitude ``lon0 + col*dlon`` (degrees). ``width`` is only needed for
    ``circular_x``, where columns wrap.
    """

    kind: str = PLANAR
    width: int | None = None
    lat0: float = 0.0
    dlat: float = 1.0
    lon0: float = 0.0
    dlon: float = 1.0
    radius: float = EARTH_RADIUS_KM

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown geometry kind {self.kind!r}")
        if self.kind == CIRCULAR_X and (self.width is None or self.width < 1):
            raise ValueError("circular_x geometry needs a positive width")
        if self.kind == SPHERICAL and not self.radius > 0:
            raise ValueError("sphere radius must be positive")

    @classmethod
    def planar(cls) -> "GridGeometry":
        return cls(PLANAR)

    @classmethod
    def circular(cls, width: int) -> "GridGeometry":
        return cls(CIRCULAR_X, width=width)

    @classmethod
    def spherical(cls, lat0, dlat, lon0, dlon, radius=EARTH_RADIUS_KM) -> "GridGeometry":
        return cls(SPHERICAL, lat0=lat0, dlat=dlat, lon0=lon0, dlon=dlon, radius=radius)

    def check_shape(self, shape: tuple[int, int]) -> None:
        h, w = shape
        if self.kind == CIRCULAR_X and w != self.width:
            raise ValueError(f"circular geometry width {self.width} != grid width {w}")
        if self.kind == SPHERICAL:
            for lat in (self.lat0, self.lat0 + self.dlat * (h - 1)):
                if abs(lat) > 90.0 + 1e-9:
                    raise ValueError(f"grid latitude {lat} outside [-90, 90]")
            if abs(self.dlon) * w > 360.0 + 1e-6:
                raise ValueError(f"grid spans {abs(self.dlon) * w} degrees of longitude")

    def latlon(self, row, col):
        """Pixel-center latitude and longitude in degrees."""
        return self.lat0 + row * self.dlat, self.lon0 + col * self.dlon


def haversine(lat_a, lon_a, lat_b, lon_b, r=EARTH_RADIUS_KM) -> float:
    """Great-circle distance between two lat/lon points (degrees) on a sphere of radius ``r``."""
    for lat in (lat_a, lat_b):
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
    if not r > 0:
        raise ValueError("radius must be positive")
    return _haversine(
        math.radians(lat_a), math.radians(lat_b), math.radians(lat_b - lat_a), math.radians(lon_b - lon_a), r
    )


def _haversine(phi_a, phi_b, dphi, dlam, r):
    h = math.sin(dphi / 2) ** 2 + math.cos(phi_a) * math.cos(phi_b) * math.sin(dlam / 2) ** 2
    return 2.0 * r * math.asin(min(1.0, math.sqrt(h)))


def _wrap(dc, width):
    dc = abs(dc)
    return min(dc, width - dc)


def pixel_distance(geom: GridGeometry, p, q, shape=None) -> float:
    """Distance between pixel centers ``p`` and ``q`` given as (row, col)."""
    (r1, c1), (r2, c2) = p, q
    if shape is not None:
        h, w = shape
        for r, c in (p, q):
            if not (0 <= r < h and 0 <= c < w):
                raise IndexError(f"pixel ({r}, {c}) outside {h}x{w} grid")
    if geom.kind == PLANAR:
        return math.sqrt((r2 - r1) ** 2 + (c2 - c1) ** 2)
    if geom.kind == CIRCULAR_X:
        for c in (c1, c2):
            if not 0 <= c < geom.width:
                raise IndexError(f"column {c} outside circular width {geom.width}")
        return math.sqrt((r2 - r1) ** 2 + _wrap(c2 - c1, geom.width) ** 2)
    return float(_pixel_haversine(geom, r1, np.float64(r2), np.float64(c2 - c1)))


def squared_index_distance(geom: GridGeometry, rows, cols, r0: int, c0: int) -> np.ndarray:
    """Exact integer squared distances for planar/circular grids."""
    dr = np.asarray(rows, dtype=np.int64) - r0
    dc = np.abs(np.asarray(cols, dtype=np.int64) - c0)
    if geom.kind == CIRCULAR_X:
        dc = np.minimum(dc, geom.width - dc)
    elif geom.kind != PLANAR:
        raise ValueError("squared index distance only defined for planar and circular grids")
    return dr * dr + dc * dc


def distances_from(geom: GridGeometry, shape: tuple[int, int], r0: int, c0: int) -> np.ndarray:
    """Distance from pixel (r0, c0) to every pixel of a grid, as an (H, W) array."""
    h, w = shape
    rows, cols = np.ogrid[:h, :w]
    if geom.kind in (PLANAR, CIRCULAR_X):
        return np.sqrt(squared_index_distance(geom, rows, cols, r0, c0).astype(np.float64))
    return _pixel_haversine(geom, r0, rows.astype(np.float64), (cols - c0).astype(np.float64))


def _pixel_haversine(geom: GridGeometry, r0, rows, dcols):
    """Haversine from row ``r0`` to ``rows`` at column offsets ``dcols``.

    The scalar and grid paths both land here so they agree bit for bit.
    Differences are taken in index space, so mirrored pixels tie exactly.
    """
    phi_a = np.radians(geom.lat0 + r0 * geom.dlat)
    phi_b = np.radians(geom.lat0 + rows * geom.dlat)
    sp = np.sin(np.radians((rows - r0) * geom.dlat) / 2)
    sl = np.sin(np.radians(dcols * geom.dlon) / 2)
    hv = sp * sp + np.cos(phi_a) * np.cos(phi_b) * (sl * sl)
    return 2.0 * geom.radius * np.arcsin(np.minimum(1.0, np.sqrt(hv)))
