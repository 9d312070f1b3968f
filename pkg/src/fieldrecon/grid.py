"""Field containers and the SFR1 / PGM file formats."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import GridGeometry

__all__ = [
    "ChannelKind",
    "FieldFormatError",
    "SampleStack",
    "ScalarField",
    "SensorSet",
    "export_pgm",
    "read_field",
    "write_field",
]

MAGIC = b"SFR1"
HEADER = struct.Struct("<4sIIII")
FLAG_VALID_MASK = 0x1
# Refuse headers that would describe more than 2**31 float32 values.
MAX_VALUES = 2**31


class FieldFormatError(ValueError):
    """Base class for malformed SFR1 files."""


class BadMagicError(FieldFormatError):
    pass


class BadHeaderError(FieldFormatError):
    pass


class DimensionOverflowError(FieldFormatError):
    pass


class TruncatedPayloadError(FieldFormatError):
    pass


class ChannelKind(str, enum.Enum):
    VORONOI = "voronoi"
    SPARSE_LOCATION = "sparse_location"
    DT_SENSOR = "dt_sensor"
    LAND_MASK = "land_mask"
    DT_LAND = "dt_land"
    FILLED_SPARSE = "filled_sparse"

    @property
    def is_binary(self) -> bool:
        return self in (ChannelKind.SPARSE_LOCATION, ChannelKind.LAND_MASK)


def _as_mask(mask, shape) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.shape != shape:
        raise ValueError(f"mask shape {arr.shape} does not match field shape {shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("mask entries must be 0 or 1")
    out = arr.astype(np.uint8)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A height x width grid of finite values.

    ``valid_mask`` marks pixels to be predicted with 1 and masked-out pixels
    (land, obstacles) with 0.
    """

    values: np.ndarray
    valid_mask: Optional[np.ndarray] = None
    geometry: GridGeometry = field(default_factory=GridGeometry.planar)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ValueError(f"field values must be a non-empty 2-D array, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.valid_mask is not None:
            object.__setattr__(self, "valid_mask", _as_mask(self.valid_mask, vals.shape))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def with_values(self, values) -> "ScalarField":
        return ScalarField(values, self.valid_mask, self.geometry)

    def __eq__(self, other):
        if not isinstance(other, ScalarField):
            return NotImplemented
        if self.shape != other.shape or not np.array_equal(self.values, other.values):
            return False
        if (self.valid_mask is None) != (other.valid_mask is None):
            return False
        if self.valid_mask is not None and not np.array_equal(self.valid_mask, other.valid_mask):
            return False
        return self.geometry == other.geometry

    __hash__ = None


@dataclass(frozen=True)
class SensorSet:
    """Ordered sensor pixel locations with optional readings."""

    locations: tuple[tuple[int, int], ...]
    values: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        locs = tuple((int(r), int(c)) for r, c in self.locations)
        if len(set(locs)) != len(locs):
            raise ValueError("duplicate sensor locations")
        object.__setattr__(self, "locations", locs)
        if self.values is not None:
            vals = tuple(float(v) for v in self.values)
            if len(vals) != len(locs):
                raise ValueError(f"{len(vals)} sensor values for {len(locs)} locations")
            object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.locations)

    @property
    def rows(self) -> np.ndarray:
        return np.array([r for r, _ in self.locations], dtype=np.int64)

    @property
    def cols(self) -> np.ndarray:
        return np.array([c for _, c in self.locations], dtype=np.int64)

    def validate(self, shape: tuple[int, int], valid_mask: Optional[np.ndarray] = None) -> None:
        h, w = shape
        for r, c in self.locations:
            if not (0 <= r < h and 0 <= c < w):
                raise IndexError(f"sensor ({r}, {c}) outside {h}x{w} grid")
            if valid_mask is not None and valid_mask[r, c] != 1:
                raise ValueError(f"sensor ({r}, {c}) lies on a masked-out pixel")

    def sample(self, fld: ScalarField) -> "SensorSet":
        """Read sensor values off ``fld``."""
        self.validate(fld.shape)
        vals = fld.values[self.rows, self.cols] if len(self) else np.zeros(0)
        return SensorSet(self.locations, tuple(vals.tolist()))


@dataclass(frozen=True)
class SampleStack:
    channels: tuple[ScalarField, ...]
    channel_kinds: tuple[ChannelKind, ...]
    target: ScalarField
    loss_mask: np.ndarray

    def __post_init__(self):
        if len(self.channels) != len(self.channel_kinds):
            raise ValueError("channel_kinds must align with channels")
        if len(set(self.channel_kinds)) != len(self.channel_kinds):
            raise ValueError("at most one channel per kind")
        for ch in self.channels:
            if ch.shape != self.target.shape:
                raise ValueError(f"channel shape {ch.shape} != target shape {self.target.shape}")
        object.__setattr__(self, "loss_mask", _as_mask(self.loss_mask, self.target.shape))

    def input_array(self) -> np.ndarray:
        """Channels stacked as a (C, H, W) float64 array."""
        return np.stack([ch.values for ch in self.channels])


def write_field(fld: ScalarField, path) -> None:
    h, w = fld.shape
    has_mask = fld.valid_mask is not None
    header = HEADER.pack(MAGIC, h, w, 2 if has_mask else 1, FLAG_VALID_MASK if has_mask else 0)
    payload = fld.values.astype("<f4")
    parts = [header, payload.tobytes()]
    if has_mask:
        parts.append(fld.valid_mask.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_field(path, geometry: Optional[GridGeometry] = None) -> ScalarField:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < HEADER.size:
        raise BadHeaderError(f"{path}: header truncated ({len(data)} bytes)")
    _, h, w, c, flags = HEADER.unpack_from(data)
    if h == 0 or w == 0:
        raise BadHeaderError(f"{path}: zero dimension {h}x{w}")
    if c not in (1, 2):
        raise BadHeaderError(f"{path}: channel count {c} not in {{1, 2}}")
    if flags & ~FLAG_VALID_MASK:
        raise BadHeaderError(f"{path}: unknown flag bits {flags:#x}")
    if (c == 2) != bool(flags & FLAG_VALID_MASK):
        raise BadHeaderError(f"{path}: channel count {c} inconsistent with flags {flags:#x}")
    if c * h * w > MAX_VALUES:
        raise DimensionOverflowError(f"{path}: {c}x{h}x{w} values exceeds limit")
    expected = HEADER.size + 4 * c * h * w
    if len(data) < expected:
        raise TruncatedPayloadError(f"{path}: payload has {len(data) - HEADER.size} bytes, need {expected - HEADER.size}")
    if len(data) > expected:
        raise BadHeaderError(f"{path}: {len(data) - expected} trailing bytes")
    arr = np.frombuffer(data, dtype="<f4", offset=HEADER.size, count=c * h * w).reshape(c, h, w)
    if not np.all(np.isfinite(arr)):
        raise FieldFormatError(f"{path}: non-finite values")
    mask = None
    if c == 2:
        if not np.all((arr[1] == 0) | (arr[1] == 1)):
            raise FieldFormatError(f"{path}: validity channel is not binary")
        mask = arr[1]
    return ScalarField(arr[0].astype(np.float64), mask, geometry or GridGeometry.planar())


def export_pgm(fld: ScalarField, path, lo: float, hi: float) -> None:
    if not lo < hi:
        raise ValueError(f"export_pgm needs lo < hi, got lo={lo} hi={hi}")
    scaled = np.clip((fld.values - lo) / (hi - lo), 0.0, 1.0)
    # round half up so (lo+hi)/2 maps to 128
    pixels = np.floor(255.0 * scaled + 0.5).astype(np.uint8)
    if fld.valid_mask is not None:
        pixels[fld.valid_mask == 0] = 0
    h, w = fld.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    """Parse a binary P5 file written by :func:`export_pgm`."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)


def fields_from_array(stack: Sequence[np.ndarray] | np.ndarray, valid_mask=None, geometry=None) -> list[ScalarField]:
    geom = geometry or GridGeometry.planar()
    return [ScalarField(v, valid_mask, geom) for v in stack]
