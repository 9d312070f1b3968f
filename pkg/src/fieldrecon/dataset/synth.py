"""Desk-scale synthetic datasets and the Gaussian-blur ablation."""

from __future__ import annotations

import math

import numpy as np

from ..geometry import CIRCULAR_X, GridGeometry
from ..grid import ScalarField
from .placement import Prng

WAKE = "wake"
SEASONAL = "seasonal"
TWO_PI = 2.0 * math.pi


def _grid(height, width):
    y = (np.arange(height, dtype=np.float64)[:, None] + 0.5) / height - 0.5
    x = np.arange(width, dtype=np.float64)[None, :] / width
    return y, x


def sinusoid_mode(height, width, t, cycle_len, kx, ky, omega_mult=1, phase=0.0) -> np.ndarray:
    """A plane wave travelling through the grid with period ``cycle_len`` frames.

    ``kx`` and ``ky`` are integer wavenumbers over the grid extent, so the
    wave is periodic in space as well.
    """
    y, x = _grid(height, width)
    theta = TWO_PI * (t % cycle_len) / cycle_len
    return np.sin(TWO_PI * (kx * x + ky * (y + 0.5)) - omega_mult * theta + phase)


def synth_cyclical(height, width, frames, cycle_len, mode=WAKE, seed=0, geometry=None) -> list[ScalarField]:
    """Smooth fields that repeat exactly every ``cycle_len`` frames.

    ``wake`` mimics a vortex street: waves advected along x inside a band
    around the centerline. ``seasonal`` mimics a global temperature map: a
    pole-to-equator gradient whose hemispheric asymmetry swings over the
    cycle, with zonal wave structure.
    """
    if not 0 < cycle_len < frames:
        raise ValueError(f"cycle_len must be in (0, frames); got {cycle_len} for {frames} frames")
    if mode not in (WAKE, SEASONAL):
        raise ValueError(f"unknown cyclical mode {mode!r}")
    rng = Prng(seed)
    phases = rng.uniforms(6) * TWO_PI
    geom = geometry or GridGeometry.planar()
    y, x = _grid(height, width)
    # Only cycle_len distinct frames exist; build them once and share.
    cycle = []
    for t in range(cycle_len):
        theta = TWO_PI * t / cycle_len
        if mode == WAKE:
            band = np.exp(-((y / 0.22) ** 2))
            street = np.sin(TWO_PI * 2 * x - theta + phases[0]) * band
            pair = (y / 0.22) * band * np.sin(TWO_PI * 3 * x - 2 * theta + phases[1])
            drift = 0.3 * np.cos(TWO_PI * (x + 2 * y) - theta + phases[2])
            vals = street + 0.6 * pair + drift
        else:
            lat = np.pi * y
            base = 1.0 - 1.6 * np.sin(lat) ** 2
            season = 0.5 * np.sin(theta + phases[3]) * np.sin(lat)
            zonal = 0.25 * np.cos(TWO_PI * 2 * x + phases[4]) * np.cos(lat) * (1 + 0.5 * np.cos(theta + phases[5]))
            vals = base + season + zonal
        cycle.append(vals)
    return [ScalarField(cycle[t % cycle_len], geometry=geom) for t in range(frames)]


def synth_chaotic(height=48, width=128, frames=200, seed=0, n_modes=96) -> list[ScalarField]:
    """High-frequency quasi-periodic fields with no repeating cycle.

    A sum of random plane waves whose temporal frequencies are irrational
    multiples of each other, so frames never recur.
    """
    rng = Prng(seed)
    y, x = _grid(height, width)
    kx = np.floor(rng.uniforms(n_modes) * 25) - 12
    ky = np.floor(rng.uniforms(n_modes) * 13) - 6
    k = np.hypot(kx, ky)
    k[k == 0] = 1.0
    amp = k ** (-5.0 / 6.0)
    amp /= np.sqrt(np.sum(amp**2) / 2)
    omega = 0.05 + 0.6 * rng.uniforms(n_modes) * np.sqrt(k)
    phase = rng.uniforms(n_modes) * TWO_PI
    spatial = TWO_PI * (kx[:, None, None] * x + ky[:, None, None] * (y + 0.5))
    out = []
    for t in range(frames):
        vals = np.tensordot(amp, np.sin(spatial - (omega * t + phase)[:, None, None]), axes=1)
        out.append(ScalarField(vals))
    return out


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    taps = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (taps / sigma) ** 2)
    return k / k.sum()


def _blur_axis(values, kernel, axis, pad_mode):
    radius = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(values, pad, mode=pad_mode)
    n = values.shape[axis]
    out = np.zeros_like(values)
    for i, kv in enumerate(kernel):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(i, i + n)
        out += kv * padded[tuple(sl)]
    return out


def gaussian_blur(fld: ScalarField, sigma: float, edges: str = "auto") -> ScalarField:
    """Separable Gaussian blur, kernel radius ceil(3*sigma), taps summing to 1.

    ``edges="auto"`` clamps rows and clamps columns, except columns wrap on
    circular grids. ``edges="wrap"`` wraps both axes.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return fld
    if edges not in ("auto", "wrap"):
        raise ValueError(f"unknown edge mode {edges!r}")
    kernel = gaussian_kernel(sigma)
    row_mode = "wrap" if edges == "wrap" else "edge"
    col_mode = "wrap" if edges == "wrap" or fld.geometry.kind == CIRCULAR_X else "edge"
    vals = _blur_axis(fld.values, kernel, 0, row_mode)
    vals = _blur_axis(vals, kernel, 1, col_mode)
    return fld.with_values(vals)


def synth_land_mask(height, width, seed=0, land_fraction=0.3) -> np.ndarray:
    """Blobby binary validity mask (0 = land) for NOAA-style experiments."""
    rng = Prng(seed)
    noise = ScalarField(rng.uniforms(height * width).reshape(height, width), geometry=GridGeometry.circular(width))
    smooth = gaussian_blur(noise, max(1.0, min(height, width) / 10)).values
    cut = np.quantile(smooth, land_fraction)
    mask = (smooth > cut).astype(np.uint8)
    if mask.all():
        mask[0, 0] = 0
    return mask


def climatology(frames) -> ScalarField:
    """Per-pixel mean over a list of frames."""
    frames = list(frames)
    if not frames:
        raise ValueError("climatology needs at least one frame")
    mean = np.mean([f.values for f in frames], axis=0)
    return frames[0].with_values(mean)
