"""Central-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset.placement import Prng
from .net import ConvNet, init_params, loss_and_grads


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def _loss(net, x, y, mask):
    return loss_and_grads(net, x, y, mask)[0]


def grad_check(net: ConvNet, x, y, mask=None, tolerance=1e-4, n_samples=60, step=1e-5, seed=0, grad_fn=None):
    """Compare analytic gradients with central differences on sampled parameters.

    The relative error of one parameter is |a - n| / max(|a|, |n|, 1e-8).
    ``grad_fn(net, x, y, mask) -> grads`` substitutes the analytic side (used
    for negative controls).
    """
    if grad_fn is None:
        analytic = loss_and_grads(net, x, y, mask)[1]
    else:
        analytic = grad_fn(net, x, y, mask)
    params = net.params()
    sizes = [p.size for p in params]
    total = sum(sizes)
    rng = Prng(seed)
    if n_samples >= total:
        picks = range(total)
    else:
        picks = sorted(set(rng.below(total) for _ in range(n_samples)))
    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    for flat in picks:
        pi = int(np.searchsorted(offsets, flat, side="right") - 1)
        p = params[pi].reshape(-1)
        j = flat - offsets[pi]
        orig = p[j]
        p[j] = orig + step
        up = _loss(net, x, y, mask)
        p[j] = orig - step
        down = _loss(net, x, y, mask)
        p[j] = orig
        numeric = (up - down) / (2 * step)
        a = float(analytic[pi].reshape(-1)[j])
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return GradCheckReport(worst, len(picks), tolerance)


def default_battery(tolerance=1e-4, grad_fn=None):
    """Grad checks on small random nets, masked and unmasked; returns (name, report) pairs."""
    out = []
    rng = np.random.default_rng(12345)
    cases = [("identity-1x1", [(1, 1, 1)]), ("one-layer-3x3", [(2, 1, 3)]), ("two-layer", [(2, 3, 3), (3, 1, 3)]),
             ("three-layer", [(3, 4, 3), (4, 4, 5), (4, 1, 3)])]
    for name, shapes in cases:
        net = ConvNet(init_params(shapes, seed=len(out) + 1))
        for layer in net.layers:
            layer.bias[:] = rng.normal(0, 0.1, layer.bias.shape)
        cin = shapes[0][0]
        x = rng.normal(size=(2, cin, 8, 8))
        y = rng.normal(size=(2, 8, 8))
        for masked in (False, True):
            mask = (rng.random((2, 8, 8)) < 0.6).astype(float) if masked else None
            rep = grad_check(net, x, y, mask, tolerance=tolerance, n_samples=80, seed=len(out), grad_fn=grad_fn)
            out.append((f"{name}{'-masked' if masked else ''}", rep))
    return out


def corrupted_gradients(scale=1e-2):
    """A grad_fn that nudges every analytic gradient; a sound checker must flag it."""

    def fn(net, x, y, mask):
        grads = loss_and_grads(net, x, y, mask)[1]
        return [g + scale * (np.abs(g) + 1e-3) for g in grads]

    return fn
