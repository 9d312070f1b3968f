"""Same-padded stride-1 convolutional regressor with exact reverse-mode gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..dataset.placement import Prng
from ..grid import SampleStack, ScalarField


@dataclass
class ConvLayer:
    weight: np.ndarray  # (out, in, k, k)
    bias: np.ndarray  # (out,)

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]


class ConvNet:
    """Stack of same-padded convolutions, ReLU between layers, linear output."""

    def __init__(self, layers: Sequence[ConvLayer]):
        layers = list(layers)
        if not layers:
            raise ValueError("ConvNet needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_channels != b.in_channels:
                raise ValueError(f"layer widths do not chain: {a.out_channels} -> {b.in_channels}")
        if layers[-1].out_channels != 1:
            raise ValueError("final layer must have one output channel")
        for layer in layers:
            if layer.kernel % 2 == 0 or layer.weight.shape[3] != layer.kernel:
                raise ValueError("kernels must be square with odd size")
        self.layers = layers

    @classmethod
    def build(cls, in_channels: int, hidden: int = 48, depth: int = 8, kernel: int = 7, seed: int = 1) -> "ConvNet":
        return cls(init_params(architecture(in_channels, hidden, depth, kernel), seed))

    @property
    def in_channels(self) -> int:
        return self.layers[0].in_channels

    @property
    def shapes(self) -> list[tuple[int, int, int]]:
        return [(l.in_channels, l.out_channels, l.kernel) for l in self.layers]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in checkpoint order (weight, bias per layer); views, not copies."""
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def copy(self) -> "ConvNet":
        return ConvNet([ConvLayer(l.weight.copy(), l.bias.copy()) for l in self.layers])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward_array(self, x)[0]


def architecture(in_channels: int, hidden: int, depth: int, kernel: int) -> list[tuple[int, int, int]]:
    """(in, out, kernel) per layer for a ``depth``-layer net of width ``hidden``."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    widths = [in_channels] + [hidden] * (depth - 1) + [1]
    return [(widths[i], widths[i + 1], kernel) for i in range(depth)]


def init_params(shapes, seed: int = 1) -> list[ConvLayer]:
    """Uniform weights in +-sqrt(6 / fan_in) drawn from one SplitMix64 stream; zero biases."""
    rng = Prng(seed)
    layers = []
    for cin, cout, k in shapes:
        bound = math.sqrt(6.0 / (cin * k * k))
        u = rng.uniforms(cout * cin * k * k).reshape(cout, cin, k, k)
        layers.append(ConvLayer((2.0 * u - 1.0) * bound, np.zeros(cout)))
    return layers


def _spectra(a: np.ndarray, size) -> np.ndarray:
    return np.fft.rfft2(a, s=size)


def _fast_len(n: int) -> int:
    """Smallest 5-smooth integer >= n; pocketfft is quickest on these."""
    best = 1 << max(0, (n - 1).bit_length())
    f5 = 1
    while f5 < best:
        f35 = f5
        while f35 < best:
            m = f35
            while m < n:
                m *= 2
            best = min(best, m)
            f35 *= 3
        f5 *= 5
    return best


def _fft_size(x: np.ndarray, k: int):
    # zero padding of at least k - 1 keeps the circular products free of wrap-around
    return (_fast_len(x.shape[2] + k - 1), _fast_len(x.shape[3] + k - 1))


def conv_forward(layer: ConvLayer, x: np.ndarray) -> np.ndarray:
    """Cross-correlation with zero same-padding plus bias. ``x`` is (N, C, H, W) or (C, H, W).

    Evaluated through zero-padded real FFTs; agrees with the direct sum to
    rounding error.
    """
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.shape[1] != layer.in_channels:
        raise ValueError(f"layer expects {layer.in_channels} channels, got {x.shape[1]}")
    y = _correlate(x, layer.weight)
    y += layer.bias[None, :, None, None]
    return y[0] if single else y


def _correlate(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    n, _, h, w = x.shape
    k = weight.shape[2]
    if k == 1:
        # pointwise: a plain channel mix, exact and pixel-local
        return np.einsum("nchw,oc->nohw", x, weight[:, :, 0, 0])
    p = k // 2
    size = _fft_size(x, k)
    xs = _spectra(x, size).transpose(2, 3, 0, 1)  # (P, Q, N, C)
    ks = _spectra(weight[:, :, ::-1, ::-1], size).transpose(2, 3, 1, 0)  # (P, Q, C, O)
    ys = np.matmul(xs, ks).transpose(2, 3, 0, 1)  # (N, O, P, Q)
    return np.fft.irfft2(ys, s=size)[:, :, p : p + h, p : p + w]


def conv_backward(layer: ConvLayer, x: np.ndarray, dy: np.ndarray):
    """Gradients (dx, dweight, dbias) of a conv layer given upstream ``dy``."""
    k = layer.kernel
    db = dy.sum(axis=(0, 2, 3))
    dx = _correlate(dy, layer.weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    if k == 1:
        return dx, np.einsum("nohw,nchw->oc", dy, x)[:, :, None, None], db
    p = k // 2
    size = _fft_size(x, k)
    xs = _spectra(x, size).transpose(2, 3, 1, 0)  # (P, Q, C, N)
    ds = _spectra(dy, size).transpose(2, 3, 0, 1)  # (P, Q, N, O)
    # dw[o, c, i, j] = sum_{n,h,w} dy[n, o, h, w] x[n, c, h + i - p, w + j - p]
    corr = np.fft.irfft2(np.matmul(xs, ds.conj()).transpose(3, 2, 0, 1), s=size)  # (O, C, P, Q)
    idx_r = np.arange(-p, p + 1) % size[0]
    idx_c = np.arange(-p, p + 1) % size[1]
    dw = corr[:, :, idx_r][:, :, :, idx_c]
    return dx, dw, db


def forward_array(net: ConvNet, x: np.ndarray):
    """Forward pass over a (N, C, H, W) batch; returns ((N, H, W) output, cache)."""
    if x.ndim != 4:
        raise ValueError(f"expected a (N, C, H, W) batch, got shape {x.shape}")
    if x.shape[1] != net.in_channels:
        raise ValueError(f"net expects {net.in_channels} input channels, got {x.shape[1]}")
    inputs = []
    h = x
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        inputs.append(h)
        h = conv_forward(layer, h)
        if i < last:
            h = np.maximum(h, 0.0)
    return h[:, 0], inputs


def forward(net: ConvNet, stack: SampleStack) -> ScalarField:
    """Normalized prediction for one sample."""
    out, _ = forward_array(net, stack.input_array()[None])
    return ScalarField(out[0], geometry=stack.target.geometry)


def masked_mse(pred, target, loss_mask) -> float:
    """Mean squared error over pixels where ``loss_mask`` is 1."""
    pred, target, loss_mask = np.asarray(pred), np.asarray(target), np.asarray(loss_mask)
    if pred.shape != target.shape or pred.shape != loss_mask.shape:
        raise ValueError(f"shape mismatch: {pred.shape}, {target.shape}, {loss_mask.shape}")
    m = float(np.sum(loss_mask))
    if m <= 0:
        raise ValueError("loss mask selects no pixels")
    diff = np.where(loss_mask == 1, pred - target, 0.0)
    return float(np.sum(diff * diff) / m)


def loss_and_grads(net: ConvNet, x: np.ndarray, target: np.ndarray, loss_mask: Optional[np.ndarray] = None):
    """Masked MSE of a batch and its gradient for every parameter.

    Gradients come back in :meth:`ConvNet.params` order. Target values under
    ``loss_mask == 0`` never enter the computation.
    """
    if loss_mask is None:
        loss_mask = np.ones_like(target)
    out, inputs = forward_array(net, x)
    m = float(np.sum(loss_mask))
    if m <= 0:
        raise ValueError("loss mask selects no pixels")
    diff = np.where(loss_mask == 1, out - target, 0.0)
    loss = float(np.sum(diff * diff) / m)
    grad = (2.0 / m) * diff[:, None]
    grads: list = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        dx, dw, db = conv_backward(layer, inputs[i], grad)
        grads[2 * i], grads[2 * i + 1] = dw, db
        if i > 0:
            # inputs[i] is the ReLU output of layer i-1; zero where it clipped
            grad = dx * (inputs[i] > 0)
    return loss, grads


def backward(net: ConvNet, stack: SampleStack):
    """Loss and parameter gradients for a single SampleStack."""
    return loss_and_grads(net, stack.input_array()[None], stack.target.values[None], stack.loss_mask[None])
