"""Checkpoint files: a text header followed by little-endian float64 parameters.

Layout::

    FRCKPT1
    layers=2:48:7,48:48:7,...       (in:out:kernel per layer)
    <key>=<value>                   (free-form metadata, sorted)
    END
    <weights and bias of layer 0, layer 1, ... as <f8, row-major>
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .net import ConvLayer, ConvNet

MAGIC = "FRCKPT1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, net: ConvNet, meta: dict | None = None) -> None:
    layers = ",".join(f"{i}:{o}:{k}" for i, o, k in net.shapes)
    lines = [MAGIC, f"layers={layers}"]
    for key in sorted(meta or {}):
        val = str(meta[key])
        if "\n" in val or "=" in key:
            raise CheckpointError(f"metadata {key!r} not representable")
        lines.append(f"{key}={val}")
    lines.append("END")
    header = ("\n".join(lines) + "\n").encode("utf-8")
    payload = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in net.params())
    Path(path).write_bytes(header + payload)


def load_checkpoint(path):
    """Return (net, metadata dict)."""
    data = Path(path).read_bytes()
    end = data.find(b"\nEND\n")
    if not data.startswith(MAGIC.encode() + b"\n") or end < 0:
        raise CheckpointError(f"{path}: not a {MAGIC} checkpoint")
    lines = data[: end].decode("utf-8").split("\n")[1:]
    meta = dict(line.split("=", 1) for line in lines)
    shapes = [tuple(int(v) for v in spec.split(":")) for spec in meta.pop("layers").split(",")]
    buf = data[end + len(b"\nEND\n") :]
    expected = sum(o * i * k * k + o for i, o, k in shapes) * 8
    if len(buf) != expected:
        raise CheckpointError(f"{path}: payload {len(buf)} bytes, expected {expected}")
    flat = np.frombuffer(buf, dtype="<f8").astype(np.float64)
    layers = []
    pos = 0
    for cin, cout, k in shapes:
        nw = cout * cin * k * k
        w = flat[pos : pos + nw].reshape(cout, cin, k, k).copy()
        pos += nw
        b = flat[pos : pos + cout].copy()
        pos += cout
        layers.append(ConvLayer(w, b))
    return ConvNet(layers), meta
