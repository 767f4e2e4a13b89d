"""Per-node MLP head: 128 -> 128 -> 64 -> 32 -> 1."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import glorot_init, leaky_relu, leaky_relu_grad

DECODER_DIMS = (128, 128, 64, 32, 1)
SLOPE = 0.01


@dataclass
class DecoderParams:
    """``W{i}`` (``dims[i] x dims[i+1]``) and ``b{i}`` (``1 x dims[i+1]``) for four layers."""

    weights: dict = field(default_factory=dict)

    @classmethod
    def init(cls, rng: np.random.Generator, dims=DECODER_DIMS) -> "DecoderParams":
        wts = {}
        for i in range(len(dims) - 1):
            wts[f"W{i}"] = glorot_init(dims[i], dims[i + 1], rng)
            wts[f"b{i}"] = np.zeros((1, dims[i + 1]))
        return cls(wts)

    @property
    def n_layers(self) -> int:
        return sum(1 for k in self.weights if k.startswith("W"))

    @property
    def dims(self) -> tuple:
        return (self.weights["W0"].shape[0],) + tuple(self.weights[f"W{i}"].shape[1]
                                                       for i in range(self.n_layers))


def decoder_forward(z: np.ndarray, p: DecoderParams):
    """LeakyReLU(0.01) after each hidden layer, linear output.  Returns ``(Y, cache)``."""
    if z.ndim != 2 or z.shape[1] != p.weights["W0"].shape[0]:
        raise ValueError(f"embedding shape {z.shape} does not match decoder input")
    x = z
    pre = []
    inputs = []
    last = p.n_layers - 1
    for i in range(p.n_layers):
        inputs.append(x)
        h = x @ p.weights[f"W{i}"] + p.weights[f"b{i}"]
        pre.append(h)
        x = h if i == last else leaky_relu(h, SLOPE)
    return x[:, 0], (dict(p.weights), inputs, pre)


def decoder_backward(cache, d_y: np.ndarray, p: DecoderParams):
    """Returns ``(grads, d_z)``."""
    snapshot, inputs, pre = cache
    if snapshot.keys() != p.weights.keys() or any(snapshot[k] is not p.weights[k] for k in snapshot):
        raise ValueError("stale cache: forward pass was run with different parameters")
    grads = {}
    d = np.asarray(d_y, dtype=float).reshape(-1, 1)
    last = p.n_layers - 1
    for i in range(last, -1, -1):
        if i != last:
            d = d * leaky_relu_grad(pre[i], SLOPE)
        grads[f"W{i}"] = inputs[i].T @ d
        grads[f"b{i}"] = d.sum(axis=0, keepdims=True)
        d = d @ p.weights[f"W{i}"].T
    return grads, d
