"""Two-layer graph encoders (GCN, GraphSAGE, GAT) with manual backprop.

Each layer has a public forward function and a private ``_fwd``/``_bwd`` pair.
``_fwd`` returns ``(out, cache)``; ``_bwd(cache, d_out)`` returns the gradient
with respect to the layer input and a dict of parameter gradients.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import Graph
from .numerics import EPS_GUARD, glorot_init, leaky_relu, leaky_relu_grad

HIDDEN = 128
GAT_HEADS = 4
ATTN_SLOPE = 0.2
ACT_SLOPE = 0.2


class EncoderKind(str, enum.Enum):
    GCN = "gcn"
    SAGE = "sage"
    GAT = "gat"


def _check(q: np.ndarray, w: np.ndarray, rows: int, in_mult: int = 1):
    if q.ndim != 2 or q.shape[0] != rows:
        raise ValueError(f"feature matrix must have {rows} rows, got shape {q.shape}")
    if w.shape[0] != in_mult * q.shape[1]:
        raise ValueError(f"weight shape {w.shape} does not chain with input width {q.shape[1]}")


# -------------------------------------------------------------------- GCN

def _gcn_fwd(g: Graph, q, w):
    _check(q, w, g.n)
    aq = g.gcn_operator @ q
    return aq @ w, (g, q, w, aq)


def _gcn_bwd(cache, d_out):
    g, q, w, aq = cache
    d_w = aq.T @ d_out
    # operator is symmetric
    d_q = g.gcn_operator @ (d_out @ w.T)
    return d_q, {"W": d_w}


def gcn_forward(g: Graph, q: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``D^-1/2 (A+I) D^-1/2 @ q @ w``; no bias, no activation."""
    return _gcn_fwd(g, q, w)[0]


# -------------------------------------------------------------- GraphSAGE

def _sage_fwd(g: Graph, q, w):
    _check(q, w, g.n, in_mult=2)
    mean_op, _ = g.mean_operator
    c = np.hstack([q, mean_op @ q])
    p = c @ w
    h = leaky_relu(p, ACT_SLOPE)
    nrm = np.linalg.norm(h, axis=1, keepdims=True)
    safe = np.where(nrm > EPS_GUARD, nrm, 1.0)
    out = np.where(nrm > EPS_GUARD, h / safe, 0.0)
    return out, (g, q, w, c, p, out, nrm, safe)


def _sage_bwd(cache, d_out):
    g, q, w, c, p, out, nrm, safe = cache
    d_h = (d_out - out * np.sum(out * d_out, axis=1, keepdims=True)) / safe
    d_h = np.where(nrm > EPS_GUARD, d_h, 0.0)
    d_p = d_h * leaky_relu_grad(p, ACT_SLOPE)
    d_w = c.T @ d_p
    d_c = d_p @ w.T
    d = q.shape[1]
    _, mean_t = g.mean_operator
    d_q = d_c[:, :d] + mean_t @ d_c[:, d:]
    return d_q, {"W": d_w}


def sage_forward(g: Graph, q: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Concatenate each row with its neighbor mean, apply ``w`` and LeakyReLU, L2-normalize rows.

    ``w`` has ``2 * q.shape[1]`` rows.  Isolated nodes see a zero neighbor
    mean, and rows that come out exactly zero stay zero.
    """
    return _sage_fwd(g, q, w)[0]


# -------------------------------------------------------------------- GAT

def _softmax_rows(logits, offsets, rows):
    mx = np.maximum.reduceat(logits, offsets[:-1])
    ex = np.exp(logits - mx[rows])
    return ex / np.add.reduceat(ex, offsets[:-1])[rows]


def _gat_head_fwd(g: Graph, q, w, a):
    _check(q, w, g.n)
    d = w.shape[1]
    if a.shape != (2 * d, 1):
        raise ValueError(f"attention vector must have shape {(2 * d, 1)}, got {a.shape}")
    offsets, rows, cols = g.self_loop_csr
    z = q @ w
    s_src = (z @ a[:d])[:, 0]
    s_dst = (z @ a[d:])[:, 0]
    e = s_src[rows] + s_dst[cols]
    alpha = _softmax_rows(leaky_relu(e, ATTN_SLOPE), offsets, rows)
    att = sp.csr_matrix((alpha, cols, offsets), shape=(g.n, g.n))
    agg = att @ z
    return leaky_relu(agg, ACT_SLOPE), (g, q, w, a, z, e, alpha, att, agg)


def _gat_head_bwd(cache, d_out):
    g, q, w, a, z, e, alpha, att, agg = cache
    offsets, rows, cols = g.self_loop_csr
    d = w.shape[1]
    d_agg = d_out * leaky_relu_grad(agg, ACT_SLOPE)
    d_z = att.T @ d_agg
    d_alpha = np.einsum("ij,ij->i", d_agg[rows], z[cols])
    row_dot = np.add.reduceat(alpha * d_alpha, offsets[:-1])
    d_e = alpha * (d_alpha - row_dot[rows]) * leaky_relu_grad(e, ATTN_SLOPE)
    d_src = np.bincount(rows, weights=d_e, minlength=g.n)
    d_dst = np.bincount(cols, weights=d_e, minlength=g.n)
    d_a = np.concatenate([z.T @ d_src, z.T @ d_dst])[:, None]
    d_z += np.outer(d_src, a[:d, 0]) + np.outer(d_dst, a[d:, 0])
    return d_z @ w.T, {"W": q.T @ d_z, "a": d_a}


def gat_attention(g: Graph, h: np.ndarray, w: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Attention weights per entry of :attr:`Graph.self_loop_csr` (rows sum to one)."""
    return _gat_head_fwd(g, h, w, a)[1][6]


def _gat_fwd(g: Graph, q, heads):
    outs, caches = [], []
    for w, a in heads:
        o, c = _gat_head_fwd(g, q, w, a)
        outs.append(o)
        caches.append(c)
    return np.hstack(outs), caches


def _gat_bwd(caches, d_out):
    d_q = 0.0
    grads = []
    start = 0
    for c in caches:
        width = c[2].shape[1]
        dq_h, gr = _gat_head_bwd(c, d_out[:, start:start + width])
        d_q = d_q + dq_h
        grads.append(gr)
        start += width
    return d_q, grads


def gat_forward(g: Graph, h: np.ndarray, heads) -> np.ndarray:
    """Multi-head attention layer; ``heads`` is a sequence of ``(W, a)`` pairs.

    Head outputs ``LeakyReLU(sum_j alpha_ij z_j)`` are concatenated.
    """
    return _gat_fwd(g, h, heads)[0]


# ------------------------------------------------------------ the encoder

@dataclass
class EncoderParams:
    """Weights for a 2-layer encoder, keyed by name.

    GCN uses ``W0``, ``W1``; SAGE uses ``W0`` (``2f x 128``) and ``W1``
    (``256 x 128``); GAT uses ``W{layer}.h{head}`` and ``a{layer}.h{head}``
    with four 32-wide heads on layer 0 and one 128-wide head on layer 1.
    """

    kind: EncoderKind
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = EncoderKind(self.kind)

    @classmethod
    def init(cls, kind, in_dim: int, rng: np.random.Generator, hidden: int = HIDDEN,
             heads: int = GAT_HEADS) -> "EncoderParams":
        kind = EncoderKind(kind)
        wts = {}
        if kind is EncoderKind.GCN:
            wts["W0"] = glorot_init(in_dim, hidden, rng)
            wts["W1"] = glorot_init(hidden, hidden, rng)
        elif kind is EncoderKind.SAGE:
            wts["W0"] = glorot_init(2 * in_dim, hidden, rng)
            wts["W1"] = glorot_init(2 * hidden, hidden, rng)
        else:
            if hidden % heads:
                raise ValueError("hidden width must be divisible by head count")
            hd = hidden // heads
            for k in range(heads):
                wts[f"W0.h{k}"] = glorot_init(in_dim, hd, rng)
                wts[f"a0.h{k}"] = glorot_init(2 * hd, 1, rng)
            wts["W1.h0"] = glorot_init(hidden, hidden, rng)
            wts["a1.h0"] = glorot_init(2 * hidden, 1, rng)
        return cls(kind, wts)

    def layer_heads(self, layer: int):
        n = sum(1 for k in self.weights if k.startswith(f"W{layer}.h"))
        return [(self.weights[f"W{layer}.h{k}"], self.weights[f"a{layer}.h{k}"]) for k in range(n)]

    @property
    def in_dim(self) -> int:
        w = self.weights["W0"] if "W0" in self.weights else self.weights["W0.h0"]
        return w.shape[0] // 2 if self.kind is EncoderKind.SAGE else w.shape[0]

    @property
    def out_dim(self) -> int:
        w = self.weights["W1"] if "W1" in self.weights else self.weights["W1.h0"]
        return w.shape[1]


def encoder_forward(g: Graph, features: np.ndarray, params: EncoderParams):
    """Apply the selected layer twice.  Returns ``(Z, cache)``."""
    q = features
    caches = []
    for layer in (0, 1):
        if params.kind is EncoderKind.GCN:
            q, c = _gcn_fwd(g, q, params.weights[f"W{layer}"])
        elif params.kind is EncoderKind.SAGE:
            q, c = _sage_fwd(g, q, params.weights[f"W{layer}"])
        else:
            q, c = _gat_fwd(g, q, params.layer_heads(layer))
        caches.append(c)
    return q, (params.kind, dict(params.weights), caches)


def encoder_backward(cache, d_z: np.ndarray, params: EncoderParams):
    """Gradients for every encoder weight; also returns ``d features``."""
    kind, snapshot, caches = cache
    if kind is not params.kind or snapshot.keys() != params.weights.keys() or any(
            snapshot[k] is not params.weights[k] for k in snapshot):
        raise ValueError("stale cache: forward pass was run with different parameters")
    grads = {}
    d = d_z
    for layer in (1, 0):
        c = caches[layer]
        if kind is EncoderKind.GCN:
            d, gr = _gcn_bwd(c, d)
            grads[f"W{layer}"] = gr["W"]
        elif kind is EncoderKind.SAGE:
            d, gr = _sage_bwd(c, d)
            grads[f"W{layer}"] = gr["W"]
        else:
            d, grs = _gat_bwd(c, d)
            for k, gr in enumerate(grs):
                grads[f"W{layer}.h{k}"] = gr["W"]
                grads[f"a{layer}.h{k}"] = gr["a"]
    return grads, d
