"""Unsupervised (power-iteration target) and supervised training of the encoder-decoder.

The unsupervised objective pulls the model output ``Y`` towards one power
iteration step of itself, ``normalize(A @ Y)``, while a small reward on
``||Y||`` keeps ``Y`` away from the all-zero solution.
"""

from __future__ import annotations

import enum
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .decoder import DecoderParams, decoder_backward, decoder_forward
from .eigen import power_iteration_ec
from .encoder import EncoderKind, EncoderParams, encoder_backward, encoder_forward
from .graph import Graph, spmv
from .numerics import EPS_GUARD, Adam, ZeroNormError, check_finite, l2_normalize, make_rng

CHECKPOINT_FORMAT = "ecgnn-checkpoint"
CHECKPOINT_VERSION = 1


class LossKind(str, enum.Enum):
    JOINT = "joint"
    JOINT_L1 = "joint-l1"
    OBJECTIVE_ONLY = "obj-only"


class Mode(str, enum.Enum):
    CUL = "cul"
    CSL = "csl"


@dataclass(frozen=True)
class LossVariant:
    kind: LossKind = LossKind.JOINT
    k: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if self.kind is not LossKind.OBJECTIVE_ONLY and not self.k > 0:
            raise ValueError("k must be positive for the joint losses")


@dataclass(frozen=True)
class TrainConfig:
    encoder: EncoderKind = EncoderKind.GCN
    mode: Mode = Mode.CUL
    loss: LossVariant = LossVariant()
    epochs: int = 150
    lr: float = 1e-3
    seed: int = 0
    shuffle: bool = False
    # ablation: let the gradient flow through X = A Y instead of freezing it
    grad_through_target: bool = False

    def __post_init__(self):
        object.__setattr__(self, "encoder", EncoderKind(self.encoder))
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder"] = self.encoder.value
        d["mode"] = self.mode.value
        d["loss"] = {"kind": self.loss.kind.value, "k": self.loss.k}
        return d


class CollapseError(ZeroNormError):
    """The output collapsed to (near) zero so ``A @ Y`` cannot be normalized."""

    def __init__(self, epoch: int, graph_index: int, detail: str = ""):
        self.epoch = epoch
        self.graph_index = graph_index
        super().__init__(f"output collapsed at epoch {epoch}, graph {graph_index}: {detail}")


# ------------------------------------------------------------------ losses

def compute_target_x(g: Graph, y) -> np.ndarray:
    """``X = A @ Y``, treated by the caller as a constant target."""
    return spmv(g, y)


def _objective(y, x_hat, l1: bool):
    r = y - x_hat
    if l1:
        return float(np.abs(r).sum()), np.sign(r)
    nr = float(np.linalg.norm(r))
    # the norm is not differentiable at r == 0; use the zero subgradient there
    return nr, (r / nr if nr > EPS_GUARD else np.zeros_like(r))


def _reward_grad(y, k):
    ny = float(np.linalg.norm(y))
    n = len(y)
    grad = (k / n) * y / ny if ny > EPS_GUARD else np.zeros_like(y)
    return (k / n) * ny, grad


def loss_joint(y, x, k: float = 1.0):
    """``||Y - X/||X|| ||_2 - (k/n) ||Y||_2`` and its gradient in ``Y`` (``X`` held fixed)."""
    x_hat = l2_normalize(x)
    obj, g_obj = _objective(np.asarray(y, float), x_hat, l1=False)
    rew, g_rew = _reward_grad(np.asarray(y, float), k)
    return obj - rew, g_obj - g_rew


def loss_joint_l1(y, x, k: float = 1.0):
    """L1 variant: ``sum |Y - X/||X|| | - (k/n) ||Y||_2``."""
    x_hat = l2_normalize(x)
    obj, g_obj = _objective(np.asarray(y, float), x_hat, l1=True)
    rew, g_rew = _reward_grad(np.asarray(y, float), k)
    return obj - rew, g_obj - g_rew


def loss_objective_only(y, x):
    """``||Y - X/||X|| ||_2`` with no anti-collapse term."""
    return _objective(np.asarray(y, float), l2_normalize(x), l1=False)


def loss_mse(y, labels):
    r = np.asarray(y, float) - labels
    return float(np.mean(r * r)), 2.0 * r / len(r)


def _unsupervised_loss(g: Graph, y, x, loss: LossVariant, through_target: bool):
    if loss.kind is LossKind.JOINT:
        val, dy = loss_joint(y, x, loss.k)
    elif loss.kind is LossKind.JOINT_L1:
        val, dy = loss_joint_l1(y, x, loss.k)
    else:
        val, dy = loss_objective_only(y, x)
    if through_target:
        nx = np.linalg.norm(x)
        x_hat = x / nx
        # d obj / d x_hat is minus the residual direction for both L1 and L2
        _, g_obj = _objective(y, x_hat, l1=loss.kind is LossKind.JOINT_L1)
        v = -g_obj
        dy = dy + spmv(g, (v - x_hat * (x_hat @ v)) / nx)
    return val, dy


# ------------------------------------------------------------------- model

def degree_features(g: Graph) -> np.ndarray:
    """The single input feature per node: its degree."""
    return g.degrees.astype(float)[:, None]


@dataclass
class Checkpoint:
    encoder: EncoderParams
    decoder: DecoderParams
    metadata: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION

    @property
    def encoder_kind(self) -> EncoderKind:
        return self.encoder.kind

    @classmethod
    def init(cls, kind, seed: int = 0, in_dim: int = 1) -> "Checkpoint":
        rng = make_rng(seed)
        enc = EncoderParams.init(kind, in_dim, rng)
        dec = DecoderParams.init(rng)
        return cls(enc, dec)

    def named_params(self) -> dict:
        out = {f"enc.{k}": v for k, v in self.encoder.weights.items()}
        out.update({f"dec.{k}": v for k, v in self.decoder.weights.items()})
        return out

    def set_params(self, params: dict) -> None:
        for k, v in params.items():
            part, name = k.split(".", 1)
            (self.encoder if part == "enc" else self.decoder).weights[name] = v

    def to_dict(self) -> dict:
        def pack(wts):
            out = {}
            for k, v in wts.items():
                check_finite(v, k)
                out[k] = {"shape": list(v.shape), "data": v.reshape(-1).tolist()}
            return out

        return {
            "format": CHECKPOINT_FORMAT,
            "version": self.version,
            "encoder_kind": self.encoder.kind.value,
            "dims": {"in": self.encoder.in_dim, "embedding": self.encoder.out_dim,
                     "decoder": list(self.decoder.dims)},
            "params": {"encoder": pack(self.encoder.weights), "decoder": pack(self.decoder.weights)},
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not an ecgnn checkpoint")
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")

        def unpack(section):
            out = {}
            for k, v in section.items():
                arr = np.array(v["data"], dtype=float)
                if arr.size != math.prod(v["shape"]):
                    raise ValueError(f"parameter {k}: data does not match shape {v['shape']}")
                out[k] = check_finite(arr.reshape(v["shape"]), k)
            return out

        enc = EncoderParams(d["encoder_kind"], unpack(d["params"]["encoder"]))
        dec = DecoderParams(unpack(d["params"]["decoder"]))
        if enc.out_dim != dec.dims[0]:
            raise ValueError("encoder output width does not match decoder input")
        return cls(enc, dec, d.get("metadata", {}), d["version"])

    def save(self, path) -> None:
        # repr-based float output is the shortest string that round-trips exactly
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=None, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def model_forward(ckpt: Checkpoint, g: Graph, features=None):
    """Returns ``(Y, Z, caches)``."""
    feats = degree_features(g) if features is None else features
    z, enc_cache = encoder_forward(g, feats, ckpt.encoder)
    y, dec_cache = decoder_forward(z, ckpt.decoder)
    return y, z, (enc_cache, dec_cache)


def model_backward(ckpt: Checkpoint, caches, d_y) -> dict:
    enc_cache, dec_cache = caches
    dgrads, d_z = decoder_backward(dec_cache, d_y, ckpt.decoder)
    egrads, _ = encoder_backward(enc_cache, d_z, ckpt.encoder)
    grads = {f"enc.{k}": v for k, v in egrads.items()}
    grads.update({f"dec.{k}": v for k, v in dgrads.items()})
    return grads


def loss_and_grads(ckpt: Checkpoint, g: Graph, cfg: TrainConfig, target=None, labels=None):
    """Loss on one graph and gradients for every parameter.

    For CUL, ``target`` is the frozen ``X``; when omitted it is computed from
    the current output.  Returns ``(loss, grads, Y, X)``.
    """
    y, _, caches = model_forward(ckpt, g)
    if cfg.mode is Mode.CSL:
        val, d_y = loss_mse(y, labels)
        x = None
    else:
        x = compute_target_x(g, y) if target is None else target
        val, d_y = _unsupervised_loss(g, y, x, cfg.loss, cfg.grad_through_target)
    return val, model_backward(ckpt, caches, d_y), y, x


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    loss_history: list


def _train(cfg: TrainConfig, graphs: Sequence[Graph], labels=None,
           on_epoch: Callable[[int, float], None] | None = None) -> TrainResult:
    if not graphs:
        raise ValueError("need at least one training graph")
    ckpt = Checkpoint.init(cfg.encoder, cfg.seed)
    shuffle_rng = make_rng([cfg.seed, 1])
    params = ckpt.named_params()
    opt = Adam(lr=cfg.lr)
    history = []
    order = np.arange(len(graphs))
    for epoch in range(cfg.epochs):
        if cfg.shuffle:
            order = shuffle_rng.permutation(len(graphs))
        total = 0.0
        for gi in order:
            try:
                val, grads, _, _ = loss_and_grads(ckpt, graphs[gi], cfg,
                                                  labels=None if labels is None else labels[gi])
            except ZeroNormError as exc:
                raise CollapseError(epoch, int(gi), str(exc)) from exc
            total += val
            opt.step(params, grads)
            ckpt.set_params(params)
        history.append(total / len(graphs))
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    ckpt.metadata = {
        "tool_version": __version__,
        "config": cfg.to_dict(),
        "n_train_graphs": len(graphs),
        "final_loss": history[-1],
    }
    return TrainResult(ckpt, history)


def train_cul(cfg: TrainConfig, graphs: Sequence[Graph], on_epoch=None) -> TrainResult:
    """Unsupervised training; each graph is one full-batch Adam step per epoch."""
    if cfg.mode is not Mode.CUL:
        raise ValueError("train_cul needs mode=cul")
    return _train(cfg, graphs, on_epoch=on_epoch)


def train_csl(cfg: TrainConfig, graphs: Sequence[Graph], on_epoch=None) -> TrainResult:
    """Supervised baseline: MSE against unit-norm power-iteration centralities."""
    if cfg.mode is not Mode.CSL:
        raise ValueError("train_csl needs mode=csl")
    labels = [power_iteration_ec(g).values for g in graphs]
    return _train(cfg, graphs, labels=labels, on_epoch=on_epoch)


# --------------------------------------------------------------- inference

@dataclass
class PiecewiseLinear:
    """Continuous piecewise-linear scalar map ``s -> slope[k] * s + intercept[k]``.

    Interval ``k`` is ``[breaks[k], breaks[k+1])``; ``breaks`` starts at ``-inf``
    and ends at ``+inf``.
    """

    breaks: np.ndarray
    slope: np.ndarray
    intercept: np.ndarray

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        k = np.searchsorted(self.breaks, s, side="right") - 1
        return self.slope[k] * s + self.intercept[k]


def _probe_points(lo, hi):
    with np.errstate(invalid="ignore"):
        mid = 0.5 * (lo + hi)
        mid = np.where(np.isneginf(lo) & np.isposinf(hi), 0.0, mid)
        mid = np.where(np.isneginf(lo) & np.isfinite(hi), hi - 1.0 - np.abs(hi), mid)
        return np.where(np.isfinite(lo) & np.isposinf(hi), lo + 1.0 + np.abs(lo), mid)


def compile_scalar_decoder(direction: np.ndarray, dec: DecoderParams) -> PiecewiseLinear:
    """Exact piecewise-linear form of ``s -> decoder(s * direction)``.

    Every LeakyReLU splits the real line at the zeros of its (affine in ``s``)
    pre-activations, so the composition is linear between those roots.
    """
    from .decoder import SLOPE

    breaks = np.array([-np.inf, np.inf])
    a = direction.reshape(1, -1) @ dec.weights["W0"]
    b = dec.weights["b0"].copy()
    last = dec.n_layers - 1
    for i in range(dec.n_layers):
        if i > 0:
            a = a @ dec.weights[f"W{i}"]
            b = b @ dec.weights[f"W{i}"] + dec.weights[f"b{i}"]
        if i == last:
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            roots = -b / a
        lo, hi = breaks[:-1, None], breaks[1:, None]
        ok = np.isfinite(roots) & (roots > lo) & (roots < hi)
        breaks = np.unique(np.concatenate([breaks, roots[ok]]))
        parent = np.searchsorted(lo[:, 0], breaks[:-1], side="right") - 1
        t = _probe_points(breaks[:-1], breaks[1:])[:, None]
        a, b = a[parent], b[parent]
        gate = np.where(a * t + b >= 0, 1.0, SLOPE)
        a, b = a * gate, b * gate
    return PiecewiseLinear(breaks, a[:, 0], b[:, 0])


def orient(y: np.ndarray) -> np.ndarray:
    """Flip ``y`` if its entries sum to a negative number."""
    return -y if y.sum() < 0 else y


def _gcn_scalar_path(ckpt: Checkpoint) -> np.ndarray | None:
    """For a 1-feature GCN the embedding is ``s_i * u`` with ``s = Abar^2 d``; return ``u``."""
    enc = ckpt.encoder
    if enc.kind is not EncoderKind.GCN or enc.in_dim != 1:
        return None
    return (enc.weights["W0"] @ enc.weights["W1"])[0]


def infer_scores(ckpt: Checkpoint, g: Graph, engine: str = "auto"):
    """Score every node with one forward pass; returns ``(Y, seconds)``.

    Both losses are unchanged by ``Y -> -Y``, so a trained model fixes its
    scores only up to sign.  The returned ``Y`` is oriented to have a
    non-negative sum, matching the non-negative centrality vector.

    Timing covers the forward pass only; degrees and the cached propagation
    operators of ``g`` are built beforehand, outside the timed region.

    ``engine="dense"`` runs the layers as written.  ``engine="pwl"`` (GCN only)
    uses that the 1-feature GCN embedding is rank one, ``Z = s u^T`` with
    ``s = Abar (Abar d)``, so ``Y = h(s)`` for a scalar piecewise-linear ``h``
    compiled exactly from the decoder.  ``"auto"`` picks ``"pwl"`` when valid.
    """
    feats = degree_features(g)
    g.gcn_operator  # noqa: B018 - build cached operators outside the timer
    if ckpt.encoder.kind is EncoderKind.SAGE:
        g.mean_operator  # noqa: B018
    elif ckpt.encoder.kind is EncoderKind.GAT:
        g.self_loop_csr  # noqa: B018
    direction = _gcn_scalar_path(ckpt)
    if engine == "auto":
        engine = "pwl" if direction is not None else "dense"
    if engine == "pwl" and direction is None:
        raise ValueError("pwl engine needs a GCN checkpoint with a single input feature")
    if engine not in ("pwl", "dense"):
        raise ValueError(f"unknown engine {engine!r}")

    t0 = time.perf_counter()
    if engine == "pwl":
        h = compile_scalar_decoder(direction, ckpt.decoder)
        op = g.gcn_operator
        y = h(op @ (op @ feats[:, 0]))
    else:
        y = model_forward(ckpt, g, feats)[0]
    y = orient(y)
    elapsed = time.perf_counter() - t0
    return check_finite(y, "scores"), elapsed


def embed(ckpt: Checkpoint, g: Graph) -> np.ndarray:
    """Layer-2 encoder output ``Z`` (``n x 128``)."""
    return encoder_forward(g, degree_features(g), ckpt.encoder)[0]
