"""Dense kernels, activations, initialization, Adam, and gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

EPS_GUARD = 1e-12


class ZeroNormError(ArithmeticError):
    """A vector that must be normalized has (near) zero L2 norm."""


class NonFiniteError(FloatingPointError):
    """A NaN or infinity appeared where finite values are required."""


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; equal seeds give equal streams."""
    return np.random.Generator(np.random.PCG64(seed))


def check_finite(x, what: str = "array") -> np.ndarray:
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite values in {what}")
    return x


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch for matmul: {a.shape} x {b.shape}")
    return a @ b


def leaky_relu(x, slope: float) -> np.ndarray:
    if slope < 0:
        raise ValueError("slope must be non-negative")
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, x, slope * x)


def leaky_relu_grad(x, slope: float) -> np.ndarray:
    """Derivative of :func:`leaky_relu`; 1 at exactly zero."""
    x = np.asarray(x)
    return np.where(x >= 0, 1.0, slope).astype(x.dtype if x.dtype.kind == "f" else float)


def l2_normalize(x, eps: float = EPS_GUARD) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    nrm = np.linalg.norm(x)
    if not np.isfinite(nrm):
        raise NonFiniteError("non-finite entries in vector to normalize")
    if nrm <= eps:
        raise ZeroNormError(f"cannot normalize vector with norm {nrm:.3g}")
    return x / nrm


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform on ``[-sqrt(6 / (rows + cols)), +sqrt(6 / (rows + cols))]``."""
    if rows <= 0 or cols <= 0:
        raise ValueError("dimensions must be positive")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, param: np.ndarray, **hyper) -> "AdamState":
        return cls(np.zeros_like(param, dtype=float), np.zeros_like(param, dtype=float), **hyper)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new arrays, inputs untouched."""
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise ValueError(f"shape mismatch: param {param.shape}, grad {grad.shape}, state {state.m.shape}")
    check_finite(grad, "gradient")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * (grad * grad)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new = param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, m=m, v=v, t=t)


@dataclass
class Adam:
    """Adam over a dict of named arrays, updated in place.

    Numerically identical to calling :func:`adam_step` per array.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            check_finite(g, f"gradient of {k}")
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            m = self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            v = self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            params[k] = params[k] - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def finite_diff_check(f: Callable[[np.ndarray], float], params: np.ndarray, analytic_grad: np.ndarray,
                      h: float = 1e-5, indices=None) -> float:
    """Max entrywise relative error between central differences and ``analytic_grad``.

    The error for one entry is ``|g_fd - g_an| / max(1, |g_fd|, |g_an|)``.
    ``params`` is perturbed in place and restored.  ``indices`` optionally
    restricts the check to a subset of flat positions.
    """
    flat = params.reshape(-1)
    if not np.shares_memory(flat, params):
        raise ValueError("params must be a contiguous array")
    an = np.asarray(analytic_grad, dtype=float).reshape(-1)
    if an.shape != flat.shape:
        raise ValueError("analytic gradient shape does not match params")
    idx = range(flat.size) if indices is None else indices
    worst = 0.0
    for i in idx:
        old = flat[i]
        flat[i] = old + h
        fp = f(params)
        flat[i] = old - h
        fm = f(params)
        flat[i] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"objective not finite near entry {i}")
        g_fd = (fp - fm) / (2 * h)
        err = abs(g_fd - an[i]) / max(1.0, abs(g_fd), abs(an[i]))
        worst = max(worst, err)
    return worst
