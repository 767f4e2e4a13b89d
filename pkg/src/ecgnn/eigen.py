"""Reference eigenvector centrality: power iteration and a dense oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, spmv
from .numerics import EPS_GUARD, ZeroNormError

DENSE_LIMIT = 512


@dataclass(frozen=True)
class ECScores:
    """Non-negative, unit L2-norm centrality vector.

    ``oscillation_averaged`` marks runs where iterates alternated between two
    vectors (bipartite graphs, where ``-lambda_1`` is also an eigenvalue) and
    the answer is the normalized mean of the last two iterates.
    """

    values: np.ndarray
    iterations_used: int
    converged: bool
    eigenvalue: float
    oscillation_averaged: bool = False


def _orient(x: np.ndarray) -> np.ndarray:
    # Perron vector is sign-definite; pick the non-negative representative
    if x.sum() < 0:
        x = -x
    return np.where(np.abs(x) < 1e-13, 0.0, x)


def _finish(g: Graph, x: np.ndarray, it: int, converged: bool, averaged: bool, mode: str) -> ECScores:
    x = _orient(x)
    x = x / np.linalg.norm(x)
    lam = float(np.linalg.norm(spmv(g, x, mode)))
    return ECScores(x, it, converged, lam, averaged)


def power_iteration_ec(g: Graph, max_iter: int = 1000, tol: float = 1e-6, mode: str = "sequential") -> ECScores:
    """Eigenvector centrality by repeated ``r <- A r / ||A r||``.

    Starts from the uniform vector and stops once ``sum(|r_new - r|) < n * tol``
    (the networkx convention).  If instead ``r_new`` matches the iterate two
    steps back to that tolerance, the sequence is a period-2 oscillation and
    the normalized average of the last two iterates is returned.
    """
    if g.n == 0:
        raise ValueError("empty graph")
    if max_iter < 1 or tol <= 0:
        raise ValueError("need max_iter >= 1 and tol > 0")
    thresh = g.n * tol
    r = np.full(g.n, 1.0 / g.n)
    prev = None
    for it in range(1, max_iter + 1):
        ar = spmv(g, r, mode)
        nrm = np.linalg.norm(ar)
        if nrm <= EPS_GUARD:
            raise ZeroNormError("A r vanished; graph has no edges")
        new = ar / nrm
        if np.abs(new - r).sum() < thresh:
            return _finish(g, new, it, True, False, mode)
        if prev is not None and np.abs(new - prev).sum() < thresh:
            return _finish(g, new + r, it, True, True, mode)
        prev, r = r, new
    return _finish(g, r, max_iter, False, False, mode)


def dense_eigen_oracle(g: Graph, max_n: int = DENSE_LIMIT) -> ECScores:
    """Dominant eigenpair from a full symmetric eigendecomposition (LAPACK).

    Independent of :func:`power_iteration_ec`; used as a test oracle only.
    """
    if g.n > max_n:
        raise ValueError(f"dense oracle refused: n={g.n} > {max_n}")
    if g.num_edges == 0:
        raise ZeroNormError("graph has no edges")
    a = g.to_dense()
    w, v = np.linalg.eigh(a)
    x = _orient(v[:, -1])
    x = x / np.linalg.norm(x)
    return ECScores(x, 0, True, float(w[-1]))
