"""Undirected simple graphs in CSR form: loading, generation and products.

A :class:`Graph` stores every undirected edge twice (once per direction), with
column indices sorted inside each row.  All arrays are read-only so a graph
can be shared freely between threads and training runs.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

__all__ = [
    "Graph",
    "GraphFormatError",
    "GeneratorKind",
    "GeneratorSpec",
    "InvalidSpecError",
    "load_edge_list",
    "write_edge_list",
    "generate",
    "spmv",
    "complete_graph",
    "cycle_graph",
    "path_graph",
    "star_graph",
]


class GraphFormatError(ValueError):
    """Raised when an edge-list file cannot be parsed or yields no edges."""


class InvalidSpecError(ValueError):
    """Raised for generator parameters outside their valid range."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph.

    Attributes:
        n: number of nodes.
        row_offsets: ``int64`` array of length ``n + 1``.
        col_indices: ``int64`` array of length ``2 |E|``; strictly increasing
            within each row.
        degrees: ``int64`` array of length ``n``.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    degrees: np.ndarray

    def __post_init__(self):
        for name in ("row_offsets", "col_indices", "degrees"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name), dtype=np.int64)))
        if self.row_offsets.shape != (self.n + 1,) or self.degrees.shape != (self.n,):
            raise ValueError("CSR arrays do not match node count")
        if self.row_offsets[-1] != len(self.col_indices):
            raise ValueError("row_offsets[-1] must equal len(col_indices)")

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        """Build a graph on ``n`` nodes from an iterable or ``(E, 2)`` array of pairs.

        Self-loops and duplicates are dropped and every edge is symmetrized.
        """
        e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        e = e.reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError("edge endpoint out of range")
        e = e[e[:, 0] != e[:, 1]]
        both = np.concatenate([e, e[:, ::-1]])
        keys = np.unique(both[:, 0] * n + both[:, 1])
        rows, cols = np.divmod(keys, n)
        degrees = np.bincount(rows, minlength=n)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(degrees, out=offsets[1:])
        return cls(n, offsets, cols, degrees)

    @property
    def num_edges(self) -> int:
        return len(self.col_indices) // 2

    def neighbors(self, v: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[v]:self.row_offsets[v + 1]]

    def edges(self) -> np.ndarray:
        """Each undirected edge once as ``(u, v)`` with ``u < v``, sorted."""
        keep = self.row_index < self.col_indices
        return np.stack([self.row_index[keep], self.col_indices[keep]], axis=1)

    @cached_property
    def row_index(self) -> np.ndarray:
        """Source row of each CSR entry (COO row array)."""
        return _readonly(np.repeat(np.arange(self.n, dtype=np.int64), self.degrees))

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Adjacency as a float64 ``scipy.sparse`` CSR matrix (shared, do not mutate)."""
        data = np.ones(len(self.col_indices))
        return sp.csr_matrix((data, self.col_indices, self.row_offsets), shape=(self.n, self.n))

    @cached_property
    def gcn_operator(self) -> sp.csr_matrix:
        """Symmetrically normalized ``D^-1/2 (A + I) D^-1/2`` with ``D = deg + 1``."""
        inv_sqrt = 1.0 / np.sqrt(self.degrees + 1.0)
        a_hat = self.adjacency + sp.identity(self.n, format="csr")
        return sp.csr_matrix(sp.diags(inv_sqrt) @ a_hat @ sp.diags(inv_sqrt))

    @cached_property
    def mean_operator(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """Row-normalized adjacency ``D^-1 A`` and its transpose (isolated rows are zero)."""
        inv = np.zeros(self.n)
        np.divide(1.0, self.degrees, out=inv, where=self.degrees > 0)
        m = sp.csr_matrix(sp.diags(inv) @ self.adjacency)
        return m, sp.csr_matrix(m.T)

    @cached_property
    def self_loop_csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(offsets, rows, cols)`` of ``N(i) + {i}``, columns sorted per row."""
        loops = np.arange(self.n, dtype=np.int64)
        rows = np.concatenate([self.row_index, loops])
        cols = np.concatenate([self.col_indices, loops])
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        offsets = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(self.degrees + 1, out=offsets[1:])
        return _readonly(offsets), _readonly(rows), _readonly(cols)

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        a[self.row_index, self.col_indices] = 1.0
        return a

    def is_symmetric(self) -> bool:
        """True when transposing the CSR structure reproduces it exactly."""
        t = Graph.from_edges(self.n, np.stack([self.col_indices, self.row_index], axis=1))
        return (np.array_equal(t.row_offsets, self.row_offsets)
                and np.array_equal(t.col_indices, self.col_indices))

    def check(self) -> None:
        """Validate the structural invariants; raises ``ValueError`` on failure."""
        if not np.array_equal(np.diff(self.row_offsets), self.degrees):
            raise ValueError("degrees disagree with row_offsets")
        if np.any(self.col_indices == self.row_index):
            raise ValueError("self-loop present")
        same_row = self.row_index[1:] == self.row_index[:-1]
        if np.any(np.diff(self.col_indices)[same_row] <= 0):
            raise ValueError("column indices not strictly increasing within a row")
        if not self.is_symmetric():
            raise ValueError("adjacency is not symmetric")

    def permute(self, perm) -> "Graph":
        """Relabel node ``v`` as ``perm[v]``."""
        perm = np.asarray(perm, dtype=np.int64)
        return Graph.from_edges(self.n, perm[self.edges()])

    def largest_component(self) -> tuple["Graph", np.ndarray]:
        """Largest connected component, re-compacted; also returns kept node ids."""
        _, labels = connected_components(self.adjacency, directed=False)
        sizes = np.bincount(labels)
        keep = np.flatnonzero(labels == np.argmax(sizes))
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        e = self.edges()
        e = e[remap[e[:, 0]] >= 0]
        return Graph.from_edges(len(keep), remap[e]), keep

    def is_connected(self) -> bool:
        return connected_components(self.adjacency, directed=False)[0] == 1

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n == other.n and np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices))

    __hash__ = None

    def __repr__(self):
        return f"Graph(n={self.n}, edges={self.num_edges})"


def spmv(g: Graph, y, mode: str = "sequential") -> np.ndarray:
    """Neighbor sum ``out[i] = sum(y[j] for j in N(i))``, i.e. ``A @ y``.

    ``mode="sequential"`` accumulates each row in ascending neighbor order and
    is bitwise reproducible.  ``mode="fast"`` delegates to the scipy CSR kernel.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[0] != g.n:
        raise ValueError(f"vector length {y.shape[0]} != node count {g.n}")
    if mode == "sequential":
        if y.ndim == 1:
            return np.bincount(g.row_index, weights=y[g.col_indices], minlength=g.n)
        return np.stack([spmv(g, y[:, c]) for c in range(y.shape[1])], axis=1)
    if mode == "fast":
        return g.adjacency @ y
    raise ValueError(f"unknown spmv mode {mode!r}")


# ---------------------------------------------------------------- file I/O

def load_edge_list(path, restrict_lcc: bool = False) -> Graph:
    """Read a whitespace-separated edge list.

    Lines starting with ``#`` or ``%`` and blank lines are skipped.  Node ids
    are compacted to ``0..n-1`` by ascending original id after self-loops are
    removed, so a node that only appears in a self-loop is dropped.
    """
    us, vs = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s[0] in "#%":
                continue
            parts = s.split()
            if len(parts) != 2:
                raise GraphFormatError(f"{path}, line {lineno}: expected two node ids, got {len(parts)} fields")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"{path}, line {lineno}: node ids must be integers: {s!r}") from None
            if u < 0 or v < 0:
                raise GraphFormatError(f"{path}, line {lineno}: negative node id")
            if u != v:
                us.append(u)
                vs.append(v)
    if not us:
        raise GraphFormatError(f"{path}: no edges (after dropping self-loops)")
    ids, inv = np.unique(np.array(us + vs, dtype=np.int64), return_inverse=True)
    e = inv.reshape(2, -1).T
    g = Graph.from_edges(len(ids), e)
    if restrict_lcc:
        g, _ = g.largest_component()
    return g


def write_edge_list(g: Graph, path, header: Iterable[str] = ()) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for h in header:
            fh.write(f"# {h}\n")
        for u, v in g.edges():
            fh.write(f"{u} {v}\n")


# -------------------------------------------------------------- generators

class GeneratorKind(str, enum.Enum):
    SCALE_FREE = "sf"
    BARABASI_ALBERT = "ba"
    POWERLAW_CLUSTER = "pl"


@dataclass(frozen=True)
class GeneratorSpec:
    kind: GeneratorKind
    n: int
    m: int = 4
    p: float = 0.0
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", GeneratorKind(self.kind))
        except ValueError:
            raise InvalidSpecError(f"unknown generator kind {self.kind!r}") from None
        if self.m < 1:
            raise InvalidSpecError(f"m must be >= 1, got {self.m}")
        if self.n <= self.m:
            raise InvalidSpecError(f"need n > m, got n={self.n}, m={self.m}")
        if not 0.0 <= self.p <= 1.0:
            raise InvalidSpecError(f"p must lie in [0, 1], got {self.p}")
        if self.kind is GeneratorKind.SCALE_FREE and self.n < 3:
            raise InvalidSpecError("scale-free generator needs n >= 3")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpecError("seed must be a 64-bit unsigned integer")


def generate(spec: GeneratorSpec) -> Graph:
    """Generate a synthetic graph; a pure function of ``spec``."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if spec.kind is GeneratorKind.BARABASI_ALBERT:
        edges = _preferential_attachment(spec.n, spec.m, 0.0, rng)
    elif spec.kind is GeneratorKind.POWERLAW_CLUSTER:
        edges = _preferential_attachment(spec.n, spec.m, spec.p, rng)
    else:
        edges = _directed_scale_free(spec.n, rng)
    return Graph.from_edges(spec.n, edges)


def _preferential_attachment(n: int, m: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Barabasi-Albert growth with optional Holme-Kim triangle closing.

    Nodes ``0..m-1`` start isolated and node ``m`` links to all of them.  Every
    later node picks ``m`` distinct targets: the first by degree-proportional
    sampling; each further one closes a triangle through the last sampled
    target with probability ``p`` (when such a neighbor exists), otherwise it
    is sampled by degree again.  With ``p == 0`` no extra random numbers are
    drawn, so the result equals the plain BA graph for the same stream.
    """
    n_edges = (n - m) * m
    edges = np.empty((n_edges, 2), dtype=np.int64)
    repeated = np.empty(2 * n_edges, dtype=np.int64)
    size = 0
    adj = [[] for _ in range(n)] if p > 0 else None
    k = 0
    for source in range(m, n):
        if source == m:
            targets = list(range(m))
        else:
            targets = []
            last_pa = -1
            while len(targets) < m:
                if p > 0 and last_pa >= 0 and rng.random() < p:
                    cands = sorted(set(adj[last_pa]).difference(targets))
                    if cands:
                        targets.append(cands[int(rng.integers(len(cands)))])
                        continue
                t = int(repeated[rng.integers(size)])
                if t not in targets:
                    targets.append(t)
                    last_pa = t
        for t in targets:
            edges[k] = (source, t)
            k += 1
            if adj is not None:
                adj[t].append(source)
                adj[source].append(t)
        repeated[size:size + m] = targets
        repeated[size + m:size + 2 * m] = source
        size += 2 * m
    return edges


def _directed_scale_free(n: int, rng: np.random.Generator, alpha: float = 0.41, beta: float = 0.54,
                         delta_in: float = 0.2, delta_out: float = 0.0) -> np.ndarray:
    """Directed preferential-attachment multigraph grown from a 3-cycle.

    Per step: with probability ``alpha`` a new node points to an existing node
    chosen by in-degree + ``delta_in``; with ``beta`` an edge is added between
    existing nodes (source by out-degree + ``delta_out``, target by in-degree +
    ``delta_in``); otherwise an existing node points to a new node.  Returned
    arcs may contain loops and repeats; :meth:`Graph.from_edges` simplifies them.
    """
    cap = 3 + 4 * n
    src = np.empty(cap, dtype=np.int64)
    dst = np.empty(cap, dtype=np.int64)
    src[:3] = (0, 1, 2)
    dst[:3] = (1, 2, 0)
    n_arcs, n_nodes = 3, 3

    def pick(ends, delta):
        # weight(v) = deg(v) + delta, sampled as a mixture of "uniform arc endpoint"
        # and "uniform node"
        if delta > 0 and rng.random() * (n_arcs + delta * n_nodes) >= n_arcs:
            return int(rng.integers(n_nodes))
        return int(ends[rng.integers(n_arcs)])

    while n_nodes < n:
        if n_arcs == cap:
            src = np.resize(src, 2 * cap)
            dst = np.resize(dst, 2 * cap)
            cap *= 2
        r = rng.random()
        if r < alpha:
            v = n_nodes
            w = pick(dst, delta_in)
            n_nodes += 1
        elif r < alpha + beta:
            v = pick(src, delta_out)
            w = pick(dst, delta_in)
        else:
            v = pick(src, delta_out)
            w = n_nodes
            n_nodes += 1
        src[n_arcs] = v
        dst[n_arcs] = w
        n_arcs += 1
    return np.stack([src[:n_arcs], dst[:n_arcs]], axis=1)


# ----------------------------------------------------------- small fixtures

def complete_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def cycle_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def star_graph(leaves: int) -> Graph:
    """Center node 0 joined to leaves ``1..leaves``."""
    return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def graph_digest(g: Graph) -> str:
    import hashlib
    h = hashlib.sha256()
    h.update(np.int64(g.n).tobytes())
    h.update(g.row_offsets.tobytes())
    h.update(g.col_indices.tobytes())
    return h.hexdigest()


def iter_edge_files(paths) -> list[str]:
    """Expand directories into their sorted ``*.edges`` / ``*.txt`` files."""
    out = []
    for p in paths:
        p = os.fspath(p)
        if os.path.isdir(p):
            out.extend(sorted(os.path.join(p, f) for f in os.listdir(p)
                              if f.endswith((".edges", ".txt", ".el"))))
        else:
            out.append(p)
    return out
