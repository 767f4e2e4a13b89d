"""Ranking accuracy, the Mann-Whitney U test, and evaluation reports."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .eigen import power_iteration_ec
from .graph import Graph

DEFAULT_TOP = (5, 10, 15, 20)


def rank_nodes(scores) -> np.ndarray:
    """Node ids by descending score; ties go to the smaller id."""
    s = np.asarray(scores, dtype=float)
    if np.isnan(s).any():
        raise ValueError("scores contain NaN")
    return np.argsort(-s, kind="stable")


def top_count(n_nodes: int, n_pct: float) -> int:
    return math.ceil(n_nodes * n_pct / 100)


def top_n_percent(predicted, truth, n_pct: float) -> float:
    """Overlap of the predicted and true top ``ceil(|V| * N / 100)`` sets, as a fraction."""
    predicted = np.asarray(predicted, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if predicted.shape != truth.shape:
        raise ValueError(f"length mismatch: {predicted.shape} vs {truth.shape}")
    if not 0 < n_pct <= 100:
        raise ValueError("n_pct must lie in (0, 100]")
    m = top_count(len(truth), n_pct)
    hit = np.intersect1d(rank_nodes(predicted)[:m], rank_nodes(truth)[:m], assume_unique=True)
    return len(hit) / m


# ------------------------------------------------------------ Mann-Whitney

@dataclass(frozen=True)
class MannWhitneyResult:
    """``u`` is ``n1*n2 + n1(n1+1)/2 - R1`` = #(a < b) + #(a == b)/2.

    ``p_value`` is one-sided for the alternative "``a`` tends to exceed ``b``",
    i.e. the probability of a ``u`` this small or smaller under the null.
    """

    u: float
    p_value: float
    method: str
    degenerate: bool = False


def midranks(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="stable")
    sv = v[order]
    ranks = np.empty(len(v))
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_lower_tail(ranks, n1: int, r1: float) -> float:
    """P(rank sum of a random n1-subset >= r1) by counting subsets (dynamic programming)."""
    doubled = [int(round(2 * r)) for r in ranks]
    target = int(round(2 * r1))
    # ways[k] maps doubled rank-sum -> number of k-subsets
    ways = [dict() for _ in range(n1 + 1)]
    ways[0][0] = 1
    for r in doubled:
        for k in range(min(n1, len(doubled)) - 1, -1, -1):
            for s, c in ways[k].items():
                ways[k + 1][s + r] = ways[k + 1].get(s + r, 0) + c
    total = math.comb(len(doubled), n1)
    hits = sum(c for s, c in ways[n1].items() if s >= target)
    return hits / total


def mann_whitney_u(sample_a, sample_b, exact_below: int = 8) -> MannWhitneyResult:
    """Rank-sum test with midranks for ties.

    Uses exact enumeration of the permutation distribution when either sample
    is smaller than ``exact_below``; otherwise the normal approximation with
    tie correction and continuity correction.
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    ranks = midranks(pooled)
    r1 = ranks[:n1].sum()
    u = n1 * n2 + n1 * (n1 + 1) / 2 - r1
    if np.all(pooled == pooled[0]):
        return MannWhitneyResult(u, 0.5, "degenerate", degenerate=True)
    if min(n1, n2) < exact_below:
        # small u <=> large r1
        return MannWhitneyResult(u, _exact_lower_tail(ranks, n1, r1), "exact")
    n = n1 + n2
    _, counts = np.unique(pooled, return_counts=True)
    tie = float(np.sum(counts ** 3 - counts))
    sigma = math.sqrt(n1 * n2 / 12.0 * ((n + 1) - tie / (n * (n - 1))))
    z = (u - n1 * n2 / 2.0 + 0.5) / sigma
    return MannWhitneyResult(u, float(ndtr(z)), "normal")


# ------------------------------------------------------------- evaluation

@dataclass
class EvalReport:
    graph_id: str
    n_nodes: int
    accuracies: dict
    inference_seconds: float | None = None
    baseline_seconds: float | None = None
    methods: dict = field(default_factory=dict)
    restrict_lcc: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["accuracies"] = {str(k): v for k, v in self.accuracies.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["accuracies"] = {_num(k): v for k, v in d["accuracies"].items()}
        return cls(**d)


def _num(k):
    f = float(k)
    return int(f) if f.is_integer() else f


def save_reports(reports: Sequence[EvalReport], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2)
        fh.write("\n")


def load_reports(path) -> list[EvalReport]:
    with open(path, encoding="utf-8") as fh:
        return [EvalReport.from_dict(d) for d in json.load(fh)]


def evaluate(ckpt, graphs: Sequence[Graph], n_list=DEFAULT_TOP, graph_ids=None, oracle_self_test: bool = False,
             timed: bool = True, restrict_lcc: bool = False, engine: str = "auto") -> list[EvalReport]:
    """Top-N% accuracy of ``ckpt`` against power-iteration truth for each graph.

    ``oracle_self_test`` scores the truth against itself (all accuracies 1),
    which exercises the report path without a model.  With ``timed=False``
    the wall-clock fields are left empty so reports are reproducible.
    """
    from .training import infer_scores
    import time

    reports = []
    for i, g in enumerate(graphs):
        gid = graph_ids[i] if graph_ids is not None else str(i)
        t0 = time.perf_counter()
        truth = power_iteration_ec(g).values
        t_base = time.perf_counter() - t0
        if oracle_self_test:
            pred, t_inf = truth, None
            methods = {"predicted": "power-iteration", "truth": "power-iteration"}
        else:
            pred, t_inf = infer_scores(ckpt, g, engine=engine)
            methods = {"predicted": f"{ckpt.metadata.get('config', {}).get('mode', 'model')}/{ckpt.encoder.kind.value}",
                       "truth": "power-iteration"}
        acc = {n: top_n_percent(pred, truth, n) for n in n_list}
        reports.append(EvalReport(gid, g.n, acc, t_inf if timed else None, t_base if timed else None,
                                  methods, restrict_lcc))
    return reports


def format_table(reports: Sequence[EvalReport], scale: float = 100.0) -> str:
    """Aligned text table of mean +- std per top-N column, grouped by graph size."""
    if not reports:
        return ""
    cols = list(reports[0].accuracies)
    groups: dict = {}
    for r in reports:
        groups.setdefault(r.n_nodes, []).append(r)
    header = ["|V|", "graphs"] + [f"Top-{c}%" for c in cols] + ["model s", "iterative s"]
    rows = []
    for n in sorted(groups):
        rs = groups[n]
        row = [str(n), str(len(rs))]
        for c in cols:
            v = np.array([r.accuracies[c] for r in rs]) * scale
            row.append(f"{v.mean():.1f}±{v.std():.1f}")
        for attr in ("inference_seconds", "baseline_seconds"):
            t = [getattr(r, attr) for r in rs if getattr(r, attr) is not None]
            row.append(f"{np.mean(t):.4f}±{np.std(t):.4f}" if t else "-")
        rows.append(row)
    widths = [max(len(x) for x in col) for col in zip(header, *rows)]
    fmt = lambda r: "  ".join(x.rjust(w) for x, w in zip(r, widths))  # noqa: E731
    return "\n".join([fmt(header), "  ".join("-" * w for w in widths)] + [fmt(r) for r in rows])
