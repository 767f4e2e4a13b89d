import numpy as np
import pytest

from ecgnn.graph import Graph, GeneratorSpec, generate
from ecgnn.numerics import finite_diff_check


def sampled_fd_error(f, params: dict, grads: dict, rng, per_param: int = 64, h: float = 1e-5) -> float:
    """Worst finite-difference error over every parameter array.

    Arrays with at most ``per_param`` entries are checked in full; larger ones
    at ``per_param`` random positions.
    """
    worst = 0.0
    for name, p in params.items():
        idx = None if p.size <= per_param else rng.choice(p.size, per_param, replace=False)
        worst = max(worst, finite_diff_check(lambda _: f(), p, grads[name], h=h, indices=idx))
    return worst


def random_graph(n: int, seed: int, p: float = 0.3) -> Graph:
    rng = np.random.default_rng(seed)
    mask = np.triu(rng.random((n, n)) < p, 1)
    return Graph.from_edges(n, np.argwhere(mask))


@pytest.fixture
def six_node_graph():
    # a connected graph with unequal degrees and an odd cycle
    return Graph.from_edges(6, np.array([[0, 1], [1, 2], [2, 0], [2, 3], [3, 4], [4, 5], [1, 4]]))


@pytest.fixture(scope="session")
def small_ba():
    return generate(GeneratorSpec("ba", 10, 2, seed=4))


# acceptance criteria append (number, passed, detail) here; printed after the run
ACCEPTANCE_RESULTS: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
