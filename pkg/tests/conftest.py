import io

import numpy as np
import pytest

from netadjust.graph import Graph, from_edges, load_edge_list, watts_strogatz


@pytest.fixture
def path3() -> Graph:
    """Path graph 0 - 1 - 2."""
    return load_edge_list(io.StringIO("0 1\n1 2\n"))


@pytest.fixture
def triangle() -> Graph:
    return load_edge_list(io.StringIO("0 1\n1 2\n0 2\n"))


@pytest.fixture
def star5() -> Graph:
    """Center 0 with leaves 1..4."""
    return load_edge_list(io.StringIO("0 1\n0 2\n0 3\n0 4\n"))


@pytest.fixture
def small_world() -> Graph:
    return watts_strogatz(200, 6, 0.1, seed=11)


@pytest.fixture
def empty4() -> Graph:
    """Four isolated nodes (intercept-only designs)."""
    return Graph(4, np.zeros(5, dtype=np.int64), np.empty(0, dtype=np.int64))


def random_graph(n: int, p: float, seed: int) -> Graph:
    """Erdos-Renyi helper for property tests."""
    rng = np.random.default_rng(seed)
    mask = np.triu(rng.random((n, n)) < p, k=1)
    edges = np.argwhere(mask)
    if len(edges) == 0:
        return Graph(n, np.zeros(n + 1, dtype=np.int64), np.empty(0, dtype=np.int64))
    return from_edges(edges.astype(np.int64), n)


def dense_adjacency(g: Graph) -> np.ndarray:
    a = np.zeros((g.n, g.n))
    for i in range(g.n):
        a[i, g.neighbors(i)] = 1.0
    return a
