import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from chebgraph.graph import Graph, build_knn_graph, random_graph

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def corpus_graph(seed: int) -> Graph:
    """Seeded member of the test corpus: k-NN or Erdos-Renyi, 4..64 vertices."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 65))
    if seed % 2 == 0:
        k = int(rng.integers(1, min(8, n - 1) + 1))
        pts = rng.standard_normal((n, int(rng.integers(1, 4))))
        return build_knn_graph(pts, k)
    max_edges = n * (n - 1) // 2
    m = int(rng.integers(n - 1, min(max_edges, 4 * n) + 1))
    return random_graph(n, m, seed)


def dense_adjacency(g: Graph) -> np.ndarray:
    """Adjacency rebuilt entry by entry from the CSR arrays, without scipy."""
    A = np.zeros((g.n, g.n))
    for i in range(g.n):
        for p in range(g.row_offsets[i], g.row_offsets[i + 1]):
            A[i, g.col_indices[p]] = g.weights[p]
    return A


@pytest.fixture
def triangle():
    return Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def p2():
    return Graph.from_edges(2, [(0, 1)])


def mnist_dir():
    for d in (os.environ.get("MNIST_DIR"), "/root/data/mnist"):
        if d and os.path.isdir(d):
            return d
    return None


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[num])
