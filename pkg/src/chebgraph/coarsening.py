"""Greedy normalized-cut matching and multilevel coarsening.

Each pass visits the vertices in a seeded random order and pairs every
unmarked vertex with the unmarked neighbour maximizing
``W_ij (1/d_i + 1/d_j)``.  Pairs collapse into one coarse vertex; the coarse
edge weight between two clusters is the sum of the fine weights crossing
between them.  Weight inside a cluster is dropped, so coarse graphs carry no
self-loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import Graph, degree_vector


@dataclass
class Matching:
    pairs: list[tuple[int, int]] = field(default_factory=list)
    singletons: list[int] = field(default_factory=list)

    def validate(self, g: Graph):
        seen = np.zeros(g.n, dtype=np.int64)
        for i, j in self.pairs:
            seen[i] += 1
            seen[j] += 1
        for i in self.singletons:
            seen[i] += 1
        if np.any(seen != 1):
            raise ValueError("matching is not an exact cover of the vertices")
        a = g.csr
        for i, j in self.pairs:
            if a[i, j] == 0:
                raise ValueError(f"pair ({i}, {j}) is not an edge")


@dataclass(frozen=True, eq=False)
class CoarseLevel:
    graph: Graph
    parent: np.ndarray


@dataclass(frozen=True, eq=False)
class CoarseningHierarchy:
    """Graphs from finest (index 0) to coarsest, with parent maps in between.

    ``parents[l]`` maps each vertex of ``graphs[l]`` to its coarse vertex in
    ``graphs[l + 1]``.
    """

    graphs: list[Graph]
    parents: list[np.ndarray]
    seed: int | None = None

    @property
    def num_levels(self) -> int:
        return len(self.graphs)

    @property
    def sizes(self) -> list[int]:
        return [g.n for g in self.graphs]

    def singleton_counts(self) -> list[int]:
        """Coarse vertices with a single child, per coarsening step."""
        out = []
        for parent, coarse in zip(self.parents, self.graphs[1:]):
            out.append(int(np.sum(np.bincount(parent, minlength=coarse.n) == 1)))
        return out


def graclus_match(g: Graph, seed: int | np.random.Generator = 0, order=None) -> Matching:
    """Greedy normalized-cut matching of one level.

    Vertices are visited in a permutation drawn from ``seed`` unless an
    explicit ``order`` is given.  Degrees are those of ``g`` at the start of
    the pass.  Score ties go to the lowest neighbour index; vertices without
    an unmarked neighbour become singletons.
    """
    if order is None:
        order = np.random.default_rng(seed).permutation(g.n)
    else:
        order = np.asarray(order, dtype=np.int64)
        if order.shape != (g.n,) or not np.array_equal(np.sort(order), np.arange(g.n)):
            raise ValueError("order must be a permutation of the vertices")
    d = degree_vector(g)
    inv_d = np.zeros(g.n)
    inv_d[d > 0] = 1.0 / d[d > 0]
    marked = np.zeros(g.n, dtype=bool)
    offsets, cols, w = g.row_offsets, g.col_indices, g.weights
    m = Matching()
    for i in order:
        if marked[i]:
            continue
        marked[i] = True
        lo, hi = offsets[i], offsets[i + 1]
        nbrs = cols[lo:hi]
        free = ~marked[nbrs]
        if not free.any():
            m.singletons.append(int(i))
            continue
        nbrs = nbrs[free]
        score = w[lo:hi][free] * (inv_d[i] + inv_d[nbrs])
        # neighbours are stored in ascending order, so argmax picks the lowest tie
        j = int(nbrs[np.argmax(score)])
        marked[j] = True
        m.pairs.append((int(min(i, j)), int(max(i, j))))
    return m


def coarsen_once(g: Graph, m: Matching) -> CoarseLevel:
    """Collapse matched pairs; coarse vertices are numbered by their smallest child."""
    m.validate(g)
    rep = np.arange(g.n)
    for i, j in m.pairs:
        rep[j] = i
    reps = np.unique(rep)
    parent = np.searchsorted(reps, rep)
    n_coarse = reps.size
    i, j, w = g.edges()
    a, b = parent[i], parent[j]
    cross = a != b
    a, b, w = np.minimum(a, b)[cross], np.maximum(a, b)[cross], w[cross]
    # aggregate one triangle, then mirror it, so the result is exactly symmetric
    upper = sp.coo_matrix((w, (a, b)), shape=(n_coarse, n_coarse)).tocsr()
    upper.sum_duplicates()
    return CoarseLevel(Graph.from_scipy(upper + upper.T), parent)


def coarsen_hierarchy(g: Graph, num_levels: int, seed: int = 0) -> CoarseningHierarchy:
    """Apply ``num_levels`` matching/collapse passes, one generator for all levels."""
    if num_levels < 0:
        raise ValueError("num_levels must be nonnegative")
    if g.n == 0:
        raise ValueError("cannot coarsen an empty graph")
    rng = np.random.default_rng(seed)
    graphs, parents = [g], []
    for _ in range(num_levels):
        level = coarsen_once(graphs[-1], graclus_match(graphs[-1], rng))
        graphs.append(level.graph)
        parents.append(level.parent)
    return CoarseningHierarchy(graphs, parents, seed)


def hierarchy_from_matchings(g: Graph, matchings: list[Matching]) -> CoarseningHierarchy:
    """Hierarchy from explicitly given matchings, one per level."""
    graphs, parents = [g], []
    for m in matchings:
        level = coarsen_once(graphs[-1], m)
        graphs.append(level.graph)
        parents.append(level.parent)
    return CoarseningHierarchy(graphs, parents, None)


def intra_cluster_weight(g: Graph, parent: np.ndarray) -> float:
    """Total weight of fine edges whose endpoints share a coarse vertex."""
    i, j, w = g.edges()
    return float(w[parent[i] == parent[j]].sum())
