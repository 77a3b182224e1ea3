import numpy as np
import pytest
from hypothesis import given, strategies as st

from chebgraph.chebyshev import apply_filter_bank
from chebgraph.coarsening import CoarseningHierarchy, Matching, coarsen_hierarchy, hierarchy_from_matchings
from chebgraph.graph import Graph, random_graph, scaled_laplacian
from chebgraph.pooling import (build_tree_index, max_pool_1d, max_pool_backward,
                               pad_and_permute_signal, permute_padded_graph, unpermute_signal)
from conftest import corpus_graph, dense_adjacency


def worked_hierarchy():
    """Path on 8 vertices coarsened to 5 then 3 vertices.

    Level 0 pairs (0,1), (2,3), (5,6) and leaves 4, 7 alone; level 1 pairs
    (1,2), (3,4) and leaves 0 alone.
    """
    g = Graph.from_edges(8, [(i, i + 1) for i in range(7)])
    return hierarchy_from_matchings(g, [Matching([(0, 1), (2, 3), (5, 6)], [4, 7]),
                                        Matching([(1, 2), (3, 4)], [0])])


def test_worked_example_sizes_and_fakes():
    h = worked_hierarchy()
    assert h.sizes == [8, 5, 3]
    idx = build_tree_index(h)
    assert idx.level_sizes == [3, 6, 12]
    assert idx.fake_counts() == [4, 1, 0]
    np.testing.assert_array_equal(np.flatnonzero(idx.fake_mask(0)), [2, 3, 7, 11])
    np.testing.assert_array_equal(np.flatnonzero(idx.fake_mask(1)), [1])


def test_worked_example_pooling():
    idx = build_tree_index(worked_hierarchy())
    x = np.array([3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.0, 6.0])  # nonnegative, as after a ReLU
    xp = pad_and_permute_signal(x[None, :, None], idx)[0, :, 0]
    assert np.all(xp[[2, 3, 7, 11]] == 0)
    z, _ = max_pool_1d(xp[None, :, None], 4)
    np.testing.assert_array_equal(z[0, :, 0], [max(xp[0], xp[1]), max(xp[4], xp[5], xp[6]),
                                               max(xp[8], xp[9], xp[10])])
    # the coarse vertices pool over their true descendants: {0,1}, {2,3,4}, {5,6,7}
    np.testing.assert_array_equal(z[0, :, 0], [3.0, 5.0, 9.0])


def test_perfect_hierarchy_has_no_fakes():
    g = Graph.from_edges(8, [(i, i + 1) for i in range(7)])
    h = hierarchy_from_matchings(g, [Matching([(0, 1), (2, 3), (4, 5), (6, 7)], []),
                                     Matching([(0, 1), (2, 3)], [])])
    idx = build_tree_index(h)
    assert idx.level_sizes == [2, 4, 8]
    assert idx.fake_counts() == [0, 0, 0]
    x = np.random.default_rng(0).standard_normal((2, 8))
    np.testing.assert_array_equal(pad_and_permute_signal(x, idx), x)


def test_single_vertex_gets_fake_child():
    g = Graph.from_edges(1, np.empty((0, 2), int))
    idx = build_tree_index(coarsen_hierarchy(g, 1, 0))
    assert idx.level_sizes == [1, 2]
    assert idx.fake_counts() == [1, 0]


def test_inconsistent_parents_rejected():
    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    coarse = Graph.from_edges(1, np.empty((0, 2), int))
    with pytest.raises(ValueError):
        build_tree_index(CoarseningHierarchy([g, coarse], [np.array([0, 0, 0])]))
    with pytest.raises(ValueError):
        build_tree_index(CoarseningHierarchy([g, coarse], [np.array([0, 1, 0])]))


def descendants(h, level, v):
    """Level-0 vertices under vertex ``v`` of ``level``, by walking parent maps."""
    members = {v}
    for l in range(level - 1, -1, -1):
        members = {u for u in range(h.sizes[l]) if h.parents[l][u] in members}
    return members


@given(st.integers(0, 10_000), st.integers(0, 50), st.integers(1, 3))
def test_tree_index_invariants_and_pooling_consistency(gseed, seed, levels):
    g = corpus_graph(gseed)
    h = coarsen_hierarchy(g, levels, seed)
    idx = build_tree_index(h)
    for l in range(levels):
        assert idx.size(l) == 2 * idx.size(l + 1)
    for l in range(levels + 1):
        assert np.array_equal(np.sort(idx.perm[l]), np.arange(idx.size(l)))
        assert (~idx.fake_mask(l)).sum() == h.sizes[l]
    # child rule: real vertex at level l+1 position k has its real children at 2k, 2k+1
    for l in range(levels):
        for k, v in enumerate(idx.perm[l + 1]):
            kids = idx.perm[l][[2 * k, 2 * k + 1]]
            real = kids[kids < h.sizes[l]]
            if v < h.sizes[l + 1]:
                assert set(real) == set(np.flatnonzero(h.parents[l] == v))
            else:
                assert real.size == 0
    rng = np.random.default_rng(seed)
    x = rng.random((2, g.n, 1))
    z, _ = max_pool_1d(pad_and_permute_signal(x, idx), 2 ** levels)
    for k, v in enumerate(idx.perm[levels]):
        ref = max(x[0, u, 0] for u in descendants(h, levels, v))
        assert z[0, k, 0] == ref


@given(st.integers(0, 10_000), st.integers(0, 50))
def test_pad_round_trip(gseed, seed):
    g = corpus_graph(gseed)
    idx = build_tree_index(coarsen_hierarchy(g, 2, seed))
    x = np.random.default_rng(seed).standard_normal((3, g.n, 2))
    xp = pad_and_permute_signal(x, idx, neutral=-7.0)
    assert np.all(xp[:, idx.fake_mask(0)] == -7.0)
    np.testing.assert_array_equal(unpermute_signal(xp, idx), x)


def test_pad_size_mismatch():
    idx = build_tree_index(worked_hierarchy())
    with pytest.raises(ValueError):
        pad_and_permute_signal(np.ones((1, 7)), idx)


def test_permute_identity_graph():
    g = Graph.from_edges(8, [(i, i + 1) for i in range(7)])
    h = hierarchy_from_matchings(g, [Matching([(0, 1), (2, 3), (4, 5), (6, 7)], [])])
    idx = build_tree_index(h)
    pg = permute_padded_graph(g, idx, 0)
    np.testing.assert_array_equal(dense_adjacency(pg), dense_adjacency(g))
    with pytest.raises(IndexError):
        permute_padded_graph(g, idx, 5)


@given(st.integers(0, 10_000), st.integers(0, 50))
def test_permuted_graph_entries(gseed, seed):
    g = corpus_graph(gseed)
    idx = build_tree_index(coarsen_hierarchy(g, 2, seed))
    pg = permute_padded_graph(g, idx, 0)
    A, P = dense_adjacency(g), dense_adjacency(pg)
    pos = idx.positions(0)
    for i in range(g.n):
        for j in range(g.n):
            assert A[i, j] == P[pos[i], pos[j]]
    fake = idx.fake_mask(0)
    assert not P[fake].any() and not P[:, fake].any()


@given(st.integers(0, 10_000), st.integers(0, 50), st.integers(1, 25))
def test_fake_slots_stay_zero_after_filtering(gseed, seed, K):
    g = corpus_graph(gseed)
    idx = build_tree_index(coarsen_hierarchy(g, 2, seed))
    rng = np.random.default_rng(seed)
    x = pad_and_permute_signal(rng.standard_normal((2, g.n, 2)), idx)
    for kind in ("normalized", "combinatorial"):
        Lt = scaled_laplacian(permute_padded_graph(g, idx, 0), kind)
        y = apply_filter_bank(Lt, rng.standard_normal((2, 3, K)), x)
        assert np.all(y[:, idx.fake_mask(0)] == 0.0)


def test_pool_examples():
    x = np.full((1, 8, 1), 2.5)
    np.testing.assert_array_equal(max_pool_1d(x, 4)[0], 2.5)
    with pytest.raises(ValueError):
        max_pool_1d(x, 3)
    with pytest.raises(ValueError):
        max_pool_1d(np.ones((1, 6, 1)), 4)


@given(st.integers(0, 10_000))
def test_pool_composition(seed):
    x = np.random.default_rng(seed).standard_normal((3, 16, 2))
    twice = max_pool_1d(max_pool_1d(x, 2)[0], 2)[0]
    np.testing.assert_array_equal(twice, max_pool_1d(x, 4)[0])


def test_pool_ties_take_lowest_position():
    _, arg = max_pool_1d(np.zeros((1, 4, 1)), 4)
    assert arg[0, 0, 0] == 0


def test_pool_backward_examples():
    x = np.arange(8.0).reshape(1, 8, 1)
    _, arg = max_pool_1d(x, 2)
    np.testing.assert_array_equal(max_pool_backward(np.zeros((1, 4, 1)), arg, 2), 0)
    g = max_pool_backward(np.ones((1, 4, 1)), arg, 2)[0, :, 0]
    np.testing.assert_array_equal(g, [0, 1, 0, 1, 0, 1, 0, 1])
    with pytest.raises(ValueError):
        max_pool_backward(np.ones((1, 3, 1)), arg, 2)


@given(st.integers(0, 10_000))
def test_pool_backward_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 8, 3))
    c = rng.standard_normal((2, 2, 3))
    z, arg = max_pool_1d(x, 4)
    g = max_pool_backward(c, arg, 4)
    h = 1e-6
    num = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        num[idx] = (np.sum(c * max_pool_1d(x + e, 4)[0]) - np.sum(c * max_pool_1d(x - e, 4)[0])) / (2 * h)
    assert np.linalg.norm(g - num) <= 1e-6 * np.linalg.norm(num)
