"""Balanced binary tree ordering of a coarsening hierarchy, and 1D pooling.

Singletons get a fake sibling and fake nodes get two fake children, so every
node has exactly two children.  Ordering the coarsest level by index and
placing the children of position ``k`` at ``2k`` and ``2k + 1`` makes pooling
by ``2^p`` a plain strided reduction over consecutive positions.

Fake nodes are isolated vertices.  With a zero signal on them, any polynomial
filter of the Laplacian keeps them at zero, so zero is a neutral value for
ReLU followed by max pooling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .coarsening import CoarseningHierarchy
from .graph import Graph


@dataclass(frozen=True, eq=False)
class TreeIndex:
    """Per-level tree orderings, finest level first.

    ``perm[l][p]`` is the vertex sitting at tree position ``p`` of level ``l``.
    Real vertices keep their ids ``0 .. n_l - 1``; fake vertices are numbered
    ``n_l .. m_l - 1``.
    """

    perm: list[np.ndarray]
    n_real: list[int]

    @property
    def num_levels(self) -> int:
        return len(self.perm)

    def size(self, level: int) -> int:
        return int(self.perm[level].size)

    @property
    def sizes(self) -> list[int]:
        """Padded sizes, finest first."""
        return [p.size for p in self.perm]

    @property
    def level_sizes(self) -> list[int]:
        """Padded sizes, coarsest first."""
        return self.sizes[::-1]

    def fake_mask(self, level: int) -> np.ndarray:
        return self.perm[level] >= self.n_real[level]

    def fake_counts(self) -> list[int]:
        return [int(self.fake_mask(l).sum()) for l in range(self.num_levels)]

    def positions(self, level: int) -> np.ndarray:
        """Inverse of ``perm[level]``: tree position of every (real or fake) vertex."""
        inv = np.empty_like(self.perm[level])
        inv[self.perm[level]] = np.arange(self.perm[level].size)
        return inv


def build_tree_index(h: CoarseningHierarchy) -> TreeIndex:
    L = h.num_levels - 1
    sizes = h.sizes
    for l, parent in enumerate(h.parents):
        parent = np.asarray(parent)
        if parent.size != sizes[l] or (parent.size and parent.max() >= sizes[l + 1]):
            raise ValueError(f"parent map of level {l} inconsistent with level sizes")
        counts = np.bincount(parent, minlength=sizes[l + 1])
        if np.any(counts < 1) or np.any(counts > 2):
            raise ValueError(f"coarse vertices of level {l + 1} must have 1 or 2 children")

    perm = [None] * (L + 1)
    perm[L] = np.arange(sizes[L])
    for l in range(L, 0, -1):
        fine_n = sizes[l - 1]
        # children of each coarse vertex, ascending
        order = np.argsort(h.parents[l - 1], kind="stable")
        starts = np.searchsorted(h.parents[l - 1][order], np.arange(sizes[l] + 1))
        nxt = fine_n
        out = np.empty(2 * perm[l].size, dtype=np.int64)
        for k, c in enumerate(perm[l]):
            if c < sizes[l]:
                kids = order[starts[c]:starts[c + 1]]
            else:
                kids = ()
            kids = list(kids)
            while len(kids) < 2:
                kids.append(nxt)
                nxt += 1
            out[2 * k], out[2 * k + 1] = kids
        perm[l - 1] = out
    return TreeIndex(perm, list(sizes))


def permute_padded_graph(g: Graph, idx: TreeIndex, level: int) -> Graph:
    """Relabel ``g`` into tree order; fake positions become isolated vertices."""
    if not 0 <= level < idx.num_levels:
        raise IndexError(f"level {level} out of range")
    if g.n != idx.n_real[level]:
        raise ValueError("graph size does not match the index at this level")
    pos = idx.positions(level)[: g.n]
    m = idx.size(level)
    a = g.csr.tocoo()
    out = sp.coo_matrix((a.data, (pos[a.row], pos[a.col])), shape=(m, m))
    return Graph.from_scipy(out)


def pad_and_permute_signal(x: np.ndarray, idx: TreeIndex, neutral: float = 0.0) -> np.ndarray:
    """``(S, n_0, F)`` (or ``(S, n_0)``) to tree order ``(S, m_0, F)``."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[:, :, None]
    n0 = idx.n_real[0]
    if x.shape[1] != n0:
        raise ValueError(f"signal has {x.shape[1]} vertices, index expects {n0}")
    out = np.full((x.shape[0], idx.size(0), x.shape[2]), neutral, dtype=np.float64)
    real = ~idx.fake_mask(0)
    out[:, real, :] = x[:, idx.perm[0][real], :]
    return out[:, :, 0] if squeeze else out


def unpermute_signal(x: np.ndarray, idx: TreeIndex, level: int = 0) -> np.ndarray:
    """Undo :func:`pad_and_permute_signal`: original order, fake slots dropped."""
    pos = idx.positions(level)[: idx.n_real[level]]
    return np.asarray(x)[:, pos, ...]


def _check_pool(p: int):
    if p < 1 or p & (p - 1):
        raise ValueError(f"pool size must be a power of two, got {p}")


def max_pool_1d(x: np.ndarray, p: int):
    """Max over consecutive windows of ``p`` positions along axis 1.

    Returns the pooled ``(S, m / p, F)`` array and the within-window argmax
    (lowest position on ties) needed by the backward pass.
    """
    _check_pool(p)
    x = np.asarray(x, dtype=np.float64)
    S, m, F = x.shape
    if m % p:
        raise ValueError(f"{m} positions cannot be pooled by {p}: not enough levels")
    win = x.reshape(S, m // p, p, F)
    arg = win.argmax(axis=2)
    return np.take_along_axis(win, arg[:, :, None, :], axis=2)[:, :, 0, :], arg


def max_pool_backward(grad_out: np.ndarray, argmax: np.ndarray, p: int) -> np.ndarray:
    """Route pooled gradients back to the recorded argmax positions."""
    _check_pool(p)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != argmax.shape:
        raise ValueError("argmax does not match the gradient shape")
    S, mc, F = grad_out.shape
    out = np.zeros((S, mc, p, F))
    np.put_along_axis(out, argmax[:, :, None, :], grad_out[:, :, None, :], axis=2)
    return out.reshape(S, mc * p, F)
