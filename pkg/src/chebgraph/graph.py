"""Graph storage, Laplacians, spectrum scaling and hop queries.

All operators are stored in compressed sparse row form.  The arrays are the
source of truth; a :mod:`scipy.sparse` view is built lazily and cached for the
products, which scipy evaluates row by row in a fixed order.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import ArpackNoConvergence, eigsh


class ConvergenceError(RuntimeError):
    """Power iteration did not settle within its iteration cap."""

    def __init__(self, message: str, rayleigh: float):
        super().__init__(message)
        self.rayleigh = rayleigh


def _csr_arrays(mat) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    m = sp.csr_matrix(mat, dtype=np.float64)
    m.sum_duplicates()
    m.sort_indices()
    return (
        m.indptr.astype(np.int64),
        m.indices.astype(np.int64),
        m.data.astype(np.float64),
    )


class _CSRMixin:
    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray

    @property
    def _values(self) -> np.ndarray:
        raise NotImplementedError

    @cached_property
    def csr(self) -> sp.csr_matrix:
        """Read-only scipy view sharing the stored arrays."""
        return sp.csr_matrix(
            (self._values, self.col_indices, self.row_offsets), shape=(self.n, self.n)
        )

    @property
    def nnz(self) -> int:
        return int(self.col_indices.size)

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def row_of_entries(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.n), np.diff(self.row_offsets))

    def _check_layout(self):
        if self.row_offsets.shape != (self.n + 1,):
            raise ValueError("row_offsets must have length n + 1")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != self.col_indices.size:
            raise ValueError("row_offsets inconsistent with col_indices")
        if np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if self.col_indices.size and (
            self.col_indices.min() < 0 or self.col_indices.max() >= self.n
        ):
            raise ValueError("column index out of range")
        if self._values.shape != self.col_indices.shape:
            raise ValueError("values and col_indices differ in length")

    def is_symmetric(self) -> bool:
        a = self.csr
        return (a != a.T).nnz == 0


def _freeze(*arrays: np.ndarray):
    for a in arrays:
        a.flags.writeable = False


@dataclass(frozen=True, eq=False)
class Graph(_CSRMixin):
    """Undirected weighted graph without self-loops.

    Parameters
    ----------
    n : int
        Number of vertices.
    row_offsets, col_indices, weights : ndarray
        CSR layout of the weighted adjacency matrix ``W``.  Both ``(i, j)`` and
        ``(j, i)`` are stored, with identical weights.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", np.asarray(self.row_offsets, dtype=np.int64))
        object.__setattr__(self, "col_indices", np.asarray(self.col_indices, dtype=np.int64))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        self._check_layout()
        if np.any(self.col_indices == self.row_of_entries()):
            raise ValueError("graph contains self-loops")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights <= 0):
            raise ValueError("stored weights must be finite and strictly positive")
        if not self.is_symmetric():
            raise ValueError("adjacency is not symmetric")
        _freeze(self.row_offsets, self.col_indices, self.weights)

    @property
    def _values(self) -> np.ndarray:
        return self.weights

    @property
    def num_edges(self) -> int:
        return self.nnz // 2

    @classmethod
    def from_scipy(cls, adjacency) -> "Graph":
        """Build from any scipy sparse or dense adjacency; zeros are dropped."""
        m = sp.csr_matrix(adjacency, dtype=np.float64)
        m.eliminate_zeros()
        offsets, cols, vals = _csr_arrays(m)
        return cls(m.shape[0], offsets, cols, vals)

    @classmethod
    def from_edges(cls, n: int, edges, weights=None) -> "Graph":
        """Build from an undirected edge list ``[(i, j), ...]``."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if weights is None:
            weights = np.ones(len(edges))
        weights = np.asarray(weights, dtype=np.float64)
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        vals = np.concatenate([weights, weights])
        return cls.from_scipy(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Upper-triangular edge list as ``(i, j, w)`` with ``i < j``."""
        rows = self.row_of_entries()
        keep = rows < self.col_indices
        return rows[keep], self.col_indices[keep], self.weights[keep]


@dataclass(frozen=True, eq=False)
class SparseOperator(_CSRMixin):
    """Square sparse matrix in CSR form; diagonal and negative entries allowed."""

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", np.asarray(self.row_offsets, dtype=np.int64))
        object.__setattr__(self, "col_indices", np.asarray(self.col_indices, dtype=np.int64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        self._check_layout()
        _freeze(self.row_offsets, self.col_indices, self.values)

    @property
    def _values(self) -> np.ndarray:
        return self.values

    @classmethod
    def from_scipy(cls, mat) -> "SparseOperator":
        m = sp.csr_matrix(mat, dtype=np.float64)
        offsets, cols, vals = _csr_arrays(m)
        return cls(m.shape[0], offsets, cols, vals)


@dataclass(frozen=True, eq=False)
class ScaledLaplacian:
    """``2 L / lambda_max - I``, ready for the Chebyshev recurrence."""

    operator: SparseOperator
    lambda_max: float

    @property
    def n(self) -> int:
        return self.operator.n

    @cached_property
    def doubled(self) -> SparseOperator:
        """``2 Lt``, so a recurrence step is one product and one subtraction.

        Doubling is exact in floating point, so ``doubled @ x == 2 * (Lt @ x)``
        bit for bit.
        """
        return SparseOperator.from_scipy(2.0 * self.operator.csr)


# --------------------------------------------------------------------------
# Construction
# --------------------------------------------------------------------------


def knn_indices(points: np.ndarray, k: int, chunk_bytes: int = 1 << 26):
    """Indices and squared distances of the ``k`` nearest neighbours of each point.

    Brute force with a stable sort, so equal distances resolve to the lower
    vertex index.  The point itself is never returned.
    """
    points = np.asarray(points, dtype=np.float64)
    n, d = points.shape
    chunk = max(1, chunk_bytes // (8 * max(n * d, 1)))
    idx = np.empty((n, k), dtype=np.int64)
    dist2 = np.empty((n, k))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        diff = points[start:stop, None, :] - points[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        idx[start:stop] = order
        dist2[start:stop] = np.take_along_axis(d2, order, axis=1)
    return idx, dist2


def build_knn_graph(points, k: int, sigma2: float | None = None) -> Graph:
    """Gaussian-weighted k-nearest-neighbour graph.

    ``W_ij = exp(-||z_i - z_j||^2 / sigma2)``.  The neighbour relation is
    symmetrized by union.  When ``sigma2`` is None it defaults to the mean
    squared distance to the k-th neighbour.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be positive")
    if n < k + 1:
        raise ValueError(f"need at least k+1={k + 1} points, got {n}")
    if not np.all(np.isfinite(points)):
        raise ValueError("points contain non-finite coordinates")
    idx, dist2 = knn_indices(points, k)
    if sigma2 is None:
        sigma2 = float(dist2[:, -1].mean())
        if sigma2 == 0:
            sigma2 = 1.0
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    rows = np.repeat(np.arange(n), k)
    cols = idx.ravel()
    w = np.exp(-dist2.ravel() / sigma2)
    # exp underflow would silently drop an edge the union rule requires
    w = np.maximum(w, np.finfo(np.float64).tiny)
    a = sp.coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    # union: both directions carry the same Gaussian weight, so max == either
    a = a.maximum(a.T)
    return Graph.from_scipy(a)


def grid_coordinates(side: int) -> np.ndarray:
    """Pixel coordinates of a ``side x side`` grid, row-major."""
    yy, xx = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()]).astype(np.float64)


def grid_graph(side: int = 28, k: int = 8, sigma2: float | None = None) -> Graph:
    return build_knn_graph(grid_coordinates(side), k, sigma2)


def random_graph(n: int, num_edges: int, seed: int = 0) -> Graph:
    """Erdos-Renyi G(n, M): ``num_edges`` distinct unit-weight edges."""
    max_edges = n * (n - 1) // 2
    if num_edges > max_edges:
        raise ValueError(f"at most {max_edges} edges fit on {n} vertices")
    rng = np.random.default_rng(seed)
    keys = np.empty(0, dtype=np.int64)
    while keys.size < num_edges:
        need = num_edges - keys.size
        i = rng.integers(0, n, size=2 * need + 16)
        j = rng.integers(0, n, size=2 * need + 16)
        i, j = np.minimum(i, j), np.maximum(i, j)
        new = (i * n + j)[i != j]
        # keep first occurrences in draw order so the result is seed-stable
        _, first = np.unique(new, return_index=True)
        new = new[np.sort(first)]
        new = new[~np.isin(new, keys)]
        keys = np.concatenate([keys, new[:need]])
    return Graph.from_edges(n, np.column_stack([keys // n, keys % n]))


# --------------------------------------------------------------------------
# Operators
# --------------------------------------------------------------------------


def degree_vector(g: Graph) -> np.ndarray:
    """Row sums of ``W``."""
    return np.bincount(g.row_of_entries(), weights=g.weights, minlength=g.n).astype(np.float64)


def combinatorial_laplacian(g: Graph) -> SparseOperator:
    """``L = D - W``."""
    d = degree_vector(g)
    return SparseOperator.from_scipy(sp.diags(d) - g.csr)


def normalized_laplacian(g: Graph) -> SparseOperator:
    """``L = I - D^{-1/2} W D^{-1/2}``; isolated vertices get the unit row."""
    d = degree_vector(g)
    inv_sqrt = np.zeros(g.n)
    mask = d > 0
    inv_sqrt[mask] = 1.0 / np.sqrt(d[mask])
    rows = g.row_of_entries()
    # scale by the product d_i^-1/2 d_j^-1/2, which is the same float for (i,j) and (j,i)
    vals = g.weights * (inv_sqrt[rows] * inv_sqrt[g.col_indices])
    off = sp.csr_matrix((vals, g.col_indices, g.row_offsets), shape=(g.n, g.n))
    return SparseOperator.from_scipy(sp.identity(g.n, format="csr") - off)


def laplacian(g: Graph, kind: str = "normalized") -> SparseOperator:
    if kind == "normalized":
        return normalized_laplacian(g)
    if kind == "combinatorial":
        return combinatorial_laplacian(g)
    raise ValueError(f"unknown Laplacian kind {kind!r}")


def estimate_lambda_max(
    L: SparseOperator,
    tol: float = 1e-3,
    max_iter: int = 1000,
    inflation: float = 0.01,
    seed: int = 0,
) -> float:
    """Largest eigenvalue of a symmetric PSD operator, inflated by ``inflation``.

    Uses seeded Lanczos iterations (ARPACK) to relative accuracy ``tol``;
    the inflation keeps the scaled spectrum inside [-1, 1].  Plain power
    iteration stalls well short of the top eigenvalue when the leading
    eigenvalues are clustered, which is common for graph Laplacians.
    Operators with fewer than three rows are solved densely.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = L.csr
    if not np.any(a.data):
        raise ValueError("operator has no positive eigenvalue")
    if L.n < 3:
        lam = float(np.linalg.eigvalsh(a.toarray()).max(initial=0.0))
    else:
        v0 = np.random.default_rng(seed).standard_normal(L.n)
        try:
            lam = float(eigsh(a, k=1, which="LA", tol=tol * 1e-3, maxiter=max_iter,
                              v0=v0, return_eigenvectors=False)[0])
        except ArpackNoConvergence as exc:
            if len(exc.eigenvalues):
                last = float(exc.eigenvalues[0])
            else:
                w = a @ v0
                last = float(w @ (a @ w) / (w @ w))
            raise ConvergenceError(
                f"Lanczos did not converge in {max_iter} iterations", rayleigh=last
            ) from exc
    if lam <= 0:
        raise ValueError("operator has no positive eigenvalue")
    return lam * (1.0 + inflation)


def scale_laplacian(L: SparseOperator, lambda_max: float) -> ScaledLaplacian:
    if not lambda_max > 0:
        raise ValueError("lambda_max must be positive")
    op = (2.0 / lambda_max) * L.csr - sp.identity(L.n, format="csr")
    return ScaledLaplacian(SparseOperator.from_scipy(op), float(lambda_max))


def scaled_laplacian(
    g: Graph, kind: str = "normalized", lambda_max: float | None = None
) -> ScaledLaplacian:
    """Laplacian of ``g`` rescaled for filtering.

    For the normalized Laplacian the default ``lambda_max`` is the spectral
    bound 2; otherwise it is estimated with Lanczos.
    """
    L = laplacian(g, kind)
    if lambda_max is None:
        lambda_max = 2.0 if kind == "normalized" else estimate_lambda_max(L)
    return scale_laplacian(L, lambda_max)


# --------------------------------------------------------------------------
# Products and queries
# --------------------------------------------------------------------------


class SpmvCounter:
    """Counts sparse matrix-vector products; a k-column block counts k times."""

    def __init__(self):
        self.count = 0


_counters: list[SpmvCounter] = []


@contextlib.contextmanager
def count_spmv() -> Iterator[SpmvCounter]:
    counter = SpmvCounter()
    _counters.append(counter)
    try:
        yield counter
    finally:
        _counters.remove(counter)


def spmv(A: SparseOperator | ScaledLaplacian, x: np.ndarray) -> np.ndarray:
    """``A @ x`` for a vector or an ``(n, m)`` block of right-hand sides."""
    if isinstance(A, ScaledLaplacian):
        A = A.operator
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != A.n:
        raise ValueError(f"dimension mismatch: operator is {A.n}, vector is {x.shape[0]}")
    if _counters:
        cols = 1 if x.ndim == 1 else int(np.prod(x.shape[1:]))
        for c in _counters:
            c.count += cols
    if x.ndim > 2:
        return (A.csr @ x.reshape(A.n, -1)).reshape(x.shape)
    return A.csr @ x


def hop_distances(g: Graph, source: int) -> np.ndarray:
    """Breadth-first hop counts from ``source``; ``inf`` marks unreachable vertices."""
    if not 0 <= source < g.n:
        raise IndexError(f"source {source} out of range for {g.n} vertices")
    return csgraph.shortest_path(
        g.csr, method="D", directed=False, unweighted=True, indices=source
    )
