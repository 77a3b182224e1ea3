"""Dense eigendecomposition ground truth.

Fourier basis, graph Fourier transform, and the two spectral baselines
(free per-frequency coefficients and cubic B-splines).  Everything here costs
O(n^2) per signal and O(n^3) to set up, so it is capped to small graphs.  It
doubles as the oracle for the sparse Chebyshev recurrence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from .graph import SparseOperator

DENSE_CAP = 4096


class DenseCapError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FourierBasis:
    """Eigenvectors ``U`` (columns) and ascending eigenvalues of a Laplacian."""

    U: np.ndarray
    lambdas: np.ndarray

    @property
    def n(self) -> int:
        return self.lambdas.size


@dataclass(frozen=True, eq=False)
class SplineBasis:
    """Cubic B-spline basis functions sampled at the eigenvalues (``n x K``)."""

    B: np.ndarray
    knots: np.ndarray


def eigendecompose(L: SparseOperator | np.ndarray, cap: int = DENSE_CAP) -> FourierBasis:
    """Full eigendecomposition, eigenvalues ascending.

    Each eigenvector is flipped so that its largest-magnitude entry (first one
    on ties) is positive.  Round-off negatives of a PSD operator are clipped
    to zero.
    """
    dense = L.to_dense() if isinstance(L, SparseOperator) else np.asarray(L, dtype=np.float64)
    n = dense.shape[0]
    if n > cap:
        raise DenseCapError(f"{n} vertices exceeds the dense cap of {cap}")
    try:
        lambdas, U = np.linalg.eigh(dense)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed: {exc}") from exc
    pivot = np.abs(U).argmax(axis=0)
    signs = np.sign(U[pivot, np.arange(n)])
    signs[signs == 0] = 1.0
    U = U * signs
    scale = max(np.abs(lambdas).max(initial=0.0), 1.0)
    lambdas = np.where((lambdas < 0) & (lambdas > -1e-12 * scale), 0.0, lambdas)
    return FourierBasis(U, lambdas)


def gft(basis: FourierBasis, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != basis.n:
        raise ValueError("dimension mismatch")
    return basis.U.T @ x


def igft(basis: FourierBasis, xhat: np.ndarray) -> np.ndarray:
    xhat = np.asarray(xhat, dtype=np.float64)
    if xhat.shape[0] != basis.n:
        raise ValueError("dimension mismatch")
    return basis.U @ xhat


def filter_response(basis: FourierBasis, response: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``U diag(response) U^T x`` for a vector or an ``(n, m)`` block."""
    response = np.asarray(response, dtype=np.float64)
    if response.shape != (basis.n,):
        raise ValueError("response must have one entry per eigenvalue")
    xhat = gft(basis, x)
    if xhat.ndim == 1:
        return igft(basis, response * xhat)
    return igft(basis, response[:, None] * xhat)


def filter_nonparam(basis: FourierBasis, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Filter with one free coefficient per frequency."""
    return filter_response(basis, theta, x)


def spline_basis(lambdas: np.ndarray, K: int, lambda_max: float | None = None) -> SplineBasis:
    """``K`` cubic B-splines on uniform knots over ``[0, lambda_max]``.

    Boundary knots are repeated four times (clamped), which leaves ``K - 4``
    interior knots.
    """
    if K < 4:
        raise ValueError("a cubic B-spline basis needs K >= 4")
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambda_max is None:
        lambda_max = float(lambdas.max())
    if lambda_max <= 0:
        raise ValueError("lambda_max must be positive")
    inner = np.linspace(0.0, lambda_max, K - 2)
    knots = np.concatenate([[0.0] * 3, inner, [lambda_max] * 3])
    x = np.clip(lambdas, 0.0, lambda_max)
    B = BSpline.design_matrix(x, knots, 3).toarray()
    return SplineBasis(B, knots)


def filter_spline(
    basis: FourierBasis,
    theta: np.ndarray,
    x: np.ndarray,
    spline: SplineBasis | None = None,
) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size < 4:
        raise ValueError("a cubic B-spline filter needs K >= 4")
    if spline is None:
        spline = spline_basis(basis.lambdas, theta.size)
    return filter_response(basis, spline.B @ theta, x)


def chebyshev_response(lambdas: np.ndarray, lambda_max: float, theta: np.ndarray) -> np.ndarray:
    """``sum_k theta_k T_k(2 lambda / lambda_max - 1)``, evaluated scalarwise."""
    t = 2.0 * np.asarray(lambdas, dtype=np.float64) / lambda_max - 1.0
    theta = np.asarray(theta, dtype=np.float64)
    prev, cur = np.ones_like(t), t
    out = theta[0] * prev
    for k in range(1, theta.size):
        if k > 1:
            prev, cur = cur, 2.0 * t * cur - prev
        out = out + theta[k] * cur
    return out


def chebyshev_vandermonde(lambdas: np.ndarray, lambda_max: float, K: int) -> np.ndarray:
    """Matrix ``T[l, k] = T_k(scaled lambda_l)``."""
    eye = np.eye(K)
    return np.column_stack([chebyshev_response(lambdas, lambda_max, eye[k]) for k in range(K)])


def dense_cheby_oracle(
    basis: FourierBasis, lambda_max: float, theta: np.ndarray, x: np.ndarray
) -> np.ndarray:
    return filter_response(basis, chebyshev_response(basis.lambdas, lambda_max, theta), x)
