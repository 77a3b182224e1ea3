"""Chebyshev-recursive graph filtering and its two gradients.

A filter with ``K`` coefficients is a degree ``K - 1`` polynomial of the
scaled Laplacian, so its impulse response reaches ``K - 1`` hops.  Filtering
costs ``K - 1`` sparse products per input signal plus one dense contraction;
no eigendecomposition is involved.

Shapes used throughout:

* signals (a batch): ``(S, n, F)``, samples by vertices by feature maps
* filter bank ``theta``: ``(F_in, F_out, K)``
* Chebyshev basis of a batch: ``(K, n, S, F_in)``
"""

from __future__ import annotations

import numpy as np

from .graph import ScaledLaplacian, spmv


def _check_theta(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 3 or theta.shape[2] < 1:
        raise ValueError("filter bank must have shape (F_in, F_out, K) with K >= 1")
    if not np.all(np.isfinite(theta)):
        raise ValueError("filter bank has non-finite entries")
    return theta


def _check_batch(x: np.ndarray, n: int, features: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != n:
        raise ValueError(f"expected a batch of shape (S, {n}, F), got {x.shape}")
    if features is not None and x.shape[2] != features:
        raise ValueError(f"expected {features} feature maps, got {x.shape[2]}")
    return x


def cheb_basis(Lt: ScaledLaplacian, x: np.ndarray, K: int) -> np.ndarray:
    """Stack ``[T_0(Lt) x, ..., T_{K-1}(Lt) x]`` along a new leading axis.

    ``x`` may be a vector or any array whose first axis is the vertex axis;
    trailing axes are treated as independent signals.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != Lt.n:
        raise ValueError(f"dimension mismatch: graph has {Lt.n} vertices, signal {x.shape[0]}")
    out = np.empty((K,) + x.shape)
    out[0] = x
    if K > 1:
        out[1] = spmv(Lt, x)
    for k in range(2, K):
        np.subtract(spmv(Lt.doubled, out[k - 1]), out[k - 2], out=out[k])
    return out


def apply_filter(Lt: ScaledLaplacian, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Filter a single signal: ``sum_k theta_k T_k(Lt) x``."""
    theta = np.asarray(theta, dtype=np.float64).ravel()
    xbar = cheb_basis(Lt, x, theta.size)
    return np.tensordot(theta, xbar, axes=1)


def batch_basis(Lt: ScaledLaplacian, x: np.ndarray, K: int) -> np.ndarray:
    """Chebyshev basis of a batch, shape ``(K, n, S, F_in)``."""
    x = _check_batch(x, Lt.n)
    return cheb_basis(Lt, x.transpose(1, 0, 2), K)


def _basis_matrix(xbar: np.ndarray) -> np.ndarray:
    # (K, n, S, F_in) -> (S*n, F_in*K); rows ordered by sample then vertex
    K, n, S, F_in = xbar.shape
    return xbar.transpose(2, 1, 3, 0).reshape(S * n, F_in * K)


# bytes of basis per vertex block; the block is transposed and multiplied while in cache
_BLOCK_BYTES = 1 << 19


def _vertex_blocks(xbar: np.ndarray):
    K, n, S, F_in = xbar.shape
    step = max(1, _BLOCK_BYTES // (8 * K * S * F_in))
    for i0 in range(0, n, step):
        yield slice(i0, min(n, i0 + step))


def contract(xbar: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Combine a precomputed basis with a filter bank into ``(S, n, F_out)``."""
    theta = _check_theta(theta)
    K, n, S, F_in = xbar.shape
    if theta.shape[0] != F_in or theta.shape[2] != K:
        raise ValueError(f"filter bank {theta.shape} does not match basis {xbar.shape}")
    F_out = theta.shape[1]
    w = theta.transpose(0, 2, 1).reshape(F_in * K, F_out)
    y = np.empty((S, n, F_out))
    for blk in _vertex_blocks(xbar):
        b = blk.stop - blk.start
        y[:, blk] = (_basis_matrix(xbar[:, blk]) @ w).reshape(S, b, F_out)
    return y


def apply_filter_bank(
    Lt: ScaledLaplacian, theta: np.ndarray, x: np.ndarray, return_basis: bool = False
):
    """``y[s, :, j] = sum_i g_theta[i, j](L) x[s, :, i]``.

    The Chebyshev basis of every input map is computed once and reused for all
    output maps.  With ``return_basis`` the basis is returned as well so that
    the backward pass does not recompute it.
    """
    theta = _check_theta(theta)
    x = _check_batch(x, Lt.n, theta.shape[0])
    xbar = batch_basis(Lt, x, theta.shape[2])
    y = contract(xbar, theta)
    return (y, xbar) if return_basis else y


def grad_theta(xbar: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Gradient of the loss w.r.t. the filter bank, summed over the batch."""
    K, n, S, F_in = xbar.shape
    dy = np.asarray(dy, dtype=np.float64)
    if dy.ndim != 3 or dy.shape[:2] != (S, n):
        raise ValueError(f"upstream gradient {dy.shape} does not match basis {xbar.shape}")
    F_out = dy.shape[2]
    g = np.zeros((F_in * K, F_out))
    for blk in _vertex_blocks(xbar):
        b = blk.stop - blk.start
        g += _basis_matrix(xbar[:, blk]).T @ dy[:, blk].reshape(S * b, F_out)
    return g.reshape(F_in, K, F_out).transpose(0, 2, 1)


def grad_input(Lt: ScaledLaplacian, theta: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the input maps.

    Polynomials of a symmetric operator are symmetric, so this is the same
    filter bank applied with input and output maps swapped.
    """
    theta = _check_theta(theta)
    return apply_filter_bank(Lt, theta.transpose(1, 0, 2), dy)
