"""Layers with explicit forward/backward passes.

Every layer is stateless between calls: ``forward`` returns its output and a
cache, ``backward`` consumes that cache and returns the input gradient plus a
dict of parameter gradients keyed like ``layer.params``.
"""

from __future__ import annotations

import numpy as np

from .. import chebyshev
from ..graph import ScaledLaplacian
from ..pooling import max_pool_1d, max_pool_backward
from ..spectral import FourierBasis, SplineBasis


class Layer:
    params: dict[str, np.ndarray]
    #: names of parameters penalized by weight decay
    decayed: tuple[str, ...] = ()

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, cache, dy, need_input_grad=True):
        raise NotImplementedError


class _GraphConvBase(Layer):
    """Shared bias and ReLU handling.

    The bias is added on real vertices only, so fake (padding) vertices keep
    their neutral zero through the layer.
    """

    def __init__(self, real_mask: np.ndarray, F_out: int, bias: bool, relu: bool = True):
        self.real_mask = np.asarray(real_mask, dtype=np.float64)
        self.F_out = F_out
        self.use_bias = bias
        self.relu = relu

    def _finish(self, pre):
        if self.use_bias:
            pre = pre + self.real_mask[None, :, None] * self.params["b"]
        if self.relu:
            return np.maximum(pre, 0.0), pre > 0
        return pre, None

    def _bias_grad(self, dpre, grads):
        if self.use_bias:
            grads["b"] = np.einsum("snf,n->f", dpre, self.real_mask)

    @staticmethod
    def _unrelu(dy, mask):
        return dy if mask is None else dy * mask


class ChebConv(_GraphConvBase):
    """Chebyshev graph convolution followed by ReLU."""

    def __init__(self, Lt: ScaledLaplacian, F_in: int, F_out: int, K: int, rng,
                 real_mask=None, bias: bool = True, relu: bool = True):
        if real_mask is None:
            real_mask = np.ones(Lt.n)
        super().__init__(real_mask, F_out, bias, relu)
        self.Lt = Lt
        self.K = K
        self.params = {"theta": rng.standard_normal((F_in, F_out, K)) / np.sqrt(F_in * K)}
        if bias:
            self.params["b"] = np.zeros(F_out)

    def forward(self, x, train=False, rng=None):
        pre, xbar = chebyshev.apply_filter_bank(self.Lt, self.params["theta"], x, return_basis=True)
        y, mask = self._finish(pre)
        return y, (xbar, mask)

    def backward(self, cache, dy, need_input_grad=True):
        xbar, mask = cache
        dpre = self._unrelu(dy, mask)
        grads = {"theta": chebyshev.grad_theta(xbar, dpre)}
        self._bias_grad(dpre, grads)
        dx = chebyshev.grad_input(self.Lt, self.params["theta"], dpre) if need_input_grad else None
        return dx, grads


class SpectralConv(_GraphConvBase):
    """Graph convolution defined through the Fourier basis.

    ``kind="nonparam"`` learns one coefficient per frequency; ``kind="spline"``
    learns ``K`` cubic B-spline control points per filter.
    """

    def __init__(self, basis: FourierBasis, F_in: int, F_out: int, rng, kind: str = "nonparam",
                 spline: SplineBasis | None = None, real_mask=None, bias: bool = True,
                 relu: bool = True):
        n = basis.n
        if real_mask is None:
            real_mask = np.ones(n)
        super().__init__(real_mask, F_out, bias, relu)
        if kind == "spline":
            if spline is None:
                raise ValueError("spline filters need a SplineBasis")
            ncoef = spline.B.shape[1]
        elif kind == "nonparam":
            ncoef = n
        else:
            raise ValueError(f"unknown spectral filter kind {kind!r}")
        self.basis, self.kind, self.spline = basis, kind, spline
        self.params = {"theta": rng.standard_normal((F_in, F_out, ncoef)) / np.sqrt(F_in * ncoef)}
        if bias:
            self.params["b"] = np.zeros(F_out)

    def response(self) -> np.ndarray:
        """Per-frequency gains, shape ``(F_in, F_out, n)``."""
        theta = self.params["theta"]
        return theta if self.kind == "nonparam" else theta @ self.spline.B.T

    def _to_spectral(self, x):
        S, n, F = x.shape
        return (self.basis.U.T @ x.transpose(1, 0, 2).reshape(n, S * F)).reshape(n, S, F)

    def _to_vertex(self, xh):
        n, S, F = xh.shape
        return (self.basis.U @ xh.reshape(n, S * F)).reshape(n, S, F).transpose(1, 0, 2)

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        xh = self._to_spectral(x)
        h = self.response()
        yh = np.einsum("vsi,ijv->vsj", xh, h)
        # eigenvectors of a degenerate eigenvalue may mix padding with real vertices
        pre = self._to_vertex(yh) * self.real_mask[None, :, None]
        y, mask = self._finish(pre)
        return y, (xh, mask)

    def backward(self, cache, dy, need_input_grad=True):
        xh, mask = cache
        dpre = self._unrelu(dy, mask)
        grads = {}
        self._bias_grad(dpre, grads)
        dyh = self._to_spectral(dpre * self.real_mask[None, :, None])
        dh = np.einsum("vsi,vsj->ijv", xh, dyh)
        grads["theta"] = dh if self.kind == "nonparam" else dh @ self.spline.B
        dx = None
        if need_input_grad:
            dxh = np.einsum("vsj,ijv->vsi", dyh, self.response())
            dx = self._to_vertex(dxh)
        return dx, grads


class MaxPool(Layer):
    def __init__(self, p: int):
        self.p = p
        self.params = {}

    def forward(self, x, train=False, rng=None):
        y, arg = max_pool_1d(x, self.p)
        return y, arg

    def backward(self, cache, dy, need_input_grad=True):
        return max_pool_backward(dy, cache, self.p), {}


class Dense(Layer):
    """Fully connected layer on the flattened input.

    With ``dropout`` set, inverted dropout is applied to the layer input in
    training mode only.
    """

    decayed = ("W",)

    def __init__(self, fan_in: int, units: int, rng, relu: bool = True, dropout: bool = False):
        self.params = {
            "W": rng.standard_normal((fan_in, units)) / np.sqrt(fan_in),
            "b": np.zeros(units),
        }
        self.relu = relu
        self.dropout = dropout
        self.keep = 1.0

    def forward(self, x, train=False, rng=None):
        shape = x.shape
        x = x.reshape(shape[0], -1)
        drop = None
        if train and self.dropout and self.keep < 1.0:
            drop = (rng.random(x.shape) < self.keep) / self.keep
            x = x * drop
        pre = x @ self.params["W"] + self.params["b"]
        if self.relu:
            mask = pre > 0
            return np.maximum(pre, 0.0), (x, drop, mask, shape)
        return pre, (x, drop, None, shape)

    def backward(self, cache, dy, need_input_grad=True):
        x, drop, mask, shape = cache
        if mask is not None:
            dy = dy * mask
        grads = {"W": x.T @ dy, "b": dy.sum(axis=0)}
        dx = None
        if need_input_grad:
            dx = dy @ self.params["W"].T
            if drop is not None:
                dx = dx * drop
            dx = dx.reshape(shape)
        return dx, grads
