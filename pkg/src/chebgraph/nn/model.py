"""Architecture strings and the assembled network.

Architectures follow the usual shorthand: ``GC32`` is a graph convolution with
32 output maps, ``P4`` a pooling of size and stride 4, ``FC512`` a fully
connected layer with 512 units.  Every such layer is followed by a ReLU, and a
softmax regression layer is always appended.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..coarsening import CoarseningHierarchy, coarsen_hierarchy
from ..graph import Graph, laplacian, scale_laplacian, estimate_lambda_max
from ..pooling import TreeIndex, build_tree_index, pad_and_permute_signal, permute_padded_graph
from ..spectral import eigendecompose, spline_basis
from .layers import ChebConv, Dense, Layer, MaxPool, SpectralConv

FILTERS = ("chebyshev", "spline", "nonparam")


@dataclass(frozen=True)
class GC:
    F_out: int


@dataclass(frozen=True)
class P:
    p: int


@dataclass(frozen=True)
class FC:
    units: int


@dataclass(frozen=True)
class SoftmaxOut:
    classes: int


_TOKEN = re.compile(r"^(GC|P|FC)(\d+)$")


def parse_architecture(arch: str, classes: int = 10) -> list:
    """``"GC32-P4-GC64-P4-FC512"`` to a list of layer specs ending in SoftmaxOut."""
    specs = []
    for tok in filter(None, arch.strip().split("-")):
        m = _TOKEN.match(tok)
        if not m:
            raise ValueError(f"bad layer token {tok!r} in {arch!r}")
        kind, val = m.group(1), int(m.group(2))
        if val < 1:
            raise ValueError(f"layer {tok!r} must have a positive size")
        if kind == "GC":
            specs.append(GC(val))
        elif kind == "P":
            if val & (val - 1):
                raise ValueError(f"pool size must be a power of two: {tok!r}")
            specs.append(P(val))
        else:
            specs.append(FC(val))
    for a, b in zip(specs, specs[1:]):
        if isinstance(a, FC) and not isinstance(b, FC):
            raise ValueError("graph layers cannot follow a fully connected layer")
    specs.append(SoftmaxOut(classes))
    return specs


def coarsening_levels(specs) -> int:
    return sum(int(np.log2(s.p)) for s in specs if isinstance(s, P))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class Model:
    """Sequential network over a fixed graph and its coarsening.

    Parameters
    ----------
    graph : Graph
        Finest graph; inputs are signals on its vertices.
    arch : str
        Architecture string, e.g. ``"GC32-P4-GC64-P4-FC512"``.
    classes : int
        Number of softmax outputs.
    K : int
        Coefficients per filter (Chebyshev and spline filters).
    filter : {"chebyshev", "spline", "nonparam"}
    laplacian_kind : {"normalized", "combinatorial"}
    seed : int
        Seeds both the coarsening visiting order and the initialization.
    hierarchy : CoarseningHierarchy, optional
        Reuse a precomputed coarsening instead of running Graclus.
    """

    def __init__(self, graph: Graph, arch: str, classes: int = 10, K: int = 25,
                 filter: str = "chebyshev", laplacian_kind: str = "normalized",
                 seed: int = 0, bias: bool = True, dropout_keep: float = 1.0,
                 hierarchy: CoarseningHierarchy | None = None, in_features: int = 1):
        if filter not in FILTERS:
            raise ValueError(f"filter must be one of {FILTERS}")
        self.arch = arch
        self.specs = parse_architecture(arch, classes)
        self.K, self.filter, self.seed = K, filter, seed
        self.laplacian_kind = laplacian_kind
        self.in_features = in_features
        levels = coarsening_levels(self.specs)
        if hierarchy is None:
            hierarchy = coarsen_hierarchy(graph, levels, seed)
        elif hierarchy.num_levels - 1 < levels:
            raise ValueError(f"architecture needs {levels} coarsening levels")
        self.hierarchy = hierarchy
        self.tree: TreeIndex = build_tree_index(hierarchy)
        self.n_input = graph.n
        self._operators: dict[int, tuple] = {}

        rng = np.random.default_rng(seed)
        self.layers: list[Layer] = []
        level, width, feats = 0, self.tree.size(0), in_features
        prev_fc = False
        for spec in self.specs:
            if isinstance(spec, GC):
                self.layers.append(self._graph_conv(level, feats, spec.F_out, rng, bias))
                feats = spec.F_out
            elif isinstance(spec, P):
                if width % spec.p:
                    raise ValueError("pooling exceeds the available coarsening levels")
                self.layers.append(MaxPool(spec.p))
                level += int(np.log2(spec.p))
                width //= spec.p
            else:
                fan_in = width * feats if not prev_fc else feats
                units = spec.units if isinstance(spec, FC) else spec.classes
                layer = Dense(fan_in, units, rng, relu=isinstance(spec, FC), dropout=prev_fc)
                layer.keep = dropout_keep
                self.layers.append(layer)
                prev_fc, feats = True, units
        self.classes = classes

    def _level_operators(self, level: int):
        if level not in self._operators:
            g = permute_padded_graph(self.hierarchy.graphs[level], self.tree, level)
            L = laplacian(g, self.laplacian_kind)
            lmax = 2.0 if self.laplacian_kind == "normalized" else estimate_lambda_max(L)
            real = (~self.tree.fake_mask(level)).astype(np.float64)
            self._operators[level] = (L, lmax, real)
        return self._operators[level]

    def _graph_conv(self, level, F_in, F_out, rng, bias):
        L, lmax, real = self._level_operators(level)
        if self.filter == "chebyshev":
            return ChebConv(scale_laplacian(L, lmax), F_in, F_out, self.K, rng, real, bias)
        basis = eigendecompose(L)
        spline = None
        if self.filter == "spline":
            spline = spline_basis(basis.lambdas, self.K)
        return SpectralConv(basis, F_in, F_out, rng, self.filter, spline, real, bias)

    @property
    def dropout_keep(self) -> float:
        return min((l.keep for l in self.layers if isinstance(l, Dense)), default=1.0)

    @dropout_keep.setter
    def dropout_keep(self, keep: float):
        for l in self.layers:
            if isinstance(l, Dense):
                l.keep = keep

    # ------------------------------------------------------------------

    def prepare(self, x: np.ndarray) -> np.ndarray:
        """Raw signals ``(S, n)`` or ``(S, n, F)`` to padded tree order."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[:, :, None]
        if x.shape[1] != self.n_input or x.shape[2] != self.in_features:
            raise ValueError(f"input of shape {x.shape} does not fit the model")
        return pad_and_permute_signal(x, self.tree, 0.0)

    def forward(self, x, train: bool = False, rng=None, prepared: bool = False):
        """Class probabilities and the per-layer caches for :meth:`backward`."""
        h = x if prepared else self.prepare(x)
        if train and rng is None:
            rng = np.random.default_rng()
        caches = []
        for layer in self.layers:
            h, cache = layer.forward(h, train=train, rng=rng)
            caches.append(cache)
        return softmax(h), caches

    def backward(self, caches, probs, labels) -> list[dict]:
        """Gradients of the mean cross-entropy (weight decay is added separately)."""
        if caches is None or len(caches) != len(self.layers):
            raise ValueError("missing forward cache")
        S = probs.shape[0]
        dz = probs.copy()
        dz[np.arange(S), labels] -= 1.0
        dz /= S
        return self.backward_from(caches, dz)

    def backward_from(self, caches, dz) -> list[dict]:
        grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            dz, grads[i] = self.layers[i].backward(caches[i], dz, need_input_grad=i > 0)
        return grads

    def parameters(self):
        """``(layer_index, name, array)`` for every parameter, in a fixed order."""
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield i, name, layer.params[name]

    def decayed_weights(self):
        for layer in self.layers:
            for name in layer.decayed:
                yield layer.params[name]

    def predict(self, x, batch_size: int = 500) -> np.ndarray:
        out = []
        for start in range(0, len(x), batch_size):
            probs, _ = self.forward(x[start:start + batch_size])
            out.append(probs)
        return np.concatenate(out) if out else np.empty((0, self.classes))


def loss(probs: np.ndarray, labels: np.ndarray, model: Model | None = None,
         weight_decay: float = 0.0) -> float:
    """Mean cross-entropy plus ``weight_decay / 2`` times the squared FC weights."""
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= probs.shape[1]:
        raise ValueError("labels out of range")
    p = probs[np.arange(len(labels)), labels]
    ce = float(-np.mean(np.log(np.maximum(p, np.finfo(np.float64).tiny))))
    if model is not None and weight_decay:
        ce += 0.5 * weight_decay * sum(float(np.sum(w * w)) for w in model.decayed_weights())
    return ce


def loss_and_grads(model: Model, x, labels, weight_decay: float = 0.0, train: bool = False,
                   rng=None, prepared: bool = False):
    probs, caches = model.forward(x, train=train, rng=rng, prepared=prepared)
    E = loss(probs, labels, model, weight_decay)
    grads = model.backward(caches, probs, labels)
    if weight_decay:
        for layer, g in zip(model.layers, grads):
            for name in layer.decayed:
                g[name] = g[name] + weight_decay * layer.params[name]
    return E, probs, grads
