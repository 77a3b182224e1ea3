"""Mini-batch training loop, optimizers and evaluation."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import Model, loss_and_grads


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""


@dataclass
class TrainConfig:
    batch_size: int = 100
    epochs: int = 20
    learning_rate: float = 0.03
    lr_decay: float = 0.95
    momentum: float = 0.9
    dropout_keep: float = 0.5
    weight_decay: float = 5e-4
    optimizer: str = "sgd_momentum"
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and weight_decay must be nonnegative")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not 0 < self.dropout_keep <= 1:
            raise ValueError("dropout_keep must lie in (0, 1]")
        if self.optimizer not in ("sgd_momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("invalid Adam constants")
        return self


class SGDMomentum:
    """``v <- momentum * v + g``; ``p <- p - lr * v``."""

    def __init__(self, momentum: float):
        self.momentum = momentum
        self.state: dict = {}

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float):
        for i, (p, g) in enumerate(zip(params, grads)):
            v = self.state.get(i)
            v = g.copy() if v is None else self.momentum * v + g
            self.state[i] = v
            p -= lr * v


class Adam:
    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params, grads, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr = np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for i, (p, g) in enumerate(zip(params, grads)):
            m = self.m.get(i, 0.0) * b1 + (1 - b1) * g
            v = self.v.get(i, 0.0) * b2 + (1 - b2) * g * g
            self.m[i], self.v[i] = m, v
            p -= lr * corr * m / (np.sqrt(v) + self.eps)


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(cfg.beta1, cfg.beta2, cfg.eps)
    return SGDMomentum(cfg.momentum)


@dataclass
class Metrics:
    """Step records ``{step, loss, lr}`` and epoch records, in emission order."""

    records: list[dict] = field(default_factory=list)

    @property
    def steps(self) -> list[dict]:
        return [r for r in self.records if "step" in r]

    @property
    def epochs(self) -> list[dict]:
        return [r for r in self.records if "epoch" in r]

    def losses(self) -> np.ndarray:
        return np.array([r["loss"] for r in self.steps])


def _flat(model: Model, grads):
    params, flat = [], []
    for layer, g in zip(model.layers, grads):
        for name in sorted(layer.params):
            params.append(layer.params[name])
            flat.append(g[name])
    return params, flat


def evaluate(model: Model, x, labels, batch_size: int = 500) -> float:
    """Fraction of correct argmax predictions; ties go to the lowest class."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        return float("nan")
    pred = model.predict(x, batch_size).argmax(axis=1)
    return float(np.mean(pred == labels))


def train(model: Model, x_train, y_train, cfg: TrainConfig, x_val=None, y_val=None,
          callback: Callable[[dict], None] | None = None) -> Metrics:
    """Train ``model`` in place.

    Data order, dropout masks and the optimizer are all driven by ``cfg.seed``,
    so a rerun with identical inputs reproduces the same metrics stream (up to
    wall-clock fields).  ``callback`` receives every record as it is emitted.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    model.dropout_keep = cfg.dropout_keep
    opt = make_optimizer(cfg)
    x_prepared = model.prepare(x_train)
    y_train = np.asarray(y_train)
    n = len(y_train)
    metrics = Metrics()
    emit = callback or (lambda rec: None)
    step = 0
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * cfg.lr_decay ** epoch
        order = rng.permutation(n)
        t0 = time.perf_counter()
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            E, _, grads = loss_and_grads(model, x_prepared[idx], y_train[idx], cfg.weight_decay,
                                         train=True, rng=rng, prepared=True)
            if not np.isfinite(E):
                raise DivergenceError(f"loss became {E} at step {step} (epoch {epoch})")
            params, flat = _flat(model, grads)
            with np.errstate(over="ignore", invalid="ignore"):
                opt.step(params, flat, lr)
            if not all(np.all(np.isfinite(p)) for p in params):
                raise DivergenceError(f"parameters became non-finite at step {step + 1} "
                                      f"(epoch {epoch}, loss {E:.4g})")
            step += 1
            batches += 1
            rec = {"step": step, "loss": E, "lr": lr}
            metrics.records.append(rec)
            emit(rec)
        elapsed = time.perf_counter() - t0
        rec = {"epoch": epoch + 1, "val_accuracy": None,
               "seconds_per_batch": elapsed / max(batches, 1)}
        if x_val is not None:
            rec["val_accuracy"] = evaluate(model, x_val, y_val)
        metrics.records.append(rec)
        emit(rec)
    return metrics
