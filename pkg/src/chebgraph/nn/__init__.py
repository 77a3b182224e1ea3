from .model import FC, GC, P, Model, SoftmaxOut, loss, loss_and_grads, parse_architecture, softmax
from .train import Adam, DivergenceError, Metrics, SGDMomentum, TrainConfig, evaluate, train

__all__ = [
    "FC", "GC", "P", "SoftmaxOut", "Model", "parse_architecture", "softmax", "loss",
    "loss_and_grads", "TrainConfig", "Metrics", "SGDMomentum", "Adam", "DivergenceError",
    "train", "evaluate",
]
