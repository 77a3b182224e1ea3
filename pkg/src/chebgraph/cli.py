"""``chebgraph`` command line: build-graph, coarsen, train, compare-filters, bench.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bench import run_bench, scaling_fits, write_csv
from .coarsening import coarsen_hierarchy
from .data import DataError, load_mnist, synthetic_blobs
from .graph import Graph, build_knn_graph, grid_graph, random_graph
from .io import (FormatError, read_graph, save_checkpoint, write_graph_binary,
                 write_hierarchy, write_matrix_market)
from .nn.model import FILTERS, Model, coarsening_levels, parse_architecture
from .nn.train import DivergenceError, TrainConfig, evaluate, train
from .pooling import build_tree_index
from .spectral import DenseCapError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3
GRID_REFERENCE_EDGES = 3198  # 8-NN graph of the 28x28 grid


class ConfigError(ValueError):
    pass


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    """Everything a training run depends on; round-trips through JSON."""

    dataset: str = "mnist"  # "mnist" or "synthetic"
    data_dir: str | None = None
    train_size: int = 10000
    test_size: int = 2000
    graph: str = "grid"  # "grid" or "random"
    grid_side: int = 28
    k: int = 8
    sigma2: float | None = None  # None: mean squared k-th neighbour distance
    laplacian: str = "normalized"
    random_edges: int | None = None  # None: match the grid graph
    graph_seed: int = 0
    coarsen_seed: int = 0
    arch: str = "GC10"
    filter: str = "chebyshev"
    K: int = 25
    bias: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    output: str = "runs/default"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        d = dict(d)
        tr = d.pop("train", {})
        if not isinstance(tr, dict):
            raise ConfigError("'train' must be an object")
        tknown = {f.name for f in fields(TrainConfig)}
        unknown = sorted(set(tr) - tknown)
        if unknown:
            raise ConfigError(f"unknown train keys: {unknown}")
        return cls(train=TrainConfig(**tr), **d)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> "ExperimentConfig":
        if self.dataset not in ("mnist", "synthetic"):
            raise ConfigError(f"dataset must be 'mnist' or 'synthetic', got {self.dataset!r}")
        if self.graph not in ("grid", "random"):
            raise ConfigError(f"graph must be 'grid' or 'random', got {self.graph!r}")
        if self.laplacian not in ("normalized", "combinatorial"):
            raise ConfigError(f"unknown Laplacian kind {self.laplacian!r}")
        if self.filter not in FILTERS:
            raise ConfigError(f"filter must be one of {FILTERS}")
        if self.filter == "spline" and self.K < 4:
            raise ConfigError("spline filters need K >= 4")
        if self.K < 1 or self.k < 1 or self.train_size < 1 or self.test_size < 0:
            raise ConfigError("K, k and train_size must be positive")
        try:
            parse_architecture(self.arch)
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    try:
        return ExperimentConfig.from_dict(raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# flag name -> (config attribute, lives in TrainConfig)
_OVERRIDES = {
    "dataset": ("dataset", False), "data_dir": ("data_dir", False),
    "train_size": ("train_size", False), "test_size": ("test_size", False),
    "graph": ("graph", False), "k": ("k", False), "sigma2": ("sigma2", False),
    "laplacian": ("laplacian", False), "random_edges": ("random_edges", False),
    "graph_seed": ("graph_seed", False), "coarsen_seed": ("coarsen_seed", False),
    "arch": ("arch", False), "filter": ("filter", False), "k_cheb": ("K", False),
    "out": ("output", False),
    "epochs": ("epochs", True), "batch_size": ("batch_size", True),
    "lr": ("learning_rate", True), "lr_decay": ("lr_decay", True),
    "momentum": ("momentum", True), "dropout_keep": ("dropout_keep", True),
    "weight_decay": ("weight_decay", True), "optimizer": ("optimizer", True),
    "seed": ("seed", True),
}


def resolve_config(args) -> ExperimentConfig:
    """Config file first, then every flag that was given explicitly."""
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    for flag, (attr, in_train) in _OVERRIDES.items():
        val = getattr(args, flag, None)
        if val is not None:
            setattr(cfg.train if in_train else cfg, attr, val)
    if getattr(args, "no_bias", False):
        cfg.bias = False
    return cfg.validate()


# -- experiment plumbing ------------------------------------------------------


def build_experiment_graph(cfg: ExperimentConfig) -> Graph:
    g = grid_graph(cfg.grid_side, cfg.k, cfg.sigma2)
    if cfg.graph == "random":
        edges = cfg.random_edges if cfg.random_edges is not None else g.num_edges
        g = random_graph(g.n, edges, cfg.graph_seed)
    return g


def load_dataset(cfg: ExperimentConfig):
    if cfg.dataset == "synthetic":
        x, y = synthetic_blobs(cfg.train_size + cfg.test_size, side=cfg.grid_side,
                               seed=cfg.train.seed)
        return x[:cfg.train_size], y[:cfg.train_size], x[cfg.train_size:], y[cfg.train_size:]
    if cfg.grid_side != 28:
        raise ConfigError("MNIST signals live on a 28x28 grid")
    return load_mnist(cfg.data_dir, cfg.train_size, cfg.test_size)


def provenance(cfg: ExperimentConfig, argv=None) -> dict:
    return {
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "seeds": {"train": cfg.train.seed, "graph": cfg.graph_seed,
                  "coarsening": cfg.coarsen_seed},
        "argv": list(sys.argv[1:] if argv is None else argv),
    }


def run_experiment(cfg: ExperimentConfig, out: Path, data=None, graph=None, echo=print,
                   argv=None) -> dict:
    """Train one model and write config, provenance, metrics and checkpoint to ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    (out / "provenance.json").write_text(json.dumps(provenance(cfg, argv), indent=2) + "\n")
    x_tr, y_tr, x_te, y_te = data if data is not None else load_dataset(cfg)
    g = graph if graph is not None else build_experiment_graph(cfg)
    if x_tr.shape[1] != g.n:
        raise DataError(f"signals have {x_tr.shape[1]} entries but the graph has {g.n} vertices")
    levels = coarsening_levels(parse_architecture(cfg.arch))
    h = coarsen_hierarchy(g, levels, cfg.coarsen_seed)
    model = Model(g, cfg.arch, classes=10, K=cfg.K, filter=cfg.filter,
                  laplacian_kind=cfg.laplacian, seed=cfg.train.seed, bias=cfg.bias,
                  hierarchy=h)
    t0 = time.perf_counter()
    with open(out / "metrics.jsonl", "w") as fh:
        def log(rec):
            fh.write(json.dumps(rec) + "\n")
            if "epoch" in rec:
                acc = rec["val_accuracy"]
                echo(f"epoch {rec['epoch']:3d}  test acc {acc:.4f}  "
                     f"{1e3 * rec['seconds_per_batch']:.1f} ms/batch")

        try:
            train(model, x_tr, y_tr, cfg.train, x_te if len(y_te) else None, y_te, log)
        finally:
            fh.flush()
        acc = evaluate(model, x_te, y_te)
        result = {"final_test_accuracy": acc, "train_seconds": time.perf_counter() - t0}
        fh.write(json.dumps(result) + "\n")
    save_checkpoint(model, out / "model.ckpt")
    echo(f"final test accuracy {acc:.4f}")
    return result


# -- subcommands ----------------------------------------------------------------


def _read_points(path) -> np.ndarray:
    try:
        pts = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read point cloud {path}: {exc}") from exc
    return pts


def cmd_build_graph(args) -> int:
    if args.mnist_grid == bool(args.points):
        raise UsageError("give exactly one of --points or --mnist-grid")
    if args.mnist_grid:
        g = grid_graph(28, args.k, args.sigma2)
    else:
        pts = _read_points(args.points)
        try:
            g = build_knn_graph(pts, args.k, args.sigma2)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_matrix_market(g, out.with_suffix(".mtx"))
    write_graph_binary(g, out.with_suffix(".cgr"))
    _, _, w = g.edges()
    print(f"n {g.n}")
    line = f"edges {g.num_edges}"
    if args.mnist_grid and args.k == 8:
        match = "match" if g.num_edges == GRID_REFERENCE_EDGES else "differs"
        line += f" (reference {GRID_REFERENCE_EDGES}: {match})"
    print(line)
    if w.size:
        print(f"weights min {w.min():.6g} mean {w.mean():.6g} max {w.max():.6g}")
    print(f"wrote {out.with_suffix('.mtx')} and {out.with_suffix('.cgr')}")
    return EXIT_OK


def cmd_coarsen(args) -> int:
    try:
        g = read_graph(args.graph)
    except (OSError, FormatError, ValueError) as exc:
        raise DataError(f"invalid graph file {args.graph}: {exc}") from exc
    if args.levels < 0:
        raise UsageError("--levels must be nonnegative")
    h = coarsen_hierarchy(g, args.levels, args.seed)
    idx = build_tree_index(h)
    write_hierarchy(h, args.out)
    singles = h.singleton_counts() + [0]
    fakes = idx.fake_counts()
    print("level  n  singletons  padded  fakes")
    for l, n in enumerate(h.sizes):
        print(f"{l:5d}  {n}  {singles[l]}  {idx.size(l)}  {fakes[l]}")
    print(f"padded input size m0 {idx.size(0)} (fake vertices {fakes[0]})")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    run_experiment(cfg, Path(cfg.output))
    return EXIT_OK


def cmd_compare_filters(args) -> int:
    base = resolve_config(args)
    arms = args.filters or list(FILTERS)
    for f in arms:
        if f not in FILTERS:
            raise UsageError(f"unknown filter {f!r}")
    if "spline" in arms and base.K < 4:
        raise ConfigError("spline filters need K >= 4")
    seeds = args.seeds or [base.train.seed]
    root = Path(base.output)
    data = load_dataset(base) if base.dataset == "mnist" else None
    graph = build_experiment_graph(base)
    rows = []
    for f in arms:
        for s in seeds:
            cfg = ExperimentConfig.from_dict(base.to_dict())
            cfg.filter, cfg.train.seed = f, s
            cfg.output = str(root / f"{f}_seed{s}")
            print(f"== {f} seed {s}")
            arm_data = data if data is not None else load_dataset(cfg)
            res = run_experiment(cfg, Path(cfg.output), arm_data, graph)
            rows.append({"filter": f, "seed": s, "accuracy": res["final_test_accuracy"]})
    with open(root / "comparison.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["filter", "seed", "accuracy"])
        w.writeheader()
        w.writerows(rows)
    summary = {}
    print("filter      mean acc   std     runs")
    for f in arms:
        accs = np.array([r["accuracy"] for r in rows if r["filter"] == f])
        summary[f] = {"mean": float(accs.mean()), "std": float(accs.std()), "runs": len(accs)}
        print(f"{f:10s}  {100 * accs.mean():7.2f}  {100 * accs.std():6.2f}  {len(accs)}")
    (root / "comparison.json").write_text(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    if not args.sizes:
        raise UsageError("--sizes needs at least one value")
    try:
        rows = run_bench(args.sizes, args.K, S=args.S, F_out=args.F_out, k=args.k,
                         reps=args.reps, warmup=args.warmup, threads=args.threads,
                         dense_sizes=args.dense_sizes or (), seed=args.seed)
    except DenseCapError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(rows, out)
    for r in rows:
        print(f"{r.pipeline:6s} n={r.n:6d} K={r.K:5d}  median {1e3 * r.median_s:9.3f} ms  "
              f"iqr {1e3 * r.iqr_s:7.3f} ms  reps {r.reps}")
    for key, fit in scaling_fits(rows).items():
        print(f"fit {key}: slope {fit['slope']:.3f}  R^2 {fit['r2']:.4f}")
    print(f"wrote {out}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _experiment_flags(p):
    p.add_argument("--config", help="JSON experiment config; flags override it")
    p.add_argument("--dataset", choices=["mnist", "synthetic"])
    p.add_argument("--data-dir", help="directory with the MNIST IDX files (default $MNIST_DIR)")
    p.add_argument("--train-size", type=int)
    p.add_argument("--test-size", type=int)
    p.add_argument("--graph", choices=["grid", "random"])
    p.add_argument("--k", type=int, help="neighbours per vertex in the grid graph")
    p.add_argument("--sigma2", type=float)
    p.add_argument("--laplacian", choices=["normalized", "combinatorial"])
    p.add_argument("--random-edges", type=int, help="edge count of the random graph")
    p.add_argument("--graph-seed", type=int)
    p.add_argument("--coarsen-seed", type=int)
    p.add_argument("--arch", help='e.g. "GC32-P4-GC64-P4-FC512"')
    p.add_argument("--k-cheb", type=int, help="coefficients per filter (K)")
    p.add_argument("--no-bias", action="store_true", help="drop graph-conv biases")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-decay", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--dropout-keep", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--optimizer", choices=["sgd_momentum", "adam"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="run directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chebgraph", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-graph", help="k-NN graph from points or the 28x28 grid")
    p.add_argument("--points", help="CSV file, one point per row")
    p.add_argument("--mnist-grid", action="store_true")
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--out", default="graph", help="output prefix (.mtx and .cgr written)")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("coarsen", help="Graclus hierarchy and tree-index report")
    p.add_argument("graph", help="Matrix Market or CGR1 graph file")
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="hierarchy.txt")
    p.set_defaults(func=cmd_coarsen)

    p = sub.add_parser("train", help="train one model")
    _experiment_flags(p)
    p.add_argument("--filter", choices=list(FILTERS))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare-filters", help="train each filter family on identical data")
    _experiment_flags(p)
    p.add_argument("--filters", nargs="+", help=f"subset of {', '.join(FILTERS)}")
    p.add_argument("--seeds", type=int, nargs="+")
    p.set_defaults(func=cmd_compare_filters, filter=None)

    p = sub.add_parser("bench", help="filtering time against graph size")
    p.add_argument("--sizes", type=int, nargs="*", default=[1000, 2000, 4000, 8000])
    p.add_argument("--K", type=int, nargs="+", default=[25])
    p.add_argument("--S", type=int, default=100)
    p.add_argument("--F-out", type=int, default=32)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--dense-sizes", type=int, nargs="*", default=[])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="bench.csv")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, DenseCapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
