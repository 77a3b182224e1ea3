"""Runtime scaling of sparse Chebyshev filtering against the dense Fourier pipeline."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .chebyshev import apply_filter_bank
from .graph import build_knn_graph, normalized_laplacian, scale_laplacian
from .spectral import DENSE_CAP, DenseCapError, eigendecompose


@dataclass
class Timing:
    pipeline: str  # "sparse" or "dense"
    n: int
    K: int
    S: int
    F_out: int
    edges: int
    reps: int
    warmup: int
    threads: int
    median_s: float
    iqr_s: float
    min_s: float
    max_s: float


def time_call(fn, reps: int = 20, warmup: int = 3) -> np.ndarray:
    if reps < 1:
        raise ValueError("need at least one timed repetition")
    for _ in range(warmup):
        fn()
    out = np.empty(reps)
    for r in range(reps):
        t0 = time.perf_counter()
        fn()
        out[r] = time.perf_counter() - t0
    return out


def _summary(samples):
    q1, med, q3 = np.percentile(samples, [25, 50, 75])
    return dict(median_s=float(med), iqr_s=float(q3 - q1),
                min_s=float(samples.min()), max_s=float(samples.max()))


def bench_graph(n: int, k: int = 8, seed: int = 0):
    """k-NN graph on ``n`` uniform points in the unit square, so |E| grows like n."""
    pts = np.random.default_rng(seed).random((n, 2))
    return build_knn_graph(pts, k)


def dense_filter(U, response, x):
    """Fourier-domain filtering ``U diag(h) U^T x`` for a bank of responses.

    ``response`` has shape ``(F_out, n)`` and ``x`` shape ``(S, n)``.
    """
    xh = U.T @ x.T  # (n, S)
    yh = response.T[:, None, :] * xh[:, :, None]  # (n, S, F_out)
    n, S, F = yh.shape
    return (U @ yh.reshape(n, S * F)).reshape(n, S, F)


def run_bench(sizes, Ks=(25,), S: int = 100, F_out: int = 32, k: int = 8, reps: int = 20,
              warmup: int = 3, threads: int = 1, dense_sizes=(), seed: int = 0,
              dense_cap: int = DENSE_CAP) -> list[Timing]:
    """Time one filtering pass per (pipeline, n, K).

    Repetitions are interleaved across all cases rather than run back to back,
    so transient outside load spreads over every size instead of skewing one.
    """
    sizes, Ks = list(sizes), list(Ks)
    if not sizes and not list(dense_sizes):
        raise ValueError("empty size list")
    if not Ks:
        raise ValueError("empty K list")
    if reps < 1:
        raise ValueError("need at least one timed repetition")
    for n in dense_sizes:
        if n > dense_cap:
            raise DenseCapError(f"n={n} exceeds the dense cap {dense_cap}")
    rng = np.random.default_rng(seed)
    cases = []  # (pipeline, n, K, edges, fn)
    for n in sizes:
        g = bench_graph(n, k, seed)
        Lt = scale_laplacian(normalized_laplacian(g), 2.0)
        x = rng.standard_normal((S, n, 1))
        for K in Ks:
            theta = rng.standard_normal((1, F_out, K))
            cases.append(("sparse", n, K, g.num_edges,
                          lambda Lt=Lt, theta=theta, x=x: apply_filter_bank(Lt, theta, x)))
    for n in dense_sizes:
        g = bench_graph(n, k, seed)
        U = eigendecompose(normalized_laplacian(g), dense_cap).U
        x = rng.standard_normal((S, n))
        h = rng.standard_normal((F_out, n))
        cases.append(("dense", n, n, g.num_edges, lambda U=U, h=h, x=x: dense_filter(U, h, x)))
    with threadpool_limits(limits=threads):
        for case in cases:
            for _ in range(warmup):
                case[4]()
        # round-robin over cases, so a burst of outside load hits every size alike
        samples = np.stack([np.concatenate([time_call(case[4], 1, 0) for case in cases])
                            for _ in range(reps)])
    return [Timing(p, n, K, S, F_out, e, reps, warmup, threads, **_summary(samples[:, c]))
            for c, (p, n, K, e, _) in enumerate(cases)]


def loglog_fit(x, y):
    """Least-squares slope, intercept and R^2 of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    if lx.size < 2:
        raise ValueError("need at least two points for a fit")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def scaling_fits(rows: list[Timing]) -> dict:
    """Slope of median time vs n per (pipeline, K) series with at least two sizes."""
    series: dict = {}
    for r in rows:
        key = r.pipeline if r.pipeline == "dense" else f"sparse_K{r.K}"
        series.setdefault(key, []).append((r.n, r.median_s))
    fits = {}
    for key, pts in series.items():
        if len(pts) >= 2:
            ns, ts = zip(*sorted(pts))
            slope, _, r2 = loglog_fit(ns, ts)
            fits[key] = {"slope": slope, "r2": r2, "sizes": list(ns)}
    return fits


def write_csv(rows: list[Timing], path):
    fields = list(Timing.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))
