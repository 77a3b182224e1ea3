"""Dataset ingestion: MNIST IDX files and a synthetic grid-signal generator."""

from __future__ import annotations

import gzip
import os
import struct
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""


def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.exists() and path.with_name(path.name + ".gz").exists():
        path = path.with_name(path.name + ".gz")
    try:
        with open(path, "rb") as fh:
            head = fh.read(2)
        opener = gzip.open if head == b"\x1f\x8b" else open
        with opener(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def parse_idx(raw: bytes, expected_magic: int, name: str = "idx") -> np.ndarray:
    """Decode an unsigned-byte IDX blob into an array of its declared shape."""
    if len(raw) < 4:
        raise DataError(f"{name}: truncated header, need 4 bytes, have {len(raw)}")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise DataError(f"{name}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataError(f"{name}: truncated header, missing {header - len(raw)} bytes")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header])
    need = int(np.prod(dims))
    have = len(raw) - header
    if have < need:
        raise DataError(f"{name}: truncated data, missing {need - have} bytes of {need}")
    return np.frombuffer(raw, dtype=np.uint8, count=need, offset=header).reshape(dims)


def ingest_mnist(image_file, label_file, limit: int | None = None, start: int = 0):
    """Images scaled to [0, 1] as ``(N, rows * cols)`` float64, and int labels."""
    images = parse_idx(_read_bytes(image_file), IMAGE_MAGIC, str(image_file))
    labels = parse_idx(_read_bytes(label_file), LABEL_MAGIC, str(label_file))
    if images.shape[0] != labels.shape[0]:
        raise DataError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    stop = images.shape[0] if limit is None else start + limit
    if stop > images.shape[0]:
        raise DataError(f"requested {stop} samples, file holds {images.shape[0]}")
    x = images[start:stop].reshape(stop - start, -1).astype(np.float64) / 255.0
    return x, labels[start:stop].astype(np.int64)


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def find_mnist(directory=None) -> Path | None:
    """Locate a directory holding the four MNIST IDX files (optionally gzipped).

    Looks at ``directory``, then ``$MNIST_DIR``.
    """
    for cand in (directory, os.environ.get("MNIST_DIR")):
        if not cand:
            continue
        d = Path(cand)
        if all((d / f).exists() or (d / (f + ".gz")).exists()
               for pair in MNIST_FILES.values() for f in pair):
            return d
    return None


def load_mnist(directory, train_size: int | None = None, test_size: int | None = None):
    d = find_mnist(directory)
    if d is None:
        raise DataError(f"MNIST IDX files not found in {directory!r}")
    img, lab = MNIST_FILES["train"]
    x_train, y_train = ingest_mnist(d / img, d / lab, train_size)
    img, lab = MNIST_FILES["test"]
    x_test, y_test = ingest_mnist(d / img, d / lab, test_size)
    return x_train, y_train, x_test, y_test


def synthetic_blobs(num_samples: int, side: int = 28, classes: int = 10, seed: int = 0,
                    bumps: int = 3, width: float = 2.5, noise: float = 0.1,
                    jitter: float = 1.0):
    """Seeded class-conditional images made of Gaussian bumps on a grid.

    Each class owns ``bumps`` bump centres; a sample places those bumps with a
    small random shift, adds pixel noise and clips to [0, 1].  Returns
    ``(num_samples, side * side)`` signals and labels.
    """
    rng = np.random.default_rng(seed)
    centres = rng.uniform(0.2 * side, 0.8 * side, size=(classes, bumps, 2))
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    labels = rng.integers(0, classes, size=num_samples)
    out = np.empty((num_samples, side * side))
    for s, c in enumerate(labels):
        shift = rng.normal(0.0, jitter, size=2)
        img = np.zeros((side, side))
        for cx, cy in centres[c] + shift:
            img += np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * width ** 2))
        img += noise * rng.standard_normal(img.shape)
        out[s] = np.clip(img, 0.0, 1.0).ravel()
    return out, labels.astype(np.int64)
