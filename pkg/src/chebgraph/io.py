"""File formats: graphs, coarsening hierarchies, model checkpoints.

Binary graph (little-endian)::

    b"CGR1" | n: u64 | nnz: u64 | row_offsets: (n+1) x u64
            | col_indices: nnz x u64 | weights: nnz x f64

Checkpoint (little-endian)::

    b"CGNN" | len: u32 | architecture: utf-8 | seed: i64 | count: u32
    then per array: layer: u32 | len: u32 | name: utf-8 | ndim: u32
                    | dims: ndim x u64 | data: row-major f64
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .coarsening import CoarseningHierarchy
from .graph import Graph

GRAPH_MAGIC = b"CGR1"
CKPT_MAGIC = b"CGNN"


class FormatError(ValueError):
    pass


# -- graphs -----------------------------------------------------------------


def write_matrix_market(g: Graph, path):
    scipy.io.mmwrite(str(path), g.csr, field="real", symmetry="symmetric")


def read_matrix_market(path) -> Graph:
    try:
        m = scipy.io.mmread(str(path))
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read Matrix Market file {path}: {exc}") from exc
    return Graph.from_scipy(sp.csr_matrix(m))


def write_graph_binary(g: Graph, path):
    with open(path, "wb") as fh:
        fh.write(GRAPH_MAGIC)
        fh.write(struct.pack("<QQ", g.n, g.nnz))
        fh.write(g.row_offsets.astype("<u8").tobytes())
        fh.write(g.col_indices.astype("<u8").tobytes())
        fh.write(g.weights.astype("<f8").tobytes())


def read_graph_binary(path) -> Graph:
    raw = Path(path).read_bytes()
    if raw[:4] != GRAPH_MAGIC:
        raise FormatError(f"{path}: not a CGR1 graph file")
    if len(raw) < 20:
        raise FormatError(f"{path}: truncated header")
    n, nnz = struct.unpack("<QQ", raw[4:20])
    need = 20 + 8 * (n + 1) + 16 * nnz
    if len(raw) != need:
        raise FormatError(f"{path}: expected {need} bytes, found {len(raw)}")
    off = 20
    offsets = np.frombuffer(raw, "<u8", n + 1, off)
    off += 8 * (n + 1)
    cols = np.frombuffer(raw, "<u8", nnz, off)
    off += 8 * nnz
    weights = np.frombuffer(raw, "<f8", nnz, off)
    return Graph(int(n), offsets.astype(np.int64), cols.astype(np.int64), weights.copy())


def read_graph(path) -> Graph:
    """Dispatch on content: CGR1 binary or Matrix Market text."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == GRAPH_MAGIC:
        return read_graph_binary(path)
    return read_matrix_market(path)


# -- hierarchies --------------------------------------------------------------


def write_hierarchy(h: CoarseningHierarchy, path):
    """Plain-text dump: per level the vertex count, edge list and parent map."""
    lines = ["chebgraph-hierarchy 1", f"seed {h.seed}", f"levels {h.num_levels}"]
    for l, g in enumerate(h.graphs):
        i, j, w = g.edges()
        lines.append(f"level {l} {g.n} {i.size}")
        lines.extend(f"{a} {b} {c!r}" for a, b, c in zip(i.tolist(), j.tolist(), w.tolist()))
        if l < len(h.parents):
            lines.append("parent " + " ".join(map(str, h.parents[l].tolist())))
    Path(path).write_text("\n".join(lines) + "\n")


def read_hierarchy(path) -> CoarseningHierarchy:
    lines = Path(path).read_text().splitlines()
    try:
        if lines[0] != "chebgraph-hierarchy 1":
            raise FormatError(f"{path}: not a hierarchy file")
        seed = lines[1].split()[1]
        seed = None if seed == "None" else int(seed)
        count = int(lines[2].split()[1])
        pos, graphs, parents = 3, [], []
        for l in range(count):
            tag, lev, n, ne = lines[pos].split()
            if tag != "level" or int(lev) != l:
                raise FormatError(f"{path}: expected level {l} at line {pos + 1}")
            n, ne = int(n), int(ne)
            rows = [lines[pos + 1 + k].split() for k in range(ne)]
            pos += 1 + ne
            edges = np.array([(int(a), int(b)) for a, b, _ in rows], dtype=np.int64).reshape(-1, 2)
            weights = np.array([float(c) for _, _, c in rows])
            graphs.append(Graph.from_edges(n, edges, weights))
            if l < count - 1:
                parts = lines[pos].split()
                if parts[0] != "parent":
                    raise FormatError(f"{path}: expected parent map at line {pos + 1}")
                parents.append(np.array(parts[1:], dtype=np.int64))
                pos += 1
    except (IndexError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: malformed hierarchy file ({exc})") from exc
    return CoarseningHierarchy(graphs, parents, seed)


# -- checkpoints ------------------------------------------------------------


def save_checkpoint(model, path):
    arrays = list(model.parameters())
    arch = model.arch.encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(arch)) + arch)
        fh.write(struct.pack("<qI", model.seed, len(arrays)))
        for layer, name, arr in arrays:
            bname = name.encode()
            fh.write(struct.pack("<II", layer, len(bname)) + bname)
            fh.write(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_checkpoint(path):
    """``(architecture, seed, [(layer, name, array), ...])``."""
    raw = Path(path).read_bytes()
    if raw[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: not a CGNN checkpoint")
    try:
        off = 4
        (alen,) = struct.unpack_from("<I", raw, off)
        off += 4
        arch = raw[off:off + alen].decode()
        off += alen
        seed, count = struct.unpack_from("<qI", raw, off)
        off += 12
        out = []
        for _ in range(count):
            layer, nlen = struct.unpack_from("<II", raw, off)
            off += 8
            name = raw[off:off + nlen].decode()
            off += nlen
            (ndim,) = struct.unpack_from("<I", raw, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}Q", raw, off)
            off += 8 * ndim
            size = int(np.prod(shape))
            if off + 8 * size > len(raw):
                raise FormatError(f"{path}: truncated array {name!r}")
            arr = np.frombuffer(raw, "<f8", size, off).reshape(shape).copy()
            off += 8 * size
            out.append((layer, name, arr))
    except struct.error as exc:
        raise FormatError(f"{path}: truncated checkpoint") from exc
    return arch, seed, out


def load_checkpoint(model, path):
    """Copy checkpointed parameters into a model built with the same architecture."""
    arch, _, arrays = read_checkpoint(path)
    if arch != model.arch:
        raise FormatError(f"checkpoint architecture {arch!r} != model {model.arch!r}")
    for layer, name, arr in arrays:
        target = model.layers[layer].params[name]
        if target.shape != arr.shape:
            raise FormatError(f"shape mismatch for layer {layer} {name}")
        target[...] = arr
    return model
