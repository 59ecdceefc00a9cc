"""Graph and dataset representation, text-format ingestion and data splits.

A dataset directory holds three UTF-8 text files::

    graph.edges    one undirected edge "u v" per line, '#' starts a comment
    features.txt   header "n d", then n rows of d reals
    labels.txt     n lines, one integer class id per line

and optionally ``embeddings.txt`` in the same matrix format as the features.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

EDGES_FILE = "graph.edges"
FEATURES_FILE = "features.txt"
LABELS_FILE = "labels.txt"
EMBEDDINGS_FILE = "embeddings.txt"


class DatasetError(ValueError):
    """Malformed or inconsistent dataset input."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class Graph:
    """Immutable undirected simple graph on nodes ``0..n-1``.

    ``edges`` is an ``(m, 2)`` int array with ``u < v`` in every row, sorted
    lexicographically. Self-loops are never stored.
    """

    n: int
    edges: np.ndarray
    adjacency: tuple = field(repr=False)
    degree: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(cls, n, pairs):
        n = int(n)
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
            raise DatasetError(f"edge endpoint out of range for n={n}")
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        pairs = np.sort(pairs, axis=1)
        pairs = np.unique(pairs, axis=0) if len(pairs) else pairs.reshape(0, 2)
        pairs.setflags(write=False)

        both = np.concatenate([pairs, pairs[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        degree = np.bincount(both[:, 0], minlength=n).astype(np.int64)
        offsets = np.concatenate([[0], np.cumsum(degree)])
        nbrs = both[:, 1]
        adjacency = tuple(nbrs[offsets[u]:offsets[u + 1]] for u in range(n))
        for row in adjacency:
            row.setflags(write=False)
        degree.setflags(write=False)
        return cls(n=n, edges=pairs, adjacency=adjacency, degree=degree)

    @property
    def num_edges(self):
        return len(self.edges)

    def neighbors(self, u):
        return self.adjacency[u]

    def adjacency_matrix(self):
        """Symmetric 0/1 adjacency as a CSR matrix (no self-loops)."""
        u, v = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        data = np.ones(len(rows))
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))


@dataclass(frozen=True)
class LabelSet:
    labels: np.ndarray
    k: int

    @classmethod
    def from_array(cls, labels):
        labels = np.asarray(labels, dtype=np.int64).copy()
        if labels.ndim != 1 or len(labels) == 0:
            raise DatasetError("labels must be a non-empty 1-D sequence")
        if labels.min() < 0:
            raise DatasetError("class indices must be non-negative")
        present = np.unique(labels)
        if present[-1] != len(present) - 1:
            raise DatasetError("class indices must be dense")
        labels.setflags(write=False)
        return cls(labels=labels, k=len(present))

    def __len__(self):
        return len(self.labels)

    def one_hot(self):
        out = np.zeros((len(self.labels), self.k))
        out[np.arange(len(self.labels)), self.labels] = 1.0
        return out


@dataclass(frozen=True)
class DataSplit:
    test: np.ndarray
    validation: np.ndarray
    pool: np.ndarray

    def check(self, n):
        allnodes = np.concatenate([self.test, self.validation, self.pool])
        if len(allnodes) != n or len(np.unique(allnodes)) != n:
            raise ValueError("split is not a partition of the node set")


def _parse_matrix(path, expected_rows=None):
    path = Path(path)
    if not path.exists():
        raise DatasetError("missing file", path)
    with path.open(encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header_at = None
    for i, raw in enumerate(lines):
        if raw.strip() and not raw.lstrip().startswith("#"):
            header_at = i
            break
    if header_at is None:
        raise DatasetError("empty matrix file", path)
    head = lines[header_at].split()
    try:
        rows, cols = (int(t) for t in head)
    except ValueError:
        raise DatasetError("header must be 'rows cols'", path, header_at + 1) from None
    if expected_rows is not None and rows != expected_rows:
        raise DatasetError(
            f"header declares {rows} rows, expected {expected_rows}", path, header_at + 1
        )
    fast = _fast_rows(lines[header_at + 1:], rows, cols)
    if fast is not None:
        return fast
    out = np.empty((rows, cols))
    r = 0
    for i in range(header_at + 1, len(lines)):
        raw = lines[i].strip()
        if not raw or raw.startswith("#"):
            continue
        if r >= rows:
            raise DatasetError(f"more than {rows} data rows", path, i + 1)
        tokens = raw.split()
        if len(tokens) != cols:
            raise DatasetError(f"expected {cols} values, found {len(tokens)}", path, i + 1)
        try:
            vals = [float(t) for t in tokens]
        except ValueError:
            raise DatasetError("unparseable number", path, i + 1) from None
        if not all(math.isfinite(x) for x in vals):
            raise DatasetError("non-finite value", path, i + 1)
        out[r] = vals
        r += 1
    if r != rows:
        raise DatasetError(f"expected {rows} data rows, found {r}", path)
    return out


def _fast_rows(lines, rows, cols):
    """Bulk parse; None whenever anything looks off, so the line-by-line
    parser can report the exact problem."""
    body = [ln.split() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if len(body) != rows or any(len(tokens) != cols for tokens in body):
        return None
    try:
        flat = np.array([t for tokens in body for t in tokens], dtype=float)
    except ValueError:
        return None
    if not np.isfinite(flat).all():
        return None
    return flat.reshape(rows, cols)


def read_matrix(path, expected_rows=None):
    """Read a dense matrix in the ``n d`` header text format."""
    return _parse_matrix(path, expected_rows)


def write_matrix(path, matrix):
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ValueError("matrix must be 2-D")
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"{matrix.shape[0]} {matrix.shape[1]}\n")
        for row in matrix:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def read_edges(path, n):
    path = Path(path)
    if not path.exists():
        raise DatasetError("missing file", path)
    pairs = []
    loops = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.split("#", 1)[0].strip()
            if not raw:
                continue
            tokens = raw.split()
            if len(tokens) != 2:
                raise DatasetError("expected 'u v'", path, lineno)
            try:
                u, v = int(tokens[0]), int(tokens[1])
            except ValueError:
                raise DatasetError("node ids must be integers", path, lineno) from None
            if not (0 <= u < n and 0 <= v < n):
                raise DatasetError(f"node id out of range [0, {n})", path, lineno)
            if u == v:
                loops += 1
                continue
            pairs.append((u, v))
    if loops:
        logger.warning("%s: dropped %d self-loop line(s)", path, loops)
    return Graph.from_edges(n, pairs)


def read_labels(path, n):
    path = Path(path)
    if not path.exists():
        raise DatasetError("missing file", path)
    values = []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw or raw.startswith("#"):
                continue
            try:
                values.append(int(raw))
            except ValueError:
                raise DatasetError("class id must be an integer", path, lineno) from None
            if values[-1] < 0:
                raise DatasetError("class id must be non-negative", path, lineno)
    if len(values) != n:
        raise DatasetError(f"expected {n} labels, found {len(values)}", path)
    try:
        return LabelSet.from_array(values)
    except DatasetError as exc:
        raise DatasetError(str(exc), path) from None


def load_dataset(directory):
    """Load ``(graph, features, labels)`` from a dataset directory.

    The node count comes from the feature header; edges and labels are
    validated against it.
    """
    directory = Path(directory)
    features = read_matrix(directory / FEATURES_FILE)
    n = features.shape[0]
    labels = read_labels(directory / LABELS_FILE, n)
    graph = read_edges(directory / EDGES_FILE, n)
    return graph, features, labels


def write_dataset(directory, graph, features, labels, embeddings=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    features = np.asarray(features)
    if features.shape[0] != graph.n:
        raise ValueError("feature rows do not match graph node count")
    with (directory / EDGES_FILE).open("w", encoding="utf-8") as fh:
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")
    write_matrix(directory / FEATURES_FILE, features)
    label_values = labels.labels if isinstance(labels, LabelSet) else np.asarray(labels)
    with (directory / LABELS_FILE).open("w", encoding="utf-8") as fh:
        for y in label_values:
            fh.write(f"{int(y)}\n")
    if embeddings is not None:
        write_matrix(directory / EMBEDDINGS_FILE, embeddings)


def make_split(graph, labels, test_fraction=0.2, validation_size=500, seed=0, test_size=None):
    """Seeded random partition of the nodes into test, validation and pool.

    ``test_size`` (an absolute count, e.g. 1000 for the citation graphs)
    takes precedence over ``test_fraction``.
    """
    n = graph.n if isinstance(graph, Graph) else int(graph)
    if labels is not None and len(labels) != n:
        raise ValueError("label count does not match graph")
    if test_size is None:
        if not 0.0 <= test_fraction < 1.0:
            raise ValueError("test_fraction must lie in [0, 1)")
        # round first so 0.2 * 100 does not ceil to 21
        n_test = math.ceil(round(test_fraction * n, 9))
    else:
        n_test = int(test_size)
    if n_test < 0 or validation_size < 0 or validation_size >= n - n_test:
        raise ValueError(
            f"infeasible split: n={n}, test={n_test}, validation={validation_size}"
        )
    perm = np.random.default_rng(seed).permutation(n)
    test = np.sort(perm[:n_test])
    validation = np.sort(perm[n_test:n_test + validation_size])
    pool = np.sort(perm[n_test + validation_size:])
    return DataSplit(test=test, validation=validation, pool=pool)
