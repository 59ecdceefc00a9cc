"""Unsupervised feature providers: simplified-GCN propagation and external embeddings."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import EMBEDDINGS_FILE, read_matrix

DEFAULT_KHOPS = 2


def normalized_adjacency(graph):
    """Sparse ``D~^-1/2 (A + I) D~^-1/2`` with self-loops on every node."""
    a_tilde = graph.adjacency_matrix() + sp.identity(graph.n, format="csr")
    inv_sqrt = 1.0 / np.sqrt(graph.degree.astype(float) + 1.0)
    scale = sp.diags(inv_sqrt)
    return (scale @ a_tilde @ scale).tocsr()


def propagate_features(graph, X, k=DEFAULT_KHOPS, operator=None):
    """Return ``S^k X`` computed as ``k`` sparse sweeps."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != graph.n:
        raise ValueError(f"feature matrix has {X.shape[0]} rows, graph has {graph.n} nodes")
    if k < 0:
        raise ValueError("propagation depth must be non-negative")
    S = normalized_adjacency(graph) if operator is None else operator
    out = X.copy()
    for _ in range(k):
        out = S @ out
    return np.asarray(out)


def load_embeddings(path, n):
    """Read an ``n x d'`` embedding matrix and check it against the node count."""
    return read_matrix(path, expected_rows=n)


@dataclass(frozen=True)
class FeatureProvider:
    """Where the unsupervised feature matrix H comes from.

    ``kind`` is ``"propagated"`` (uses ``khops``) or ``"file"`` (uses ``path``).
    """

    kind: str = "propagated"
    khops: int = DEFAULT_KHOPS
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("propagated", "file"):
            raise ValueError(f"unknown feature provider kind {self.kind!r}")
        if self.kind == "propagated" and self.khops < 0:
            raise ValueError("propagation depth must be non-negative")
        if self.kind == "file" and not self.path:
            raise ValueError("file provider needs a path")

    @classmethod
    def parse(cls, text, khops=DEFAULT_KHOPS, dataset_dir=None):
        """Parse ``propagated``, ``embeddings`` or ``file:PATH``."""
        text = text.strip()
        if text == "propagated":
            return cls("propagated", khops=khops)
        if text == "embeddings":
            if dataset_dir is None:
                raise ValueError("'embeddings' provider needs a dataset directory")
            return cls("file", path=str(Path(dataset_dir) / EMBEDDINGS_FILE))
        if text.startswith("file:"):
            path = text[len("file:"):]
            if dataset_dir is not None and not Path(path).is_absolute() and not Path(path).exists():
                candidate = Path(dataset_dir) / path
                if candidate.exists():
                    path = str(candidate)
            return cls("file", path=path)
        raise ValueError(f"unrecognised feature provider {text!r}")

    def describe(self):
        return f"propagated(k={self.khops})" if self.kind == "propagated" else f"file:{self.path}"

    def resolve(self, graph, X):
        if self.kind == "propagated":
            return propagate_features(graph, X, self.khops)
        return load_embeddings(self.path, graph.n)
