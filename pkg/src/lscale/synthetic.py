"""Synthetic attributed graphs: stochastic block model with Gaussian-blob attributes."""
from __future__ import annotations

import numpy as np

from .graph import Graph, LabelSet


def simplex_centers(k, dim, spacing):
    """``k`` points in ``dim`` dimensions with all pairwise distances ``spacing``."""
    if k > dim:
        raise ValueError("need dim >= number of blocks")
    return np.eye(k, dim) * (spacing / np.sqrt(2.0))


def sbm_dataset(block_sizes=(100, 100, 100), p_in=0.10, p_out=0.01, dim=8,
                center_distance=2.0, noise=1.0, seed=0):
    """Return ``(graph, X, labels)``; block ``b`` is class ``b``."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(block_sizes)), block_sizes)
    n = len(labels)
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, p_in, p_out)
    keep = rng.random(len(iu)) < prob
    graph = Graph.from_edges(n, np.stack([iu[keep], ju[keep]], axis=1))
    centers = simplex_centers(len(block_sizes), dim, center_distance)
    X = centers[labels] + noise * rng.standard_normal((n, dim))
    return graph, X, LabelSet.from_array(labels)


def citation_like_dataset(n=2708, n_classes=7, dim=1433, n_edges=5429, emb_dim=512,
                          homophily=0.8, words_per_node=18, seed=0):
    """Cora-sized stand-in: sparse binary bag-of-words attributes, homophilous
    edges and a dense embedding matrix (random projection of propagated
    attributes). Returns ``(graph, X, labels, embeddings)``."""
    from .features import propagate_features

    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.full(n_classes, 5.0))
    labels = rng.choice(n_classes, size=n, p=weights)
    labels[:n_classes] = np.arange(n_classes)
    by_class = [np.flatnonzero(labels == c) for c in range(n_classes)]

    src = rng.integers(0, n, size=n_edges * 2)
    same = rng.random(len(src)) < homophily
    dst = rng.integers(0, n, size=len(src))
    for i in np.flatnonzero(same):
        members = by_class[labels[src[i]]]
        dst[i] = members[rng.integers(len(members))]
    pairs = np.stack([src, dst], axis=1)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    graph = Graph.from_edges(n, pairs)
    if graph.num_edges > n_edges:
        keep = rng.choice(graph.num_edges, size=n_edges, replace=False)
        graph = Graph.from_edges(n, graph.edges[keep])

    topic = rng.dirichlet(np.full(dim, 0.05), size=n_classes)
    shared = rng.dirichlet(np.full(dim, 1.0))
    X = np.zeros((n, dim))
    for i in range(n):
        mix = 0.6 * topic[labels[i]] + 0.4 * shared
        words = rng.choice(dim, size=words_per_node, p=mix / mix.sum())
        X[i, words] = 1.0
    proj = rng.standard_normal((dim, emb_dim)) / np.sqrt(dim)
    emb = np.tanh(propagate_features(graph, X, 2) @ proj * 4.0)
    return graph, X, LabelSet.from_array(labels), emb
