"""The selection latent space: normalized unsupervised and supervised features
mixed by a weight that decays with the number of labelled nodes."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA = 0.99


def l2_normalize_rows(M):
    """Scale each nonzero row to unit Euclidean norm; zero rows pass through."""
    M = np.asarray(M, dtype=float)
    norms = np.linalg.norm(M, axis=1)
    zero = norms == 0
    if zero.any():
        logger.debug("l2_normalize_rows: %d zero row(s) left unchanged", int(zero.sum()))
    safe = np.where(zero, 1.0, norms)
    return M / safe[:, None]


def alpha_schedule(lam, labelled_count):
    """Mixing weight ``lam ** labelled_count``."""
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lambda must lie in (0, 1], got {lam}")
    if labelled_count < 0:
        raise ValueError("labelled_count must be non-negative")
    return float(lam) ** int(labelled_count)


@dataclass(frozen=True)
class LatentSpace:
    h_norm: np.ndarray
    z_norm: np.ndarray
    alpha: float
    combined: np.ndarray

    @property
    def n(self):
        return self.combined.shape[0]


def build_latent_space(H, Z, alpha):
    H = np.asarray(H, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if H.shape[0] != Z.shape[0]:
        raise ValueError(f"H has {H.shape[0]} rows but Z has {Z.shape[0]}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    h_norm = l2_normalize_rows(H)
    z_norm = l2_normalize_rows(Z)
    combined = np.hstack([alpha * h_norm, (1.0 - alpha) * z_norm])
    return LatentSpace(h_norm=h_norm, z_norm=z_norm, alpha=float(alpha), combined=combined)


def distance(space, i, j):
    diff = space.combined[i] - space.combined[j]
    return float(np.sqrt(np.dot(diff, diff)))


# squared distances below this fraction of the squared row norms are
# recomputed from explicit differences to avoid cancellation
_REFINE_RATIO = 1e-4


def euclidean_matrix(points):
    """All-pairs Euclidean distances of the rows of ``points``."""
    pts = np.asarray(points, dtype=float)
    sq = np.einsum("ij,ij->i", pts, pts)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
    scale = sq[:, None] + sq[None, :]
    rows, cols = np.nonzero(d2 <= _REFINE_RATIO * scale)
    keep = rows < cols
    rows, cols = rows[keep], cols[keep]
    if rows.size:
        diff = pts[rows] - pts[cols]
        exact = np.einsum("ij,ij->i", diff, diff)
        d2[rows, cols] = exact
        d2[cols, rows] = exact
    np.maximum(d2, 0.0, out=d2)
    D = np.sqrt(d2)
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D


def pairwise_distances(space, ids):
    """Distance matrix between the rows ``ids`` of the combined space.

    ``space`` may also be a plain feature matrix.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("ids must be non-empty")
    pts = space.combined[ids] if isinstance(space, LatentSpace) else np.asarray(space)[ids]
    return euclidean_matrix(pts)
