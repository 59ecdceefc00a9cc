"""Distance-based linear classifier.

Nodes are mapped to a latent space by ``Z = H W``; class ``k`` is represented
by a learnable vector ``c_k`` and the class probabilities of node ``i`` are a
softmax over the negated distances ``-||z_i - c_k||``. The nearest class
representation therefore always gets the highest probability.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class ClassifierModel:
    w: np.ndarray
    centers: np.ndarray

    @property
    def d(self):
        return self.w.shape[0]

    @property
    def l_prime(self):
        return self.w.shape[1]

    @property
    def k_classes(self):
        return self.centers.shape[0]

    def copy(self):
        return ClassifierModel(self.w.copy(), self.centers.copy())

    def embed(self, H):
        return np.asarray(H, dtype=float) @ self.w


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.2
    weight_decay: float = 5e-6
    max_epochs: int = 300
    early_stop_window: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.early_stop_window < 1:
            raise ValueError("early_stop_window must be at least 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class TrainHistory:
    losses: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0


def init_model(d, l_prime, k_classes, seed=0):
    """Fan-in uniform ``W`` and small Gaussian class representations."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(d)
    w = rng.uniform(-bound, bound, size=(d, l_prime))
    centers = rng.normal(0.0, 0.1, size=(k_classes, l_prime))
    return ClassifierModel(w, centers)


def _label_array(labels):
    return np.asarray(getattr(labels, "labels", labels), dtype=np.int64)


def _check_dims(model, H):
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[1] != model.d:
        raise ValueError(f"H has {H.shape[-1]} columns, model expects {model.d}")
    return H


def _center_distances(Z, centers):
    diff = Z[:, None, :] - centers[None, :, :]
    return diff, np.sqrt(np.einsum("nkl,nkl->nk", diff, diff))


def _softmax_neg(dist):
    a = -dist
    a = a - a.max(axis=1, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=1, keepdims=True)


def _nll(dist, y):
    a = -dist
    amax = a.max(axis=1, keepdims=True)
    log_z = amax[:, 0] + np.log(np.exp(a - amax).sum(axis=1))
    return float(np.mean(log_z - a[np.arange(len(y)), y]))


def forward(model, H):
    """Class probability matrix, one row per node of ``H``."""
    H = _check_dims(model, H)
    _, dist = _center_distances(H @ model.w, model.centers)
    return _softmax_neg(dist)


def loss(predictions, labels, labelled_ids):
    """Mean negative log-likelihood of the true class over ``labelled_ids``."""
    ids = np.asarray(labelled_ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("labelled set is empty")
    y = _label_array(labels)[ids]
    p = np.asarray(predictions)[ids, y]
    return float(-np.mean(np.log(p)))


def objective(model, H, labels, labelled_ids, weight_decay=0.0):
    """Training objective: loss on ``labelled_ids`` plus the L2 penalty."""
    ids = np.asarray(labelled_ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("labelled set is empty")
    H = _check_dims(model, H)
    y = _label_array(labels)[ids]
    _, dist = _center_distances(H[ids] @ model.w, model.centers)
    nll = _nll(dist, y)
    penalty = 0.5 * weight_decay * (np.sum(model.w ** 2) + np.sum(model.centers ** 2))
    return float(nll + penalty)


def _grad_rows(model, H_rows, y, weight_decay):
    Z = H_rows @ model.w
    diff, dist = _center_distances(Z, model.centers)
    p = _softmax_neg(dist)
    m = len(y)
    onehot = np.zeros_like(p)
    onehot[np.arange(m), y] = 1.0
    # dL/d(dist) = (y - p) / m; the zero-distance subgradient is 0
    g_dist = (onehot - p) / m
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(dist > 0, g_dist / dist, 0.0)
    g_z = np.einsum("nk,nkl->nl", r, diff)
    g_w = H_rows.T @ g_z + weight_decay * model.w
    g_c = -np.einsum("nk,nkl->kl", r, diff) + weight_decay * model.centers
    return g_w, g_c, _nll(dist, y)


def gradients(model, H, labels, labelled_ids, weight_decay=0.0):
    """Analytic gradient of :func:`objective` w.r.t. ``(w, centers)``."""
    ids = np.asarray(labelled_ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("labelled set is empty")
    H = _check_dims(model, H)
    y = _label_array(labels)[ids]
    g_w, g_c, _ = _grad_rows(model, H[ids], y, weight_decay)
    return g_w, g_c


def _nearest_center(Z, centers):
    _, dist = _center_distances(Z, centers)
    return np.argmin(dist, axis=1)


def _argmax_rows(P):
    # np.argmax returns the first maximum, i.e. the lowest class index
    return np.argmax(np.asarray(P), axis=1)


def predict_labels(model, H):
    return _argmax_rows(forward(model, H))


def train(model, H, labels, labelled_ids, validation_ids=(), config=TrainConfig()):
    """Full-batch Adam with early stopping on validation accuracy.

    Returns a new model holding the parameters of the epoch with the best
    validation accuracy (the earliest such epoch), plus the training history.
    Without validation nodes the final parameters are returned.
    """
    ids = np.asarray(labelled_ids, dtype=np.int64)
    val = np.asarray(validation_ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("labelled set is empty")
    if np.intersect1d(ids, val).size:
        raise ValueError("validation nodes overlap the labelled set")
    H = _check_dims(model, H)
    y_all = _label_array(labels)
    H_l, y_l = H[ids], y_all[ids]
    H_v, y_v = H[val], y_all[val]
    wd = config.weight_decay
    lr = config.learning_rate

    current = model.copy()
    m_w = np.zeros_like(current.w)
    v_w = np.zeros_like(current.w)
    m_c = np.zeros_like(current.centers)
    v_c = np.zeros_like(current.centers)
    history = TrainHistory()
    best = current.copy()
    best_acc = -1.0
    since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        g_w, g_c, nll = _grad_rows(current, H_l, y_l, wd)
        history.losses.append(nll)
        b1 = 1.0 - ADAM_BETA1 ** epoch
        b2 = 1.0 - ADAM_BETA2 ** epoch
        m_w = ADAM_BETA1 * m_w + (1 - ADAM_BETA1) * g_w
        v_w = ADAM_BETA2 * v_w + (1 - ADAM_BETA2) * g_w * g_w
        m_c = ADAM_BETA1 * m_c + (1 - ADAM_BETA1) * g_c
        v_c = ADAM_BETA2 * v_c + (1 - ADAM_BETA2) * g_c * g_c
        current.w -= lr * (m_w / b1) / (np.sqrt(v_w / b2) + ADAM_EPS)
        current.centers -= lr * (m_c / b1) / (np.sqrt(v_c / b2) + ADAM_EPS)
        history.epochs_run = epoch

        if val.size == 0:
            continue
        acc = float(np.mean(_nearest_center(H_v @ current.w, current.centers) == y_v))
        history.val_accuracy.append(acc)
        if acc > best_acc:
            best_acc = acc
            best = current.copy()
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.early_stop_window:
                break

    if val.size == 0:
        history.best_epoch = history.epochs_run
        return current, history
    return best, history


def save_model(model, path):
    """Text checkpoint: header ``d l' K``, then the rows of W, then the centers."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"{model.d} {model.l_prime} {model.k_classes}\n")
        for row in np.vstack([model.w, model.centers]):
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_model(path):
    with Path(path).open(encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    try:
        d, l_prime, k = (int(t) for t in lines[0].split())
    except (ValueError, IndexError):
        raise ValueError(f"{path}:1: header must be \"d l' K\"") from None
    if len(lines) != 1 + d + k:
        raise ValueError(f"{path}: expected {d + k} parameter rows, found {len(lines) - 1}")
    rows = []
    for lineno, ln in enumerate(lines[1:], start=2):
        vals = [float(t) for t in ln.split()]
        if len(vals) != l_prime or not np.all(np.isfinite(vals)):
            raise ValueError(f"{path}:{lineno}: expected {l_prime} finite values")
        rows.append(vals)
    arr = np.array(rows)
    return ClassifierModel(arr[:d].copy(), arr[d:].copy())


__all__ = [
    "ClassifierModel",
    "TrainConfig",
    "TrainHistory",
    "forward",
    "gradients",
    "init_model",
    "load_model",
    "loss",
    "objective",
    "predict_labels",
    "save_model",
    "train",
]
