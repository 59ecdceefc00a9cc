"""K-Medoids local search with optional fixed medoids.

Both entry points work on a precomputed square distance matrix whose rows and
columns are aligned with a list of node ids. The search alternates

* assignment: every point goes to its nearest medoid (ties: lowest node id);
* update: each free medoid moves to the member of its cluster with the
  smallest summed distance to the cluster (it moves only on strict decrease);

until no medoid changes, then polishes with single medoid/non-medoid swaps so
that the returned configuration is swap-stable. Fixed medoids never move.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

MAX_SWEEPS = 100


@dataclass(frozen=True)
class ClusteringResult:
    medoids: np.ndarray
    assignment: np.ndarray
    objective: float
    iterations: int
    history: tuple = field(default=(), repr=False)


def _tol(value):
    return 1e-12 * max(1.0, abs(value))


def _assign(dist, med_pos, point_ids):
    # sort medoid columns by node id so argmin's first hit is the lowest id
    med_pos = med_pos[np.argsort(point_ids[med_pos], kind="stable")]
    sub = dist[:, med_pos]
    idx = np.argmin(sub, axis=1)
    return med_pos[idx], sub[np.arange(len(sub)), idx]


def _update(dist, med_pos, owner, fixed, point_ids):
    new = med_pos.copy()
    is_medoid = np.zeros(len(dist), dtype=bool)
    is_medoid[med_pos] = True
    for slot, m in enumerate(med_pos):
        if fixed[m]:
            continue
        members = np.flatnonzero(owner == m)
        if members.size == 0:
            continue
        cand = members[~is_medoid[members] | (members == m)]
        cand = cand[np.argsort(point_ids[cand], kind="stable")]
        cost = dist[np.ix_(cand, members)].sum(axis=1)
        current = dist[m, members].sum()
        best = int(np.argmin(cost))
        if cost[best] < current - _tol(current):
            is_medoid[m] = False
            is_medoid[cand[best]] = True
            new[slot] = cand[best]
    return new


def _best_swap(dist, med_pos, fixed, point_ids):
    """Best objective-lowering (free medoid, non-medoid) exchange, or None.

    With ``near``/``second`` the two smallest medoid distances of each point,
    swapping medoid ``m`` for ``x`` changes the objective by
    ``sum_o a[o, x] + sum_{o in C_m} (b[o, x] - a[o, x])`` where
    ``a = min(0, d(o, x) - near_o)`` and ``b = min(second_o, d(o, x)) - near_o``.
    """
    n = len(dist)
    order = np.argsort(point_ids[med_pos], kind="stable")
    med_sorted = med_pos[order]
    free_cols = np.flatnonzero(~fixed[med_sorted])
    if free_cols.size == 0:
        return None
    is_medoid = np.zeros(n, dtype=bool)
    is_medoid[med_pos] = True
    cand = np.flatnonzero(~is_medoid)
    if cand.size == 0:
        return None
    cand = cand[np.argsort(point_ids[cand], kind="stable")]

    sub = dist[:, med_sorted]
    near_col = np.argmin(sub, axis=1)
    nearest = sub[np.arange(n), near_col]
    if len(med_sorted) > 1:
        second = np.partition(sub, 1, axis=1)[:, 1]
    else:
        second = np.full(n, np.inf)
    current = float(nearest.sum())

    dc = dist[:, cand]
    a = np.minimum(dc - nearest[:, None], 0.0)
    b = np.minimum(dc, second[:, None]) - nearest[:, None]
    row_of = np.full(len(med_sorted), -1)
    row_of[free_cols] = np.arange(len(free_cols))
    rows = row_of[near_col]
    owned = np.flatnonzero(rows >= 0)
    members = np.zeros((len(free_cols), n))
    members[rows[owned], owned] = 1.0
    delta = a.sum(axis=0)[None, :] + members @ (b - a)
    flat = int(np.argmin(delta))
    row, col = divmod(flat, delta.shape[1])
    if delta[row, col] < -_tol(current):
        return med_sorted[free_cols[row]], cand[col]
    return None


def _search(dist, point_ids, init_pos, fixed):
    med_pos = np.asarray(init_pos, dtype=np.int64)
    history = []
    sweeps = 0
    swaps = 0
    while True:
        while True:
            owner, near = _assign(dist, med_pos, point_ids)
            history.append(float(near.sum()))
            new = _update(dist, med_pos, owner, fixed, point_ids)
            sweeps += 1
            if np.array_equal(np.sort(new), np.sort(med_pos)):
                break
            med_pos = new
            if sweeps >= MAX_SWEEPS:
                logger.warning("k-medoids hit the %d-sweep cap", MAX_SWEEPS)
                break
        pair = _best_swap(dist, med_pos, fixed, point_ids)
        if pair is None:
            break
        med_pos = np.where(med_pos == pair[0], pair[1], med_pos)
        swaps += 1
        if swaps >= MAX_SWEEPS * max(1, len(med_pos)):
            logger.warning("k-medoids hit the swap cap")
            break
    owner, near = _assign(dist, med_pos, point_ids)
    objective = float(near.sum())
    history.append(objective)
    return ClusteringResult(
        medoids=np.sort(point_ids[med_pos]),
        assignment=point_ids[owner],
        objective=objective,
        iterations=sweeps + swaps,
        history=tuple(history),
    )


def _check_matrix(dist, size):
    dist = np.asarray(dist, dtype=float)
    if dist.shape != (size, size):
        raise ValueError(f"distance matrix must be {size}x{size}, got {dist.shape}")
    return dist


def _restarts(dist, point_ids, fixed_pos, free_pos, k_free, seed, restarts):
    rng = np.random.default_rng(seed)
    fixed = np.zeros(len(point_ids), dtype=bool)
    fixed[fixed_pos] = True
    best = None
    for _ in range(max(1, int(restarts))):
        init = free_pos[rng.choice(len(free_pos), size=k_free, replace=False)]
        result = _search(dist, point_ids, np.concatenate([fixed_pos, init]), fixed)
        if best is None or result.objective < best.objective:
            best = result
    return best


def kmedoids(dist, point_ids, k, seed=0, restarts=1):
    """Cluster ``point_ids`` into ``k`` groups around actual points.

    ``dist[a, b]`` is the distance between ``point_ids[a]`` and
    ``point_ids[b]``. With ``restarts > 1`` the best objective over several
    seeded initialisations is returned; the first draw is the single-run one.
    """
    point_ids = np.asarray(point_ids, dtype=np.int64)
    n = len(point_ids)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    dist = _check_matrix(dist, n)
    empty = np.zeros(0, dtype=np.int64)
    return _restarts(dist, point_ids, empty, np.arange(n), k, seed, restarts)


def incremental_search(dist, labelled_prev, unlabelled, budget, seed=0, restarts=1):
    """K-Medoids over ``labelled_prev + unlabelled`` with the labelled nodes
    pinned as medoids; ``dist`` is aligned with that concatenated order."""
    labelled_prev = np.asarray(labelled_prev, dtype=np.int64)
    unlabelled = np.asarray(unlabelled, dtype=np.int64)
    if np.intersect1d(labelled_prev, unlabelled).size:
        raise ValueError("labelled and unlabelled sets overlap")
    if not 0 <= budget <= len(unlabelled):
        raise ValueError(f"budget {budget} exceeds the {len(unlabelled)} unlabelled nodes")
    point_ids = np.concatenate([labelled_prev, unlabelled])
    dist = _check_matrix(dist, len(point_ids))
    n_fixed = len(labelled_prev)
    fixed_pos = np.arange(n_fixed)
    free_pos = np.arange(n_fixed, len(point_ids))
    if budget == 0:
        fixed = np.zeros(len(point_ids), dtype=bool)
        fixed[fixed_pos] = True
        if n_fixed == 0:
            return ClusteringResult(np.zeros(0, dtype=np.int64), np.full(len(point_ids), -1), 0.0, 0)
        return _search(dist, point_ids, fixed_pos, fixed)
    return _restarts(dist, point_ids, fixed_pos, free_pos, budget, seed, restarts)


def incremental_kmedoids(dist, labelled_prev, unlabelled, budget, seed=0, restarts=1):
    """Select ``budget`` new nodes as the free medoids of an incremental run.

    Returns ``(labelled_new, unlabelled_new, selected)``; ``labelled_new``
    keeps the previous order with the selection appended.
    """
    labelled_prev = np.asarray(labelled_prev, dtype=np.int64)
    unlabelled = np.asarray(unlabelled, dtype=np.int64)
    result = incremental_search(dist, labelled_prev, unlabelled, budget, seed, restarts)
    selected = np.setdiff1d(result.medoids, labelled_prev)
    labelled_new = np.concatenate([labelled_prev, selected])
    unlabelled_new = unlabelled[~np.isin(unlabelled, selected)]
    return labelled_new, unlabelled_new, selected
