"""Node-selection strategies behind one ``select`` entry point."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import forward
from .cluster import incremental_kmedoids, kmedoids
from .features import DEFAULT_KHOPS, propagate_features
from .latent import DEFAULT_LAMBDA, alpha_schedule, build_latent_space, euclidean_matrix

STRATEGY_KINDS = ("lscale", "random", "uncertainty", "featprop", "featprop-u")


@dataclass(frozen=True)
class Strategy:
    """Selection strategy and its parameters.

    ``incremental=False`` swaps the pinned-medoid clustering of ``lscale`` for
    plain per-step K-Medoids over the unlabelled pool, and ``fixed_alpha``
    disables the decaying mix; both exist for ablations.
    """

    kind: str
    lam: float = DEFAULT_LAMBDA
    khops: int = DEFAULT_KHOPS
    incremental: bool = True
    fixed_alpha: float | None = None
    restarts: int = 1

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; choose from {STRATEGY_KINDS}")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lambda must lie in (0, 1]")
        if self.khops < 0:
            raise ValueError("khops must be non-negative")
        if self.fixed_alpha is not None and not 0.0 <= self.fixed_alpha <= 1.0:
            raise ValueError("fixed_alpha must lie in [0, 1]")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")

    @classmethod
    def from_name(cls, name, **params):
        # "lscale-plain" is the non-incremental ablation
        if name == "lscale-plain":
            return cls("lscale", incremental=False, **params)
        return cls(name, **params)

    @property
    def name(self):
        return "lscale-plain" if self.kind == "lscale" and not self.incremental else self.kind


@dataclass(frozen=True)
class PoolState:
    """Labelled/unlabelled partition of the selectable pool.

    ``labelled`` keeps acquisition order; the first ``initial_size`` entries
    are the initial pool.
    """

    labelled: np.ndarray
    unlabelled: np.ndarray
    step: int = 0
    initial_size: int = 0

    @classmethod
    def initial(cls, pool, initial_ids):
        pool = np.asarray(pool, dtype=np.int64)
        initial_ids = np.asarray(initial_ids, dtype=np.int64)
        if not np.isin(initial_ids, pool).all():
            raise ValueError("initial nodes must come from the pool")
        rest = pool[~np.isin(pool, initial_ids)]
        return cls(initial_ids, rest, 0, len(initial_ids))

    @property
    def spent(self):
        return len(self.labelled) - self.initial_size

    def advance(self, selected):
        selected = np.asarray(selected, dtype=np.int64)
        if not np.isin(selected, self.unlabelled).all():
            raise ValueError("selected nodes must come from the unlabelled pool")
        if len(np.unique(selected)) != len(selected):
            raise ValueError("duplicate selections")
        return PoolState(
            labelled=np.concatenate([self.labelled, selected]),
            unlabelled=self.unlabelled[~np.isin(self.unlabelled, selected)],
            step=self.step + 1,
            initial_size=self.initial_size,
        )


@dataclass
class SelectionContext:
    """What a strategy may look at: structure, features and the current model.

    Labels are deliberately absent.
    """

    graph: object
    X: np.ndarray
    H: np.ndarray
    model: object = None
    _propagated: dict = field(default_factory=dict, repr=False)

    def propagated(self, khops):
        if khops not in self._propagated:
            self._propagated[khops] = propagate_features(self.graph, self.X, khops)
        return self._propagated[khops]


def entropy(row):
    """Shannon entropy in nats with ``0 ln 0 = 0``."""
    p = np.asarray(row, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def entropies(P):
    P = np.asarray(P, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(P > 0, np.log(np.where(P > 0, P, 1.0)), 0.0)
    return -np.sum(P * logs, axis=1)


def current_alpha(strategy, state):
    if strategy.fixed_alpha is not None:
        return float(strategy.fixed_alpha)
    return alpha_schedule(strategy.lam, len(state.labelled))


def selection_space(strategy, state, context):
    """Feature matrix whose Euclidean distances drive selection, or ``None``
    for strategies that do not cluster."""
    if strategy.kind == "lscale":
        if context.model is None:
            raise ValueError("lscale needs a trained classifier in the context")
        Z = context.model.embed(context.H)
        return build_latent_space(context.H, Z, current_alpha(strategy, state)).combined
    if strategy.kind == "featprop":
        return context.propagated(strategy.khops)
    if strategy.kind == "featprop-u":
        return np.asarray(context.H, dtype=float)
    return None


def select(strategy, state, context, batch, seed=0):
    """Pick ``batch`` nodes from ``state.unlabelled``."""
    unlabelled = np.asarray(state.unlabelled, dtype=np.int64)
    if batch < 0 or batch > len(unlabelled):
        raise ValueError(f"batch {batch} exceeds the {len(unlabelled)} unlabelled nodes")
    if batch == 0:
        return np.zeros(0, dtype=np.int64)
    if batch == len(unlabelled):
        return np.sort(unlabelled)

    kind = strategy.kind
    if kind == "random":
        rng = np.random.default_rng(seed)
        return np.sort(rng.choice(unlabelled, size=batch, replace=False))

    if kind == "uncertainty":
        if context.model is None:
            raise ValueError("uncertainty needs a trained classifier in the context")
        ent = entropies(forward(context.model, np.asarray(context.H)[unlabelled]))
        order = np.lexsort((unlabelled, -ent))
        return np.sort(unlabelled[order[:batch]])

    space = selection_space(strategy, state, context)
    if kind == "lscale" and strategy.incremental:
        labelled = np.asarray(state.labelled, dtype=np.int64)
        ids = np.concatenate([labelled, unlabelled])
        D = euclidean_matrix(space[ids])
        _, _, selected = incremental_kmedoids(
            D, labelled, unlabelled, batch, seed=seed, restarts=strategy.restarts
        )
        return selected
    D = euclidean_matrix(space[unlabelled])
    return kmedoids(D, unlabelled, batch, seed=seed, restarts=strategy.restarts).medoids
