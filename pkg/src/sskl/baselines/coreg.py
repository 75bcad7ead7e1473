"""Co-training regressors: two kNN learners with different Minkowski orders.

Each round both learners look at the same random pool of unlabeled points.
A learner pseudo-labels every candidate with its own prediction and scores it
by how much adding it would reduce the leave-one-out squared error over the
learner's current labeled set. The best candidate with a positive reduction
is handed to the *other* learner. Training stops when neither learner finds
an improving candidate, or after ``max_rounds``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .knn import knn_predict_many, minkowski_distances


@dataclass(frozen=True)
class CoregConfig:
    k: int = 3
    metric_orders: tuple = (2, 5)
    pool_size: int = 100
    max_rounds: int = 100

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if len(self.metric_orders) != 2 or self.metric_orders[0] == self.metric_orders[1]:
            raise ValueError("need two distinct metric orders")


def _loo_stats(X, y, k, order):
    """Per-point LOO neighbour sums for a labeled set.

    Returns ``(k_eff, sums, kth_dist, kth_y)`` where ``sums[i]`` is the target
    sum over the ``k_eff`` nearest other points of ``i``.
    """
    n = y.size
    dist = minkowski_distances(X, X, order)
    np.fill_diagonal(dist, np.inf)
    k_eff = min(k, n - 1)
    if k_eff == 0:
        return 0, np.zeros(n), np.full(n, np.inf), np.zeros(n)
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :k_eff]
    rows = np.arange(n)
    kth = nearest[:, -1]
    return k_eff, y[nearest].sum(1), dist[rows, kth], y[kth]


def loo_error(X, y, k: int, order: float) -> float:
    """Sum of squared leave-one-out kNN errors over the labeled set."""
    y = np.asarray(y, dtype=np.float64)
    k_eff, sums, _, _ = _loo_stats(np.asarray(X, dtype=np.float64), y, k, order)
    if k_eff == 0:
        return float(np.sum(y ** 2))
    return float(np.sum((y - sums / k_eff) ** 2))


def loo_improvements(X, y, k: int, order: float, candidates, candidate_labels) -> np.ndarray:
    """Reduction in ``loo_error`` over the original points when each candidate is added.

    A candidate is appended after all existing points, so on a distance tie it
    loses to the existing neighbour.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    candidates = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    candidate_labels = np.asarray(candidate_labels, dtype=np.float64)
    n = y.size
    k_eff, sums, kth_dist, kth_y = _loo_stats(X, y, k, order)
    base = loo_error(X, y, k, order)
    to_cand = minkowski_distances(X, candidates, order)  # n x P
    if k_eff < min(k, n):
        # fewer than k other points: the candidate always joins the neighbourhood
        pred = (sums[:, None] + candidate_labels[None, :]) / (k_eff + 1)
    else:
        enters = to_cand < kth_dist[:, None]
        swapped = (sums - kth_y)[:, None] + candidate_labels[None, :]
        pred = np.where(enters, swapped, sums[:, None]) / k_eff
    after = ((y[:, None] - pred) ** 2).sum(0)
    return base - after


@dataclass
class CoregLearner:
    X: np.ndarray
    y: np.ndarray
    order: float
    k: int

    def predict(self, queries) -> np.ndarray:
        return knn_predict_many(self.X, self.y, queries, self.k, self.order)


@dataclass
class CoregModel:
    learners: list
    history: list = field(default_factory=list)

    @property
    def rounds(self) -> int:
        return len({h["round"] for h in self.history})

    def predict(self, queries) -> np.ndarray:
        a, b = (lrn.predict(queries) for lrn in self.learners)
        return 0.5 * (a + b)


def coreg_train(config: CoregConfig, X_L, y_L, X_U, seed: int = 0) -> CoregModel:
    X_L = np.asarray(X_L, dtype=np.float64)
    y_L = np.asarray(y_L, dtype=np.float64).ravel()
    X_U = np.asarray(X_U, dtype=np.float64).reshape(-1, X_L.shape[1])
    rng = np.random.default_rng(seed)
    learners = [CoregLearner(X_L.copy(), y_L.copy(), order, config.k) for order in config.metric_orders]
    remaining = np.arange(X_U.shape[0])
    history = []
    for rnd in range(config.max_rounds):
        if remaining.size == 0:
            break
        pool = rng.choice(remaining, size=min(config.pool_size, remaining.size), replace=False)
        picks = []
        for j, lrn in enumerate(learners):
            labels = lrn.predict(X_U[pool])
            gain = loo_improvements(lrn.X, lrn.y, lrn.k, lrn.order, X_U[pool], labels)
            best = int(np.argmax(gain))
            if gain[best] > 0:
                before = loo_error(lrn.X, lrn.y, lrn.k, lrn.order)
                picks.append({"round": rnd, "learner": j, "index": int(pool[best]), "label": float(labels[best]),
                              "loo_before": before, "loo_after": before - float(gain[best])})
        if not picks:
            break
        # both learners chose from the same state; apply the hand-offs together
        for p in picks:
            other = learners[1 - p["learner"]]
            other.X = np.vstack([other.X, X_U[p["index"]]])
            other.y = np.append(other.y, p["label"])
        taken = {p["index"] for p in picks}
        remaining = remaining[~np.isin(remaining, list(taken))]
        history.extend(picks)
    return CoregModel(learners, history)
