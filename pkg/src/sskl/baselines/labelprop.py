"""Label propagation for real-valued targets on a fully connected RBF graph."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import rmse
from .knn import knn_predict_many


@dataclass(frozen=True)
class LabelPropConfig:
    # multiples of the median pairwise distance among the labeled points
    rbf_scale_grid: tuple = (0.25, 0.5, 1.0, 2.0)
    max_unlabeled: int = 20000
    tol: float = 1e-6
    max_iters: int = 1000
    init_knn_k: int = 5

    def __post_init__(self):
        if self.max_unlabeled < 1:
            raise ValueError("max_unlabeled must be at least 1")


@dataclass
class Propagation:
    predictions: np.ndarray
    iterations: int
    converged: bool
    changes: list = field(default_factory=list)  # max-abs change of the unlabeled block per iteration
    labeled_values: np.ndarray | None = None


def transition_matrix(X, scale: float) -> np.ndarray:
    """Row-stochastic RBF weights without self loops.

    Each row is shifted by its smallest off-diagonal squared distance before
    exponentiating; row normalization cancels the shift and distant points
    no longer underflow to an all-zero row.
    """
    X = np.asarray(X, dtype=np.float64)
    sq = (X * X).sum(1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    np.fill_diagonal(d2, np.inf)
    d2 -= d2.min(1, keepdims=True)
    w = np.exp(-0.5 * d2 / scale ** 2)
    return w / w.sum(1, keepdims=True)


def propagate(X_L, y_L, X_U, scale: float, tol: float = 1e-6, max_iters: int = 1000,
              init_knn_k: int = 5) -> Propagation:
    """Iterate ``y <- T y`` with the labeled block clamped, starting the
    unlabeled block from a kNN regression on the labeled points."""
    X_L = np.asarray(X_L, dtype=np.float64)
    y_L = np.asarray(y_L, dtype=np.float64).ravel()
    X_U = np.asarray(X_U, dtype=np.float64).reshape(-1, X_L.shape[1])
    n = y_L.size
    if X_U.shape[0] == 0:
        return Propagation(np.zeros(0), 0, True, [], y_L.copy())
    T = transition_matrix(np.vstack([X_L, X_U]), scale)
    t_ul, t_uu = T[n:, :n], T[n:, n:]
    fixed = t_ul @ y_L
    y_u = knn_predict_many(X_L, y_L, X_U, init_knn_k)
    changes = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        new = fixed + t_uu @ y_u
        change = float(np.max(np.abs(new - y_u)))
        changes.append(change)
        y_u = new
        if change <= tol:
            converged = True
            break
    return Propagation(y_u, it, converged, changes, y_L.copy())


def median_distance(X) -> float:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        return 1.0
    sq = (X * X).sum(1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    med = float(np.median(np.sqrt(d2[np.triu_indices(X.shape[0], 1)])))
    return med if med > 0 else 1.0


@dataclass
class LabelPropResult:
    predictions: np.ndarray
    scale: float
    converged: bool
    val_rmse: dict  # scale -> validation RMSE


def label_prop(config: LabelPropConfig, X_L, y_L, X_U, X_val, y_val) -> LabelPropResult:
    """Predictions for ``X_U``, with the RBF scale chosen by validation RMSE.

    Validation points join the graph as unlabeled nodes. The caller is
    responsible for capping ``X_U`` at ``config.max_unlabeled``.
    """
    X_U = np.asarray(X_U, dtype=np.float64)
    X_val = np.asarray(X_val, dtype=np.float64)
    if X_U.shape[0] > config.max_unlabeled:
        raise ValueError(f"{X_U.shape[0]} unlabeled points exceed max_unlabeled={config.max_unlabeled}")
    base = median_distance(X_L)
    nodes = np.vstack([X_U, X_val])
    n_u = X_U.shape[0]
    scores = {}
    best = None
    for mult in config.rbf_scale_grid:
        scale = float(mult) * base
        prop = propagate(X_L, y_L, nodes, scale, config.tol, config.max_iters, config.init_knn_k)
        score = rmse(prop.predictions[n_u:], y_val)
        scores[scale] = score
        if best is None or score < best[0]:
            best = (score, scale, prop)
    _, scale, prop = best
    return LabelPropResult(prop.predictions[:n_u], scale, prop.converged, scores)
