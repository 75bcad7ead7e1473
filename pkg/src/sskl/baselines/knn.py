"""k-nearest-neighbour regression under Minkowski distances."""

from __future__ import annotations

import numpy as np

from ..errors import EmptyTrainingSet


def minkowski_distances(a, b, order: float) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    diff = np.abs(a[:, None, :] - b[None, :, :])
    if order == 2:
        return np.sqrt((diff * diff).sum(-1))
    return (diff ** order).sum(-1) ** (1.0 / order)


def knn_predict_many(train_X, train_y, queries, k: int, order: float = 2) -> np.ndarray:
    """Mean target of the ``k`` nearest training rows for each query.

    Distance ties go to the lower training index.
    """
    train_y = np.asarray(train_y, dtype=np.float64).ravel()
    if train_y.size == 0:
        raise EmptyTrainingSet("kNN needs at least one training point")
    k = min(int(k), train_y.size)
    dist = minkowski_distances(queries, train_X, order)
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
    return train_y[nearest].mean(1)


def knn_predict(train_X, train_y, query, k: int, order: float = 2) -> float:
    return float(knn_predict_many(train_X, train_y, np.atleast_2d(query), k, order)[0])


def select_k(train_X, train_y, val_X, val_y, grid=(1, 3, 5, 7, 9), order: float = 2) -> int:
    """Smallest k with the lowest validation squared error."""
    best = None
    for k in sorted(grid):
        err = float(np.mean((knn_predict_many(train_X, train_y, val_X, k, order) - val_y) ** 2))
        if best is None or err < best[0]:
            best = (err, k)
    return best[1]
