"""Small generated regression tasks used by the tests and the experiment runner."""

from __future__ import annotations

import numpy as np

from .data import TEST_SIZE, Dataset


def sine_task(n_labeled: int = 20, n_unlabeled: int = 200, seed: int = 0, noise: float = 0.1,
              low: float = -3.0, high: float = 3.0, test_size: int = TEST_SIZE) -> Dataset:
    """``y = sin(x) + noise`` on a uniform 1-D grid of ``n_labeled + n_unlabeled + test_size`` draws."""
    rng = np.random.default_rng(seed)
    n = n_labeled + n_unlabeled + test_size
    x = rng.uniform(low, high, size=(n, 1))
    y = np.sin(x[:, 0]) + noise * rng.standard_normal(n)
    return Dataset("sine", x, y)


def linear_task(n_total: int, seed: int = 0, low: float = 0.0, high: float = 10.0, noise: float = 0.0) -> Dataset:
    """``y = x`` in one dimension."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(low, high, size=(n_total, 1))
    y = x[:, 0] + noise * rng.standard_normal(n_total)
    return Dataset("linear", x, y)


def spatial_task(n_labeled: int = 100, n_unlabeled: int = 500, seed: int = 0, n_distractors: int = 8,
                 distractor_scale: float = 0.2, noise: float = 0.05, test_size: int = TEST_SIZE) -> Dataset:
    """Target = smooth surface over 2-D coordinates + a small function of distractor features.

    Columns are ``[distractors..., coord_0, coord_1]`` so the coordinates are
    the trailing block a spatial kernel routes around the network.
    """
    rng = np.random.default_rng(seed)
    n = n_labeled + n_unlabeled + test_size
    coords = rng.uniform(-2.0, 2.0, size=(n, 2))
    distractors = rng.standard_normal((n, n_distractors))
    w = rng.standard_normal(n_distractors) / np.sqrt(n_distractors)
    surface = np.sin(1.5 * coords[:, 0]) * np.cos(coords[:, 1]) + 0.5 * np.sin(coords[:, 1])
    y = surface + distractor_scale * np.tanh(distractors @ w) + noise * rng.standard_normal(n)
    return Dataset("spatial", np.hstack([distractors, coords]), y)
