"""Dataset loading, the seeded labeled/validation/test/unlabeled split, and metrics."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyAfterCleaning,
    EmptyVectors,
    InsufficientData,
    NoNumericColumns,
    ZeroBaseline,
)

logger = logging.getLogger(__name__)

TEST_SIZE = 1000
VALIDATION_FRACTION = 0.1


@dataclass
class LoadReport:
    rows_read: int = 0
    rows_dropped: int = 0
    header: list | None = None
    dropped_lines: list = field(default_factory=list)


@dataclass
class Dataset:
    name: str
    X: np.ndarray
    y: np.ndarray
    report: LoadReport | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise ValueError(f"X {self.X.shape} and y {self.y.shape} disagree")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset contains missing or non-finite values")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


def _parse_row(row):
    try:
        values = [float(cell) for cell in row]
    except ValueError:
        return None
    if not all(math.isfinite(v) for v in values):
        return None
    return values


def load_csv(path) -> Dataset:
    """Read a numeric CSV whose last column is the target.

    A first row that does not parse as numbers is taken as a header. Rows with
    missing, non-numeric or wrong-width cells are dropped and counted in
    ``dataset.report``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    report = LoadReport()
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(csv.reader(fh), start=1):
            if not raw or all(not c.strip() for c in raw):
                continue
            values = _parse_row(raw)
            if lineno == 1 and values is None:
                report.header = [c.strip() for c in raw]
                width = len(raw)
                continue
            report.rows_read += 1
            if values is not None and width is None:
                width = len(values)
            if values is None or len(values) != width:
                report.rows_dropped += 1
                report.dropped_lines.append(lineno)
                continue
            rows.append(values)
    if width is None or width < 2:
        raise NoNumericColumns(f"{path}: need at least one feature column and a target column")
    if not rows:
        raise EmptyAfterCleaning(f"{path}: no usable rows")
    if report.rows_dropped:
        logger.warning("%s: dropped %d malformed rows", path, report.rows_dropped)
    arr = np.asarray(rows, dtype=np.float64)
    return Dataset(name=path.stem, X=arr[:, :-1], y=arr[:, -1], report=report)


def validation_count(n_labeled: int) -> int:
    """Round-half-up 10% of the labeled set, at least one."""
    return max(1, int(math.floor(VALIDATION_FRACTION * n_labeled + 0.5)))


@dataclass
class SplitView:
    """One seeded partition of a dataset plus labeled-train standardization constants."""

    dataset: Dataset
    seed: int
    n_labeled: int
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    unlabeled_idx: np.ndarray
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    def standardize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        keep = self.x_std > 0
        out = np.zeros_like(X)
        out[:, keep] = (X[:, keep] - self.x_mean[keep]) / self.x_std[keep]
        return out

    def standardize_y(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.y_mean) / self.y_std

    def unstandardize_y(self, y) -> np.ndarray:
        return np.asarray(y, dtype=np.float64) * self.y_std + self.y_mean

    def _x(self, idx):
        return self.standardize(self.dataset.X[idx])

    @property
    def X_train(self):
        return self._x(self.train_idx)

    @property
    def y_train(self):
        """Standardized labeled-train targets."""
        return self.standardize_y(self.dataset.y[self.train_idx])

    @property
    def X_val(self):
        return self._x(self.val_idx)

    @property
    def y_val(self):
        """Validation targets in original units."""
        return self.dataset.y[self.val_idx]

    @property
    def X_test(self):
        return self._x(self.test_idx)

    @property
    def y_test(self):
        return self.dataset.y[self.test_idx]

    @property
    def X_unlabeled(self):
        return self._x(self.unlabeled_idx)

    def manifest(self) -> str:
        """Plain-text listing of every partition, for audit."""
        lines = [f"# dataset={self.dataset.name} seed={self.seed} n_labeled={self.n_labeled}"]
        for name in ("train", "val", "test", "unlabeled"):
            idx = getattr(self, f"{name}_idx")
            lines.append(f"{name} {len(idx)}: " + " ".join(map(str, idx.tolist())))
        return "\n".join(lines) + "\n"


def make_split(dataset: Dataset, n_labeled: int, seed: int, test_size: int = TEST_SIZE) -> SplitView:
    """Shuffle under ``seed``; first ``test_size`` rows are test, next ``n_labeled``
    are labeled (90/10 train/validation), the rest unlabeled."""
    n_total = dataset.n_rows
    if n_labeled < 2:
        raise InsufficientData("need at least 2 labeled examples")
    if n_total < n_labeled + test_size:
        raise InsufficientData(f"{dataset.name}: {n_total} rows < {n_labeled} labeled + {test_size} test")
    perm = np.random.default_rng(seed).permutation(n_total)
    test_idx = perm[:test_size]
    labeled = perm[test_size:test_size + n_labeled]
    n_val = validation_count(n_labeled)
    if n_val >= n_labeled:
        raise InsufficientData("validation split would leave no training examples")
    val_idx = labeled[:n_val]
    train_idx = labeled[n_val:]
    unlabeled_idx = perm[test_size + n_labeled:]

    x_train = dataset.X[train_idx]
    x_mean = x_train.mean(0)
    x_std = x_train.std(0)
    x_std[x_std < 1e-12 * np.maximum(1.0, np.abs(x_mean))] = 0.0
    y_train = dataset.y[train_idx]
    y_std = float(y_train.std())
    return SplitView(
        dataset=dataset, seed=seed, n_labeled=n_labeled,
        train_idx=train_idx, val_idx=val_idx, test_idx=test_idx, unlabeled_idx=unlabeled_idx,
        x_mean=x_mean, x_std=x_std, y_mean=float(y_train.mean()), y_std=y_std if y_std > 0 else 1.0,
    )


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.size == 0:
        raise EmptyVectors("rmse of empty vectors")
    if pred.size != truth.size:
        raise ValueError(f"length mismatch: {pred.size} predictions, {truth.size} targets")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def percent_reduction(rmse_base: float, rmse_method: float) -> float:
    if rmse_base <= 0:
        raise ZeroBaseline("baseline RMSE must be positive")
    return 100.0 * (rmse_base - rmse_method) / rmse_base


@dataclass
class ArraySplit:
    """Already-standardized partitions, duck-compatible with :class:`SplitView` for training.

    ``y_val`` is in original units; ``y_mean``/``y_std`` map standardized
    predictions back to them.
    """

    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    X_unlabeled: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.X_train).shape[1]
        self.X_train = np.asarray(self.X_train, dtype=np.float64)
        self.y_train = np.asarray(self.y_train, dtype=np.float64).ravel()
        self.X_val = np.asarray(self.X_val, dtype=np.float64).reshape(-1, d)
        self.y_val = np.asarray(self.y_val, dtype=np.float64).ravel()
        self.X_unlabeled = np.asarray(self.X_unlabeled, dtype=np.float64).reshape(-1, d)
        self.x_mean = np.zeros(d)
        self.x_std = np.ones(d)

    def unstandardize_y(self, y) -> np.ndarray:
        return np.asarray(y, dtype=np.float64) * self.y_std + self.y_mean
