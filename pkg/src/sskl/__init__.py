"""Semi-supervised deep kernel learning: deep-kernel GP regression that also
minimizes posterior variance on unlabeled inputs, plus the baselines and the
experiment runner used to compare against it."""

from .data import Dataset, load_csv, make_split, percent_reduction, rmse
from .errors import SsklError
from .trainer import (
    TrainConfig,
    TrainedModel,
    grad_check,
    predict,
    select_alpha,
    semisup_loss,
    train,
    train_dkl,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "load_csv", "make_split", "percent_reduction", "rmse",
    "SsklError",
    "TrainConfig", "TrainedModel", "grad_check", "predict", "select_alpha", "semisup_loss", "train", "train_dkl",
]
