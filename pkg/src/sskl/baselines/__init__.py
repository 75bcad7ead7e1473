"""Semi-supervised regression baselines."""

from .coreg import CoregConfig, CoregModel, coreg_train
from .knn import knn_predict, knn_predict_many, select_k
from .labelprop import LabelPropConfig, label_prop, propagate
from .mean_teacher import MeanTeacherConfig, mean_teacher_train
from .regressor import RegressorConfig, train_mlp_regressor
from .vat import VatConfig, select_vat, train_vat, vat_loss

__all__ = [
    "CoregConfig", "CoregModel", "coreg_train",
    "knn_predict", "knn_predict_many", "select_k",
    "LabelPropConfig", "label_prop", "propagate",
    "MeanTeacherConfig", "mean_teacher_train",
    "RegressorConfig", "train_mlp_regressor",
    "VatConfig", "select_vat", "train_vat", "vat_loss",
]
