"""Shared training loop for the neural-network baselines (plain MSE, VAT, mean teacher).

Every baseline uses the same trunk as the deep kernel with a scalar linear
head, Adam with L2 decay, full-batch labeled data plus one unlabeled
mini-batch per step, and early stopping on validation RMSE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..data import rmse
from ..errors import EmptyLabeledSet, TrainingDiverged
from ..net import Adam, MlpParams, init_mlp, mlp_backward, mlp_forward


@dataclass(frozen=True)
class RegressorConfig:
    hidden: tuple = (100, 50, 50)
    lr: float = 1e-3
    weight_decay: float = 1e-4
    unlabeled_batch: int = 50
    max_epochs: int = 500
    patience: int = 20
    seed: int = 0

    def layer_sizes(self, input_dim: int) -> tuple:
        return (int(input_dim), *map(int, self.hidden), 1)


@dataclass
class RegressorRun:
    params: MlpParams  # parameters used for prediction at the best epoch
    best_epoch: int
    history: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)  # flat student params after each step, when recorded

    @property
    def best_val_rmse(self) -> float:
        return self.history[self.best_epoch]["val_rmse"]

    def predict(self, X) -> np.ndarray:
        return mlp_forward(self.params, X)[0][:, 0]


def mse_loss(mlp: MlpParams, X, y):
    """Mean squared error of the scalar head and its flat gradient."""
    out, cache = mlp_forward(mlp, X)
    resid = out[:, 0] - np.asarray(y, dtype=np.float64)
    g, _ = mlp_backward(mlp, cache, (2.0 / resid.size) * resid[:, None])
    return float(np.mean(resid ** 2)), g.flatten()


def rngs(seed: int):
    """Independent generators for initialization, batch shuffling and per-step noise."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def fit(config: RegressorConfig, data, step_loss: Callable, after_step: Optional[Callable] = None,
        eval_params: Optional[Callable] = None, record: bool = False, init: Optional[MlpParams] = None) -> RegressorRun:
    """Generic loop.

    ``step_loss(mlp, X_U_batch, noise_rng) -> (loss, flat_grad)``;
    ``after_step(flat)`` runs after every optimizer step (the mean teacher's
    EMA hook); ``eval_params(flat) -> MlpParams`` picks the network that is
    validated and returned (student by default).
    """
    X_L = data.X_train
    if len(X_L) == 0:
        raise EmptyLabeledSet("labeled-train partition is empty")
    X_U = data.X_unlabeled
    m = X_U.shape[0]
    n_batches = max(1, math.ceil(m / config.unlabeled_batch))
    init_rng, shuffle_rng, noise_rng = rngs(config.seed)
    mlp = init if init is not None else init_mlp(config.layer_sizes(X_L.shape[1]), init_rng)
    flat = mlp.flatten()
    opt = Adam(flat.size, config.lr, weight_decay=config.weight_decay)
    pick = eval_params or (lambda f: mlp.unflatten(f))

    def evaluate(f):
        net = pick(f)
        return rmse(data.unstandardize_y(mlp_forward(net, data.X_val)[0][:, 0]), data.y_val), net

    val, net = evaluate(flat)
    history = [{"epoch": 0, "loss": float("nan"), "val_rmse": val}]
    best = (val, 0, net)
    trajectory = [flat.copy()] if record else []
    since_best = 0
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(m)
        losses = []
        for b in range(n_batches):
            batch = X_U[order[b * config.unlabeled_batch:(b + 1) * config.unlabeled_batch]]
            loss, grad = step_loss(mlp.unflatten(flat), batch, noise_rng)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDiverged(f"epoch {epoch} step {b}: non-finite loss {loss}")
            flat = opt.step(flat, grad)
            if after_step is not None:
                after_step(flat)
            if record:
                trajectory.append(flat.copy())
            losses.append(loss)
        val, net = evaluate(flat)
        history.append({"epoch": epoch, "loss": float(np.mean(losses)), "val_rmse": val})
        if val < best[0]:
            best = (val, epoch, net)
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    return RegressorRun(best[2], best[1], history, trajectory)


def train_mlp_regressor(config: RegressorConfig, data, record: bool = False) -> RegressorRun:
    """Supervised MSE training on the labeled block only."""
    X_L, y_L = data.X_train, data.y_train
    return fit(config, data, lambda mlp, batch, rng: mse_loss(mlp, X_L, y_L), record=record)
