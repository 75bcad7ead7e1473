"""Virtual adversarial training adapted to regression.

The model's output distribution is N(h(x), sigma^2), so the KL divergence
between the clean and perturbed predictions is (h(x) - h(x+r))^2 / (2 sigma^2).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..net import MlpParams, mlp_backward, mlp_forward
from .regressor import RegressorConfig, RegressorRun, fit


@dataclass(frozen=True)
class VatConfig:
    epsilon: float = 1.0
    lam: float = 1.0
    sigma: float = 1.0
    xi: float = 1e-6
    epsilon_grid: tuple = (0.5, 1.0, 2.0)
    lambda_grid: tuple = (0.1, 1.0)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


def _unit_rows(v):
    norm = np.linalg.norm(v, axis=1, keepdims=True)
    return v / np.where(norm > 0, norm, 1.0), norm[:, 0]


def adversarial_direction(mlp: MlpParams, X, config: VatConfig, rng) -> np.ndarray:
    """One finite-difference power-iteration step; every row has norm epsilon."""
    X = np.asarray(X, dtype=np.float64)
    d, _ = _unit_rows(rng.standard_normal(X.shape))
    h = mlp_forward(mlp, X)[0]
    probe, cache = mlp_forward(mlp, X + config.xi * d)
    # gradient of (h(x) - h(x+r))^2 / (2 sigma^2) with respect to r, at r = xi d
    _, g = mlp_backward(mlp, cache, -(h - probe) / config.sigma ** 2)
    g_unit, g_norm = _unit_rows(g)
    direction = np.where((g_norm > 0)[:, None], g_unit, d)
    return config.epsilon * direction


def lds_penalty(mlp: MlpParams, X, r_adv, sigma: float):
    """Mean KL between clean and perturbed outputs and its flat gradient, r held fixed."""
    X = np.asarray(X, dtype=np.float64)
    N = X.shape[0]
    out, cache = mlp_forward(mlp, np.vstack([X, X + r_adv]))
    diff = out[:N] - out[N:]
    value = float(np.sum(diff ** 2) / (2.0 * sigma ** 2 * N))
    coef = diff / (sigma ** 2 * N)
    g, _ = mlp_backward(mlp, cache, np.vstack([coef, -coef]))
    return value, g.flatten()


def vat_loss(mlp: MlpParams, X_L, y_L, X_U, config: VatConfig, rng):
    """MSE on labeled points plus lambda times the LDS penalty over labeled and unlabeled points.

    Returns ``(loss, flat_grad, r_adv)``.
    """
    X_L = np.asarray(X_L, dtype=np.float64)
    y_L = np.asarray(y_L, dtype=np.float64).ravel()
    out, cache = mlp_forward(mlp, X_L)
    resid = out[:, 0] - y_L
    g, _ = mlp_backward(mlp, cache, (2.0 / resid.size) * resid[:, None])
    loss = float(np.mean(resid ** 2))
    grad = g.flatten()
    if config.lam == 0:
        return loss, grad, None
    X_all = np.vstack([X_L, np.asarray(X_U, dtype=np.float64).reshape(-1, X_L.shape[1])])
    r_adv = adversarial_direction(mlp, X_all, config, rng)
    lds, g_lds = lds_penalty(mlp, X_all, r_adv, config.sigma)
    return loss + config.lam * lds, grad + config.lam * g_lds, r_adv


def train_vat(config: VatConfig, reg: RegressorConfig, data, r_log: list | None = None) -> RegressorRun:
    """Train at a fixed (epsilon, lambda). ``r_log`` collects every adversarial batch when given."""
    X_L, y_L = data.X_train, data.y_train

    def step(mlp, batch, rng):
        loss, grad, r = vat_loss(mlp, X_L, y_L, batch, config, rng)
        if r_log is not None and r is not None:
            r_log.append(r)
        return loss, grad

    return fit(reg, data, step)


@dataclass
class VatSelection:
    epsilon: float
    lam: float
    run: RegressorRun
    scores: dict  # (epsilon, lambda) -> best validation RMSE


def select_vat(config: VatConfig, reg: RegressorConfig, data) -> VatSelection:
    """Grid search over epsilon and lambda on validation RMSE; ties keep the earlier grid point."""
    best = None
    scores = {}
    for eps in config.epsilon_grid:
        for lam in config.lambda_grid:
            run = train_vat(replace(config, epsilon=float(eps), lam=float(lam)), reg, data)
            scores[(float(eps), float(lam))] = run.best_val_rmse
            if best is None or run.best_val_rmse < best.run.best_val_rmse:
                best = VatSelection(float(eps), float(lam), run, scores)
    return best
