"""Supervised and semi-supervised deep kernel learning.

The semi-supervised objective for one step is::

    loss = NLML(y_L | X_L) / n  +  alpha / m_batch * sum_{x in batch} Var[f(x)]

where the variance is the latent posterior variance given the labeled
points. Labeled data is always used in full; unlabeled data is mini-batched.
Network weights and log-domain GP hyperparameters get separate Adam
optimizers.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import gp, kernels
from .data import SplitView, rmse
from .errors import DimensionMismatch, EmptyLabeledSet, NegativeVariance, NotPositiveDefinite, TrainingDiverged
from .kernels import KernelParams, embed, embed_backward
from .net import Adam, MlpParams, checkpoint_bytes, embedding_layer_sizes, init_mlp, params_from_bytes

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1.0
    alpha_grid: tuple = (0.1, 1.0, 10.0)
    lr_net: float = 1e-3
    lr_gp: float = 0.1
    unlabeled_batch: int = 50
    max_epochs: int = 500
    patience: int = 20
    weight_decay: float = 1e-4
    seed: int = 0
    hidden: tuple = (100, 50, 50)
    embed_dim: int = 2
    kernel: str = kernels.RBF
    degree: int = 2
    # trailing input columns routed around the network into a second RBF summand
    spatial_dims: int = 0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.unlabeled_batch < 1:
            raise ValueError("unlabeled_batch must be at least 1")
        if self.max_epochs < 0 or self.patience < 1:
            raise ValueError("max_epochs must be >= 0 and patience >= 1")


def initial_kernel(config: TrainConfig) -> KernelParams:
    """All raw GP parameters start at 1, i.e. every log field is 0."""
    if config.kernel == kernels.POLYNOMIAL:
        base = kernels.polynomial(degree=config.degree)
    else:
        base = kernels.rbf()
    if config.spatial_dims:
        return kernels.sum_kernel(base, kernels.rbf(), feature_split=config.embed_dim)
    return base


# -- objective ----------------------------------------------------------------

@dataclass
class LossResult:
    loss: float
    nll: float
    variance: float
    d_mlp: np.ndarray
    d_theta: np.ndarray


def semisup_loss(mlp: MlpParams, kp: KernelParams, X_L, y_L, X_U_batch=None,
                 alpha: float = 1.0, passthrough: int = 0) -> LossResult:
    """Compound objective and its gradient w.r.t. flat network params and ``kp.theta()``.

    With ``alpha == 0`` or an empty batch the unlabeled branch is skipped
    entirely, so the result is exactly the supervised objective.
    """
    X_L = np.asarray(X_L, dtype=np.float64)
    y_L = np.asarray(y_L, dtype=np.float64).ravel()
    n = y_L.size
    if n == 0:
        raise EmptyLabeledSet("no labeled points")
    use_u = alpha > 0 and X_U_batch is not None and len(X_U_batch) > 0
    X_all = np.vstack([X_L, X_U_batch]) if use_u else X_L
    Z, cache = embed(mlp, X_all, passthrough)
    Z_L = Z[:n]

    k_noisy = kernels.add_noise_diag(kernels.kernel_matrix(kp, Z_L, Z_L), kp)
    nll, chol, alpha_vec = gp.neg_log_marginal_likelihood(k_noisy, y_L)
    d_k = gp.mll_adjoint(chol, alpha_vec) / n
    loss = nll / n
    d_Z = np.zeros_like(Z)
    d_theta = np.zeros(kp.n_kernel_params)
    var_sum = 0.0

    if use_u:
        Z_U = Z[n:]
        m = Z_U.shape[0]
        scale = alpha / m
        k_cross = kernels.kernel_matrix(kp, Z_L, Z_U)
        k_diag = kernels.kernel_diag(kp, Z_U)
        var_sum = gp.variance_loss(chol, k_cross, k_diag)
        loss += scale * var_sum
        d_cross, d_diag, d_train = gp.variance_adjoint(chol, k_cross, k_diag)
        d_k = d_k + scale * d_train
        t, d_zl, d_zu = kernels.kernel_backward(kp, Z_L, Z_U, scale * d_cross)
        d_theta += t
        d_Z[:n] += d_zl
        d_Z[n:] += d_zu
        t, d_zu = kernels.kernel_diag_backward(kp, Z_U, scale * d_diag)
        d_theta += t
        d_Z[n:] += d_zu

    t, d_a, d_b = kernels.kernel_backward(kp, Z_L, Z_L, d_k)
    d_theta += t
    d_Z[:n] += d_a + d_b
    d_noise = kernels.noise_backward(kp, d_k)
    g_mlp, _ = embed_backward(mlp, cache, d_Z)
    return LossResult(loss, nll, var_sum, g_mlp.flatten(), np.append(d_theta, d_noise))


def objective_fn(mlp: MlpParams, kp: KernelParams, X_L, y_L, X_U_batch=None, alpha=1.0,
                 passthrough=0) -> Callable:
    """Closure over the flat vector ``[network params, kp.theta()]`` for gradient checks."""
    n_net = mlp.size

    def fn(flat):
        res = semisup_loss(mlp.unflatten(flat[:n_net]), kp.with_theta(flat[n_net:]),
                           X_L, y_L, X_U_batch, alpha, passthrough)
        return res.loss, np.concatenate([res.d_mlp, res.d_theta])

    return fn, np.concatenate([mlp.flatten(), kp.theta()])


# -- gradient check harness -----------------------------------------------------

@dataclass
class GradCheckReport:
    analytic: np.ndarray
    numeric: np.ndarray
    rel_errors: np.ndarray
    tol: float
    failures: list = field(default_factory=list)

    @property
    def max_rel_err(self) -> float:
        return float(self.rel_errors.max()) if self.rel_errors.size else 0.0

    @property
    def ok(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "ok" if self.ok else f"{len(self.failures)} coordinates above tol"
        return f"{self.analytic.size} coordinates, max rel err {self.max_rel_err:.3e} (tol {self.tol:g}): {status}"


def grad_check(loss_fn, params, h: float = 1e-5, tol: float = 1e-4, atol: float = 1e-8) -> GradCheckReport:
    """Compare the analytic gradient of ``loss_fn`` with central differences.

    ``loss_fn(params) -> (value, grad)``. Coordinate i fails when
    ``|a_i - n_i| > tol * max(|a_i|, |n_i|) + atol``; the reported relative
    error uses the same floor, ``|a_i - n_i| / max(|a_i|, |n_i|, atol / tol)``,
    so coordinates whose true gradient is zero are not judged on roundoff.
    """
    params = np.asarray(params, dtype=np.float64).copy()
    _, analytic = loss_fn(params)
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.empty_like(params)
    for i in range(params.size):
        orig = params[i]
        params[i] = orig + h
        up, _ = loss_fn(params)
        params[i] = orig - h
        down, _ = loss_fn(params)
        params[i] = orig
        numeric[i] = (up - down) / (2.0 * h)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    diff = np.abs(analytic - numeric)
    rel = diff / np.maximum(scale, atol / tol)
    failures = [int(i) for i in np.flatnonzero(diff > tol * scale + atol)]
    return GradCheckReport(analytic, numeric, rel, tol, failures)


def random_instance(rng, n: int = 3, m: int = 2, d: int = 2, hidden=(4,), embed_dim: int = 2,
                    kernel: str = kernels.RBF, alpha: float = 1.0, bias_std: float = 0.5):
    """A small random objective for gradient checks; returns ``(fn, flat0)``.

    Biases are randomized so no pre-activation sits exactly on a ReLU kink,
    and log-domain GP parameters are drawn near zero.
    """
    mlp = init_mlp(embedding_layer_sizes(d, tuple(hidden), embed_dim), rng)
    mlp = MlpParams([w.copy() for w in mlp.weights],
                    [b + bias_std * rng.standard_normal(b.shape) for b in mlp.biases], mlp.activation)
    if kernel == kernels.POLYNOMIAL:
        kp = kernels.polynomial(degree=int(rng.integers(1, 4)))
    elif kernel == kernels.SUM:
        split = int(rng.integers(1, embed_dim)) if embed_dim > 1 else 1
        kp = kernels.sum_kernel(kernels.rbf(), kernels.polynomial(degree=2), feature_split=split)
    else:
        kp = kernels.rbf()
    kp = kp.with_theta(0.3 * rng.standard_normal(kp.theta().size))
    X_L = rng.standard_normal((n, d))
    y_L = rng.standard_normal(n)
    X_U = rng.standard_normal((m, d)) if m else None
    return objective_fn(mlp, kp, X_L, y_L, X_U, alpha)


# -- model ----------------------------------------------------------------------

@dataclass
class TrainedModel:
    mlp: MlpParams
    kp: KernelParams
    labeled_X: np.ndarray  # standardized features
    labeled_y: np.ndarray  # standardized targets
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    passthrough: int = 0
    alpha: float = 0.0
    best_epoch: int = 0
    history: list = field(default_factory=list)

    def standardize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        keep = self.x_std > 0
        out = np.zeros_like(X)
        out[:, keep] = (X[:, keep] - self.x_mean[keep]) / self.x_std[keep]
        return out

    @property
    def best_val_rmse(self) -> float:
        return self.history[self.best_epoch]["val_rmse"] if self.history else float("nan")


def _latent_predict(mlp, kp, X_L, y_L, X_T, passthrough=0):
    n = X_L.shape[0]
    Z, _ = embed(mlp, np.vstack([X_L, X_T]), passthrough)
    Z_L, Z_T = Z[:n], Z[n:]
    k_noisy = kernels.add_noise_diag(kernels.kernel_matrix(kp, Z_L, Z_L), kp)
    _, chol, alpha_vec = gp.neg_log_marginal_likelihood(k_noisy, y_L)
    return gp.posterior_predict(chol, alpha_vec, kernels.kernel_matrix(kp, Z_L, Z_T), kernels.kernel_diag(kp, Z_T))


def predict_standardized(model: TrainedModel, X_T_std):
    """Posterior mean and latent variance in standardized target units."""
    return _latent_predict(model.mlp, model.kp, model.labeled_X, model.labeled_y,
                           np.asarray(X_T_std, dtype=np.float64), model.passthrough)


def predict(model: TrainedModel, X_T, standardized: bool = False):
    """Posterior mean and latent variance in original target units.

    ``X_T`` is in raw feature units unless ``standardized`` is set.
    """
    X_T = np.atleast_2d(np.asarray(X_T, dtype=np.float64))
    if X_T.shape[1] != model.labeled_X.shape[1]:
        raise DimensionMismatch(f"expected {model.labeled_X.shape[1]} features, got {X_T.shape[1]}")
    mean, var = predict_standardized(model, X_T if standardized else model.standardize(X_T))
    return mean * model.y_std + model.y_mean, var * model.y_std ** 2


# -- training loop ----------------------------------------------------------------

def _rngs(seed: int):
    init_ss, shuffle_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(shuffle_ss)


def _fit(config: TrainConfig, data: SplitView, alpha: float, use_unlabeled: bool,
         on_step: Optional[Callable] = None) -> TrainedModel:
    X_L, y_L = data.X_train, data.y_train
    if len(y_L) == 0:
        raise EmptyLabeledSet("labeled-train partition is empty")
    X_val, y_val = data.X_val, data.y_val
    X_U = data.X_unlabeled
    m = X_U.shape[0]
    n_batches = max(1, math.ceil(m / config.unlabeled_batch))
    passthrough = config.spatial_dims
    d_net = X_L.shape[1] - passthrough

    init_rng, shuffle_rng = _rngs(config.seed)
    mlp = init_mlp(embedding_layer_sizes(d_net, config.hidden, config.embed_dim), init_rng)
    kp = initial_kernel(config)
    net_flat = mlp.flatten()
    theta = kp.theta()
    opt_net = Adam(net_flat.size, config.lr_net, weight_decay=config.weight_decay)
    opt_gp = Adam(theta.size, config.lr_gp)

    def evaluate():
        mean, _ = _latent_predict(mlp, kp, X_L, y_L, X_val, passthrough)
        return rmse(data.unstandardize_y(mean), y_val)

    history = [{"epoch": 0, "loss": float("nan"), "val_rmse": evaluate()}]
    best = (history[0]["val_rmse"], 0, net_flat, theta)
    since_best = 0
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(m) if use_unlabeled else None
        losses = []
        for b in range(n_batches):
            batch = X_U[order[b * config.unlabeled_batch:(b + 1) * config.unlabeled_batch]] if use_unlabeled else None
            try:
                res = semisup_loss(mlp, kp, X_L, y_L, batch, alpha, passthrough)
            except (NotPositiveDefinite, NegativeVariance) as exc:
                raise TrainingDiverged(f"epoch {epoch} step {b}: {exc}") from exc
            if not np.isfinite(res.loss) or not np.all(np.isfinite(res.d_mlp)) or not np.all(np.isfinite(res.d_theta)):
                raise TrainingDiverged(f"epoch {epoch} step {b}: non-finite loss {res.loss}")
            net_flat = opt_net.step(net_flat, res.d_mlp)
            theta = opt_gp.step(theta, res.d_theta)
            mlp = mlp.unflatten(net_flat)
            kp = kp.with_theta(theta)
            losses.append(res.loss)
            if on_step is not None:
                on_step(net_flat, theta)
        try:
            val = evaluate()
        except (NotPositiveDefinite, NegativeVariance) as exc:
            raise TrainingDiverged(f"epoch {epoch} validation: {exc}") from exc
        history.append({"epoch": epoch, "loss": float(np.mean(losses)), "val_rmse": val})
        if val < best[0]:
            best = (val, epoch, net_flat, theta)
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    _, best_epoch, net_flat, theta = best
    return TrainedModel(
        mlp=mlp.unflatten(net_flat), kp=kp.with_theta(theta), labeled_X=X_L, labeled_y=y_L,
        x_mean=data.x_mean, x_std=data.x_std, y_mean=data.y_mean, y_std=data.y_std,
        passthrough=passthrough, alpha=alpha, best_epoch=best_epoch, history=history,
    )


def train(config: TrainConfig, data: SplitView, on_step=None) -> TrainedModel:
    """SSDKL training at ``config.alpha`` with early stopping on validation RMSE.

    One epoch is a pass over shuffled unlabeled mini-batches (a single step
    when there is no unlabeled data).
    """
    return _fit(config, data, config.alpha, use_unlabeled=True, on_step=on_step)


def train_dkl(config: TrainConfig, data: SplitView, on_step=None) -> TrainedModel:
    """Supervised DKL on the same step schedule as :func:`train`.

    Unlabeled features are never read; only their count fixes how many
    full-batch steps make an epoch, which keeps the optimization budget
    matched with the semi-supervised run.
    """
    return _fit(config, data, 0.0, use_unlabeled=False, on_step=on_step)


@dataclass
class AlphaSelection:
    best_alpha: float
    model: TrainedModel
    arms: dict  # alpha -> best validation RMSE, or None when the arm diverged


def select_alpha(config: TrainConfig, data: SplitView) -> AlphaSelection:
    """Train from scratch per grid value; keep the lowest validation RMSE (ties -> smaller alpha)."""
    if not config.alpha_grid:
        raise ValueError("alpha_grid is empty")
    arms = {}
    best = None
    for a in sorted(config.alpha_grid):
        try:
            model = train(replace(config, alpha=float(a)), data)
        except TrainingDiverged as exc:
            logger.warning("alpha=%g diverged: %s", a, exc)
            arms[float(a)] = None
            continue
        score = model.best_val_rmse
        arms[float(a)] = score
        if not np.isfinite(score):
            continue
        if best is None or score < best[0]:
            best = (score, float(a), model)
    if best is None:
        raise TrainingDiverged("every alpha arm diverged")
    return AlphaSelection(best_alpha=best[1], model=best[2], arms=arms)


# -- checkpoints ---------------------------------------------------------------------
#
# Model container layout:
#   b"SSKLMDL1"
#   uint64 header_len, then header_len bytes of UTF-8 JSON with kernel params,
#          standardization constants, passthrough, alpha and labeled-set shape
#   network checkpoint (see sskl.net)
#   float64 labeled_X (row-major), float64 labeled_y, little-endian

MODEL_MAGIC = b"SSKLMDL1"


def save_model(model: TrainedModel, path) -> None:
    header = {
        "kernel": model.kp.to_dict(),
        "x_mean": model.x_mean.tolist(),
        "x_std": model.x_std.tolist(),
        "y_mean": model.y_mean,
        "y_std": model.y_std,
        "passthrough": model.passthrough,
        "alpha": model.alpha,
        "best_epoch": model.best_epoch,
        "labeled_shape": list(model.labeled_X.shape),
    }
    blob = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(checkpoint_bytes(model.mlp))
        fh.write(np.ascontiguousarray(model.labeled_X, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.labeled_y, dtype="<f8").tobytes())


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MODEL_MAGIC:
        raise ValueError("not a model checkpoint (bad magic)")
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    header = json.loads(raw[16:16 + hlen].decode())
    pos = 16 + hlen
    mlp, used = params_from_bytes(raw[pos:])
    pos += used
    rows, cols = header["labeled_shape"]
    X = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols).astype(np.float64)
    pos += 8 * rows * cols
    y = np.frombuffer(raw, dtype="<f8", count=rows, offset=pos).astype(np.float64)
    return TrainedModel(
        mlp=mlp, kp=KernelParams.from_dict(header["kernel"]), labeled_X=X, labeled_y=y,
        x_mean=np.asarray(header["x_mean"]), x_std=np.asarray(header["x_std"]),
        y_mean=header["y_mean"], y_std=header["y_std"], passthrough=header["passthrough"],
        alpha=header["alpha"], best_epoch=header["best_epoch"],
    )
