"""Covariance functions over (embedded) inputs and their gradients.

All hyperparameters live in the log domain. For a base kernel the trainable
vector is ``[log_signal_var, log_length_scale_sq]``; a sum kernel
concatenates its summands' vectors. The observation-noise log-variance is
carried once, at the top level, and is only ever added to a training
covariance through :func:`add_noise_diag`.

RBF:        k(a, b) = sf2 * exp(-|a - b|^2 / (2 * l2))
Polynomial: k(a, b) = (sf * a.b + l) ** degree,  sf = sqrt(sf2), l = sqrt(l2)
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, NotSquare, SplitOutOfRange
from .net import MlpParams, mlp_backward, mlp_forward

RBF = "rbf"
POLYNOMIAL = "polynomial"
SUM = "sum"


@dataclass(frozen=True)
class KernelParams:
    kind: str = RBF
    log_signal_var: float = 0.0
    log_length_scale_sq: float = 0.0
    log_noise_var: float = 0.0
    degree: int = 2
    left: Optional["KernelParams"] = None
    right: Optional["KernelParams"] = None
    feature_split: Optional[int] = None

    def __post_init__(self):
        if self.kind not in (RBF, POLYNOMIAL, SUM):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == SUM:
            if self.left is None or self.right is None or self.feature_split is None:
                raise ValueError("sum kernel needs left, right and feature_split")
            if self.feature_split <= 0:
                raise SplitOutOfRange(f"feature_split must be positive, got {self.feature_split}")
        if self.kind == POLYNOMIAL and int(self.degree) < 1:
            raise ValueError("polynomial degree must be a positive integer")

    @property
    def signal_var(self) -> float:
        return float(np.exp(self.log_signal_var))

    @property
    def length_scale_sq(self) -> float:
        return float(np.exp(self.log_length_scale_sq))

    @property
    def noise_var(self) -> float:
        return float(np.exp(self.log_noise_var))

    @property
    def n_kernel_params(self) -> int:
        if self.kind == SUM:
            return self.left.n_kernel_params + self.right.n_kernel_params
        return 2

    def kernel_theta(self) -> np.ndarray:
        if self.kind == SUM:
            return np.concatenate([self.left.kernel_theta(), self.right.kernel_theta()])
        return np.array([self.log_signal_var, self.log_length_scale_sq])

    def with_kernel_theta(self, theta) -> "KernelParams":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.n_kernel_params:
            raise DimensionMismatch(f"expected {self.n_kernel_params} kernel params, got {theta.size}")
        if self.kind == SUM:
            k = self.left.n_kernel_params
            return replace(self, left=self.left.with_kernel_theta(theta[:k]),
                           right=self.right.with_kernel_theta(theta[k:]))
        return replace(self, log_signal_var=float(theta[0]), log_length_scale_sq=float(theta[1]))

    def theta(self) -> np.ndarray:
        """All trainable log-domain values, noise last."""
        return np.append(self.kernel_theta(), self.log_noise_var)

    def with_theta(self, theta) -> "KernelParams":
        theta = np.asarray(theta, dtype=np.float64)
        return replace(self.with_kernel_theta(theta[:-1]), log_noise_var=float(theta[-1]))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "log_noise_var": self.log_noise_var}
        if self.kind == SUM:
            out.update(left=self.left.to_dict(), right=self.right.to_dict(), feature_split=self.feature_split)
        else:
            out.update(log_signal_var=self.log_signal_var, log_length_scale_sq=self.log_length_scale_sq)
            if self.kind == POLYNOMIAL:
                out["degree"] = self.degree
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "KernelParams":
        d = dict(d)
        if d.get("kind") == SUM:
            d["left"] = cls.from_dict(d["left"])
            d["right"] = cls.from_dict(d["right"])
        return cls(**d)


def rbf(**kw) -> KernelParams:
    return KernelParams(kind=RBF, **kw)


def polynomial(degree: int = 2, **kw) -> KernelParams:
    return KernelParams(kind=POLYNOMIAL, degree=degree, **kw)


def sum_kernel(left: KernelParams, right: KernelParams, feature_split: int, log_noise_var: float = 0.0) -> KernelParams:
    return KernelParams(kind=SUM, left=left, right=right, feature_split=feature_split, log_noise_var=log_noise_var)


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"kernel inputs have incompatible shapes {a.shape} and {b.shape}")
    return a, b


def _sq_dist(a, b):
    # direct differences: kernel inputs are low dimensional, and identical rows give exactly 0
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _check_split(params, q):
    if not 0 < params.feature_split < q:
        raise SplitOutOfRange(f"feature_split {params.feature_split} outside (0, {q})")


def kernel_matrix(params: KernelParams, a, b) -> np.ndarray:
    """Noise-free cross-covariance between the rows of ``a`` and ``b``."""
    a, b = _check_pair(a, b)
    if params.kind == SUM:
        return sum_kernel_matrix(params, a, b)
    if params.kind == RBF:
        return params.signal_var * np.exp(-0.5 * _sq_dist(a, b) / params.length_scale_sq)
    sf = np.exp(0.5 * params.log_signal_var)
    off = np.exp(0.5 * params.log_length_scale_sq)
    return (sf * (a @ b.T) + off) ** params.degree


def sum_kernel_matrix(params: KernelParams, a, b) -> np.ndarray:
    a, b = _check_pair(a, b)
    if params.kind != SUM:
        raise ValueError("sum_kernel_matrix needs a sum kernel")
    s = params.feature_split
    _check_split(params, a.shape[1])
    return kernel_matrix(params.left, a[:, :s], b[:, :s]) + kernel_matrix(params.right, a[:, s:], b[:, s:])


def kernel_diag(params: KernelParams, a) -> np.ndarray:
    """``diag(kernel_matrix(params, a, a))`` without forming the matrix."""
    a = np.asarray(a, dtype=np.float64)
    if params.kind == SUM:
        s = params.feature_split
        _check_split(params, a.shape[1])
        return kernel_diag(params.left, a[:, :s]) + kernel_diag(params.right, a[:, s:])
    if params.kind == RBF:
        return np.full(a.shape[0], params.signal_var)
    sf = np.exp(0.5 * params.log_signal_var)
    off = np.exp(0.5 * params.log_length_scale_sq)
    return (sf * (a * a).sum(1) + off) ** params.degree


def add_noise_diag(k, params: KernelParams) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise NotSquare(f"noise can only be added to a square matrix, got {k.shape}")
    out = k.copy()
    out[np.diag_indices_from(out)] += params.noise_var
    return out


def kernel_backward(params: KernelParams, a, b, d_k):
    """Pull back a cotangent on ``kernel_matrix(params, a, b)``.

    Returns ``(d_kernel_theta, d_a, d_b)``. The noise parameter is not part of
    ``d_kernel_theta``; see :func:`noise_backward`. When ``a`` and ``b`` are
    the same array the caller adds ``d_a + d_b``.
    """
    a, b = _check_pair(a, b)
    d_k = np.asarray(d_k, dtype=np.float64)
    if d_k.shape != (a.shape[0], b.shape[0]):
        raise DimensionMismatch(f"cotangent shape {d_k.shape} != {(a.shape[0], b.shape[0])}")
    if params.kind == SUM:
        s = params.feature_split
        _check_split(params, a.shape[1])
        tl, dal, dbl = kernel_backward(params.left, a[:, :s], b[:, :s], d_k)
        tr, dar, dbr = kernel_backward(params.right, a[:, s:], b[:, s:], d_k)
        return np.concatenate([tl, tr]), np.hstack([dal, dar]), np.hstack([dbl, dbr])
    if params.kind == RBF:
        l2 = params.length_scale_sq
        sq = _sq_dist(a, b)
        k = params.signal_var * np.exp(-0.5 * sq / l2)
        gk = d_k * k
        d_theta = np.array([gk.sum(), 0.5 * (gk * sq).sum() / l2])
        # dk_ij/da_i = -k_ij (a_i - b_j) / l2
        d_a = -(gk.sum(1)[:, None] * a - gk @ b) / l2
        d_b = -(gk.sum(0)[:, None] * b - gk.T @ a) / l2
        return d_theta, d_a, d_b
    p = params.degree
    sf = np.exp(0.5 * params.log_signal_var)
    off = np.exp(0.5 * params.log_length_scale_sq)
    dot = a @ b.T
    base = sf * dot + off
    g = d_k * (p * base ** (p - 1))
    d_theta = np.array([0.5 * sf * (g * dot).sum(), 0.5 * off * g.sum()])
    return d_theta, sf * (g @ b), sf * (g.T @ a)


def kernel_diag_backward(params: KernelParams, a, d_diag):
    """Pull back a cotangent on ``kernel_diag(params, a)``; returns ``(d_kernel_theta, d_a)``."""
    a = np.asarray(a, dtype=np.float64)
    d_diag = np.asarray(d_diag, dtype=np.float64)
    if params.kind == SUM:
        s = params.feature_split
        tl, dal = kernel_diag_backward(params.left, a[:, :s], d_diag)
        tr, dar = kernel_diag_backward(params.right, a[:, s:], d_diag)
        return np.concatenate([tl, tr]), np.hstack([dal, dar])
    if params.kind == RBF:
        return np.array([params.signal_var * d_diag.sum(), 0.0]), np.zeros_like(a)
    p = params.degree
    sf = np.exp(0.5 * params.log_signal_var)
    off = np.exp(0.5 * params.log_length_scale_sq)
    sq = (a * a).sum(1)
    g = d_diag * p * (sf * sq + off) ** (p - 1)
    d_theta = np.array([0.5 * sf * (g * sq).sum(), 0.5 * off * g.sum()])
    return d_theta, 2.0 * sf * g[:, None] * a


def noise_backward(params: KernelParams, d_k_noisy) -> float:
    """Gradient w.r.t. ``log_noise_var`` of a cotangent on ``K + noise * I``."""
    return float(np.trace(np.asarray(d_k_noisy))) * params.noise_var


# -- deep kernel ------------------------------------------------------------

@dataclass
class EmbedCache:
    mlp_cache: object
    passthrough: int


def embed(mlp: MlpParams, x, passthrough: int = 0):
    """Map raw inputs to kernel inputs.

    The first ``d - passthrough`` columns go through the network; the trailing
    ``passthrough`` columns (e.g. coordinates for a spatial kernel) are appended
    to the embedding unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    if passthrough:
        net_in, raw = x[:, :-passthrough], x[:, -passthrough:]
    else:
        net_in, raw = x, None
    z, cache = mlp_forward(mlp, net_in)
    if raw is not None:
        z = np.hstack([z, raw])
    return z, EmbedCache(cache, passthrough)


def embed_backward(mlp: MlpParams, cache: EmbedCache, d_z):
    """Returns ``(mlp_grads, d_x)``."""
    d_z = np.asarray(d_z, dtype=np.float64)
    p = mlp.output_dim
    grads, d_x = mlp_backward(mlp, cache.mlp_cache, d_z[:, :p])
    if cache.passthrough:
        d_x = np.hstack([d_x, d_z[:, p:]])
    return grads, d_x


@dataclass
class DeepKernelCache:
    z_a: np.ndarray
    z_b: np.ndarray
    cache_a: EmbedCache
    cache_b: EmbedCache


def deep_kernel_matrix(kp: KernelParams, mlp: MlpParams, a, b, passthrough: int = 0):
    """``kernel_matrix`` over network embeddings; returns ``(k, caches)``."""
    z_a, cache_a = embed(mlp, a, passthrough)
    z_b, cache_b = embed(mlp, b, passthrough)
    return kernel_matrix(kp, z_a, z_b), DeepKernelCache(z_a, z_b, cache_a, cache_b)


def deep_kernel_backward(kp: KernelParams, mlp: MlpParams, caches: DeepKernelCache, d_k):
    """Returns ``(d_kernel_theta, mlp_grads_flat)`` for a cotangent on the deep kernel matrix."""
    d_theta, d_za, d_zb = kernel_backward(kp, caches.z_a, caches.z_b, d_k)
    g_a, _ = embed_backward(mlp, caches.cache_a, d_za)
    g_b, _ = embed_backward(mlp, caches.cache_b, d_zb)
    return d_theta, g_a.flatten() + g_b.flatten()
