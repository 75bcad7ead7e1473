"""Fully connected embedding network with hand-written backprop and Adam.

Hidden layers use ReLU, the final layer is linear. Weights are stored as
``(fan_in, fan_out)`` so a forward layer is ``h @ W + b``.

Checkpoint layout (all little-endian)::

    b"SSKLNET1"                      8-byte magic
    uint32 L                         number of layer sizes
    uint32 sizes[L]                  e.g. d, 100, 50, 50, 2
    float64 params[...]              W0 (row-major), b0, W1, b1, ...
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .errors import DimensionMismatch, NonFinite

DEFAULT_HIDDEN = (100, 50, 50)
DEFAULT_EMBED_DIM = 2
CHECKPOINT_MAGIC = b"SSKLNET1"


@dataclass
class MlpParams:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activation: str = "relu"

    @property
    def layer_sizes(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def size(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def unflatten(self, flat: np.ndarray) -> "MlpParams":
        """New params with this layout, filled from ``flat``."""
        return params_from_flat(self.layer_sizes, flat, self.activation)

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activation)

    def zeros_like(self) -> "MlpParams":
        return MlpParams([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases], self.activation)


def params_from_flat(layer_sizes: Sequence[int], flat, activation: str = "relu") -> MlpParams:
    flat = np.asarray(flat, dtype=np.float64)
    weights, biases = [], []
    pos = 0
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        pos += fan_in * fan_out
        biases.append(flat[pos:pos + fan_out].copy())
        pos += fan_out
    if pos != flat.size:
        raise DimensionMismatch(f"flat vector has {flat.size} entries, layout needs {pos}")
    return MlpParams(weights, biases, activation)


def init_mlp(layer_sizes: Sequence[int], rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    if len(layer_sizes) < 2:
        raise DimensionMismatch("need at least an input and an output size")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def embedding_layer_sizes(input_dim: int, hidden=DEFAULT_HIDDEN, output_dim: int = DEFAULT_EMBED_DIM) -> tuple:
    return (int(input_dim), *map(int, hidden), int(output_dim))


@dataclass
class ForwardCache:
    inputs: List[np.ndarray] = field(default_factory=list)  # input to each layer
    pre: List[np.ndarray] = field(default_factory=list)  # pre-activation of each layer


def mlp_forward(params: MlpParams, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise DimensionMismatch(f"input has shape {x.shape}, network expects {params.input_dim} columns")
    if not np.all(np.isfinite(x)):
        raise NonFinite("network input contains NaN or Inf")
    cache = ForwardCache()
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        cache.inputs.append(h)
        z = h @ w + b
        cache.pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    return h, cache


def mlp_backward(params: MlpParams, cache: ForwardCache, d_out):
    """Gradients of ``sum(d_out * output)`` w.r.t. parameters and input.

    Returns ``(grads, d_x)`` where ``grads`` has the same layout as ``params``.
    """
    d_h = np.asarray(d_out, dtype=np.float64)
    if d_h.shape != cache.pre[-1].shape:
        raise DimensionMismatch(f"cotangent shape {d_h.shape} != output shape {cache.pre[-1].shape}")
    n_layers = len(params.weights)
    d_w = [None] * n_layers
    d_b = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        d_z = d_h if i == n_layers - 1 else d_h * (cache.pre[i] > 0)
        d_w[i] = cache.inputs[i].T @ d_z
        d_b[i] = d_z.sum(axis=0)
        d_h = d_z @ params.weights[i].T
    return MlpParams(d_w, d_b, params.activation), d_h


class Adam:
    """Adam with bias correction; L2 decay is folded into the gradient.

    Operates on flat parameter vectors. The state (step count and moments)
    lives on the instance, so one instance serves exactly one parameter group.
    """

    def __init__(self, size: int, learning_rate: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8, weight_decay: float = 0.0):
        if not (0.0 < beta1 < 1.0 and 0.0 < beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.weight_decay = weight_decay
        self.step_count = 0
        self.first_moment = np.zeros(size)
        self.second_moment = np.zeros(size)

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        params = np.asarray(params, dtype=np.float64)
        grads = np.asarray(grads, dtype=np.float64)
        if params.shape != self.first_moment.shape or grads.shape != params.shape:
            raise DimensionMismatch(
                f"Adam state has {self.first_moment.shape}, got params {params.shape} grads {grads.shape}"
            )
        if self.weight_decay:
            grads = grads + self.weight_decay * params
        self.step_count += 1
        t = self.step_count
        self.first_moment = self.beta1 * self.first_moment + (1.0 - self.beta1) * grads
        self.second_moment = self.beta2 * self.second_moment + (1.0 - self.beta2) * grads * grads
        m_hat = self.first_moment / (1.0 - self.beta1 ** t)
        v_hat = self.second_moment / (1.0 - self.beta2 ** t)
        return params - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


def checkpoint_bytes(params: MlpParams) -> bytes:
    sizes = params.layer_sizes
    header = CHECKPOINT_MAGIC + struct.pack(f"<I{len(sizes)}I", len(sizes), *sizes)
    return header + params.flatten().astype("<f8").tobytes()


def params_from_bytes(blob: bytes) -> tuple:
    """Parse a checkpoint; returns ``(params, bytes_consumed)``."""
    if blob[:8] != CHECKPOINT_MAGIC:
        raise ValueError("not a network checkpoint (bad magic)")
    (n_sizes,) = struct.unpack_from("<I", blob, 8)
    sizes = struct.unpack_from(f"<{n_sizes}I", blob, 12)
    start = 12 + 4 * n_sizes
    n_params = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    end = start + 8 * n_params
    if len(blob) < end:
        raise ValueError("truncated network checkpoint")
    flat = np.frombuffer(blob[start:end], dtype="<f8").astype(np.float64)
    return params_from_flat(sizes, flat), end


def save_checkpoint(params: MlpParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(params))


def load_checkpoint(path) -> MlpParams:
    with open(path, "rb") as fh:
        params, _ = params_from_bytes(fh.read())
    return params
