"""Mean teacher for regression: a student trained with a consistency penalty
against an exponential moving average of its own parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..net import MlpParams, init_mlp, mlp_backward, mlp_forward
from .regressor import RegressorConfig, RegressorRun, fit, mse_loss, rngs


@dataclass(frozen=True)
class MeanTeacherConfig:
    ema_decay: float = 0.99
    consistency_weight: float = 1.0
    noise_std: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in (0, 1)")
        if self.consistency_weight < 0:
            raise ValueError("consistency_weight must be non-negative")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


@dataclass
class MeanTeacherRun:
    run: RegressorRun  # run.params is the teacher at the best validation epoch
    student: MlpParams
    teacher: MlpParams
    student_trajectory: list = field(default_factory=list)
    teacher_trajectory: list = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        return self.run.predict(X)


def consistency_loss(student: MlpParams, teacher: MlpParams, X, config: MeanTeacherConfig, rng):
    """Weighted mean squared gap between noisy student and noisy teacher outputs.

    Only the student receives a gradient.
    """
    X = np.asarray(X, dtype=np.float64)
    eta1 = config.noise_std * rng.standard_normal(X.shape)
    eta2 = config.noise_std * rng.standard_normal(X.shape)
    s_out, cache = mlp_forward(student, X + eta1)
    t_out = mlp_forward(teacher, X + eta2)[0]
    gap = s_out - t_out
    w = config.consistency_weight
    g, _ = mlp_backward(student, cache, (2.0 * w / gap.shape[0]) * gap)
    return float(w * np.mean(gap ** 2)), g.flatten()


def mean_teacher_train(config: MeanTeacherConfig, reg: RegressorConfig, data, record: bool = False,
                       init: MlpParams | None = None) -> MeanTeacherRun:
    X_L, y_L = data.X_train, data.y_train
    if init is None:
        init = init_mlp(reg.layer_sizes(X_L.shape[1]), rngs(reg.seed)[0])
    teacher = init.flatten()
    student_flat = teacher.copy()
    teacher_traj = [teacher.copy()] if record else []

    def step(student, batch, rng):
        loss, grad = mse_loss(student, X_L, y_L)
        if config.consistency_weight > 0:
            c, g = consistency_loss(student, init.unflatten(teacher), np.vstack([X_L, batch]), config, rng)
            loss, grad = loss + c, grad + g
        return loss, grad

    def after(flat):
        nonlocal teacher, student_flat
        student_flat = flat
        teacher = config.ema_decay * teacher + (1.0 - config.ema_decay) * flat
        if record:
            teacher_traj.append(teacher.copy())

    run = fit(reg, data, step, after_step=after, eval_params=lambda _: init.unflatten(teacher),
              record=record, init=init)
    return MeanTeacherRun(run, init.unflatten(student_flat), init.unflatten(teacher), run.trajectory, teacher_traj)
