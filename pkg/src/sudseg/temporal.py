"""Temporal machinery: EMA soft-target filter, schedules, teacher averaging.

The per-example soft target is a first-order IIR filter over successive
predictions, z <- alpha*x + (1-alpha)*z, whose impulse response is
(alpha, alpha*(1-alpha), alpha*(1-alpha)^2, ...). The same filter applied in
parameter space is the teacher update.
"""

from __future__ import annotations

import warnings
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

ALPHA_CURVES = ("linear-down", "constant")
LAMBDA_CURVES = ("linear-up", "constant", "gaussian-up")


@dataclass(frozen=True)
class Schedule:
    n_total: int
    lambda_max: float
    alpha_curve: str = "linear-down"
    alpha_value: float = 1.0
    lambda_curve: str = "linear-up"
    lambda_value: float = 0.0

    def validate(self):
        if self.n_total < 0:
            raise ValueError("n_total must be >= 0")
        if self.alpha_curve not in ALPHA_CURVES:
            raise ValueError(f"alpha_curve must be one of {ALPHA_CURVES}")
        if self.lambda_curve not in LAMBDA_CURVES:
            raise ValueError(f"lambda_curve must be one of {LAMBDA_CURVES}")
        if self.alpha_curve == "constant" and not 0.0 <= self.alpha_value <= 1.0:
            raise ValueError("constant alpha must be in [0, 1]")


def schedule_at(s: Schedule, n: int) -> tuple[float, float]:
    if not 0 <= n <= s.n_total:
        raise ValueError(f"step {n} outside [0, {s.n_total}]")
    frac = n / s.n_total if s.n_total > 0 else 0.0
    if s.alpha_curve == "linear-down":
        alpha = 1.0 - frac
    else:
        alpha = s.alpha_value
    if s.lambda_curve == "linear-up":
        lam = frac * s.lambda_max
    elif s.lambda_curve == "gaussian-up":
        lam = s.lambda_max * float(np.exp(-5.0 * (1.0 - frac) ** 2))
    else:
        lam = s.lambda_value
    return alpha, lam


def ema_update(z_prev: np.ndarray, x_new: np.ndarray, alpha: float) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if z_prev.shape != x_new.shape:
        raise ValueError(f"shape mismatch: {z_prev.shape} vs {x_new.shape}")
    return alpha * x_new + (1.0 - alpha) * z_prev


def impulse_response(alpha: float, length: int) -> np.ndarray:
    if alpha == 0.0:
        warnings.warn("impulse_response with alpha=0 is identically zero", RuntimeWarning)
        return np.zeros(length)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    k = np.arange(length)
    return alpha * (1.0 - alpha) ** k


def teacher_alpha(alpha: float, beta: float) -> float:
    """Weight on the student in the teacher average: (alpha - alpha*beta)/(1 - alpha*beta).

    The alpha=beta=1 corner (0/0) is taken as 1: the pure spatial limit has
    no temporal averaging, so the teacher just tracks the student.
    """
    den = 1.0 - alpha * beta
    if den == 0.0:
        return 1.0
    return (alpha - alpha * beta) / den


def teacher_update(teacher, student, alpha_bar: float):
    """In-place parameter EMA: teacher <- alpha_bar*student + (1-alpha_bar)*teacher."""
    if not 0.0 <= alpha_bar <= 1.0:
        raise ValueError(f"alpha_bar must be in [0, 1], got {alpha_bar}")
    if list(teacher.tensors.keys()) != list(student.tensors.keys()):
        raise ValueError("incongruent parameter sets")
    for k, t in teacher.tensors.items():
        s = student.tensors[k]
        if t.data.shape != s.data.shape:
            raise ValueError(f"incongruent parameter sets: {k} shapes differ")
        t.data = alpha_bar * s.data + (1.0 - alpha_bar) * t.data
    return teacher


class SoftTargetStore:
    """Per-example soft targets, zero-initialized on first access."""

    PREFIX = "soft_target/"

    def __init__(self):
        self._z: OrderedDict[str, np.ndarray] = OrderedDict()

    def get(self, example_id: str, shape, dtype=np.float64) -> np.ndarray:
        """Stored target, or the zero field for an example not yet updated."""
        z = self._z.get(example_id)
        return z if z is not None else np.zeros(shape, dtype=dtype)

    def seen(self, example_id: str) -> bool:
        return example_id in self._z

    def update(self, example_id: str, z: np.ndarray) -> None:
        self._z[example_id] = z

    def snapshot(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((self.PREFIX + k, v.copy()) for k, v in sorted(self._z.items()))

    def load_snapshot(self, entries, dtype=np.float64) -> None:
        for name, arr in entries.items():
            if name.startswith(self.PREFIX):
                self._z[name[len(self.PREFIX):]] = np.asarray(arr, dtype=dtype).copy()

    def __len__(self):
        return len(self._z)
