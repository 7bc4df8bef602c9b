"""Robust regression losses and trimmed aggregation.

Residual convention: r = y - yhat. All value/gradient functions are
vectorized over r; loss_gradient returns dL/dr, dloss_dprediction returns
dL/dyhat = -dL/dr.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .net import GradientSet

TUKEY_K_DEFAULT = 4.685  # 95% efficiency tuning constant
HUBER_DELTA_FLOOR = 1e-8
STUDY_TRIM_ALPHAS = (0.1, 0.25, 0.5)


class LossKind(str, Enum):
    SQUARED = "squared"
    HUBER = "huber"
    TUKEY = "tukey"
    TRIMMED_SQUARED = "trimmed-squared"


@dataclass(frozen=True)
class LossSpec:
    """A loss choice plus its parameters.

    huber_delta None means the threshold is recomputed adaptively each epoch
    as the median absolute residual. trim_alpha is the upper trimming rate of
    the trimmed squared loss.
    """

    kind: LossKind
    huber_delta: float | None = None
    tukey_k: float = TUKEY_K_DEFAULT
    trim_alpha: float | None = None

    def __post_init__(self):
        if self.kind == LossKind.HUBER:
            if self.huber_delta is not None and self.huber_delta <= 0:
                raise ValueError("huber_delta must be positive")
        elif self.huber_delta is not None:
            raise ValueError("huber_delta only applies to the Huber loss")
        if self.kind == LossKind.TUKEY and self.tukey_k <= 0:
            raise ValueError("tukey_k must be positive")
        if self.kind == LossKind.TRIMMED_SQUARED:
            if self.trim_alpha is None or not 0.0 < self.trim_alpha < 1.0:
                raise ValueError("trim_alpha must lie in (0, 1)")
        elif self.trim_alpha is not None:
            raise ValueError("trim_alpha only applies to the trimmed squared loss")

    @classmethod
    def squared(cls) -> "LossSpec":
        return cls(LossKind.SQUARED)

    @classmethod
    def huber(cls, delta: float | None = None) -> "LossSpec":
        return cls(LossKind.HUBER, huber_delta=delta)

    @classmethod
    def tukey(cls, k: float = TUKEY_K_DEFAULT) -> "LossSpec":
        return cls(LossKind.TUKEY, tukey_k=k)

    @classmethod
    def trimmed(cls, alpha: float) -> "LossSpec":
        return cls(LossKind.TRIMMED_SQUARED, trim_alpha=alpha)

    @property
    def is_trimmed(self) -> bool:
        return self.kind == LossKind.TRIMMED_SQUARED

    @property
    def adaptive_huber(self) -> bool:
        return self.kind == LossKind.HUBER and self.huber_delta is None


def adaptive_huber_delta(residuals) -> float:
    """Median absolute residual, floored so the loss never degenerates to 0."""
    r = np.asarray(residuals, dtype=np.float64)
    if r.size < 1:
        raise ValueError("need at least one residual")
    return max(float(np.median(np.abs(r))), HUBER_DELTA_FLOOR)


def _resolve_delta(spec: LossSpec, delta: float | None) -> float:
    if delta is not None:
        return delta
    if spec.huber_delta is None:
        raise ValueError("adaptive Huber delta was not resolved before use")
    return spec.huber_delta


def loss_value(spec: LossSpec, r, delta: float | None = None):
    """Elementwise loss of residual r.

    squared: r^2. Huber: r^2/2 below delta, delta|r| - delta^2/2 above.
    Tukey: 1 - (1 - (r/k)^2)^3 below k, constant 1 above. The trimmed squared
    loss is r^2 per instance; the trimming lives in the aggregation step.
    """
    r = np.asarray(r, dtype=np.float64)
    if spec.kind in (LossKind.SQUARED, LossKind.TRIMMED_SQUARED):
        return r * r
    if spec.kind == LossKind.HUBER:
        d = _resolve_delta(spec, delta)
        a = np.abs(r)
        return np.where(a <= d, 0.5 * r * r, d * a - 0.5 * d * d)
    if spec.kind == LossKind.TUKEY:
        k = spec.tukey_k
        with np.errstate(over="ignore"):
            u = 1.0 - (r / k) ** 2
            return np.where(np.abs(r) <= k, 1.0 - u * u * u, 1.0)
    raise ValueError(f"unknown loss kind {spec.kind!r}")


def loss_gradient(spec: LossSpec, r, delta: float | None = None):
    """Elementwise dL/dr.

    The Huber gradient is clipped at +-delta; the Tukey gradient redescends
    to exactly 0 for |r| >= k.
    """
    r = np.asarray(r, dtype=np.float64)
    if spec.kind in (LossKind.SQUARED, LossKind.TRIMMED_SQUARED):
        return 2.0 * r
    if spec.kind == LossKind.HUBER:
        # r inside [-delta, delta], delta * sign(r) outside: exactly a clip
        d = _resolve_delta(spec, delta)
        return np.clip(r, -d, d)
    if spec.kind == LossKind.TUKEY:
        k = spec.tukey_k
        with np.errstate(over="ignore"):
            u = 1.0 - (r / k) ** 2
            return np.where(np.abs(r) <= k, (6.0 * r / (k * k)) * u * u, 0.0)
    raise ValueError(f"unknown loss kind {spec.kind!r}")


def dloss_dprediction(spec: LossSpec, r, delta: float | None = None):
    """dL/dyhat for residual r = y - yhat."""
    return -loss_gradient(spec, r, delta)


def trim_count(n: int, alpha: float) -> int:
    """h = ceil((1-alpha) * n), with the product snapped to the nearest
    integer first so binary representations of decimal rates (0.1, 0.25, ...)
    cannot push the ceiling one step too high."""
    if n < 1:
        raise ValueError("n must be positive")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    x = (1.0 - alpha) * n
    nearest = round(x)
    if abs(x - nearest) < 1e-9:
        return max(int(nearest), 1)
    return max(int(math.ceil(x)), 1)


@dataclass(frozen=True)
class TrimResult:
    """Outcome of selecting the h smallest ranking keys."""

    kept_indices: np.ndarray
    h: int
    aggregate: float


def trimmed_select(keys, alpha: float) -> TrimResult:
    """Keep the h = ceil((1-alpha)n) instances with the smallest keys.

    Ties are broken by the smaller index so the selection is a total order
    and repeated runs are identical.
    """
    keys = np.asarray(keys, dtype=np.float64)
    n = keys.shape[0]
    h = trim_count(n, alpha)
    order = np.argsort(keys, kind="stable")
    kept = np.sort(order[:h])
    return TrimResult(kept_indices=kept, h=h, aggregate=float(keys[kept].mean()))


def aggregate_gradients(per_instance: list[GradientSet],
                        per_instance_losses,
                        spec: LossSpec) -> GradientSet:
    """Reduce per-instance gradients to the epoch gradient.

    Non-trimmed kinds average all instances; the trimmed squared loss
    averages only the h instances with the smallest losses, discarding the
    rest entirely.
    """
    if not per_instance:
        raise ValueError("no gradients to aggregate")
    if spec.is_trimmed:
        sel = trimmed_select(per_instance_losses, spec.trim_alpha)
        chosen = [per_instance[i] for i in sel.kept_indices]
    else:
        chosen = per_instance
    m = len(chosen)
    d_w = [sum(g.d_weights[h] for g in chosen) / m
           for h in range(len(chosen[0].d_weights))]
    d_b = [sum(g.d_intercepts[h] for g in chosen) / m
           for h in range(len(chosen[0].d_intercepts))]
    return GradientSet(d_weights=d_w, d_intercepts=d_b)
