"""Sign-based training: resilient backpropagation (Rprop+) and plain
sign gradient descent, with the full-batch epoch loop, convergence check
and divergence/breakdown bookkeeping.

Both update rules use the gradient only through its sign, so scaling all
gradients by a positive constant leaves the parameter trajectory untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import losses as L
from .net import (
    GradientSet,
    Network,
    batch_deltas,
    forward_batch,
    gradient_set_to_vector,
    mean_gradient_vector,
    network_from_vector,
    param_vector,
)

DEFAULT_DIVERGE_NORM = 1e8
STEPMAX_SHALLOW = 100_000
STEPMAX_DEEP = 250_000


class Rule(str, Enum):
    RPROP_PLUS = "rprop-plus"
    SIGN_GD = "sign-gd"


class TrainStatus(str, Enum):
    CONVERGED = "converged"
    STEP_LIMIT = "step-limit"
    DIVERGED = "diverged"


@dataclass(frozen=True)
class OptimizerSpec:
    rule: Rule = Rule.RPROP_PLUS
    eta: float = 0.1            # sign-gd step size
    delta0: float = 0.0125      # Rprop initial per-parameter step
    eta_plus: float = 1.2
    eta_minus: float = 0.5
    delta_min: float = 1e-6
    delta_max: float = 50.0
    stepmax: int = STEPMAX_SHALLOW
    grad_threshold: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.eta_minus < 1.0 < self.eta_plus:
            raise ValueError("need 0 < eta_minus < 1 < eta_plus")
        if not self.delta_min <= self.delta0 <= self.delta_max:
            raise ValueError("need delta_min <= delta0 <= delta_max")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.stepmax < 1:
            raise ValueError("stepmax must be positive")
        if self.grad_threshold <= 0:
            raise ValueError("grad_threshold must be positive")


@dataclass
class RpropState:
    """Per-parameter step sizes and the sign of the previous gradient."""

    step_sizes: np.ndarray
    prev_grad_signs: np.ndarray

    @classmethod
    def initial(cls, n_params: int, spec: OptimizerSpec) -> "RpropState":
        return cls(
            step_sizes=np.full(n_params, spec.delta0, dtype=np.float64),
            prev_grad_signs=np.zeros(n_params, dtype=np.float64),
        )


@dataclass
class TrainOutcome:
    status: TrainStatus
    epochs_used: int
    final_net: Network
    sup_weight_norm: float
    breakdown: bool
    norm_history: list[float] | None = None


def check_convergence(agg: GradientSet, threshold: float) -> bool:
    """True iff every aggregated partial derivative is strictly below the
    threshold in absolute value."""
    g = gradient_set_to_vector(agg)
    return bool(np.abs(g).max() < threshold)


def _step_vec(spec: OptimizerSpec, steps, prev_signs, params, g):
    """One update on flat parameter/gradient vectors.

    Returns (new_params, new_steps, new_signs). For sign-gd the state arrays
    pass through unchanged.
    """
    if spec.rule == Rule.SIGN_GD:
        return params - spec.eta * np.sign(g), steps, prev_signs

    # Rprop+ with weight backtracking. Parameters whose gradient kept its
    # sign take a grown step; a sign flip shrinks the step, reverts the
    # previous update for that parameter and skips this epoch's update (the
    # stored sign becomes 0 so the next epoch falls into the neutral case).
    s = np.sign(g)
    prod = s * prev_signs
    flipped = prod < 0.0
    grew = prod > 0.0
    factor = np.where(grew, spec.eta_plus, np.where(flipped, spec.eta_minus, 1.0))
    new_steps = np.clip(steps * factor, spec.delta_min, spec.delta_max)
    # the previous applied update was -prev_sign * steps (pre-shrink values)
    revert = np.where(flipped, prev_signs * steps, 0.0)
    move = np.where(flipped, 0.0, -s * new_steps)
    new_params = params + move + revert
    new_signs = np.where(flipped, 0.0, s)
    return new_params, new_steps, new_signs


def step(spec: OptimizerSpec, state: RpropState | None, net: Network,
         agg: GradientSet) -> tuple[Network, RpropState | None]:
    """Apply one optimizer update to a network given an aggregated gradient."""
    params = param_vector(net)
    g = gradient_set_to_vector(agg)
    if spec.rule == Rule.RPROP_PLUS and state is None:
        state = RpropState.initial(params.shape[0], spec)
    steps = state.step_sizes if state is not None else None
    signs = state.prev_grad_signs if state is not None else None
    new_params, new_steps, new_signs = _step_vec(spec, steps, signs, params, g)
    new_state = state
    if spec.rule == Rule.RPROP_PLUS:
        new_state = RpropState(step_sizes=new_steps, prev_grad_signs=new_signs)
    return network_from_vector(net.architecture, new_params), new_state


def _as_xy(data):
    if hasattr(data, "X") and hasattr(data, "Y"):
        return data.X, data.Y
    x, y = data
    return x, y


def train(net: Network, data, loss_spec: L.LossSpec, spec: OptimizerSpec,
          diverge_norm: float = DEFAULT_DIVERGE_NORM, *,
          record_norms: bool = False,
          grad_transform=None,
          epoch_end_hook=None) -> TrainOutcome:
    """Full-batch training until convergence, the epoch cap, or divergence.

    Per epoch: forward pass, residuals, adaptive Huber threshold if
    requested, per-instance losses, aggregated (possibly trimmed) gradient,
    convergence check, optimizer step. There is no early stopping besides
    the gradient threshold; the running maximum of the flattened parameter
    norm is kept as the breakdown statistic and compared against
    diverge_norm at the end.

    grad_transform, if given, maps the flat aggregated gradient vector to a
    replacement before the convergence check and the update. epoch_end_hook
    is called as hook(epoch, predictions, per_instance_losses, y) after each
    completed epoch and may return a replacement response vector for the
    next epoch (used by the adaptive attacker).
    """
    arch = net.architecture
    X, Y = _as_xy(data)
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.array(Y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != arch.input_dim or Y.shape != (X.shape[0],):
        raise ValueError("data shapes do not match the network architecture")
    if X.shape[0] == 0:
        raise ValueError("training data must be non-empty")

    params = param_vector(net)
    n_total = params.shape[0]
    norm0 = float(np.linalg.norm(params))
    if not norm0 < diverge_norm:
        raise ValueError("diverge_norm must exceed the initial weight norm")
    sup_norm = norm0
    norms = [norm0] if record_norms else None

    steps = np.full(n_total, spec.delta0, dtype=np.float64)
    signs = np.zeros(n_total, dtype=np.float64)

    status = TrainStatus.STEP_LIMIT
    epochs = 0
    fixed_delta = loss_spec.huber_delta
    threshold = spec.grad_threshold

    # divergence shows up as inf/nan and is detected and reported below;
    # numpy's overflow warnings would only add noise to legitimate sweeps
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, spec.stepmax + 1):
            epochs = epoch
            live = network_from_vector(arch, params, copy=False)
            trace = forward_batch(live, X)
            r = Y - trace.predictions

            delta = None
            if loss_spec.kind == L.LossKind.HUBER:
                delta = (fixed_delta if fixed_delta is not None
                         else L.adaptive_huber_delta(r))

            per_loss = L.loss_value(loss_spec, r, delta)
            if loss_spec.is_trimmed:
                sel = L.trimmed_select(per_loss, loss_spec.trim_alpha)
                kept = sel.kept_indices
                objective = sel.aggregate
            else:
                kept = None
                objective = float(per_loss.mean())
            if not np.isfinite(objective):
                status = TrainStatus.DIVERGED
                break

            dl = -L.loss_gradient(loss_spec, r, delta)
            deltas = batch_deltas(live, trace, dl)
            g = mean_gradient_vector(trace, deltas, kept)
            if grad_transform is not None:
                g = grad_transform(g)
            if not np.isfinite(g).all():
                status = TrainStatus.DIVERGED
                break
            if np.abs(g).max() < threshold:
                status = TrainStatus.CONVERGED
                break

            params, steps, signs = _step_vec(spec, steps, signs, params, g)
            norm = float(np.linalg.norm(params))
            if record_norms:
                norms.append(norm)
            if norm > sup_norm:
                sup_norm = norm
            if not np.isfinite(norm):
                status = TrainStatus.DIVERGED
                break

            if epoch_end_hook is not None:
                new_y = epoch_end_hook(epoch, trace.predictions, per_loss, Y)
                if new_y is not None:
                    Y = np.asarray(new_y, dtype=np.float64)

    breakdown = status == TrainStatus.DIVERGED or sup_norm >= diverge_norm
    return TrainOutcome(
        status=status,
        epochs_used=epochs,
        final_net=network_from_vector(arch, params),
        sup_weight_norm=sup_norm,
        breakdown=breakdown,
        norm_history=norms,
    )
