"""Feed-forward regression network core.

Plain numpy implementation of a fully-connected feed-forward network with
one real-valued output node: forward pass, exact backpropagation producing
per-instance gradients, parameter accounting and the flattened-parameter
norm used by the breakdown probe.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Activation(str, Enum):
    LOGISTIC = "logistic"
    SOFTPLUS = "softplus"
    IDENTITY = "identity"


def activate(kind: Activation, z):
    """Apply an activation function elementwise.

    logistic(z) = 1/(1+exp(-z)), softplus(z) = ln(1+exp(z)), identity(z) = z.
    Both saturating kinds are evaluated overflow-safely: softplus goes through
    log-add-exp, the logistic simply lets exp(-z) overflow to inf (giving the
    exact limit 0) with the warning suppressed.
    """
    z = np.asarray(z, dtype=np.float64)
    if kind == Activation.LOGISTIC:
        with np.errstate(over="ignore"):
            return 1.0 / (1.0 + np.exp(-z))
    if kind == Activation.SOFTPLUS:
        return np.logaddexp(0.0, z)
    if kind == Activation.IDENTITY:
        return z
    raise ValueError(f"unknown activation {kind!r}")


def activate_deriv(kind: Activation, z):
    """Derivative of the activation as a function of the pre-activation z."""
    z = np.asarray(z, dtype=np.float64)
    if kind in (Activation.LOGISTIC, Activation.SOFTPLUS):
        # logistic'(z) = s(1-s), softplus'(z) = s, with s = logistic(z)
        s = activate(Activation.LOGISTIC, z)
        if kind == Activation.SOFTPLUS:
            return s
        return s * (1.0 - s)
    if kind == Activation.IDENTITY:
        return np.ones_like(z)
    raise ValueError(f"unknown activation {kind!r}")


def _deriv_from_activation(kind: Activation, z_act):
    # cheaper than recomputing from the pre-activation when z_act = act(a)
    # is already available; only valid for the kinds handled here.
    if kind == Activation.LOGISTIC:
        return z_act * (1.0 - z_act)
    raise ValueError(kind)


@dataclass(frozen=True)
class Architecture:
    """Layer layout of a regression network: p inputs, H hidden layers, one output."""

    input_dim: int
    hidden_sizes: tuple[int, ...]
    hidden_activation: Activation = Activation.LOGISTIC
    output_activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(s) for s in self.hidden_sizes))
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if len(self.hidden_sizes) < 1:
            raise ValueError("at least one hidden layer is required")
        if any(s < 1 for s in self.hidden_sizes):
            raise ValueError("hidden layer sizes must be positive")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        """Node counts per layer including input (index 0) and the single output."""
        return (self.input_dim, *self.hidden_sizes, 1)

    @property
    def n_layers(self) -> int:
        """Number of weighted layers (hidden layers plus output layer)."""
        return len(self.hidden_sizes) + 1

    def activation_of(self, layer: int) -> Activation:
        """Activation of weighted layer `layer` (1-based; output layer = n_layers)."""
        return self.output_activation if layer == self.n_layers else self.hidden_activation


@dataclass
class Network:
    """Weights and intercepts of a feed-forward network.

    weights[h] has shape (nodes of layer h+1, nodes of layer h) counting the
    input as layer 0: entry (l, j) connects node j of the previous layer to
    node l of this layer. intercepts[h] has one entry per node of the layer.
    """

    weights: list[np.ndarray]
    intercepts: list[np.ndarray]
    architecture: Architecture


@dataclass
class ForwardTrace:
    """Per-layer pre-activations and activations of one forward pass.

    Lists are indexed by weighted layer (0 = first hidden layer); the input
    vector is not repeated here.
    """

    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]
    prediction: float


@dataclass
class BatchTrace:
    """Forward pass over a whole data matrix.

    activations[0] is the input X itself; activations[h] and
    pre_activations[h-1] belong to weighted layer h. predictions has one
    entry per row of X.
    """

    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]
    predictions: np.ndarray


@dataclass
class GradientSet:
    """Loss gradients with the same shapes as the owning network's parameters."""

    d_weights: list[np.ndarray]
    d_intercepts: list[np.ndarray]


def count_parameters(arch: Architecture) -> tuple[int, int, int]:
    """Return (number of intercepts, number of weights, total parameters)."""
    sizes = arch.layer_sizes
    n_intercepts = sum(sizes[1:])
    n_weights = sum(sizes[h] * sizes[h - 1] for h in range(1, len(sizes)))
    return n_intercepts, n_weights, n_intercepts + n_weights


def param_vector(net: Network) -> np.ndarray:
    """Flatten (intercepts, weights) into one vector, intercepts first."""
    return np.concatenate(
        [v.ravel() for v in net.intercepts] + [w.ravel() for w in net.weights]
    )


def network_from_vector(arch: Architecture, vec: np.ndarray, copy: bool = True) -> Network:
    """Rebuild a Network from a flat parameter vector (inverse of param_vector)."""
    sizes = arch.layer_sizes
    n_b, n_w, total = count_parameters(arch)
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (total,):
        raise ValueError(f"expected parameter vector of length {total}, got {vec.shape}")
    if copy:
        vec = vec.copy()
    intercepts = []
    weights = []
    off = 0
    for h in range(1, len(sizes)):
        intercepts.append(vec[off : off + sizes[h]])
        off += sizes[h]
    for h in range(1, len(sizes)):
        k = sizes[h] * sizes[h - 1]
        weights.append(vec[off : off + k].reshape(sizes[h], sizes[h - 1]))
        off += k
    return Network(weights=weights, intercepts=intercepts, architecture=arch)


def init_weights(arch: Architecture, rng: np.random.Generator) -> Network:
    """Draw every weight and intercept i.i.d. standard normal."""
    _, _, total = count_parameters(arch)
    return network_from_vector(arch, rng.standard_normal(total), copy=False)


def forward_batch(net: Network, X) -> BatchTrace:
    """Forward pass for a whole (n, p) input matrix."""
    arch = net.architecture
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != arch.input_dim:
        raise ValueError(f"expected {arch.input_dim} input columns, got {X.shape[1]}")
    pre = []
    acts = [X]
    z = X
    for h in range(arch.n_layers):
        a = z @ net.weights[h].T + net.intercepts[h]
        z = activate(arch.activation_of(h + 1), a)
        pre.append(a)
        acts.append(z)
    return BatchTrace(pre_activations=pre, activations=acts, predictions=z[:, 0])


def forward(net: Network, x) -> ForwardTrace:
    """Forward pass for a single input vector."""
    trace = forward_batch(net, np.asarray(x, dtype=np.float64)[None, :])
    return ForwardTrace(
        pre_activations=[a[0].copy() for a in trace.pre_activations],
        activations=[z[0].copy() for z in trace.activations[1:]],
        prediction=float(trace.predictions[0]),
    )


def predict(net: Network, X) -> np.ndarray:
    """Predictions for every row of X."""
    return forward_batch(net, X).predictions


def batch_deltas(net: Network, trace: BatchTrace, dloss_dpred) -> list[np.ndarray]:
    """Backpropagated error terms delta per layer, shape (n, L_h) each.

    dloss_dpred holds dL/dyhat per instance. The output-layer delta is
    dL/dyhat * sigma'(a_out); earlier layers follow the chain-rule recursion
    delta_h = (W_{h+1}^T delta_{h+1}) * sigma'(a_h).
    """
    arch = net.architecture
    dl = np.asarray(dloss_dpred, dtype=np.float64).reshape(-1, 1)
    out_kind = arch.activation_of(arch.n_layers)
    if out_kind == Activation.IDENTITY:
        d = dl.copy()
    else:
        d = dl * activate_deriv(out_kind, trace.pre_activations[-1])
    deltas = [d]
    hid = arch.hidden_activation
    for h in range(arch.n_layers - 2, -1, -1):
        g = deltas[0] @ net.weights[h + 1]
        if hid == Activation.LOGISTIC:
            deriv = _deriv_from_activation(hid, trace.activations[h + 1])
        else:
            deriv = activate_deriv(hid, trace.pre_activations[h])
        deltas.insert(0, g * deriv)
    return deltas


def backprop(net: Network, X, dloss_dpred) -> list[GradientSet]:
    """Per-instance parameter gradients for every row of X.

    The caller supplies dL/dyhat per instance (the residual-gradient part of
    the chosen loss); this routine only applies the network chain rule. The
    returned list leaves the aggregation policy (mean, trimmed mean) to the
    caller.
    """
    trace = forward_batch(net, X)
    deltas = batch_deltas(net, trace, dloss_dpred)
    n = trace.predictions.shape[0]
    out = []
    for i in range(n):
        d_w = [np.outer(deltas[h][i], trace.activations[h][i])
               for h in range(net.architecture.n_layers)]
        d_b = [deltas[h][i].copy() for h in range(net.architecture.n_layers)]
        out.append(GradientSet(d_weights=d_w, d_intercepts=d_b))
    return out


def mean_gradient_vector(trace: BatchTrace, deltas: list[np.ndarray], kept=None) -> np.ndarray:
    """Mean gradient over instances as a flat vector in param_vector layout.

    kept selects a row subset (trimmed aggregation); None averages all rows.
    """
    if kept is not None:
        deltas = [d[kept] for d in deltas]
        acts = [z[kept] for z in trace.activations[:-1]]
    else:
        acts = trace.activations[:-1]
    n = deltas[0].shape[0]
    parts = [d.mean(axis=0) for d in deltas]
    parts += [(d.T @ z).ravel() / n for d, z in zip(deltas, acts)]
    return np.concatenate(parts)


def gradient_set_to_vector(g: GradientSet) -> np.ndarray:
    """Flatten a GradientSet with the param_vector layout (intercepts first)."""
    return np.concatenate(
        [v.ravel() for v in g.d_intercepts] + [w.ravel() for w in g.d_weights]
    )


def weight_vec_norm(net: Network) -> float:
    """Euclidean norm of the flattened (intercepts, weights) vector.

    Returns +inf whenever any parameter is non-finite, so the value is usable
    directly as a breakdown marker.
    """
    vec = param_vector(net)
    if not np.isfinite(vec).all():
        return float("inf")
    return float(np.linalg.norm(vec))
