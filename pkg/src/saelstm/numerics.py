"""Dense linear algebra, activations, losses, Adam, and parameter counting.

All arrays are float64 so that finite-difference gradient checks are
meaningful. Functions are pure: they never mutate their inputs and return
fresh arrays (optimizer updates included).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, ShapeError

ACTIVATIONS = ("relu", "sigmoid", "tanh", "identity", "softmax")

# activations with an elementwise derivative (softmax is handled by the
# fused cross-entropy gradient instead)
ELEMENTWISE_ACTIVATIONS = ("relu", "sigmoid", "tanh", "identity")


def glorot_uniform_init(
    fan_in: int, fan_out: int, rng_seed: int | np.random.Generator
) -> np.ndarray:
    """Weight matrix of shape (fan_out, fan_in), uniform in +-sqrt(6/(in+out))."""
    if fan_in < 1 or fan_out < 1:
        raise DomainError(f"fan_in and fan_out must be >= 1, got ({fan_in}, {fan_out})")
    rng = (
        rng_seed
        if isinstance(rng_seed, np.random.Generator)
        else np.random.default_rng(rng_seed)
    )
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass
class DenseLayer:
    """Fully-connected layer y = act(W x + b).

    weights is (fan_out, fan_in), bias is (fan_out,). Inputs may be a single
    vector (fan_in,) or a batch (n, fan_in); batches map row-wise.
    """

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match fan_out {self.weights.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]

    @property
    def param_count(self) -> int:
        return self.weights.size + self.bias.size


def apply_activation(kind: str, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise activation and its derivative evaluated at x.

    relu's derivative at exactly 0 is 0. Returns (value, d value / d x).
    """
    x = np.asarray(x, dtype=np.float64)
    if kind == "relu":
        y = np.maximum(x, 0.0)
        dy = (x > 0.0).astype(np.float64)
    elif kind == "sigmoid":
        y = _sigmoid(x)
        dy = y * (1.0 - y)
    elif kind == "tanh":
        y = np.tanh(x)
        dy = 1.0 - y * y
    elif kind == "identity":
        y = x.copy()
        dy = np.ones_like(x)
    else:
        raise DomainError(f"activation {kind!r} has no elementwise derivative")
    return y, dy


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Probabilities along the last axis, computed with max-subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim == 0 or z.shape[-1] < 1:
        raise ShapeError("softmax needs at least one logit")
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    """act(W x + b) for a vector, row-wise for a batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.fan_in:
        raise ShapeError(
            f"input width {x.shape[-1]} does not match fan_in {layer.fan_in}"
        )
    z = x @ layer.weights.T + layer.bias
    if layer.activation == "softmax":
        return softmax(z)
    y, _ = apply_activation(layer.activation, z)
    return y


def dense_backward(
    layer: DenseLayer, x: np.ndarray, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of the layer output contracted with `upstream`.

    x must be the forward-pass input. Returns (grad_x, grad_W, grad_b);
    for a batch the parameter gradients sum over rows.
    """
    if layer.activation == "softmax":
        raise DomainError(
            "softmax layers are differentiated through the fused cross-entropy path"
        )
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.shape[-1] != layer.fan_in:
        raise ShapeError(
            f"input width {x.shape[-1]} does not match fan_in {layer.fan_in}"
        )
    if upstream.shape[-1] != layer.fan_out:
        raise ShapeError(
            f"upstream width {upstream.shape[-1]} does not match fan_out {layer.fan_out}"
        )
    if x.ndim != upstream.ndim:
        raise ShapeError("x and upstream must both be vectors or both be batches")
    z = x @ layer.weights.T + layer.bias
    _, dadz = apply_activation(layer.activation, z)
    delta = upstream * dadz
    if x.ndim == 1:
        grad_w = np.outer(delta, x)
        grad_b = delta.copy()
    else:
        grad_w = delta.T @ x
        grad_b = delta.sum(axis=0)
    grad_x = delta @ layer.weights
    return grad_x, grad_w, grad_b


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient 2(pred - target)/n."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = 2.0 * diff / diff.size
    return loss, grad


PROB_FLOOR = 1e-12  # clamp inside the log so saturated probabilities stay finite


def sparse_cce_loss(
    probs: np.ndarray, true_class: int | np.ndarray
) -> tuple[float, np.ndarray]:
    """Sparse categorical cross-entropy on softmax output.

    Returns (loss, gradient w.r.t. the logits that produced `probs`), i.e.
    probs - one_hot(true_class). A 2-D probs with a class index per row is
    treated as a batch: the loss is the batch mean and the gradient carries
    the 1/n factor.
    """
    probs = np.asarray(probs, dtype=np.float64)
    classes = np.asarray(true_class)
    if probs.ndim == 1:
        if classes.ndim != 0:
            raise ShapeError("single probability vector needs a scalar class index")
        idx = int(classes)
        if not 0 <= idx < probs.shape[0]:
            raise DomainError(f"class index {idx} out of range for {probs.shape[0]} classes")
        loss = float(-np.log(max(probs[idx], PROB_FLOOR)))
        grad = probs.copy()
        grad[idx] -= 1.0
        return loss, grad
    if probs.ndim != 2 or classes.shape != (probs.shape[0],):
        raise ShapeError(
            f"probs {probs.shape} and classes {classes.shape} are not a valid batch"
        )
    if classes.min() < 0 or classes.max() >= probs.shape[1]:
        raise DomainError("class index out of range")
    n = probs.shape[0]
    picked = probs[np.arange(n), classes]
    loss = float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))
    grad = probs.copy()
    grad[np.arange(n), classes] -= 1.0
    grad /= n
    return loss, grad


@dataclass
class AdamState:
    """Per-parameter Adam accumulators (first/second moment, step counter)."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_init(
    params: np.ndarray,
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> AdamState:
    """Fresh zero-moment state shaped like `params`."""
    return AdamState(
        m=np.zeros_like(params, dtype=np.float64),
        v=np.zeros_like(params, dtype=np.float64),
        t=0,
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(
    state: AdamState, params: np.ndarray, grads: np.ndarray
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update. Returns (new params, new state)."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError(
            f"shape mismatch params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * (grads * grads)
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, m=m, v=v, t=t)


def count_params(layers) -> tuple[list[int], int]:
    """Per-layer and total parameter counts.

    Accepts DenseLayer objects, LSTM cells (anything with per-gate .w/.u/.b
    dicts), or plain descriptors: ("dense", fan_in, fan_out) and
    ("lstm", input_dim, units).
    """
    per_layer: list[int] = []
    for layer in layers:
        if isinstance(layer, DenseLayer):
            per_layer.append(layer.param_count)
        elif hasattr(layer, "w") and hasattr(layer, "u") and hasattr(layer, "b"):
            per_layer.append(sum(a.size for d in (layer.w, layer.u, layer.b) for a in d.values()))
        else:
            kind, a, b = layer
            if kind == "dense":
                per_layer.append(b * a + b)
            elif kind == "lstm":
                per_layer.append(4 * (b * (a + b) + b))
            else:
                raise DomainError(f"unknown layer descriptor kind {kind!r}")
    return per_layer, sum(per_layer)


def global_norm_clip(grads: list[np.ndarray], max_norm: float) -> list[np.ndarray]:
    """Rescale a gradient family so its global L2 norm is at most max_norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total <= max_norm or total == 0.0:
        return [g.copy() for g in grads]
    scale = max_norm / total
    return [g * scale for g in grads]
