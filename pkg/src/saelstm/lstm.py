"""LSTM classifier: 168-unit recurrent cell plus a 3-way softmax head.

Gate algebra follows the standard formulation: per step,
    i = sigmoid(W_i x + U_i h + b_i)      input gate
    f = sigmoid(W_f x + U_f h + b_f)      forget gate
    g = tanh   (W_c x + U_c h + b_c)      cell candidate
    o = sigmoid(W_o x + U_o h + b_o)      output gate
    c' = f * c + i * g
    h' = o * tanh(c')
Classification records are wrapped as length-1 sequences; the forward and
backward passes support arbitrary T and stacked cells for experimentation.
Training backpropagates sparse categorical cross-entropy through time with
global-norm gradient clipping (exploding-gradient mitigation).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, DomainError, NumericError, ShapeError
from .numerics import (
    DenseLayer,
    adam_init,
    adam_step,
    dense_backward,
    global_norm_clip,
    glorot_uniform_init,
    softmax,
    sparse_cce_loss,
)
from .sae import SAEModel, TrainHistory, _forward_cached

GATES = ("i", "f", "c", "o")


@dataclass
class LSTMCell:
    """Per-gate input weights w (units x input_dim), recurrent weights u
    (units x units), and biases b (units,), keyed by gate name."""

    w: dict[str, np.ndarray]
    u: dict[str, np.ndarray]
    b: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        for store in (self.w, self.u, self.b):
            if tuple(store.keys()) != GATES:
                raise ShapeError(f"gate keys must be {GATES}, got {tuple(store.keys())}")
        units, input_dim = self.w["i"].shape
        for g in GATES:
            if self.w[g].shape != (units, input_dim):
                raise ShapeError(f"w[{g!r}] shape {self.w[g].shape} inconsistent")
            if self.u[g].shape != (units, units):
                raise ShapeError(f"u[{g!r}] shape {self.u[g].shape} inconsistent")
            if self.b[g].shape != (units,):
                raise ShapeError(f"b[{g!r}] shape {self.b[g].shape} inconsistent")

    @property
    def units(self) -> int:
        return self.w["i"].shape[0]

    @property
    def input_dim(self) -> int:
        return self.w["i"].shape[1]

    @property
    def param_count(self) -> int:
        return sum(a.size for d in (self.w, self.u, self.b) for a in d.values())

    def parameter_items(self) -> list[tuple[str, np.ndarray]]:
        """(name, array) pairs in a fixed order, for optimizers/persistence."""
        out = []
        for g in GATES:
            out.append((f"w_{g}", self.w[g]))
            out.append((f"u_{g}", self.u[g]))
            out.append((f"b_{g}", self.b[g]))
        return out

    def set_parameter(self, name: str, value: np.ndarray) -> None:
        kind, gate = name.split("_")
        {"w": self.w, "u": self.u, "b": self.b}[kind][gate] = value


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray


def zero_state(cell: LSTMCell, batch: int | None = None) -> CellState:
    shape = (cell.units,) if batch is None else (batch, cell.units)
    return CellState(h=np.zeros(shape), c=np.zeros(shape))


@dataclass
class LSTMClassifier:
    """Stacked LSTM cells (depth 1 by default) and a softmax head."""

    cells: list[LSTMCell]
    head: DenseLayer
    sequence_length: int = 1

    @property
    def units(self) -> int:
        return self.cells[0].units

    @property
    def input_dim(self) -> int:
        return self.cells[0].input_dim

    @property
    def classes(self) -> int:
        return self.head.fan_out

    @property
    def param_count(self) -> int:
        return sum(c.param_count for c in self.cells) + self.head.param_count


def build_classifier(
    input_dim: int = 13,
    units: int = 168,
    classes: int = 3,
    seed: int = 0,
    depth: int = 1,
) -> LSTMClassifier:
    """Glorot-initialized classifier; forget-gate biases start at 1.0."""
    if input_dim < 1 or units < 1 or classes < 2 or depth < 1:
        raise DomainError("dimensions must be positive (classes >= 2)")
    rng = np.random.default_rng(seed)
    cells = []
    for layer in range(depth):
        d = input_dim if layer == 0 else units
        w = {g: glorot_uniform_init(d, units, rng) for g in GATES}
        u = {g: glorot_uniform_init(units, units, rng) for g in GATES}
        b = {g: np.zeros(units) for g in GATES}
        b["f"] = np.ones(units)  # keep early cell memory alive
        cells.append(LSTMCell(w=w, u=u, b=b))
    head = DenseLayer(
        weights=glorot_uniform_init(units, classes, rng),
        bias=np.zeros(classes),
        activation="softmax",
    )
    return LSTMClassifier(cells=cells, head=head)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_cell_forward(
    cell: LSTMCell, x_t: np.ndarray, state: CellState
) -> tuple[CellState, dict]:
    """One gate step. x_t is (input_dim,) or (batch, input_dim); the state
    must match. Returns the new state and the cache backprop needs."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape[-1] != cell.input_dim:
        raise ShapeError(f"x width {x_t.shape[-1]} != input_dim {cell.input_dim}")
    if state.h.shape != x_t.shape[:-1] + (cell.units,):
        raise ShapeError(f"state shape {state.h.shape} does not match input {x_t.shape}")
    i = _sigmoid(x_t @ cell.w["i"].T + state.h @ cell.u["i"].T + cell.b["i"])
    f = _sigmoid(x_t @ cell.w["f"].T + state.h @ cell.u["f"].T + cell.b["f"])
    g = np.tanh(x_t @ cell.w["c"].T + state.h @ cell.u["c"].T + cell.b["c"])
    o = _sigmoid(x_t @ cell.w["o"].T + state.h @ cell.u["o"].T + cell.b["o"])
    c_new = f * state.c + i * g
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    cache = {
        "x": x_t,
        "h_prev": state.h,
        "c_prev": state.c,
        "i": i,
        "f": f,
        "g": g,
        "o": o,
        "tanh_c": tanh_c,
    }
    return CellState(h=h_new, c=c_new), cache


@dataclass
class ForwardCaches:
    """Everything lstm_backward needs from a forward pass."""

    per_layer: list[list[dict]]  # [layer][t] cell caches
    top_h: np.ndarray  # final hidden state of the top cell (batch, units)
    probs: np.ndarray  # (batch, classes)
    units: int
    input_dim: int
    depth: int
    squeeze: bool  # True if the caller passed a single unbatched sequence


def lstm_forward(
    classifier: LSTMClassifier, sequence: np.ndarray
) -> tuple[np.ndarray, ForwardCaches]:
    """Run the cell stack over t = 1..T from zero state, then head + softmax.

    sequence is (T, input_dim) for one sample or (batch, T, input_dim).
    Class probabilities come back with the matching batch shape.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    squeeze = seq.ndim == 2
    if squeeze:
        seq = seq[None, :, :]
    if seq.ndim != 3 or seq.shape[2] != classifier.input_dim:
        raise ShapeError(
            f"expected (batch, T, {classifier.input_dim}) sequences, got {seq.shape}"
        )
    batch, steps = seq.shape[0], seq.shape[1]
    if steps < 1:
        raise ShapeError("need at least one timestep")
    per_layer: list[list[dict]] = []
    layer_input = [seq[:, t, :] for t in range(steps)]
    for cell in classifier.cells:
        state = zero_state(cell, batch)
        caches: list[dict] = []
        outputs: list[np.ndarray] = []
        for t in range(steps):
            state, cache = lstm_cell_forward(cell, layer_input[t], state)
            caches.append(cache)
            outputs.append(state.h)
        per_layer.append(caches)
        layer_input = outputs
    top_h = layer_input[-1]
    logits = top_h @ classifier.head.weights.T + classifier.head.bias
    probs = softmax(logits)
    fc = ForwardCaches(
        per_layer=per_layer,
        top_h=top_h,
        probs=probs,
        units=classifier.units,
        input_dim=classifier.input_dim,
        depth=len(classifier.cells),
        squeeze=squeeze,
    )
    return (probs[0] if squeeze else probs), fc


@dataclass
class LSTMGradients:
    """Gradients keyed like the parameters; dx feeds encoder fine-tuning."""

    cells: list[dict[str, np.ndarray]]  # per layer: name -> grad
    head_w: np.ndarray
    head_b: np.ndarray
    dx: np.ndarray  # (batch, T, input_dim)

    def flat(self) -> list[np.ndarray]:
        out = []
        for cell in self.cells:
            out.extend(cell.values())
        out.extend([self.head_w, self.head_b])
        return out


def _cell_bptt(
    cell: LSTMCell, caches: list[dict], dh_external: list[np.ndarray]
) -> tuple[dict[str, np.ndarray], list[np.ndarray]]:
    """BPTT through one cell. dh_external[t] is the loss gradient arriving at
    h_t from outside the recurrence. Returns (param grads, dx per step)."""
    steps = len(caches)
    grads = {name: np.zeros_like(arr) for name, arr in cell.parameter_items()}
    dx_steps: list[np.ndarray] = [np.empty(0)] * steps
    dh_carry = np.zeros_like(dh_external[-1])
    dc_carry = np.zeros_like(dh_external[-1])
    for t in reversed(range(steps)):
        cache = caches[t]
        i, f, g, o = cache["i"], cache["f"], cache["g"], cache["o"]
        tanh_c = cache["tanh_c"]
        dh = dh_external[t] + dh_carry
        dc = dc_carry + dh * o * (1.0 - tanh_c * tanh_c)
        da = {
            "o": dh * tanh_c * o * (1.0 - o),
            "i": dc * g * i * (1.0 - i),
            "f": dc * cache["c_prev"] * f * (1.0 - f),
            "c": dc * i * (1.0 - g * g),
        }
        dx = np.zeros_like(cache["x"])
        dh_carry = np.zeros_like(dh)
        for gate in GATES:
            grads[f"w_{gate}"] += da[gate].T @ cache["x"]
            grads[f"u_{gate}"] += da[gate].T @ cache["h_prev"]
            grads[f"b_{gate}"] += da[gate].sum(axis=0)
            dx += da[gate] @ cell.w[gate]
            dh_carry += da[gate] @ cell.u[gate]
        dc_carry = dc * f
        dx_steps[t] = dx
    return grads, dx_steps


def lstm_backward(
    classifier: LSTMClassifier, caches: ForwardCaches, true_class
) -> LSTMGradients:
    """Exact BPTT gradients of the sparse cross-entropy loss.

    For a batch the loss is the batch mean, so gradients carry the 1/batch
    factor. `caches` must come from lstm_forward on this classifier.
    """
    if (
        caches.units != classifier.units
        or caches.input_dim != classifier.input_dim
        or caches.depth != len(classifier.cells)
    ):
        raise ConsistencyError("forward caches do not match this classifier")
    probs = caches.probs
    classes = np.asarray(true_class)
    if classes.ndim == 0:
        classes = classes[None]
    if classes.shape != (probs.shape[0],):
        raise ConsistencyError(
            f"{classes.shape[0]} class labels for a batch of {probs.shape[0]}"
        )
    _, dlogits = sparse_cce_loss(probs, classes)
    head_w_grad = dlogits.T @ caches.top_h
    head_b_grad = dlogits.sum(axis=0)
    dh_top = dlogits @ classifier.head.weights

    steps = len(caches.per_layer[0])
    batch = probs.shape[0]
    cell_grads: list[dict[str, np.ndarray]] = [{} for _ in classifier.cells]
    upstream = [np.zeros((batch, classifier.units)) for _ in range(steps)]
    upstream[-1] = dh_top
    for layer in reversed(range(len(classifier.cells))):
        grads, dx_steps = _cell_bptt(
            classifier.cells[layer], caches.per_layer[layer], upstream
        )
        cell_grads[layer] = grads
        upstream = dx_steps  # becomes dh_external of the layer below
    dx = np.stack(upstream, axis=1)  # (batch, T, input_dim)
    return LSTMGradients(cells=cell_grads, head_w=head_w_grad, head_b=head_b_grad, dx=dx)


@dataclass
class LSTMTrainConfig:
    epochs: int = 400
    batch_size: int = 32
    lr: float = 0.001
    seed: int = 0
    clip_norm: float | None = 5.0
    fine_tune_encoder: bool = False


def train_classifier(
    classifier: LSTMClassifier,
    features: np.ndarray,
    labels: np.ndarray,
    config: LSTMTrainConfig,
    encoder: SAEModel | None = None,
) -> TrainHistory:
    """Adam on mean-batch cross-entropy; mutates the classifier in place.

    features are 13-wide SAE encodings, each wrapped as a one-step sequence.
    With fine_tune_encoder set, features must instead be the encoder's
    (normalized) inputs: every batch is encoded on the fly and the loss
    gradient also updates the supplied encoder's weights.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[0] != labels.shape[0]:
        raise ShapeError(f"features {features.shape} and labels {labels.shape} disagree")
    if labels.size and (labels.min() < 0 or labels.max() >= classifier.classes):
        raise DomainError(f"labels must lie in 0..{classifier.classes - 1}")
    fine_tune = config.fine_tune_encoder
    if fine_tune and encoder is None:
        raise DomainError("fine_tune_encoder requires the encoder argument")
    if not fine_tune and features.shape[1] != classifier.input_dim:
        raise ShapeError(
            f"feature width {features.shape[1]} != input_dim {classifier.input_dim}"
        )

    enc_layers = encoder.encoder if fine_tune else []
    params: list[tuple] = []
    for li in range(len(classifier.cells)):
        for name, _ in classifier.cells[li].parameter_items():
            params.append(("cell", li, name))
    params.append(("head", "w", None))
    params.append(("head", "b", None))
    for li in range(len(enc_layers)):
        params.append(("enc", li, "w"))
        params.append(("enc", li, "b"))

    def get_param(key):
        kind, a, b = key
        if kind == "cell":
            return dict(classifier.cells[a].parameter_items())[b]
        if kind == "head":
            return classifier.head.weights if a == "w" else classifier.head.bias
        layer = enc_layers[a]
        return layer.weights if b == "w" else layer.bias

    def set_param(key, value):
        kind, a, b = key
        if kind == "cell":
            classifier.cells[a].set_parameter(b, value)
        elif kind == "head":
            if a == "w":
                classifier.head.weights = value
            else:
                classifier.head.bias = value
        else:
            layer = enc_layers[a]
            if b == "w":
                layer.weights = value
            else:
                layer.bias = value

    states = {key: adam_init(get_param(key), lr=config.lr) for key in params}
    rng = np.random.default_rng(config.seed)
    history = TrainHistory()
    n = features.shape[0]
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = rng.permutation(n)
        epoch_loss = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            batch_x = features[idx]
            if fine_tune:
                enc_acts = _forward_cached(enc_layers, batch_x)
                encoded = enc_acts[-1]
            else:
                encoded = batch_x
            probs, fc = lstm_forward(classifier, encoded[:, None, :])
            loss, _ = sparse_cce_loss(probs, labels[idx])
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite classifier loss at epoch {epoch + 1}, batch {b + 1}"
                )
            epoch_loss += loss * idx.size
            grads = lstm_backward(classifier, fc, labels[idx])
            grad_list = grads.flat()
            if fine_tune:
                upstream = grads.dx[:, 0, :]
                enc_grads: list[np.ndarray] = []
                for li in reversed(range(len(enc_layers))):
                    upstream, gw, gb = dense_backward(
                        enc_layers[li], enc_acts[li], upstream
                    )
                    enc_grads = [gw, gb] + enc_grads
                grad_list = grad_list + enc_grads
            if config.clip_norm:
                grad_list = global_norm_clip(grad_list, config.clip_norm)
            for key, grad in zip(params, grad_list):
                new_value, states[key] = adam_step(states[key], get_param(key), grad)
                set_param(key, new_value)
        history.losses.append(epoch_loss / n)
        history.epoch_seconds.append(time.perf_counter() - started)
    # the loss check runs before each update, so the final update is swept here
    for key in params:
        if not np.isfinite(get_param(key)).all():
            raise NumericError("non-finite weights after classifier training")
    return history


def predict(classifier: LSTMClassifier, x: np.ndarray):
    """Class index (argmax, ties toward the lowest index) and probabilities.

    A single 13-vector gives (int, (classes,)); an (n, 13) table gives
    ((n,) classes, (n, classes) probabilities).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        probs, _ = lstm_forward(classifier, x[None, :])
        return int(np.argmax(probs)), probs
    if x.ndim != 2:
        raise ShapeError(f"expected a vector or a table, got shape {x.shape}")
    probs, _ = lstm_forward(classifier, x[:, None, :])
    return np.argmax(probs, axis=1), probs
