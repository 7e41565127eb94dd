"""Stacked autoencoder: 13-75-50-13-50-75-13 dense stack trained on reconstruction.

The first three layers are the encoder, the last three the decoder. Every
layer is relu except the final decoder layer, which is identity so
reconstructions can reach the [0, 1] boundary cleanly under MSE. Training
is end-to-end by default; a greedy layer-wise mode trains the three
encoder/decoder pairs inside-out before assembly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError, SchemaError, ShapeError
from .numerics import (
    DenseLayer,
    adam_init,
    adam_step,
    count_params,
    dense_backward,
    dense_forward,
    glorot_uniform_init,
    mse_loss,
)

SAE_DIMS = (13, 75, 50, 13, 50, 75, 13)
ENCODER_DEPTH = 3


@dataclass
class TrainHistory:
    """Per-epoch mean loss and wall-clock seconds."""

    losses: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)

    @property
    def epochs_completed(self) -> int:
        return len(self.losses)

    def to_dict(self) -> dict:
        return {"losses": self.losses, "epoch_seconds": self.epoch_seconds}


@dataclass
class SAETrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 0.001
    seed: int = 0
    layerwise: bool = False


@dataclass
class SAEModel:
    """Six dense layers; encoder output width equals the 13-wide input."""

    layers: list[DenseLayer]
    rng_seed: int = 0

    @property
    def encoder(self) -> list[DenseLayer]:
        return self.layers[:ENCODER_DEPTH]

    @property
    def decoder(self) -> list[DenseLayer]:
        return self.layers[ENCODER_DEPTH:]

    @property
    def param_count(self) -> int:
        return count_params(self.layers)[1]


def build_sae(seed: int = 0) -> SAEModel:
    """Glorot-initialized stack with the standard 13-75-50-13-50-75-13 widths."""
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(SAE_DIMS[:-1], SAE_DIMS[1:])):
        activation = "identity" if i == len(SAE_DIMS) - 2 else "relu"
        layers.append(
            DenseLayer(
                weights=glorot_uniform_init(fan_in, fan_out, rng),
                bias=np.zeros(fan_out),
                activation=activation,
            )
        )
    return SAEModel(layers=layers, rng_seed=seed)


def _forward_cached(layers: list[DenseLayer], x: np.ndarray) -> list[np.ndarray]:
    """Activations [input, layer1 out, ..., layerN out]."""
    acts = [x]
    for layer in layers:
        acts.append(dense_forward(layer, acts[-1]))
    return acts


def _train_stack(
    layers: list[DenseLayer],
    data: np.ndarray,
    epochs: int,
    batch_size: int,
    lr: float,
    rng: np.random.Generator,
    history: TrainHistory,
    stage: str,
) -> None:
    """Adam on reconstruction MSE over `layers`, mutating their weights."""
    n = data.shape[0]
    states = [
        [adam_init(layer.weights, lr=lr), adam_init(layer.bias, lr=lr)]
        for layer in layers
    ]
    for epoch in range(epochs):
        started = time.perf_counter()
        order = rng.permutation(n)
        epoch_loss = 0.0
        for b, start in enumerate(range(0, n, batch_size)):
            idx = order[start : start + batch_size]
            batch = data[idx]
            acts = _forward_cached(layers, batch)
            loss, upstream = mse_loss(acts[-1], batch)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite {stage} loss at epoch {epoch + 1}, batch {b + 1}"
                )
            epoch_loss += loss * idx.size
            for li in reversed(range(len(layers))):
                upstream, grad_w, grad_b = dense_backward(layers[li], acts[li], upstream)
                layers[li].weights, states[li][0] = adam_step(
                    states[li][0], layers[li].weights, grad_w
                )
                layers[li].bias, states[li][1] = adam_step(
                    states[li][1], layers[li].bias, grad_b
                )
        history.losses.append(epoch_loss / n)
        history.epoch_seconds.append(time.perf_counter() - started)
    # the loss check runs before each update, so the final update is swept here
    for layer in layers:
        if not (np.isfinite(layer.weights).all() and np.isfinite(layer.bias).all()):
            raise NumericError(f"non-finite weights after {stage} training")


def train_sae(
    model: SAEModel, features: np.ndarray, config: SAETrainConfig
) -> TrainHistory:
    """Pretrain on reconstruction MSE; mutates the model, returns the history.

    features must be a normalized (n, 13) table. Epoch shuffling is driven
    by config.seed, so identical data + config gives bit-identical weights.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != SAE_DIMS[0]:
        raise ShapeError(f"expected (n, {SAE_DIMS[0]}) features, got {features.shape}")
    if features.size and (features.min() < -1e-9 or features.max() > 1.0 + 1e-9):
        raise DomainError("features must be normalized to [0, 1] before pretraining")
    rng = np.random.default_rng(config.seed)
    history = TrainHistory()
    if config.epochs == 0:
        return history
    if not config.layerwise:
        _train_stack(
            model.layers,
            features,
            config.epochs,
            config.batch_size,
            config.lr,
            rng,
            history,
            stage="reconstruction",
        )
        return history
    # greedy mode: encoder layer i pairs with decoder layer 5-i, trained
    # inside-out on the previous stage's codes
    stage_inputs = features
    for depth in range(ENCODER_DEPTH):
        enc = model.layers[depth]
        dec = model.layers[len(model.layers) - 1 - depth]
        _train_stack(
            [enc, dec],
            stage_inputs,
            config.epochs,
            config.batch_size,
            config.lr,
            rng,
            history,
            stage=f"layerwise[{depth}]",
        )
        stage_inputs = dense_forward(enc, stage_inputs)
    return history


def encode(model: SAEModel, x: np.ndarray) -> np.ndarray:
    """13-dimensional latent code: exactly the first three layers applied."""
    out = np.asarray(x, dtype=np.float64)
    for layer in model.encoder:
        out = dense_forward(layer, out)
    return out


def reconstruct(model: SAEModel, x: np.ndarray) -> np.ndarray:
    """Full 6-layer forward pass."""
    out = np.asarray(x, dtype=np.float64)
    for layer in model.layers:
        out = dense_forward(layer, out)
    return out


def importance_from_weights(
    weights: np.ndarray, feature_names: list[str]
) -> list[tuple[str, float]]:
    """Rank features by the L1 norm of their weight columns.

    Scores are normalized to sum to 1 (uniform if the matrix is all zero);
    ties break toward the lower column index. Descending order.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[1] != len(feature_names):
        raise SchemaError(
            f"{len(feature_names)} names for {weights.shape[1]} weight columns"
        )
    raw = np.abs(weights).sum(axis=0)
    total = raw.sum()
    scores = raw / total if total > 0 else np.full(raw.shape, 1.0 / raw.size)
    order = sorted(range(scores.size), key=lambda j: (-scores[j], j))
    return [(feature_names[j], float(scores[j])) for j in order]


def feature_importance(
    model: SAEModel,
    feature_names: list[str],
    method: str = "weight",
    data: np.ndarray | None = None,
) -> list[tuple[str, float]]:
    """Ranked (feature, score) pairs from the trained encoder.

    method "weight" uses first-layer L1 column norms; method "activation"
    weighs each column by the mean absolute activation of the hidden unit
    it feeds, computed over `data`.
    """
    if len(feature_names) != SAE_DIMS[0]:
        raise SchemaError(
            f"expected {SAE_DIMS[0]} feature names, got {len(feature_names)}"
        )
    first = model.layers[0]
    if method == "weight":
        return importance_from_weights(first.weights, feature_names)
    if method == "activation":
        if data is None:
            raise DomainError("activation-based importance needs a data sample")
        hidden = dense_forward(first, np.asarray(data, dtype=np.float64))
        unit_activity = np.abs(hidden).mean(axis=0)
        attributed = unit_activity[:, None] * np.abs(first.weights)
        return importance_from_weights(attributed, feature_names)
    raise DomainError(f"unknown importance method {method!r}")
