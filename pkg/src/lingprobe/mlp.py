"""Feed-forward classifier trained with the adaptive-moment optimizer.

Everything is plain NumPy in double precision: rectifier hidden layers, a
normalized-exponential output, cross-entropy loss, analytic backprop with a
finite-difference verification harness, minibatch training with early
stopping on validation accuracy, and grid search.  All randomness flows
from explicit seeds so reruns are bit-identical.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .util import stable_hash

CHECKPOINT_MAGIC = b"LPNN"
CHECKPOINT_VERSION = 1

GRID_HIDDEN_LAYER_COUNTS = (1, 2, 3)
GRID_UNITS = (10, 100)
HEAD_LEARNING_RATES = (1e-3, 1e-4)


class MLPError(ValueError):
    """Invalid configuration or training inputs."""


@dataclass(frozen=True)
class MLPConfig:
    """Architecture: ``input_dim -> hidden_layers ... -> n_classes``.

    Hidden depth is restricted to the search grid (1-3 layers); a linear
    head with no hidden layer must be requested explicitly via
    ``allow_linear`` so an accidentally empty grid still fails loudly.
    """

    input_dim: int
    hidden_layers: tuple[int, ...]
    n_classes: int
    seed: int = 0
    allow_linear: bool = False

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.n_classes < 1:
            raise MLPError(
                f"dimensions must be >= 1, got input_dim={self.input_dim}, "
                f"n_classes={self.n_classes}"
            )
        if any(h < 1 for h in self.hidden_layers):
            raise MLPError(f"hidden unit counts must be >= 1, got {self.hidden_layers}")
        if not self.hidden_layers and not self.allow_linear:
            raise MLPError("empty hidden_layers: the search grid requires >= 1 layer")
        if self.hidden_layers and len(self.hidden_layers) not in GRID_HIDDEN_LAYER_COUNTS:
            raise MLPError(
                f"hidden layer count must be in {GRID_HIDDEN_LAYER_COUNTS}, "
                f"got {len(self.hidden_layers)}"
            )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        numeric = (
            self.learning_rate,
            self.batch_size,
            self.max_epochs,
            self.patience,
            self.beta1,
            self.beta2,
            self.eps,
        )
        if any(v <= 0 for v in numeric):
            raise MLPError(f"all training hyperparameters must be positive: {self}")


class MLPModel:
    """Per-layer weight matrices and bias vectors."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise MLPError("weights and biases must be nonempty parallel lists")
        for i in range(len(weights) - 1):
            if weights[i].shape[1] != weights[i + 1].shape[0]:
                raise MLPError(
                    f"layer {i} output width {weights[i].shape[1]} does not chain "
                    f"into layer {i + 1} input width {weights[i + 1].shape[0]}"
                )
        for w, b in zip(weights, biases):
            if b.shape != (w.shape[1],):
                raise MLPError(f"bias shape {b.shape} does not match weights {w.shape}")
        self.weights = weights
        self.biases = biases

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "MLPModel":
        return MLPModel([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def parameters(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def init_mlp(config: MLPConfig) -> MLPModel:
    """Symmetric uniform init scaled by 1/sqrt(fan-in); zero biases."""
    rng = np.random.default_rng(config.seed)
    dims = [config.input_dim, *config.hidden_layers, config.n_classes]
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return MLPModel(weights, biases)


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_cached(model: MLPModel, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    activations = [x]
    h = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        activations.append(h)
    probs = _softmax(h @ model.weights[-1] + model.biases[-1])
    return activations, probs


def forward(model: MLPModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities for one input vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.input_dim:
        raise MLPError(f"input width {x.shape[1]} != model input_dim {model.input_dim}")
    _, probs = _forward_cached(model, x)
    return probs[0] if single else probs


def predict(model: MLPModel, x: np.ndarray) -> np.ndarray:
    return np.argmax(forward(model, np.atleast_2d(np.asarray(x, dtype=np.float64))), axis=1)


def accuracy(model: MLPModel, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(predict(model, x) == np.asarray(y)))


def cross_entropy(model: MLPModel, x: np.ndarray, y: np.ndarray) -> float:
    probs = forward(model, np.atleast_2d(np.asarray(x, dtype=np.float64)))
    picked = probs[np.arange(len(y)), np.asarray(y, dtype=int)]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def gradients(
    model: MLPModel, x: np.ndarray, y: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Analytic mean cross-entropy gradients for one batch."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=int)
    n = x.shape[0]
    activations, probs = _forward_cached(model, x)

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grad_w: list[np.ndarray] = [np.empty(0)] * len(model.weights)
    grad_b: list[np.ndarray] = [np.empty(0)] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        grad_w[layer] = activations[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ model.weights[layer].T
            delta[activations[layer] <= 0.0] = 0.0
    return grad_w, grad_b


def numeric_gradients(
    model: MLPModel, x: np.ndarray, y: np.ndarray, step: float = 1e-5
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Central finite differences of the loss over every parameter."""
    grad_w = []
    grad_b = []
    for params, out in ((model.weights, grad_w), (model.biases, grad_b)):
        for p in params:
            g = np.zeros_like(p)
            flat_p = p.ravel()
            flat_g = g.ravel()
            for i in range(flat_p.size):
                original = flat_p[i]
                flat_p[i] = original + step
                loss_plus = cross_entropy(model, x, y)
                flat_p[i] = original - step
                loss_minus = cross_entropy(model, x, y)
                flat_p[i] = original
                flat_g[i] = (loss_plus - loss_minus) / (2.0 * step)
            out.append(g)
    return grad_w, grad_b


def grad_check(model: MLPModel, x: np.ndarray, y: np.ndarray, step: float = 1e-5) -> float:
    """Max relative error between analytic and finite-difference gradients."""
    if len(np.atleast_2d(x)) == 0:
        raise MLPError("gradient check requires a nonempty batch")
    aw, ab = gradients(model, x, y)
    nw, nb = numeric_gradients(model, x, y, step)
    worst = 0.0
    for a, n in zip(aw + ab, nw + nb):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


class _AdamState:
    def __init__(self, model: MLPModel, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(p) for p in model.parameters()]
        self.v = [np.zeros_like(p) for p in model.parameters()]

    def step(self, model: MLPModel, grads: Sequence[np.ndarray]) -> None:
        cfg = self.cfg
        self.t += 1
        bias1 = 1.0 - cfg.beta1**self.t
        bias2 = 1.0 - cfg.beta2**self.t
        for p, g, m, v in zip(model.parameters(), grads, self.m, self.v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p -= cfg.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + cfg.eps)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_accuracy: Optional[float]


def train(
    model: MLPModel,
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: Optional[tuple[np.ndarray, np.ndarray]],
    config: TrainConfig,
    seed: int = 0,
) -> tuple[MLPModel, list[EpochStats]]:
    """Minibatch training; returns the best-validation-accuracy parameters.

    With ``val_data=None`` there is no early stopping and the final-epoch
    parameters are returned (used for the final refit on a full training
    split after model selection).
    """
    x_train, y_train = train_data
    x_train = np.atleast_2d(np.asarray(x_train, dtype=np.float64))
    y_train = np.asarray(y_train, dtype=int)
    if x_train.shape[0] == 0:
        raise MLPError("training set is empty")
    if y_train.min() < 0 or y_train.max() >= model.n_classes:
        raise MLPError(
            f"labels must lie in [0, {model.n_classes}), got "
            f"[{y_train.min()}, {y_train.max()}]"
        )
    if val_data is not None:
        x_val = np.atleast_2d(np.asarray(val_data[0], dtype=np.float64))
        y_val = np.asarray(val_data[1], dtype=int)

    rng = np.random.default_rng(seed)
    state = _AdamState(model, config)
    history: list[EpochStats] = []
    best_model = model.copy()
    best_val = -np.inf
    best_epoch = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(x_train.shape[0])
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            gw, gb = gradients(model, x_train[batch], y_train[batch])
            flat = []
            for w, b in zip(gw, gb):
                flat.append(w)
                flat.append(b)
            state.step(model, flat)
        train_loss = cross_entropy(model, x_train, y_train)
        if val_data is None:
            history.append(EpochStats(epoch, train_loss, None))
            continue
        val_acc = accuracy(model, x_val, y_val)
        history.append(EpochStats(epoch, train_loss, val_acc))
        if val_acc > best_val:
            best_val = val_acc
            best_model = model.copy()
            best_epoch = epoch
        elif epoch - best_epoch >= config.patience:
            break

    return (model if val_data is None else best_model), history


@dataclass(frozen=True)
class GridSearchResult:
    best_index: int
    best_config: MLPConfig
    best_train_config: TrainConfig
    best_model: MLPModel
    val_accuracies: tuple[float, ...]


def grid_search(
    grid: Sequence[tuple[MLPConfig, TrainConfig]],
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray],
    seed: int = 0,
) -> GridSearchResult:
    """Train every cell, pick the best validation accuracy (earliest wins ties)."""
    if not grid:
        raise MLPError("hyperparameter grid is empty")
    accuracies: list[float] = []
    models: list[MLPModel] = []
    for index, (mlp_cfg, train_cfg) in enumerate(grid):
        cell_seed = stable_hash(seed, "cell", index)
        seeded_cfg = MLPConfig(
            input_dim=mlp_cfg.input_dim,
            hidden_layers=mlp_cfg.hidden_layers,
            n_classes=mlp_cfg.n_classes,
            seed=stable_hash(cell_seed, "init"),
            allow_linear=mlp_cfg.allow_linear,
        )
        model = init_mlp(seeded_cfg)
        fitted, _ = train(model, train_data, val_data, train_cfg, seed=cell_seed)
        accuracies.append(accuracy(fitted, val_data[0], val_data[1]))
        models.append(fitted)
    best_index = int(np.argmax(accuracies))
    best_cfg, best_train_cfg = grid[best_index]
    return GridSearchResult(
        best_index, best_cfg, best_train_cfg, models[best_index], tuple(accuracies)
    )


def save_model(model: MLPModel, path) -> None:
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(model.weights)))
        for w, b in zip(model.weights, model.biases):
            rows, cols = w.shape
            f.write(struct.pack("<II", rows, cols))
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path) -> MLPModel:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise MLPError(f"{path}: bad checkpoint magic {data[:4]!r}")
    version, n_layers = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise MLPError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    weights = []
    biases = []
    for _ in range(n_layers):
        if offset + 8 > len(data):
            raise MLPError(f"{path}: truncated checkpoint")
        rows, cols = struct.unpack_from("<II", data, offset)
        offset += 8
        need = (rows * cols + cols) * 8
        if offset + need > len(data):
            raise MLPError(f"{path}: truncated checkpoint")
        w = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=offset)
        offset += rows * cols * 8
        b = np.frombuffer(data, dtype="<f8", count=cols, offset=offset)
        offset += cols * 8
        weights.append(w.reshape(rows, cols).copy())
        biases.append(b.copy())
    if offset != len(data):
        raise MLPError(f"{path}: {len(data) - offset} trailing bytes")
    return MLPModel(weights, biases)


def write_history_csv(history: Sequence[EpochStats], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_loss", "val_acc"])
        for row in history:
            val = "" if row.val_accuracy is None else repr(row.val_accuracy)
            writer.writerow([row.epoch, repr(row.train_loss), val])


def default_probe_grid(input_dim: int, n_classes: int) -> list[tuple[MLPConfig, TrainConfig]]:
    """Hidden depth 1-3 x units {10, 100} x head learning rates."""
    grid = []
    for n_layers in GRID_HIDDEN_LAYER_COUNTS:
        for units in GRID_UNITS:
            for lr in HEAD_LEARNING_RATES:
                grid.append(
                    (
                        MLPConfig(input_dim, (units,) * n_layers, n_classes),
                        TrainConfig(learning_rate=lr),
                    )
                )
    return grid
