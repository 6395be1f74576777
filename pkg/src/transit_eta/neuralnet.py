"""Fully connected network trained with hand-written backpropagation.

Weights live in (out, in) matrices; a forward pass computes
``A_l = relu(W_l A_{l-1} + b_l)`` for hidden layers and a linear map with
bias for the single output. Training minimizes mean squared error over
shuffled mini-batches with plain SGD, SGD with momentum, or Adam.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .errors import TrainingDivergedError
from .validation import as_float_matrix, check_feature_width, check_not_empty, check_same_length

# Production architecture: 237 inputs, five shrinking hidden layers, one output.
DEFAULT_LAYER_SIZES = (237, 320, 200, 100, 40, 5, 1)
DEFAULT_HIDDEN_SIZES = DEFAULT_LAYER_SIZES[1:-1]

_PREDICT_CHUNK = 65536


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture descriptor: layer widths, activations, and init seed."""

    layer_sizes: tuple[int, ...] = DEFAULT_LAYER_SIZES
    hidden_activation: str = "relu"
    output_activation: str = "linear"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"all layer sizes must be >= 1, got {self.layer_sizes}")
        if self.layer_sizes[-1] != 1:
            raise ValueError("output layer must have exactly one unit")
        if self.hidden_activation != "relu":
            raise ValueError(f"unsupported hidden activation: {self.hidden_activation}")
        if self.output_activation != "linear":
            raise ValueError(f"unsupported output activation: {self.output_activation}")

    @property
    def input_width(self) -> int:
        return self.layer_sizes[0]


@dataclass
class Network:
    """Layered parameters; ``weights[l]`` has shape (out, in), ``biases[l]`` (out,)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    spec: NetworkSpec


@dataclass
class Gradients:
    """Loss gradients mirroring the network's parameter shapes."""

    dW: list[np.ndarray]
    db: list[np.ndarray]


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    batch_size: int = 256
    epochs: int = 30
    optimizer: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle_seed: int = 0
    patience: Optional[int] = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer not in ("sgd", "sgd_momentum", "adam"):
            raise ValueError(f"unknown optimizer: {self.optimizer}")


@dataclass
class EpochStats:
    epoch: int
    train_rmse: float
    val_rmse: float
    seconds: float


@dataclass
class TrainingLog:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_val_rmse: float = float("inf")

    def to_ldjson(self) -> str:
        lines = [
            json.dumps(
                {"epoch": e.epoch, "train_rmse": e.train_rmse,
                 "val_rmse": e.val_rmse, "seconds": e.seconds}
            )
            for e in self.epochs
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    def write_ldjson(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_ldjson())


@dataclass
class LatencyStats:
    mean_ms_per_sample: float
    samples: int


def init_network(spec: NetworkSpec) -> Network:
    """He-initialized weights (std sqrt(2/fan_in)) and zero biases."""
    rng = np.random.default_rng(spec.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return Network(weights=weights, biases=biases, spec=spec)


def clone_network(net: Network) -> Network:
    return Network(
        weights=[w.copy() for w in net.weights],
        biases=[b.copy() for b in net.biases],
        spec=net.spec,
    )


@dataclass
class ForwardCache:
    """Pre-activations and layer inputs retained for backpropagation."""

    activations: list[np.ndarray]  # activations[0] is the input batch
    pre_activations: list[np.ndarray]


def forward_batch(net: Network, X, check_finite: bool = True) -> tuple[np.ndarray, ForwardCache]:
    X = as_float_matrix(X)
    check_feature_width(X, net.spec.input_width)
    activations = [X]
    pre_activations = []
    a = X
    last = len(net.weights) - 1
    for layer, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ W.T + b
        pre_activations.append(z)
        a = np.maximum(z, 0.0) if layer < last else z
        activations.append(a)
    preds = a[:, 0]
    if check_finite and not np.all(np.isfinite(preds)):
        raise ValueError("forward pass produced non-finite predictions")
    return preds, ForwardCache(activations, pre_activations)


def forward(net: Network, x) -> tuple[float, ForwardCache]:
    """Single-sample forward pass; returns the prediction and the cache."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D input vector, got shape {x.shape}")
    preds, cache = forward_batch(net, x.reshape(1, -1))
    return float(preds[0]), cache


def predict(net: Network, X) -> np.ndarray:
    """Forward-only pass; no caches are retained. Chunked for large inputs."""
    X = as_float_matrix(X)
    check_feature_width(X, net.spec.input_width)
    if len(X) == 0:
        return np.empty(0)
    out = np.empty(len(X))
    last = len(net.weights) - 1
    for start in range(0, len(X), _PREDICT_CHUNK):
        a = X[start : start + _PREDICT_CHUNK]
        for layer, (W, b) in enumerate(zip(net.weights, net.biases)):
            z = a @ W.T + b
            a = np.maximum(z, 0.0) if layer < last else z
        out[start : start + _PREDICT_CHUNK] = a[:, 0]
    return out


def mse_loss(preds, targets) -> float:
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    check_not_empty(preds, "predictions")
    check_same_length(preds, targets, ("predictions", "targets"))
    diff = preds - targets
    return float(diff @ diff / len(diff))


def backward(net: Network, X, y, cache: ForwardCache) -> Gradients:
    """Exact gradient of the batch-mean squared error w.r.t. every parameter."""
    X = as_float_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if len(cache.activations[0]) != n or len(X) != n:
        raise ValueError("cache does not match the batch")
    preds = cache.activations[-1][:, 0]
    # d(mean squared error)/d(output pre-activation); the output is linear.
    delta = ((2.0 / n) * (preds - y))[:, None]
    dW = [np.empty(0)] * len(net.weights)
    db = [np.empty(0)] * len(net.weights)
    for layer in range(len(net.weights) - 1, -1, -1):
        a_prev = cache.activations[layer]
        dW[layer] = delta.T @ a_prev
        db[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ net.weights[layer]) * (cache.pre_activations[layer - 1] > 0)
    return Gradients(dW=dW, db=db)


class _Optimizer:
    def __init__(self, cfg: TrainConfig, net: Network):
        self.cfg = cfg

    def step(self, net: Network, grads: Gradients) -> None:
        raise NotImplementedError


class _Sgd(_Optimizer):
    def step(self, net, grads):
        lr = self.cfg.learning_rate
        for W, b, dW, db in zip(net.weights, net.biases, grads.dW, grads.db):
            W -= lr * dW
            b -= lr * db


class _SgdMomentum(_Optimizer):
    def __init__(self, cfg, net):
        super().__init__(cfg, net)
        self.vW = [np.zeros_like(w) for w in net.weights]
        self.vb = [np.zeros_like(b) for b in net.biases]

    def step(self, net, grads):
        lr, mu = self.cfg.learning_rate, self.cfg.momentum
        for i, (dW, db) in enumerate(zip(grads.dW, grads.db)):
            self.vW[i] = mu * self.vW[i] + dW
            self.vb[i] = mu * self.vb[i] + db
            net.weights[i] -= lr * self.vW[i]
            net.biases[i] -= lr * self.vb[i]


class _Adam(_Optimizer):
    def __init__(self, cfg, net):
        super().__init__(cfg, net)
        self.mW = [np.zeros_like(w) for w in net.weights]
        self.vW = [np.zeros_like(w) for w in net.weights]
        self.mb = [np.zeros_like(b) for b in net.biases]
        self.vb = [np.zeros_like(b) for b in net.biases]
        self.t = 0

    def step(self, net, grads):
        cfg = self.cfg
        self.t += 1
        correction1 = 1.0 - cfg.beta1**self.t
        correction2 = 1.0 - cfg.beta2**self.t
        for i, (dW, db) in enumerate(zip(grads.dW, grads.db)):
            self.mW[i] = cfg.beta1 * self.mW[i] + (1 - cfg.beta1) * dW
            self.vW[i] = cfg.beta2 * self.vW[i] + (1 - cfg.beta2) * dW * dW
            self.mb[i] = cfg.beta1 * self.mb[i] + (1 - cfg.beta1) * db
            self.vb[i] = cfg.beta2 * self.vb[i] + (1 - cfg.beta2) * db * db
            net.weights[i] -= cfg.learning_rate * (self.mW[i] / correction1) / (
                np.sqrt(self.vW[i] / correction2) + cfg.eps
            )
            net.biases[i] -= cfg.learning_rate * (self.mb[i] / correction1) / (
                np.sqrt(self.vb[i] / correction2) + cfg.eps
            )


_OPTIMIZERS = {"sgd": _Sgd, "sgd_momentum": _SgdMomentum, "adam": _Adam}


def _rmse(preds: np.ndarray, targets: np.ndarray) -> float:
    return float(np.sqrt(np.mean((preds - targets) ** 2)))


def train(
    net: Network,
    data: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
    val: tuple[np.ndarray, np.ndarray],
) -> tuple[Network, TrainingLog]:
    """Mini-batch training; returns the best-validation-RMSE snapshot.

    The epoch shuffle stream is seeded by ``cfg.shuffle_seed``, so a fixed
    seed and config reproduce the run exactly (single-threaded). A non-finite
    batch loss aborts with the offending epoch and batch.
    """
    X, y = as_float_matrix(data[0]), np.asarray(data[1], dtype=np.float64)
    Xv, yv = as_float_matrix(val[0]), np.asarray(val[1], dtype=np.float64)
    check_not_empty(y, "training targets")
    check_not_empty(yv, "validation targets")
    check_same_length(X, y, ("X", "y"))
    check_same_length(Xv, yv, ("X_val", "y_val"))
    check_feature_width(X, net.spec.input_width)
    check_feature_width(Xv, net.spec.input_width)

    net = clone_network(net)
    optimizer = _OPTIMIZERS[cfg.optimizer](cfg, net)
    rng = np.random.default_rng(cfg.shuffle_seed)
    log = TrainingLog()
    best = clone_network(net)
    epochs_since_best = 0
    n = len(y)

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            Xb, yb = X[idx], y[idx]
            preds, cache = forward_batch(net, Xb, check_finite=False)
            loss = float(np.mean((preds - yb) ** 2))
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch=epoch, batch=batch_index, loss=loss)
            grads = backward(net, Xb, yb, cache)
            optimizer.step(net, grads)
        train_rmse = _rmse(predict(net, X), y)
        val_rmse = _rmse(predict(net, Xv), yv)
        log.epochs.append(
            EpochStats(epoch=epoch, train_rmse=train_rmse, val_rmse=val_rmse,
                       seconds=time.perf_counter() - t0)
        )
        if val_rmse < log.best_val_rmse:
            log.best_val_rmse = val_rmse
            log.best_epoch = epoch
            best = clone_network(net)
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if cfg.patience is not None and epochs_since_best > cfg.patience:
                break
    return best, log


def param_count(net: Network) -> int:
    """Total trainable parameters: weights plus a bias for every unit."""
    return sum(w.size + b.size for w, b in zip(net.weights, net.biases))


def mac_count(net: Network) -> int:
    """Multiply-accumulate operations in one forward pass (weight products only)."""
    return sum(w.size for w in net.weights)


def complexity_report(net: Network) -> dict:
    """Parameter and MAC counts under explicitly labeled conventions.

    Published counts for architectures like this one sometimes omit the
    output bias or fold bias additions into the operation count, so both
    variants are reported.
    """
    params = param_count(net)
    bias_adds = sum(b.size for b in net.biases)
    return {
        "param_count": params,
        "param_count_without_output_bias": params - net.spec.layer_sizes[-1],
        "mac_count_weights_only": mac_count(net),
        "mac_count_including_bias_adds": mac_count(net) + bias_adds,
        "note": (
            "param_count includes a bias for every unit, output included; "
            "mac_count_weights_only counts one multiply-accumulate per weight"
        ),
    }


def predict_batch(net: Network, X) -> tuple[np.ndarray, Optional[LatencyStats]]:
    """Forward-only batch prediction with mean per-sample latency.

    A small warm-up pass is excluded from the timing. Empty input yields an
    empty prediction vector and no latency entry.
    """
    X = as_float_matrix(X)
    if len(X) == 0:
        return np.empty(0), None
    predict(net, X[: min(len(X), 32)])  # warm-up
    t0 = time.perf_counter()
    preds = predict(net, X)
    elapsed = time.perf_counter() - t0
    return preds, LatencyStats(mean_ms_per_sample=elapsed * 1000.0 / len(X), samples=len(X))


class NeuralNetRegressor(BaseEstimator, RegressorMixin):
    """Estimator wrapper over the from-scratch network.

    ``fit`` accepts an optional ``validation_data=(X_val, y_val)``; when
    absent, ``validation_fraction`` of the training data is held out for the
    best-snapshot selection and the training log.
    """

    def __init__(
        self,
        hidden_layer_sizes: Sequence[int] = DEFAULT_HIDDEN_SIZES,
        learning_rate: float = 1e-2,
        batch_size: int = 256,
        epochs: int = 30,
        optimizer: str = "adam",
        momentum: float = 0.9,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        seed: int = 0,
        patience: Optional[int] = None,
        validation_fraction: float = 0.1,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.optimizer = optimizer
        self.momentum = momentum
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.seed = seed
        self.patience = patience
        self.validation_fraction = validation_fraction

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            optimizer=self.optimizer,
            momentum=self.momentum,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            shuffle_seed=self.seed,
            patience=self.patience,
        )

    def fit(self, X, y, validation_data: Optional[tuple] = None):
        X = as_float_matrix(X)
        y = np.asarray(y, dtype=np.float64)
        check_same_length(X, y, ("X", "y"))
        if validation_data is None:
            if not 0 < self.validation_fraction < 1:
                raise ValueError("validation_fraction must be in (0, 1)")
            perm = np.random.default_rng(self.seed).permutation(len(y))
            n_val = max(1, int(round(self.validation_fraction * len(y))))
            val_idx, train_idx = perm[:n_val], perm[n_val:]
            X_train, y_train = X[train_idx], y[train_idx]
            X_val, y_val = X[val_idx], y[val_idx]
        else:
            X_train, y_train = X, y
            X_val, y_val = validation_data
        spec = NetworkSpec(
            layer_sizes=(X.shape[1], *self.hidden_layer_sizes, 1), seed=self.seed
        )
        net = init_network(spec)
        self.network_, self.log_ = train(
            net, (X_train, y_train), self._train_config(), (X_val, y_val)
        )
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "network_"):
            raise NotFittedError("estimator is not fitted")
        return predict(self.network_, X)
