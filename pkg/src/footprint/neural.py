"""Fully connected feed-forward networks predicting all eight traits jointly.

ReLU hidden layers with inverted dropout, a linear output layer, masked
MSE loss, Adam with bias correction and continuous exponential learning
rate decay. Weight matrices are stored ``(fan_in, fan_out)`` and batches
are row-major, so a layer computes ``relu(x @ W + b)``.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError, DataError, DivergenceError, OptimizationError, ParameterError
from .ingest import BINARY_TRAITS, TRAITS
from .metrics import AccuracyScore, score

N_OUTPUTS = len(TRAITS)
BINARY_COLUMNS = tuple(i for i, t in enumerate(TRAITS) if t in BINARY_TRAITS)


@dataclass
class MlpModel:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    # affine input scaling applied before the first layer
    input_mean: np.ndarray | None = None
    input_scale: np.ndarray | None = None

    @property
    def n_hidden(self) -> int:
        return len(self.layer_sizes) - 2

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def save(self, path: str | os.PathLike) -> None:
        arrays = {"layer_sizes": np.array(self.layer_sizes)}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"W{i}"] = w
            arrays[f"b{i}"] = b
        if self.input_mean is not None:
            arrays["input_mean"] = self.input_mean
            arrays["input_scale"] = self.input_scale
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "MlpModel":
        with np.load(path, allow_pickle=False) as z:
            sizes = tuple(int(s) for s in z["layer_sizes"])
            n = len(sizes) - 1
            return cls(
                sizes,
                [z[f"W{i}"] for i in range(n)],
                [z[f"b{i}"] for i in range(n)],
                z["input_mean"] if "input_mean" in z else None,
                z["input_scale"] if "input_scale" in z else None,
            )


def init_model(layer_sizes: Sequence[int], seed: int = 0) -> MlpModel:
    """He-style uniform initialization (std ``sqrt(2 / fan_in)``), zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise ParameterError("need at least an input and an output size")
    if any(s <= 0 for s in sizes):
        raise ParameterError(f"layer sizes must be positive, got {list(sizes)}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, weights, biases)


def keep_probabilities(n_hidden: int, scheme: str = "a", keep: float = 0.5) -> list[float]:
    """Per-hidden-layer keep probability.

    Scheme ``a``: dropout after every hidden layer with ``keep``.
    Scheme ``b``: dropout after every second hidden layer, the i-th of n
    dropouts keeping units with probability i / (2n); other layers keep all.
    """
    if scheme == "a":
        if not 0.0 < keep <= 1.0:
            raise ParameterError(f"keep probability must be in (0, 1], got {keep}")
        return [keep] * n_hidden
    if scheme == "b":
        positions = [l for l in range(n_hidden) if (l + 1) % 2 == 0]
        probs = [1.0] * n_hidden
        n = len(positions)
        for i, l in enumerate(positions, start=1):
            probs[l] = i / (2.0 * n)
        return probs
    raise ParameterError(f"unknown dropout scheme {scheme!r}")


@dataclass
class ForwardCache:
    x: np.ndarray  # scaled input
    pre: list[np.ndarray]  # pre-activations of hidden layers
    hidden: list[np.ndarray]  # ReLU outputs before dropout
    masks: list[np.ndarray | None]  # inverted-dropout multipliers (0 or 1/keep)
    output: np.ndarray


def _scale_input(model: MlpModel, X: np.ndarray) -> np.ndarray:
    if model.input_mean is None:
        return X
    return (X - model.input_mean) / model.input_scale


def forward(
    model: MlpModel,
    X,
    keep_probs: Sequence[float] | None = None,
    rng: np.random.Generator | None = None,
    train: bool = False,
) -> ForwardCache:
    """Forward pass. Train mode needs ``keep_probs`` and ``rng``; eval mode is deterministic."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.layer_sizes[0]:
        raise ParameterError(f"expected input width {model.layer_sizes[0]}, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite network input")
    if train and (keep_probs is None or rng is None):
        raise ParameterError("train mode needs keep probabilities and a dropout rng")
    a = _scale_input(model, X)
    x = a
    pre, hidden, masks = [], [], []
    for l in range(model.n_hidden):
        z = a @ model.weights[l] + model.biases[l]
        h = np.maximum(z, 0.0)
        pre.append(z)
        hidden.append(h)
        mask = None
        if train and keep_probs[l] < 1.0:
            keep = keep_probs[l]
            mask = (rng.random(h.shape) < keep) / keep
            a = h * mask
        else:
            a = h
        masks.append(mask)
    out = a @ model.weights[-1] + model.biases[-1]
    return ForwardCache(x, pre, hidden, masks, out)


def predict_nn(model: MlpModel, X) -> np.ndarray:
    return forward(model, X).output


def loss_mse(outputs, targets, mask=None) -> float:
    """Mean squared error over the unmasked cells."""
    outputs = np.asarray(outputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if outputs.shape != targets.shape:
        raise ParameterError(f"shape mismatch {outputs.shape} vs {targets.shape}")
    mask = np.ones_like(outputs) if mask is None else np.asarray(mask, dtype=np.float64)
    total = mask.sum()
    if total == 0:
        raise DataError("loss undefined: empty mask")
    diff = np.where(mask > 0, outputs - targets, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        # overflow becomes inf, which training reports as divergence
        return float(np.sum(mask * diff**2) / total)


def backward(model: MlpModel, cache: ForwardCache, targets, mask=None) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Gradients of the masked MSE w.r.t. every weight and bias.

    Dropout masks recorded in ``cache`` are treated as constants.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != cache.output.shape:
        raise ContractError(
            f"forward cache holds outputs {cache.output.shape}, targets are {targets.shape}"
        )
    mask = np.ones_like(targets) if mask is None else np.asarray(mask, dtype=np.float64)
    total = mask.sum()
    if total == 0:
        raise DataError("loss undefined: empty mask")
    delta = 2.0 * mask * np.where(mask > 0, cache.output - targets, 0.0) / total
    n_layers = len(model.weights)
    dW: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    db: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for l in range(n_layers - 1, -1, -1):
        if l == 0:
            a_in = cache.x
        else:
            h, m = cache.hidden[l - 1], cache.masks[l - 1]
            a_in = h if m is None else h * m
        dW[l] = a_in.T @ delta
        db[l] = delta.sum(axis=0)
        if l > 0:
            da = delta @ model.weights[l].T
            m = cache.masks[l - 1]
            if m is not None:
                da = da * m
            delta = da * (cache.pre[l - 1] > 0)
    return dW, db


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(
    params: list[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    t: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> list[np.ndarray]:
    """One bias-corrected Adam update, in place; returns ``params``."""
    if t < 1:
        raise ParameterError("Adam step counter starts at 1")
    if len(params) != len(grads):
        raise ParameterError("params and grads differ in length")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise OptimizationError(f"non-finite gradient in parameter {i} (layer {i // 2})")
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    new_m, new_v = [], []
    with np.errstate(over="ignore"):
        for i, (g, m, v) in enumerate(zip(grads, state.m, state.v)):
            mi = beta1 * m + (1.0 - beta1) * g
            vi = beta2 * v + (1.0 - beta2) * g * g
            # an overflowing second moment would silently freeze the parameter
            if not np.all(np.isfinite(vi)):
                raise OptimizationError(f"non-finite second moment in parameter {i} (layer {i // 2})")
            new_m.append(mi)
            new_v.append(vi)
    for p, m, v, mi, vi in zip(params, state.m, state.v, new_m, new_v):
        m[...] = mi
        v[...] = vi
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params


def lr_schedule(gamma0: float, step: int, decay_steps: int = 10000, decay_rate: float = 0.96) -> float:
    """Continuous exponential decay ``gamma0 * decay_rate ** (step / decay_steps)``."""
    if step < 0:
        raise ParameterError("step must be >= 0")
    return gamma0 * decay_rate ** (step / decay_steps)


def dead_relu_ratio(hidden: Sequence[np.ndarray]) -> list[float]:
    """Fraction of exactly-zero ReLU outputs per hidden layer, over the batch."""
    return [float(np.mean(h == 0.0)) for h in hidden]


@dataclass(frozen=True)
class TrainConfig:
    gamma0: float = 1e-4
    decay_steps: int = 10000
    decay_rate: float = 0.96
    batch_size: int = 100
    max_iterations: int = 50000
    dropout_scheme: str = "a"
    keep_prob: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    log_every: int = 100
    standardize_inputs: bool = True

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ParameterError("initial learning rate must be positive")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ParameterError("keep probability must be in (0, 1]")
        if len(self.split) != 3 or any(f < 0 for f in self.split) or abs(sum(self.split) - 1.0) > 1e-9:
            raise ParameterError(f"split fractions must be non-negative and sum to 1, got {self.split}")
        if self.batch_size < 1 or self.max_iterations < 0 or self.log_every < 1:
            raise ParameterError("batch size and log interval must be positive")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    lr: float
    train_loss: float
    validation_loss: float
    dead_relu: tuple[float, ...]


@dataclass
class TrainingTrace:
    rows: list[TraceRow] = field(default_factory=list)

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]

    @property
    def overfitting(self) -> bool:
        """Final validation loss above final train loss."""
        return bool(self.rows) and self.final.validation_loss > self.final.train_loss

    def to_csv(self, path: str | os.PathLike) -> None:
        n_hidden = len(self.rows[0].dead_relu) if self.rows else 0
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "lr", "train_loss", "validation_loss"] + [f"dead_relu_{i + 1}" for i in range(n_hidden)])
            for r in self.rows:
                w.writerow([r.iteration, repr(r.lr), repr(r.train_loss), repr(r.validation_loss)] + [repr(d) for d in r.dead_relu])


@dataclass
class TrainResult:
    model: MlpModel
    trace: TrainingTrace
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    target_mean: np.ndarray
    target_scale: np.ndarray


def split_indices(n: int, fractions: Sequence[float], rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    perm = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_val = min(n_val, n - n_train)
    return (
        np.sort(perm[:n_train]),
        np.sort(perm[n_train : n_train + n_val]),
        np.sort(perm[n_train + n_val :]),
    )


def train(
    X,
    Y,
    layer_sizes: Sequence[int],
    cfg: TrainConfig = TrainConfig(),
    mask=None,
    binary_columns: Sequence[int] = BINARY_COLUMNS,
) -> TrainResult:
    """Minibatch Adam training for a fixed number of iterations.

    Rows of ``X``/``Y`` are split train/validation/test per ``cfg.split``.
    Continuous target columns are z-scored and inputs standardized with
    training-split statistics. Every ``cfg.log_every`` iterations (and at the
    end) the trace records the learning rate, eval-mode losses on the train
    and validation splits, and dead-ReLU ratios of the current minibatch.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 3:
        raise ParameterError("at least one hidden layer is required")
    if X.shape[1] != sizes[0] or Y.shape[1] != sizes[-1] or len(X) != len(Y):
        raise ParameterError(f"data shapes {X.shape}/{Y.shape} do not fit layer sizes {list(sizes)}")
    M = np.ones_like(Y) if mask is None else np.asarray(mask, dtype=np.float64)
    M = np.where(np.isnan(Y), 0.0, M)
    Y = np.where(M > 0, Y, 0.0)

    init_seq, split_seq, shuffle_seq, drop_seq = np.random.SeedSequence(cfg.seed).spawn(4)
    tr, va, te = split_indices(len(X), cfg.split, np.random.default_rng(split_seq))
    if len(tr) < cfg.batch_size:
        raise ParameterError(f"batch size {cfg.batch_size} exceeds training split of {len(tr)} rows")
    if len(va) == 0:
        raise ParameterError("validation split is empty")

    model = init_model(sizes, seed=int(init_seq.generate_state(1)[0]))
    if cfg.standardize_inputs:
        mu = X[tr].mean(axis=0)
        sd = X[tr].std(axis=0)
        sd[sd == 0] = 1.0
        model.input_mean, model.input_scale = mu, sd

    t_mean = np.zeros(Y.shape[1])
    t_scale = np.ones(Y.shape[1])
    for j in range(Y.shape[1]):
        if j in binary_columns:
            continue
        obs = Y[tr][M[tr][:, j] > 0, j]
        if len(obs) > 1:
            t_mean[j] = obs.mean()
            t_scale[j] = obs.std() or 1.0
    Z = (Y - t_mean) / t_scale

    keep = keep_probabilities(model.n_hidden, cfg.dropout_scheme, cfg.keep_prob)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    drop_rng = np.random.default_rng(drop_seq)
    params = model.params()
    state = AdamState.zeros_like(params)
    trace = TrainingTrace()

    def eval_loss(idx):
        return loss_mse(forward(model, X[idx]).output, Z[idx], M[idx])

    order = shuffle_rng.permutation(tr)
    pos = 0
    for it in range(cfg.max_iterations + 1):
        if pos + cfg.batch_size > len(order):
            order = shuffle_rng.permutation(tr)
            pos = 0
        batch = order[pos : pos + cfg.batch_size]
        pos += cfg.batch_size
        lr = lr_schedule(cfg.gamma0, it, cfg.decay_steps, cfg.decay_rate)
        cache = forward(model, X[batch], keep, drop_rng, train=True)
        if it % cfg.log_every == 0 or it == cfg.max_iterations:
            row = TraceRow(it, lr, eval_loss(tr), eval_loss(va), tuple(dead_relu_ratio(cache.hidden)))
            trace.rows.append(row)
            if not (math.isfinite(row.train_loss) and math.isfinite(row.validation_loss)):
                raise DivergenceError(f"non-finite loss at iteration {it}", trace)
        if it == cfg.max_iterations:
            break
        if M[batch].sum() == 0:
            continue
        dW, db = backward(model, cache, Z[batch], M[batch])
        grads = [g for pair in zip(dW, db) for g in pair]
        adam_step(params, grads, state, it + 1, lr, cfg.beta1, cfg.beta2, cfg.epsilon)
    return TrainResult(model, trace, tr, va, te, t_mean, t_scale)


def evaluate_nn(model: MlpModel, X, Y, trait_names: Sequence[str] = TRAITS) -> list[AccuracyScore]:
    """Per-trait accuracy of the network outputs: AUC for binary traits, Pearson otherwise."""
    out = predict_nn(model, X)
    Y = np.asarray(Y, dtype=np.float64)
    results = []
    for j, t in enumerate(trait_names):
        ok = ~np.isnan(Y[:, j])
        results.append(score(t, out[ok, j], Y[ok, j]))
    return results
