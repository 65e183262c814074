"""Training schedule, prediction, ensembling and first-layer feature ranking."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .network import BilstmModel, NetworkConfig, forward, init_model, loss_and_grads, pad_batch
from .optim import AdamState, adam_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 30
    lr_decay: float = 0.7
    lr_drop_every: int = 10
    clip_norm: float = 1.0
    batch_subjects: int = 20
    weight_target: float = 0.9
    weight_non_arousal: float = 0.1
    standardize: bool = True
    seed: int = 0

    def __post_init__(self):
        positive = (self.lr, self.beta1, self.beta2, self.epochs, self.lr_decay,
                    self.lr_drop_every, self.clip_norm, self.batch_subjects,
                    self.weight_target, self.weight_non_arousal)
        if min(positive) <= 0:
            raise ValueError("training hyper-parameters must be positive")
        if abs(self.weight_target + self.weight_non_arousal - 1.0) > 1e-9:
            raise ValueError("class weights must sum to 1")

    @property
    def class_weights(self) -> tuple[float, float]:
        return (self.weight_non_arousal, self.weight_target)

    def lr_at(self, epoch: int) -> float:
        """Learning rate of 1-based ``epoch``."""
        return self.lr * self.lr_decay ** ((epoch - 1) // self.lr_drop_every)


def drop_non_target(features, labels) -> tuple[np.ndarray, np.ndarray]:
    """Remove windows labelled -1 from a sequence."""
    labels = np.asarray(labels)
    keep = labels != -1
    return np.asarray(features)[keep], labels[keep]


def _validate(dataset) -> int:
    if not dataset:
        raise ValueError("empty dataset")
    dims = set()
    for features, labels in dataset:
        if len(features) != len(labels):
            raise ValueError("features and labels differ in length")
        if len(labels) == 0:
            raise ValueError("empty sequence in dataset")
        if np.any(np.asarray(labels) == -1):
            raise ValueError("non-target (-1) windows must be removed before training")
        dims.add(np.asarray(features).shape[1])
    if len(dims) != 1:
        raise ValueError(f"inconsistent feature dimensions {sorted(dims)}")
    return dims.pop()


def prepare_inputs(model: BilstmModel, features) -> np.ndarray:
    """Select the model's columns and apply its stored standardization."""
    X = np.asarray(features, dtype=float)
    if model.columns is not None:
        X = X[:, model.columns]
    if model.input_mean is not None:
        X = (X - model.input_mean) / model.input_scale
    return X


def fit_standardization(model: BilstmModel, sequences: Sequence[np.ndarray]) -> None:
    stacked = np.concatenate([np.asarray(s, dtype=float) for s in sequences])
    if model.columns is not None:
        stacked = stacked[:, model.columns]
    mean = stacked.mean(axis=0)
    scale = stacked.std(axis=0)
    scale[scale < 1e-12] = 1.0
    model.input_mean = mean
    model.input_scale = scale


def make_batches(lengths: Sequence[int], batch_size: int) -> list[np.ndarray]:
    order = np.argsort(np.asarray(lengths), kind="stable")
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def train(
    dataset: Sequence[tuple[np.ndarray, np.ndarray]],
    net_cfg: NetworkConfig = NetworkConfig(),
    train_cfg: TrainConfig = TrainConfig(),
    columns: np.ndarray | None = None,
) -> tuple[BilstmModel, list[float]]:
    """Train on (features, window labels) pairs; returns the model and per-epoch loss.

    Sequences are sorted by length and grouped into batches of
    ``batch_subjects``; each epoch visits the batches in that order.
    The reported epoch loss is the mean batch loss before each update.
    """
    full_dim = _validate(dataset)
    rng = np.random.default_rng(train_cfg.seed)
    input_dim = full_dim if columns is None else len(columns)
    model = init_model(net_cfg, input_dim, rng)
    if columns is not None:
        model.columns = np.asarray(columns, dtype=np.int64)
    if train_cfg.standardize:
        fit_standardization(model, [f for f, _ in dataset])

    inputs = [prepare_inputs(model, f) for f, _ in dataset]
    labels = [np.asarray(y) for _, y in dataset]
    batches = []
    for idx in make_batches([len(y) for y in labels], train_cfg.batch_subjects):
        batches.append(pad_batch([inputs[i] for i in idx], [labels[i] for i in idx]))

    state = AdamState.zeros_like(model.params)
    trace = []
    for epoch in range(1, train_cfg.epochs + 1):
        lr = train_cfg.lr_at(epoch)
        losses = []
        for X, Y, mask in batches:
            value, grads = loss_and_grads(model, X, Y, mask, train_cfg.class_weights)
            if not np.isfinite(value):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            adam_step(model.params, grads, state, lr, train_cfg.beta1, train_cfg.beta2, train_cfg.clip_norm)
            losses.append(value)
        trace.append(float(np.mean(losses)))
        logger.debug("epoch %d lr %.5f loss %.6f", epoch, lr, trace[-1])
    model.metadata.update(epochs_run=train_cfg.epochs, final_loss=trace[-1], seed=train_cfg.seed, loss_trace=trace)
    return model, trace


def train_with_restarts(
    dataset,
    net_cfg: NetworkConfig = NetworkConfig(),
    train_cfg: TrainConfig = TrainConfig(),
    restarts: int = 1,
    columns: np.ndarray | None = None,
) -> tuple[BilstmModel, list[float]]:
    """Train ``restarts`` times with consecutive seeds and keep the lowest final loss."""
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best = None
    for r in range(restarts):
        cfg = TrainConfig(**{**train_cfg.__dict__, "seed": train_cfg.seed + r})
        model, trace = train(dataset, net_cfg, cfg, columns)
        if best is None or trace[-1] < best[1][-1]:
            best = (model, trace)
    return best


def predict(model: BilstmModel, features) -> np.ndarray:
    """Per-window probability of target arousal."""
    return forward(model, prepare_inputs(model, features))[:, 1]


def ensemble_predict(models: Sequence[BilstmModel], features) -> np.ndarray:
    if not models:
        raise ValueError("empty ensemble")
    return np.mean([predict(m, features) for m in models], axis=0)


def feature_score(model: BilstmModel) -> np.ndarray:
    """Summed absolute first-layer input weights per input feature.

    All four gates and every memory cell of the forward and (when present)
    backward LSTM of the first layer contribute.
    """
    score = np.zeros(model.input_dim)
    for direction in model.config.directions:
        score += np.abs(model.params[f"l0.{direction}.W"]).sum(axis=0)
    return score


def select_top_k(scores, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores; equal scores keep index order."""
    scores = np.asarray(scores, dtype=float)
    if k > scores.size:
        raise ValueError(f"k={k} exceeds feature count {scores.size}")
    return np.argsort(-scores, kind="stable")[:k]
