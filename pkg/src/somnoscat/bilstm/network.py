"""Stacked (bi)directional LSTM with a Leaky-ReLU / dense / softmax head.

All parameters live in one ordered ``dict`` of float64 arrays so the
optimizer, gradient checks and checkpoints can treat them uniformly::

    l{k}.fwd.W  (4H, D_k)   input weights, gate rows ordered i, f, g, o
    l{k}.fwd.U  (4H, H)     recurrent weights
    l{k}.fwd.b  (4H,)
    l{k}.bwd.*              same for the anticausal direction
    head.W      (2, H_out)
    head.b      (2,)

Batches are zero-padded to a common length and carry a boolean mask.  On a
padded step the recurrent state is held unchanged and the output is zero,
so a padded batch computes exactly what its sequences compute one by one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

N_CLASSES = 2
PROB_FLOOR = 1e-12
GATES = ("i", "f", "g", "o")


@dataclass(frozen=True)
class NetworkConfig:
    layers: int = 3
    hidden: int = 200
    leaky_slope: float = 0.5
    bidirectional: bool = True

    def __post_init__(self):
        if self.layers < 1 or self.hidden < 1:
            raise ValueError("layers and hidden must be >= 1")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ValueError("leaky_slope must lie in (0, 1)")

    @property
    def directions(self) -> tuple[str, ...]:
        return ("fwd", "bwd") if self.bidirectional else ("fwd",)

    @property
    def output_dim(self) -> int:
        return self.hidden * len(self.directions)


@dataclass(frozen=True)
class LstmParams:
    """Gate-stacked weights of one LSTM direction."""

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        h = self.hidden
        k = GATES.index(name)
        sl = slice(k * h, (k + 1) * h)
        return self.W[sl], self.U[sl], self.b[sl]


@dataclass
class BilstmModel:
    config: NetworkConfig
    input_dim: int
    params: dict[str, np.ndarray]
    input_mean: np.ndarray | None = None
    input_scale: np.ndarray | None = None
    columns: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def lstm(self, layer: int, direction: str) -> LstmParams:
        p = self.params
        key = f"l{layer}.{direction}"
        return LstmParams(p[key + ".W"], p[key + ".U"], p[key + ".b"])

    def copy(self) -> "BilstmModel":
        return BilstmModel(
            self.config,
            self.input_dim,
            {k: v.copy() for k, v in self.params.items()},
            None if self.input_mean is None else self.input_mean.copy(),
            None if self.input_scale is None else self.input_scale.copy(),
            None if self.columns is None else self.columns.copy(),
            dict(self.metadata),
        )


def param_shapes(config: NetworkConfig, input_dim: int) -> dict[str, tuple[int, ...]]:
    h = config.hidden
    shapes: dict[str, tuple[int, ...]] = {}
    d = input_dim
    for layer in range(config.layers):
        for direction in config.directions:
            key = f"l{layer}.{direction}"
            shapes[key + ".W"] = (4 * h, d)
            shapes[key + ".U"] = (4 * h, h)
            shapes[key + ".b"] = (4 * h,)
        d = config.output_dim
    shapes["head.W"] = (N_CLASSES, config.output_dim)
    shapes["head.b"] = (N_CLASSES,)
    return shapes


def init_model(config: NetworkConfig, input_dim: int, rng: np.random.Generator) -> BilstmModel:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1, zero head bias."""
    bound = 1.0 / np.sqrt(config.hidden)
    params = {}
    for name, shape in param_shapes(config, input_dim).items():
        if name == "head.b":
            params[name] = np.zeros(shape)
        elif name.endswith(".b"):
            b = rng.uniform(-bound, bound, shape)
            b[config.hidden : 2 * config.hidden] = 1.0
            params[name] = b
        else:
            params[name] = rng.uniform(-bound, bound, shape)
    return BilstmModel(config, input_dim, params)


def zero_model(config: NetworkConfig, input_dim: int) -> BilstmModel:
    return BilstmModel(config, input_dim, {k: np.zeros(s) for k, s in param_shapes(config, input_dim).items()})


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_step(x_t, h_prev, c_prev, params: LstmParams) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM update: input, forget, candidate and output gates."""
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape[-1] != params.W.shape[1] or np.shape(h_prev)[-1] != params.hidden:
        raise ValueError("shape mismatch between inputs and LSTM parameters")
    h = params.hidden
    z = x_t @ params.W.T + h_prev @ params.U.T + params.b
    i = sigmoid(z[..., :h])
    f = sigmoid(z[..., h : 2 * h])
    g = np.tanh(z[..., 2 * h : 3 * h])
    o = sigmoid(z[..., 3 * h :])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


# ------------------------------------------------------------ batched passes


def _direction_forward(X, mask, p: LstmParams, reverse: bool):
    B, T, _ = X.shape
    h_dim = p.hidden
    xw = X @ p.W.T + p.b
    h = np.zeros((B, h_dim))
    c = np.zeros((B, h_dim))
    out = np.zeros((B, T, h_dim))
    gates = np.zeros((B, T, 4 * h_dim))
    h_prev = np.zeros((B, T, h_dim))
    c_prev = np.zeros((B, T, h_dim))
    tanh_c = np.zeros((B, T, h_dim))
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        z = xw[:, t] + h @ p.U.T
        a = np.empty_like(z)
        a[:, : 2 * h_dim] = sigmoid(z[:, : 2 * h_dim])
        a[:, 2 * h_dim : 3 * h_dim] = np.tanh(z[:, 2 * h_dim : 3 * h_dim])
        a[:, 3 * h_dim :] = sigmoid(z[:, 3 * h_dim :])
        i, f, g, o = np.split(a, 4, axis=1)
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = mask[:, t, None]
        gates[:, t] = a
        h_prev[:, t] = h
        c_prev[:, t] = c
        tanh_c[:, t] = tc
        out[:, t] = np.where(m, h_new, 0.0)
        h = np.where(m, h_new, h)
        c = np.where(m, c_new, c)
    cache = (X, mask, p, reverse, gates, h_prev, c_prev, tanh_c)
    return out, cache


def _direction_backward(d_out, cache):
    X, mask, p, reverse, gates, h_prev, c_prev, tanh_c = cache
    B, T, _ = X.shape
    h_dim = p.hidden
    dz_all = np.zeros((B, T, 4 * h_dim))
    dh_next = np.zeros((B, h_dim))
    dc_next = np.zeros((B, h_dim))
    steps = range(T) if reverse else range(T - 1, -1, -1)
    for t in steps:
        m = mask[:, t, None]
        i, f, g, o = np.split(gates[:, t], 4, axis=1)
        tc = tanh_c[:, t]
        dh = np.where(m, d_out[:, t] + dh_next, 0.0)
        dc = np.where(m, dc_next, 0.0) + dh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                dc * g * i * (1.0 - i),
                dc * c_prev[:, t] * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                dh * tc * o * (1.0 - o),
            ],
            axis=1,
        )
        dz_all[:, t] = dz
        dh_next = dz @ p.U + np.where(m, 0.0, dh_next)
        dc_next = dc * f + np.where(m, 0.0, dc_next)
    flat = dz_all.reshape(B * T, 4 * h_dim)
    dW = flat.T @ X.reshape(B * T, -1)
    dU = flat.T @ h_prev.reshape(B * T, h_dim)
    db = flat.sum(axis=0)
    dX = dz_all @ p.W
    return dX, dW, dU, db


def _check_input(model: BilstmModel, X: np.ndarray):
    if X.shape[-1] != model.input_dim:
        raise ValueError(f"feature dimension {X.shape[-1]} does not match model input {model.input_dim}")


def forward_batch(model: BilstmModel, X, mask):
    """Class probabilities for a padded batch ``(B, T, D)``; returns (probs, cache)."""
    X = np.asarray(X, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    _check_input(model, X)
    cfg = model.config
    inp = X
    caches = []
    for layer in range(cfg.layers):
        outs = []
        layer_cache = []
        for direction in cfg.directions:
            out, cache = _direction_forward(inp, mask, model.lstm(layer, direction), direction == "bwd")
            outs.append(out)
            layer_cache.append(cache)
        caches.append(layer_cache)
        inp = np.concatenate(outs, axis=2) if len(outs) > 1 else outs[0]
    act = np.where(inp > 0, inp, cfg.leaky_slope * inp)
    logits = act @ model.params["head.W"].T + model.params["head.b"]
    logits -= logits.max(axis=2, keepdims=True)
    e = np.exp(logits)
    probs = e / e.sum(axis=2, keepdims=True)
    return probs, (caches, inp, act)


def forward(model: BilstmModel, sequence) -> np.ndarray:
    """Per-step class probabilities ``(M, 2)`` of one prepared feature sequence."""
    X = np.asarray(sequence, dtype=float)
    if X.ndim != 2:
        raise ValueError("expected an (M, D) feature sequence")
    probs, _ = forward_batch(model, X[None], np.ones((1, X.shape[0]), dtype=bool))
    return probs[0]


def _step_weights(labels, mask, class_weights) -> np.ndarray:
    labels = np.asarray(labels)
    if np.any(labels[mask] < 0):
        raise ValueError("non-target (-1) labels must be removed before computing the loss")
    w = np.where(labels == 1, class_weights[1], class_weights[0])
    return np.where(mask, w, 0.0)


def loss(probs, labels, class_weights=(0.1, 0.9), mask=None) -> float:
    """Weighted cross-entropy normalized by the total step weight.

    ``class_weights`` is indexed by class: ``(non-arousal, target)``.
    """
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    mask = np.ones(labels.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    w = _step_weights(labels, mask, class_weights)
    y = np.where(labels == 1, 1, 0)
    p_true = np.take_along_axis(probs, y[..., None], axis=-1)[..., 0]
    total = w.sum()
    if total <= 0:
        raise ValueError("no labelled steps")
    return float(-(w * np.log(np.maximum(p_true, PROB_FLOOR))).sum() / total)


def pad_batch(sequences: Sequence[np.ndarray], labels: Sequence[np.ndarray] | None = None):
    lengths = [len(s) for s in sequences]
    T = max(lengths)
    D = np.asarray(sequences[0]).shape[1]
    X = np.zeros((len(sequences), T, D))
    Y = np.zeros((len(sequences), T), dtype=np.int64)
    mask = np.zeros((len(sequences), T), dtype=bool)
    for k, s in enumerate(sequences):
        X[k, : lengths[k]] = s
        mask[k, : lengths[k]] = True
        if labels is not None:
            Y[k, : lengths[k]] = labels[k]
    return X, Y, mask


def loss_and_grads(
    model: BilstmModel,
    X,
    Y,
    mask,
    class_weights=(0.1, 0.9),
    normalize: bool = True,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss of a padded batch and its exact gradient for every parameter.

    With ``normalize=False`` the loss is the weighted sum over steps rather
    than the weighted mean.
    """
    cfg = model.config
    probs, (caches, top, act) = forward_batch(model, X, mask)
    mask = np.asarray(mask, dtype=bool)
    w = _step_weights(Y, mask, class_weights)
    y = np.where(np.asarray(Y) == 1, 1, 0)
    p_true = np.take_along_axis(probs, y[..., None], axis=-1)[..., 0]
    norm = w.sum() if normalize else 1.0
    if norm <= 0:
        raise ValueError("no labelled steps")
    value = float(-(w * np.log(np.maximum(p_true, PROB_FLOOR))).sum() / norm)

    # d(-log p_y)/dlogits = p - onehot; zero where the floor is active
    scale = np.where(p_true >= PROB_FLOOR, w / norm, 0.0)
    onehot = np.eye(N_CLASSES)[y]
    d_logits = (probs - onehot) * scale[..., None]

    grads: dict[str, np.ndarray] = {}
    B, T, _ = d_logits.shape
    grads["head.W"] = d_logits.reshape(B * T, -1).T @ act.reshape(B * T, -1)
    grads["head.b"] = d_logits.sum(axis=(0, 1))
    d_act = d_logits @ model.params["head.W"]
    d_inp = d_act * np.where(top > 0, 1.0, cfg.leaky_slope)

    h = cfg.hidden
    for layer in range(cfg.layers - 1, -1, -1):
        d_next = None
        for k, direction in enumerate(cfg.directions):
            dX, dW, dU, db = _direction_backward(d_inp[:, :, k * h : (k + 1) * h], caches[layer][k])
            key = f"l{layer}.{direction}"
            grads[key + ".W"] = dW
            grads[key + ".U"] = dU
            grads[key + ".b"] = db
            d_next = dX if d_next is None else d_next + dX
        d_inp = d_next
    return value, {k: grads[k] for k in model.params}


def backward(model: BilstmModel, sequence, labels, class_weights=(0.1, 0.9)) -> dict[str, np.ndarray]:
    """Gradients of the loss of one sequence for every parameter."""
    X = np.asarray(sequence, dtype=float)[None]
    Y = np.asarray(labels)[None]
    _, grads = loss_and_grads(model, X, Y, np.ones(Y.shape, dtype=bool), class_weights)
    return grads
