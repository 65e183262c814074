"""Adam with global gradient-norm clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ADAM_EPS = 1e-8


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: dict[str, np.ndarray], clip_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Rescale all gradients by ``clip_norm / norm`` when the norm exceeds it."""
    norm = global_norm(grads)
    if clip_norm is not None and norm > clip_norm:
        factor = clip_norm / norm
        return {k: g * factor for k, g in grads.items()}, norm
    return grads, norm


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 0.005,
    beta1: float = 0.9,
    beta2: float = 0.999,
    clip_norm: float | None = 1.0,
    eps: float = ADAM_EPS,
) -> tuple[dict[str, np.ndarray], AdamState, float]:
    """One bias-corrected Adam update, in place.  Returns (params, state, pre-clip norm)."""
    if not state.m:
        fresh = AdamState.zeros_like(params)
        state.m, state.v = fresh.m, fresh.v
    grads, norm = clip_by_global_norm(grads, clip_norm)
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for k, g in grads.items():
        m = state.m[k]
        v = state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state, norm
