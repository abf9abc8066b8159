"""Adam optimizer over named parameter dicts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    lr_overrides: dict = field(default_factory=dict)


def adam_init(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, lr_overrides=None):
    """``lr_overrides`` maps parameter names to per-parameter learning rates."""
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    state.m = {k: np.zeros_like(p) for k, p in params.items()}
    state.v = {k: np.zeros_like(p) for k, p in params.items()}
    state.lr_overrides = dict(lr_overrides or {})
    return state


def adam_step(params, grads, state):
    """One bias-corrected Adam update; returns (new params, state)."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    out = {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {k!r}")
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        lr = state.lr_overrides.get(k, state.lr)
        out[k] = p - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out, state
