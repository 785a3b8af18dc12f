"""Adam optimizer and mean squared error."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, hyper: AdamHyper = AdamHyper()):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``.

    Inputs are not modified.
    """
    t = state.t + 1
    b1, b2 = hyper.beta1, hyper.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_params, m_out, v_out = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ConfigError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        m = b1 * state.m.get(name, 0.0) + (1.0 - b1) * g
        v = b2 * state.v.get(name, 0.0) + (1.0 - b2) * g * g
        new_params[name] = p - hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
        m_out[name] = m
        v_out[name] = v
    return new_params, AdamState(m_out, v_out, t)


def mse_loss(preds, targets) -> float:
    p = np.asarray(preds, dtype=float).ravel()
    y = np.asarray(targets, dtype=float).ravel()
    if p.size == 0:
        raise ConfigError("mse of empty vectors")
    if p.shape != y.shape:
        raise ConfigError(f"length mismatch: {p.size} predictions, {y.size} targets")
    d = p - y
    return float(np.mean(d * d))
