"""Finite-difference oracle shared by the model and acceptance tests."""

import numpy as np

from journalcast.models.nn import NETWORKS, loss_and_grads

STEP = 1e-5


def numeric_grads(family, params, X, y, step=STEP):
    """Central differences of the mean squared error for every parameter entry."""
    _, forward, _ = NETWORKS[family]

    def loss(p):
        d = forward(p, X)[0] - y
        return float(np.mean(d * d))

    out = {}
    for name, value in params.items():
        g = np.zeros_like(value)
        for i in np.ndindex(value.shape):
            orig = value[i]
            value[i] = orig + step
            up = loss(params)
            value[i] = orig - step
            down = loss(params)
            value[i] = orig
            g[i] = (up - down) / (2 * step)
        out[name] = g
    return out


def relative_errors(family, params, X, y, step=STEP):
    """``||analytic - numeric|| / max(||analytic||, ||numeric||)`` per parameter array."""
    _, analytic = loss_and_grads(family, params, X, y)
    numeric = numeric_grads(family, params, X, y, step)
    errs = {}
    for name in params:
        a, n = analytic[name], numeric[name]
        scale = max(np.linalg.norm(a), np.linalg.norm(n))
        errs[name] = 0.0 if scale < 1e-10 else float(np.linalg.norm(a - n) / scale)
    return errs


def random_instance(family, rng):
    """Small random network and batch: at most 8 units and 3 timesteps."""
    init = NETWORKS[family][0]
    n_in = int(rng.integers(1, 4))
    layers = int(rng.integers(1, 3))
    units = int(rng.integers(2, 9))
    batch = int(rng.integers(2, 6))
    params = init(rng, n_in * (3 if family == "mlp" else 1), layers, units)
    for k in params:
        params[k] = params[k] + rng.normal(0, 0.3, params[k].shape)  # nonzero biases too
    if family == "mlp":
        X = rng.normal(size=(batch, 3 * n_in))
    else:
        X = rng.normal(size=(batch, int(rng.integers(1, 4)), n_in))
    y = rng.normal(size=batch)
    return params, X, y
