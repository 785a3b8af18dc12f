"""Feed-forward and recurrent regressors with hand-written backpropagation.

Parameters live in plain ``dict[str, ndarray]`` objects so the optimizer and
serializer can treat every network the same way. All networks end in a
linear head producing one output per row.

Recurrent networks take ``X`` of shape ``(batch, time, features)``, run the
layers in sequence (each layer's hidden states feed the next) and read the
top layer's final hidden state. LSTM gate columns are ordered
input, forget, output, candidate.
"""

from __future__ import annotations

import re

import numpy as np

from ..errors import ShapeError


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _n_layers(params, prefix):
    pat = re.compile(rf"^{prefix}(\d+)$")
    return sum(1 for k in params if pat.match(k))


def _outer_sum(a, b):
    """Sum over time and batch of the outer products of matching rows."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def _head_init(rng, p, width):
    p["Wout"] = _uniform(rng, width, (width, 1))
    p["bout"] = np.zeros(1)


def _head_backward(params, last, dout, grads):
    d = dout[:, None]
    grads["Wout"] = last.T @ d
    grads["bout"] = d.sum(axis=0)
    return d @ params["Wout"].T


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------


def mlp_init(rng, n_in, n_layers, size):
    p = {}
    width = n_in
    for l in range(n_layers):
        p[f"W{l}"] = _uniform(rng, width, (width, size))
        p[f"b{l}"] = np.zeros(size)
        width = size
    _head_init(rng, p, width)
    return p


def mlp_forward(params, X):
    h = np.asarray(X, dtype=float)
    hs, zs = [h], []
    for l in range(_n_layers(params, "W")):
        z = h @ params[f"W{l}"] + params[f"b{l}"]
        h = np.maximum(z, 0.0)
        zs.append(z)
        hs.append(h)
    out = (h @ params["Wout"] + params["bout"])[:, 0]
    return out, (hs, zs)


def mlp_backward(params, cache, dout):
    hs, zs = cache
    grads = {}
    dh = _head_backward(params, hs[-1], dout, grads)
    for l in reversed(range(len(zs))):
        dz = dh * (zs[l] > 0)
        grads[f"W{l}"] = hs[l].T @ dz
        grads[f"b{l}"] = dz.sum(axis=0)
        dh = dz @ params[f"W{l}"].T
    return grads


# ---------------------------------------------------------------------------
# Plain recurrent network
# ---------------------------------------------------------------------------


def rnn_init(rng, n_in, n_layers, size):
    p = {}
    width = n_in
    for l in range(n_layers):
        p[f"Wx{l}"] = _uniform(rng, width, (width, size))
        p[f"Wh{l}"] = _uniform(rng, size, (size, size))
        p[f"b{l}"] = np.zeros(size)
        width = size
    _head_init(rng, p, width)
    return p


def rnn_forward(params, X):
    u = np.asarray(X, dtype=float)
    if u.ndim != 3:
        raise ShapeError(f"recurrent input must be (batch, time, features), got {u.shape}")
    B, T, _ = u.shape
    u = u.transpose(1, 0, 2)  # time-major internally
    caches = []
    for l in range(_n_layers(params, "Wx")):
        Wx, Wh, b = params[f"Wx{l}"], params[f"Wh{l}"], params[f"b{l}"]
        H = Wh.shape[0]
        hs = np.empty((T, B, H))
        h = np.zeros((B, H))
        xw = u @ Wx + b
        for t in range(T):
            h = np.tanh(xw[t] + h @ Wh)
            hs[t] = h
        caches.append((u, hs))
        u = hs
    last = u[-1]
    out = (last @ params["Wout"] + params["bout"])[:, 0]
    return out, caches


def rnn_backward(params, caches, dout):
    grads = {}
    top = caches[-1][1]
    T, B, H = top.shape
    d_above = np.zeros((T, B, H))
    d_above[-1] = _head_backward(params, top[-1], dout, grads)
    for l in reversed(range(len(caches))):
        u, hs = caches[l]
        Wx, Wh = params[f"Wx{l}"], params[f"Wh{l}"]
        da_all = np.empty_like(hs)
        dnext = np.zeros((B, hs.shape[2]))
        for t in reversed(range(T)):
            dh = d_above[t] + dnext
            da = dh * (1.0 - hs[t] ** 2)
            da_all[t] = da
            dnext = da @ Wh.T
        grads[f"Wx{l}"] = _outer_sum(u, da_all)
        grads[f"Wh{l}"] = _outer_sum(hs[:-1], da_all[1:])
        grads[f"b{l}"] = da_all.sum(axis=(0, 1))
        d_above = da_all @ Wx.T
    return grads


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------


def lstm_init(rng, n_in, n_layers, size):
    p = {}
    width = n_in
    for l in range(n_layers):
        p[f"Wx{l}"] = _uniform(rng, width, (width, 4 * size))
        p[f"Wh{l}"] = _uniform(rng, size, (size, 4 * size))
        p[f"b{l}"] = np.zeros(4 * size)
        width = size
    _head_init(rng, p, width)
    return p


def _gates(a, H):
    i = sigmoid(a[..., :H])
    f = sigmoid(a[..., H:2 * H])
    o = sigmoid(a[..., 2 * H:3 * H])
    g = np.tanh(a[..., 3 * H:])
    return i, f, o, g


def lstm_cell_step(x_t, h_prev, c_prev, params):
    """Advance one LSTM cell by a timestep.

    Args:
        x_t: Input of shape ``(F,)`` or ``(B, F)``.
        h_prev: Previous hidden state, ``(H,)`` or ``(B, H)``.
        c_prev: Previous cell state, same shape as ``h_prev``.
        params: ``(Wx, Wh, b)`` or a mapping with those keys, shaped
            ``(F, 4H)``, ``(H, 4H)`` and ``(4H,)``.

    Returns:
        ``(h_t, c_t)``.
    """
    if isinstance(params, dict):
        Wx, Wh, b = params["Wx"], params["Wh"], params["b"]
    else:
        Wx, Wh, b = params
    x_t, h_prev, c_prev = (np.asarray(a, dtype=float) for a in (x_t, h_prev, c_prev))
    H = Wh.shape[0]
    if Wh.shape != (H, 4 * H) or b.shape != (4 * H,) or Wx.shape[1] != 4 * H:
        raise ShapeError("inconsistent LSTM parameter shapes "
                         f"Wx{Wx.shape} Wh{Wh.shape} b{b.shape}")
    if x_t.shape[-1] != Wx.shape[0]:
        raise ShapeError(f"input has {x_t.shape[-1]} features, cell expects {Wx.shape[0]}")
    if h_prev.shape[-1] != H or c_prev.shape != h_prev.shape:
        raise ShapeError(f"state shapes h{h_prev.shape} c{c_prev.shape} do not match {H} units")
    i, f, o, g = _gates(x_t @ Wx + h_prev @ Wh + b, H)
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def lstm_forward(params, X):
    u = np.asarray(X, dtype=float)
    if u.ndim != 3:
        raise ShapeError(f"recurrent input must be (batch, time, features), got {u.shape}")
    B, T, _ = u.shape
    u = u.transpose(1, 0, 2)  # time-major internally
    caches = []
    for l in range(_n_layers(params, "Wx")):
        Wx, Wh, b = params[f"Wx{l}"], params[f"Wh{l}"], params[f"b{l}"]
        H = Wh.shape[0]
        hs = np.empty((T, B, H))
        cs = np.empty((T, B, H))
        tcs = np.empty((T, B, H))
        acts = np.empty((T, B, 4 * H))  # i, f, o, g after nonlinearity
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        xw = u @ Wx + b
        for t in range(T):
            a = xw[t] + h @ Wh
            act = acts[t]
            act[:, :3 * H] = sigmoid(a[:, :3 * H])
            act[:, 3 * H:] = np.tanh(a[:, 3 * H:])
            c = act[:, H:2 * H] * c + act[:, :H] * act[:, 3 * H:]
            tc = np.tanh(c)
            h = act[:, 2 * H:3 * H] * tc
            hs[t], cs[t], tcs[t] = h, c, tc
        caches.append((u, hs, cs, tcs, acts))
        u = hs
    last = u[-1]
    out = (last @ params["Wout"] + params["bout"])[:, 0]
    return out, caches


def lstm_backward(params, caches, dout):
    grads = {}
    top = caches[-1][1]
    T, B, _ = top.shape
    d_above = np.zeros_like(top)
    d_above[-1] = _head_backward(params, top[-1], dout, grads)
    for l in reversed(range(len(caches))):
        u, hs, cs, tcs, acts = caches[l]
        Wx, Wh = params[f"Wx{l}"], params[f"Wh{l}"]
        H = hs.shape[2]
        da_all = np.empty_like(acts)
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        zeros = np.zeros((B, H))
        for t in reversed(range(T)):
            act = acts[t]
            i, f, o, g = act[:, :H], act[:, H:2 * H], act[:, 2 * H:3 * H], act[:, 3 * H:]
            c_prev = cs[t - 1] if t > 0 else zeros
            tc = tcs[t]
            dh = d_above[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            da = da_all[t]
            da[:, :H] = dc * g
            da[:, H:2 * H] = dc * c_prev
            da[:, 2 * H:3 * H] = dh * tc
            da[:, :3 * H] *= act[:, :3 * H] * (1.0 - act[:, :3 * H])
            da[:, 3 * H:] = dc * i * (1.0 - g * g)
            dc_next = dc * f
            dh_next = da @ Wh.T
        grads[f"Wx{l}"] = _outer_sum(u, da_all)
        grads[f"Wh{l}"] = _outer_sum(hs[:-1], da_all[1:])
        grads[f"b{l}"] = da_all.sum(axis=(0, 1))
        d_above = da_all @ Wx.T
    return grads


NETWORKS = {
    "mlp": (mlp_init, mlp_forward, mlp_backward),
    "rnn": (rnn_init, rnn_forward, rnn_backward),
    "lstm": (lstm_init, lstm_forward, lstm_backward),
}


def loss_and_grads(family, params, X, y):
    """Mean squared error over the batch and its gradient for every parameter."""
    _, forward, backward = NETWORKS[family]
    out, cache = forward(params, X)
    diff = out - np.asarray(y, dtype=float)
    loss = float(np.mean(diff * diff))
    grads = backward(params, cache, 2.0 * diff / diff.size)
    return loss, grads


class NeuralNet:
    def __init__(self, family, params):
        self.family = family
        self.params = params

    @classmethod
    def init(cls, family, rng, n_in, n_layers, size):
        return cls(family, NETWORKS[family][0](rng, n_in, n_layers, size))

    def predict(self, X):
        return NETWORKS[self.family][1](self.params, X)[0]

    def state(self):
        return dict(self.params)
