"""Bidirectional multi-layer LSTM with backpropagation through time.

Gate blocks are stacked in the order input, forget, cell candidate, output
(``i, f, g, o``) along the first axis of ``W_ih``, ``W_hh`` and ``b``.
Sequences are batch-major: ``(B, T, D)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fusion import sigmoid


@dataclass(eq=False)
class LSTMDirection:
    W_ih: np.ndarray  # (4H, D)
    W_hh: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.W_hh.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W_ih.shape[1]

    def tensors(self) -> list[np.ndarray]:
        return [self.W_ih, self.W_hh, self.b]


@dataclass(eq=False)
class _DirectionCache:
    x: np.ndarray
    gates: np.ndarray  # (B, T, 4H) post-activation i, f, g, o
    c: np.ndarray  # (B, T, H)
    tanh_c: np.ndarray
    h: np.ndarray


def lstm_forward(params: LSTMDirection, x: np.ndarray, reverse: bool = False):
    """Run one direction over ``x`` of shape (B, T, D).

    Returns hidden states aligned with input time order, plus a cache for
    :func:`lstm_backward`.
    """
    if x.shape[-1] != params.input_dim:
        raise ValueError(f"LSTM input has dimension {x.shape[-1]}, expected {params.input_dim}")
    if reverse:
        x = x[:, ::-1]
    B, T, _ = x.shape
    H = params.hidden
    dtype = params.W_hh.dtype
    zx = x @ params.W_ih.T + params.b
    gates = np.empty((B, T, 4 * H), dtype=dtype)
    cs = np.empty((B, T, H), dtype=dtype)
    tcs = np.empty((B, T, H), dtype=dtype)
    hs = np.empty((B, T, H), dtype=dtype)
    h = np.zeros((B, H), dtype=dtype)
    c = np.zeros((B, H), dtype=dtype)
    W_hh_T = params.W_hh.T
    for t in range(T):
        z = zx[:, t] + h @ W_hh_T
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = sigmoid(z[:, 3 * H:])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        gates[:, t, :H], gates[:, t, H:2 * H], gates[:, t, 2 * H:3 * H], gates[:, t, 3 * H:] = i, f, g, o
        cs[:, t], tcs[:, t], hs[:, t] = c, tc, h
    cache = _DirectionCache(x, gates, cs, tcs, hs)
    out = hs[:, ::-1] if reverse else hs
    return out, cache


def lstm_backward(params: LSTMDirection, cache: _DirectionCache, d_out: np.ndarray,
                  reverse: bool = False):
    """Gradients given ``d_out`` (B, T, H) in input time order.

    Returns ``(d_x, LSTMDirection-of-gradients)`` with ``d_x`` in input order.
    """
    if reverse:
        d_out = d_out[:, ::-1]
    B, T, H = cache.h.shape
    dtype = params.W_hh.dtype
    dz_all = np.empty((B, T, 4 * H), dtype=dtype)
    dW_hh = np.zeros_like(params.W_hh)
    dh_next = np.zeros((B, H), dtype=dtype)
    dc_next = np.zeros((B, H), dtype=dtype)
    zeros = np.zeros((B, H), dtype=dtype)
    for t in range(T - 1, -1, -1):
        gt = cache.gates[:, t]
        i, f, g, o = gt[:, :H], gt[:, H:2 * H], gt[:, 2 * H:3 * H], gt[:, 3 * H:]
        tc = cache.tanh_c[:, t]
        c_prev = cache.c[:, t - 1] if t > 0 else zeros
        h_prev = cache.h[:, t - 1] if t > 0 else zeros

        dh = d_out[:, t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = dz_all[:, t]
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dW_hh += dz.T @ h_prev
        dh_next = dz @ params.W_hh
        dc_next = dc * f

    dz_flat = dz_all.reshape(B * T, 4 * H)
    x_flat = cache.x.reshape(B * T, -1)
    grads = LSTMDirection(dz_flat.T @ x_flat, dW_hh, dz_flat.sum(axis=0))
    d_x = dz_all @ params.W_ih
    if reverse:
        d_x = d_x[:, ::-1]
    return d_x, grads


def bilstm_forward(layers: list[tuple[LSTMDirection, LSTMDirection]], x: np.ndarray):
    """Stacked bidirectional LSTM; each layer outputs ``[h_fwd, h_bwd]`` per step."""
    caches = []
    for fwd, bwd in layers:
        h_f, c_f = lstm_forward(fwd, x)
        h_b, c_b = lstm_forward(bwd, x, reverse=True)
        caches.append((c_f, c_b))
        x = np.concatenate([h_f, h_b], axis=-1)
    return x, caches


def bilstm_backward(layers, caches, d_out: np.ndarray):
    grads = [None] * len(layers)
    for k in range(len(layers) - 1, -1, -1):
        fwd, bwd = layers[k]
        c_f, c_b = caches[k]
        H = fwd.hidden
        dx_f, g_f = lstm_backward(fwd, c_f, d_out[..., :H])
        dx_b, g_b = lstm_backward(bwd, c_b, d_out[..., H:], reverse=True)
        grads[k] = (g_f, g_b)
        d_out = dx_f + dx_b
    return d_out, grads
