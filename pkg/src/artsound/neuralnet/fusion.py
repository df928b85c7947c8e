"""Gated residual fusion of a joint image-text vector with a text residual.

    g = sigmoid(W_g [x; r~])
    h = g * (W_x x) + (1 - g) * r~

where ``r~ = W_r r`` if the residual dimension differs from the output
dimension and ``r~ = r`` otherwise.  All functions accept a single vector or a
batch (leading axis) for ``x`` and ``r``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sigmoid(z):
    # tanh form avoids overflow warnings for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(eq=False)
class FusionParams:
    W_g: np.ndarray  # (d_h, d_x + d_h)
    W_x: np.ndarray  # (d_h, d_x)
    W_r: np.ndarray | None = None  # (d_h, d_r), only when d_r != d_h

    @property
    def d_h(self) -> int:
        return self.W_x.shape[0]

    @property
    def d_x(self) -> int:
        return self.W_x.shape[1]

    @property
    def d_r(self) -> int:
        return self.d_h if self.W_r is None else self.W_r.shape[1]

    def __post_init__(self):
        d_h, d_x = self.W_x.shape
        if self.W_g.shape != (d_h, d_x + d_h):
            raise ValueError(f"W_g has shape {self.W_g.shape}, expected {(d_h, d_x + d_h)}")
        if self.W_r is not None and self.W_r.shape[0] != d_h:
            raise ValueError(f"W_r has {self.W_r.shape[0]} rows, expected {d_h}")


@dataclass(eq=False)
class FusionInput:
    """``x`` is the concatenated image+text embedding, ``r`` the text embedding."""

    x: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x)
        self.r = np.asarray(self.r)
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.r))):
            raise ValueError("fusion input contains non-finite values")

    @classmethod
    def from_embeddings(cls, image: np.ndarray, text: np.ndarray) -> "FusionInput":
        image, text = np.asarray(image), np.asarray(text)
        return cls(np.concatenate([image, text], axis=-1), text)


@dataclass(eq=False)
class FusionGrads:
    W_g: np.ndarray
    W_x: np.ndarray
    W_r: np.ndarray | None
    x: np.ndarray
    r: np.ndarray


def _check_dims(params: FusionParams, inp: FusionInput) -> None:
    if inp.x.shape[-1] != params.d_x:
        raise ValueError(f"x has dimension {inp.x.shape[-1]}, expected {params.d_x}")
    if inp.r.shape[-1] != params.d_r:
        raise ValueError(f"r has dimension {inp.r.shape[-1]}, expected {params.d_r}")
    if inp.x.shape[:-1] != inp.r.shape[:-1]:
        raise ValueError(f"x and r batch shapes differ: {inp.x.shape[:-1]} vs {inp.r.shape[:-1]}")


def _forward(params: FusionParams, x, r):
    r_t = r if params.W_r is None else r @ params.W_r.T
    u = np.concatenate([x, r_t], axis=-1)
    gate = sigmoid(u @ params.W_g.T)
    proj = x @ params.W_x.T
    h = gate * proj + (1.0 - gate) * r_t
    return h, (r_t, u, gate, proj)


def gated_fuse(params: FusionParams, inp: FusionInput) -> np.ndarray:
    _check_dims(params, inp)
    h, _ = _forward(params, inp.x, inp.r)
    return h


def gated_fuse_grad(params: FusionParams, inp: FusionInput, upstream: np.ndarray) -> FusionGrads:
    """Exact gradients of ``sum(upstream * h)`` w.r.t. weights and inputs."""
    _check_dims(params, inp)
    x, r = inp.x, inp.r
    _, (r_t, u, gate, proj) = _forward(params, x, r)
    upstream = np.asarray(upstream)
    if upstream.shape != gate.shape:
        raise ValueError(f"upstream has shape {upstream.shape}, expected {gate.shape}")

    d_proj = gate * upstream
    d_pre = (proj - r_t) * upstream * gate * (1.0 - gate)
    # weight grads sum over any leading batch axis
    x2, u2 = x.reshape(-1, x.shape[-1]), u.reshape(-1, u.shape[-1])
    d_pre2, d_proj2 = d_pre.reshape(-1, d_pre.shape[-1]), d_proj.reshape(-1, d_proj.shape[-1])
    dW_g = d_pre2.T @ u2
    dW_x = d_proj2.T @ x2

    du = d_pre @ params.W_g
    d_x = du[..., :params.d_x] + d_proj @ params.W_x
    d_rt = du[..., params.d_x:] + (1.0 - gate) * upstream
    if params.W_r is None:
        return FusionGrads(dW_g, dW_x, None, d_x, d_rt)
    r2, d_rt2 = r.reshape(-1, r.shape[-1]), d_rt.reshape(-1, d_rt.shape[-1])
    dW_r = d_rt2.T @ r2
    return FusionGrads(dW_g, dW_x, dW_r, d_x, d_rt @ params.W_r)
