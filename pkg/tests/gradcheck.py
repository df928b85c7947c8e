"""Central finite differences and random small instances for gradient tests."""

from __future__ import annotations

import numpy as np

from artsound.neuralnet import (
    FusionInput,
    FusionParams,
    ModelDims,
    backward,
    forward,
    freq_weighted_l1,
    freq_weighted_l1_grad,
    gated_fuse,
    gated_fuse_grad,
    init_model,
    loss_weights,
)

EPS = 1e-5
REL_FLOOR = 1e-6


def numeric_grad(f, arr: np.ndarray, eps: float = EPS) -> np.ndarray:
    """d f / d arr by central differences, perturbing ``arr`` in place."""
    g = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * eps)
    return g


def rel_error(analytic, numeric) -> float:
    a, n = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), REL_FLOOR)
    return float(np.max(np.abs(a - n) / denom, initial=0.0))


def fusion_case(rng) -> float:
    """Worst relative error over every fusion gradient for one random instance."""
    d_x, d_h = int(rng.integers(2, 9)), int(rng.integers(2, 7))
    d_r = d_h if rng.random() < 0.5 else int(rng.integers(1, 7))
    batch = int(rng.integers(1, 4))
    params = FusionParams(rng.normal(size=(d_h, d_x + d_h)), rng.normal(size=(d_h, d_x)),
                          None if d_r == d_h else rng.normal(size=(d_h, d_r)))
    inp = FusionInput(rng.normal(size=(batch, d_x)), rng.normal(size=(batch, d_r)))
    up = rng.normal(size=(batch, d_h))
    f = lambda: float(np.sum(up * gated_fuse(params, inp)))
    g = gated_fuse_grad(params, inp, up)
    pairs = [(g.W_g, params.W_g), (g.W_x, params.W_x), (g.x, inp.x), (g.r, inp.r)]
    if params.W_r is not None:
        pairs.append((g.W_r, params.W_r))
    return max(rel_error(a, numeric_grad(f, t)) for a, t in pairs)


def decoder_case(rng) -> float:
    """Worst relative error over all model parameters and inputs (L=2, T<=8)."""
    d_h = int(rng.integers(2, 5))
    d_r = int(rng.integers(1, 4))
    dims = ModelDims(d_x=d_r + int(rng.integers(1, 4)), d_h=d_h, d_r=d_r,
                     d_in=int(rng.integers(2, 5)), hidden=int(rng.integers(2, 5)), layers=2,
                     frames=int(rng.integers(2, 9)), n_mels=int(rng.integers(2, 5)))
    model = init_model(dims, seed=int(rng.integers(1 << 30)), dtype=np.float64)
    batch = int(rng.integers(1, 3))
    inp = FusionInput(rng.normal(size=(batch, dims.d_x)), rng.normal(size=(batch, dims.d_r)))
    up = rng.normal(size=(batch, dims.frames, dims.n_mels))
    f = lambda: float(np.sum(up * forward(model, inp)[0]))
    _, cache = forward(model, inp)
    grads, dx, dr = backward(model, cache, up)
    worst = max(rel_error(a, numeric_grad(f, t)) for a, t in zip(grads.tensors(), model.tensors()))
    return max(worst, rel_error(dx, numeric_grad(f, inp.x)), rel_error(dr, numeric_grad(f, inp.r)))


def loss_case(rng) -> float:
    """Worst relative error of the loss subgradient, away from ties."""
    T, F = int(rng.integers(1, 6)), int(rng.integers(1, 9))
    target = rng.uniform(-1, 1, (T, F))
    step = rng.uniform(1e-3, 0.5, (T, F)) * rng.choice([-1.0, 1.0], (T, F))
    pred = target + step
    w = loss_weights(F)
    f = lambda: freq_weighted_l1(pred, target, w)
    return rel_error(freq_weighted_l1_grad(pred, target, w), numeric_grad(f, pred))
