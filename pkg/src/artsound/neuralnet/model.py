"""Fusion + BiLSTM Mel decoder: parameters, forward pass and full backward pass."""

from __future__ import annotations

from dataclasses import dataclass, fields
from functools import lru_cache

import numpy as np

from ..melspec import MelConfig, MelSpectrogram
from .fusion import FusionInput, FusionParams, gated_fuse_grad, _forward as _fuse_forward, _check_dims
from .lstm import LSTMDirection, bilstm_backward, bilstm_forward
from .loss import LossWeights, freq_weighted_l1, freq_weighted_l1_grad


@dataclass(frozen=True)
class ModelDims:
    d_x: int = 1024
    d_h: int = 512
    d_r: int = 512
    d_in: int = 512
    hidden: int = 512
    layers: int = 4
    frames: int = 896
    n_mels: int = 80

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ValueError(f"model dimension {f.name} must be >= 1")
        if self.d_r >= self.d_x:
            raise ValueError(f"d_x ({self.d_x}) must exceed d_r ({self.d_r}): x = [image; text]")

    @property
    def image_dim(self) -> int:
        return self.d_x - self.d_r

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))


@lru_cache(maxsize=16)
def _positional_table(frames: int, dim: int) -> np.ndarray:
    pos = np.arange(frames, dtype=np.float64)[:, None]
    pair = np.arange(0, dim, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, pair / dim)
    table = np.zeros((frames, dim))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle[:, : dim // 2])
    table.setflags(write=False)
    return table


def positional_table(frames: int, dim: int) -> np.ndarray:
    """Fixed sinusoidal table: even columns sin, odd columns cos."""
    return _positional_table(frames, dim)


@dataclass(eq=False)
class DecoderParams:
    layers: list[tuple[LSTMDirection, LSTMDirection]]
    W_in: np.ndarray  # (d_in, d_h)
    b_in: np.ndarray  # (d_in,)
    W_out: np.ndarray  # (F, 2H)
    b_out: np.ndarray  # (F,)
    frames: int

    def __post_init__(self):
        if not self.layers:
            raise ValueError("decoder needs at least one LSTM layer")
        d_in = self.W_in.shape[0]
        for k, (fwd, bwd) in enumerate(self.layers):
            if fwd.hidden != bwd.hidden:
                raise ValueError(f"layer {k}: forward/backward hidden sizes differ")
            expected = d_in if k == 0 else 2 * self.hidden
            if fwd.input_dim != expected or bwd.input_dim != expected:
                raise ValueError(f"layer {k}: input dim {fwd.input_dim}, expected {expected}")
        if self.W_out.shape[1] != 2 * self.hidden:
            raise ValueError(f"W_out has {self.W_out.shape[1]} columns, expected {2 * self.hidden}")

    @property
    def hidden(self) -> int:
        return self.layers[0][0].hidden

    @property
    def d_in(self) -> int:
        return self.W_in.shape[0]

    @property
    def n_mels(self) -> int:
        return self.W_out.shape[0]

    @property
    def positional(self) -> np.ndarray:
        return positional_table(self.frames, self.d_in)


@dataclass(eq=False)
class ModelParams:
    fusion: FusionParams
    decoder: DecoderParams

    @property
    def dims(self) -> ModelDims:
        f, d = self.fusion, self.decoder
        return ModelDims(f.d_x, f.d_h, f.d_r, d.d_in, d.hidden, len(d.layers), d.frames, d.n_mels)

    @property
    def dtype(self) -> np.dtype:
        return self.fusion.W_x.dtype

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        """All tensors in the canonical flat order used for serialization."""
        out = [("fusion.W_g", self.fusion.W_g), ("fusion.W_x", self.fusion.W_x)]
        if self.fusion.W_r is not None:
            out.append(("fusion.W_r", self.fusion.W_r))
        for k, (fwd, bwd) in enumerate(self.decoder.layers):
            for side, p in (("fwd", fwd), ("bwd", bwd)):
                out += [(f"lstm{k}.{side}.W_ih", p.W_ih), (f"lstm{k}.{side}.W_hh", p.W_hh),
                        (f"lstm{k}.{side}.b", p.b)]
        d = self.decoder
        out += [("in_proj.W", d.W_in), ("in_proj.b", d.b_in),
                ("out_proj.W", d.W_out), ("out_proj.b", d.b_out)]
        return out

    def tensors(self) -> list[np.ndarray]:
        return [t for _, t in self.named_tensors()]

    def with_tensors(self, tensors: list[np.ndarray]) -> "ModelParams":
        """Same structure, new tensors (in :meth:`named_tensors` order)."""
        it = iter(tensors)
        W_g, W_x = next(it), next(it)
        W_r = next(it) if self.fusion.W_r is not None else None
        layers = []
        for _ in self.decoder.layers:
            fwd = LSTMDirection(next(it), next(it), next(it))
            bwd = LSTMDirection(next(it), next(it), next(it))
            layers.append((fwd, bwd))
        W_in, b_in, W_out, b_out = next(it), next(it), next(it), next(it)
        return ModelParams(
            FusionParams(W_g, W_x, W_r),
            DecoderParams(layers, W_in, b_in, W_out, b_out, self.decoder.frames),
        )

    def copy(self) -> "ModelParams":
        return self.with_tensors([t.copy() for t in self.tensors()])

    def astype(self, dtype) -> "ModelParams":
        return self.with_tensors([t.astype(dtype) for t in self.tensors()])

    def n_parameters(self) -> int:
        return sum(t.size for t in self.tensors())


def init_model(dims: ModelDims, seed: int = 0, dtype=np.float32) -> ModelParams:
    """Uniform(-1/sqrt(fan), 1/sqrt(fan)) init; LSTM forget-gate bias 1.0."""
    rng = np.random.default_rng(seed)

    def uniform(shape, fan):
        k = 1.0 / np.sqrt(fan)
        return rng.uniform(-k, k, size=shape)

    W_g = uniform((dims.d_h, dims.d_x + dims.d_h), dims.d_x + dims.d_h)
    W_x = uniform((dims.d_h, dims.d_x), dims.d_x)
    W_r = uniform((dims.d_h, dims.d_r), dims.d_r) if dims.d_r != dims.d_h else None

    H = dims.hidden
    layers = []
    for k in range(dims.layers):
        d_in = dims.d_in if k == 0 else 2 * H
        pair = []
        for _ in range(2):
            b = uniform(4 * H, H)
            b[H:2 * H] = 1.0
            pair.append(LSTMDirection(uniform((4 * H, d_in), H), uniform((4 * H, H), H), b))
        layers.append(tuple(pair))
    W_in = uniform((dims.d_in, dims.d_h), dims.d_h)
    b_in = uniform(dims.d_in, dims.d_h)
    W_out = uniform((dims.n_mels, 2 * H), 2 * H)
    b_out = uniform(dims.n_mels, 2 * H)
    model = ModelParams(
        FusionParams(W_g, W_x, W_r),
        DecoderParams(layers, W_in, b_in, W_out, b_out, dims.frames),
    )
    return model.astype(dtype)


def empty_model(dims: ModelDims, dtype=np.float32) -> ModelParams:
    """Zero-filled model with the right shapes (a template for loading)."""
    H = dims.hidden
    layers = []
    for k in range(dims.layers):
        d_in = dims.d_in if k == 0 else 2 * H
        layers.append(tuple(
            LSTMDirection(np.zeros((4 * H, d_in), dtype), np.zeros((4 * H, H), dtype), np.zeros(4 * H, dtype))
            for _ in range(2)
        ))
    W_r = np.zeros((dims.d_h, dims.d_r), dtype) if dims.d_r != dims.d_h else None
    return ModelParams(
        FusionParams(np.zeros((dims.d_h, dims.d_x + dims.d_h), dtype), np.zeros((dims.d_h, dims.d_x), dtype), W_r),
        DecoderParams(layers, np.zeros((dims.d_in, dims.d_h), dtype), np.zeros(dims.d_in, dtype),
                      np.zeros((dims.n_mels, 2 * H), dtype), np.zeros(dims.n_mels, dtype), dims.frames),
    )


def expand_sequence(h: np.ndarray, decoder: DecoderParams) -> np.ndarray:
    """Broadcast the projected fused vector over time and add positions.

    ``h`` of shape (d_h,) gives (T, d_in); a batch (B, d_h) gives (B, T, d_in).
    """
    h = np.asarray(h)
    if h.shape[-1] != decoder.W_in.shape[1]:
        raise ValueError(f"h has dimension {h.shape[-1]}, expected {decoder.W_in.shape[1]}")
    proj = h @ decoder.W_in.T + decoder.b_in
    pos = decoder.positional.astype(proj.dtype)
    return proj[..., None, :] + pos


@dataclass(eq=False)
class _ForwardCache:
    x: np.ndarray
    r: np.ndarray
    fused: np.ndarray
    lstm_caches: list
    lstm_out: np.ndarray
    pred: np.ndarray


def _as_batch(model: ModelParams, inp: FusionInput):
    _check_dims(model.fusion, inp)
    dtype = model.dtype
    x, r = inp.x.astype(dtype, copy=False), inp.r.astype(dtype, copy=False)
    single = x.ndim == 1
    if single:
        x, r = x[None], r[None]
    return x, r, single


def forward(model: ModelParams, inp: FusionInput):
    """Batched forward pass. Returns predictions (B, T, F) and a cache."""
    x, r, _ = _as_batch(model, inp)
    fused, _ = _fuse_forward(model.fusion, x, r)
    seq = expand_sequence(fused, model.decoder)
    out, caches = bilstm_forward(model.decoder.layers, seq)
    pred = np.tanh(out @ model.decoder.W_out.T + model.decoder.b_out)
    return pred, _ForwardCache(x, r, fused, caches, out, pred)


def backward(model: ModelParams, cache: _ForwardCache, d_pred: np.ndarray):
    """Gradients of ``sum(d_pred * pred)``.

    Returns ``(param_grads, d_x, d_r)`` where ``param_grads`` is a
    :class:`ModelParams` holding gradients.
    """
    dec = model.decoder
    d_pre = d_pred * (1.0 - cache.pred * cache.pred)
    B, T, F = d_pre.shape
    out_flat = cache.lstm_out.reshape(B * T, -1)
    d_pre_flat = d_pre.reshape(B * T, F)
    dW_out = d_pre_flat.T @ out_flat
    db_out = d_pre_flat.sum(axis=0)
    d_out = d_pre @ dec.W_out

    d_seq, layer_grads = bilstm_backward(dec.layers, cache.lstm_caches, d_out)
    d_proj = d_seq.sum(axis=1)  # (B, d_in); positions are constant
    dW_in = d_proj.T @ cache.fused
    db_in = d_proj.sum(axis=0)
    d_fused = d_proj @ dec.W_in

    fg = gated_fuse_grad(model.fusion, FusionInput(cache.x, cache.r), d_fused)
    grads = ModelParams(
        FusionParams(fg.W_g, fg.W_x, fg.W_r),
        DecoderParams(layer_grads, dW_in, db_in, dW_out, db_out, dec.frames),
    )
    return grads, fg.x, fg.r


def predict(model: ModelParams, inp: FusionInput) -> np.ndarray:
    pred, _ = forward(model, inp)
    return pred[0] if np.asarray(inp.x).ndim == 1 else pred


def decode_mel(model: ModelParams, inp: FusionInput, config: MelConfig | None = None) -> MelSpectrogram:
    """Generate one unit-normalized (T, F) Mel-spectrogram from a single input."""
    if np.asarray(inp.x).ndim != 1:
        raise ValueError("decode_mel takes a single input; use predict() for batches")
    dims = model.dims
    if config is None:
        config = MelConfig(n_mels=dims.n_mels, target_frames=dims.frames)
    elif (config.n_mels, config.target_frames) != (dims.n_mels, dims.frames):
        raise ValueError(
            f"Mel config is {config.target_frames}x{config.n_mels}, "
            f"model produces {dims.frames}x{dims.n_mels}"
        )
    return MelSpectrogram(predict(model, inp), config, "minmax_unit")


def loss_and_grad(model: ModelParams, inp: FusionInput, target: np.ndarray,
                  weights: LossWeights) -> tuple[float, ModelParams]:
    """Batch-mean frequency-weighted L1 loss and its parameter gradient."""
    pred, cache = forward(model, inp)
    target = np.asarray(target, dtype=pred.dtype).reshape(pred.shape)
    loss = freq_weighted_l1(pred, target, weights)
    d_pred = freq_weighted_l1_grad(pred, target, weights)
    grads, _, _ = backward(model, cache, d_pred)
    return loss, grads
