"""Frequency-weighted L1 loss over Mel-spectrograms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..melspec import MelSpectrogram


@dataclass(frozen=True, eq=False)
class LossWeights:
    w: np.ndarray

    @property
    def n_mels(self) -> int:
        return self.w.shape[0]


def loss_weights(n_mels: int) -> LossWeights:
    """Linear ramp from 1.0 on the lowest band to 1.5 on the highest."""
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    if n_mels == 1:
        return LossWeights(np.ones(1))
    # (f - 1) / (F - 1) with f = 1..F; the endpoints come out as exactly 0 and 1
    return LossWeights(1.0 + 0.5 * (np.arange(n_mels) / (n_mels - 1)))


def _arrays(pred, target, weights: LossWeights):
    if isinstance(pred, MelSpectrogram) or isinstance(target, MelSpectrogram):
        if not (isinstance(pred, MelSpectrogram) and isinstance(target, MelSpectrogram)):
            raise TypeError("pred and target must both be MelSpectrogram or both arrays")
        if pred.normalization != target.normalization:
            raise ValueError(
                f"normalization mismatch: {pred.normalization} vs {target.normalization}"
            )
        pred, target = pred.values, target.values
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.shape[-1] != weights.n_mels:
        raise ValueError(f"{pred.shape[-1]} Mel bands but {weights.n_mels} weights")
    return pred, target


def freq_weighted_l1(pred, target, weights: LossWeights) -> float:
    """``mean_{t,f} w_f |pred - target|`` (also averaged over a leading batch axis)."""
    pred, target = _arrays(pred, target, weights)
    w = weights.w.astype(np.result_type(pred, target, np.float64))
    return float(np.mean(np.abs(pred - target) * w))


def freq_weighted_l1_grad(pred, target, weights: LossWeights) -> np.ndarray:
    """Subgradient w.r.t. ``pred``, with ``sign(0) = 0``."""
    pred, target = _arrays(pred, target, weights)
    w = weights.w.astype(np.result_type(pred, target))
    return np.sign(pred - target) * w / pred.size
