"""Objective evaluation: MCD, LSD, Fréchet distance over embeddings, cosine."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from .align import cosine_similarity
from .melspec import MelSpectrogram, to_db

MCD_CONST = 10.0 / math.log(10.0)
POWER_FLOOR = 1e-10
EIG_CLAMP = 1e-8
COV_REG = 1e-10


@dataclass(eq=False)
class CepstraFrameSet:
    coeffs: np.ndarray  # (frames, D), coefficient 0 excluded

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.ndim != 2:
            raise ValueError(f"cepstra must be 2-D, got shape {self.coeffs.shape}")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("cepstra contain non-finite values")

    @property
    def shape(self):
        return self.coeffs.shape


def mel_cepstra(spec: MelSpectrogram, d: int = 13) -> CepstraFrameSet:
    """Orthonormal DCT-II of each dB Mel frame, keeping coefficients 1..d."""
    n_mels = spec.shape[1]
    if not 1 <= d < n_mels:
        raise ValueError(f"cepstral order d must satisfy 1 <= d < {n_mels}, got {d}")
    c = dct(to_db(spec), type=2, norm="ortho", axis=1)
    return CepstraFrameSet(c[:, 1:d + 1])


def mcd(a: CepstraFrameSet, b: CepstraFrameSet) -> float:
    """Frame-averaged Mel-cepstral distortion in dB, frames compared 1:1."""
    if a.shape != b.shape:
        raise ValueError(f"cepstra shape mismatch: {a.shape} vs {b.shape}")
    diff = a.coeffs - b.coeffs
    return float(np.mean(MCD_CONST * np.sqrt(2.0 * np.sum(diff * diff, axis=1))))


def _log10_power(x) -> np.ndarray:
    if isinstance(x, MelSpectrogram):
        return to_db(x) / 10.0
    return np.log10(np.maximum(np.asarray(x, dtype=np.float64), POWER_FLOOR))


def lsd(a, b) -> float:
    """Log-spectral distance: per-frame RMS of log10-power differences, averaged.

    Accepts two Mel-spectrograms (dB) or two linear power arrays (frames, bins).
    """
    la, lb = _log10_power(a), _log10_power(b)
    if la.shape != lb.shape:
        raise ValueError(f"shape mismatch: {la.shape} vs {lb.shape}")
    if la.ndim != 2:
        raise ValueError(f"expected (frames, bins) input, got shape {la.shape}")
    diff = la - lb
    return float(np.mean(np.sqrt(np.mean(diff * diff, axis=1))))


@dataclass(eq=False)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray
    count: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        d = self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise ValueError(f"covariance shape {self.cov.shape} does not match mean dim {d}")
        if self.count < 2:
            raise ValueError("Gaussian statistics need at least 2 samples")
        if np.max(np.abs(self.cov - self.cov.T), initial=0.0) > 1e-10:
            raise ValueError("covariance is not symmetric")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_gaussian(embeddings) -> GaussianStats:
    """Sample mean and unbiased (N - 1) covariance of the rows."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"embeddings must be (N, d), got shape {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 embeddings, got {n}")
    mu = x.mean(axis=0)
    xc = x - mu
    cov = xc.T @ xc / (n - 1)
    return GaussianStats(mu, 0.5 * (cov + cov.T), n)


def merge_gaussian(parts: list[GaussianStats]) -> GaussianStats:
    """Combine per-partition statistics (pairwise update, in list order)."""
    if not parts:
        raise ValueError("nothing to merge")
    n, mu = parts[0].count, parts[0].mean.copy()
    m2 = parts[0].cov * (n - 1)
    for p in parts[1:]:
        total = n + p.count
        delta = p.mean - mu
        m2 = m2 + p.cov * (p.count - 1) + np.outer(delta, delta) * (n * p.count / total)
        mu = mu + delta * (p.count / total)
        n = total
    cov = m2 / (n - 1)
    return GaussianStats(mu, 0.5 * (cov + cov.T), n)


def _psd_eig(m: np.ndarray, what: str):
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    tol = EIG_CLAMP * max(1.0, float(np.max(np.abs(w), initial=0.0)))
    if w.size and w.min() < -tol:
        raise ValueError(f"{what} is not positive semi-definite (eigenvalue {w.min():.3e})")
    return np.clip(w, 0.0, None), v


def frechet_distance(p: GaussianStats, q: GaussianStats) -> float:
    """``|mu_p - mu_q|^2 + tr(S_p + S_q - 2 (S_p S_q)^(1/2))``.

    The cross term uses the symmetric form ``(S_p^(1/2) S_q S_p^(1/2))^(1/2)``
    so only symmetric eigendecompositions are needed.
    """
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    sp, sq = p.cov, q.cov
    wp, vp = _psd_eig(sp, "first covariance")
    wq, _ = _psd_eig(sq, "second covariance")
    scale = max(1.0, wp.max(initial=0.0), wq.max(initial=0.0))
    if wp.min(initial=1.0) <= 1e-12 * scale or wq.min(initial=1.0) <= 1e-12 * scale:
        eye = COV_REG * np.eye(p.dim)
        sp, sq = sp + eye, sq + eye
        wp, vp = _psd_eig(sp, "first covariance")
    root_p = (vp * np.sqrt(wp)) @ vp.T
    wm, _ = _psd_eig(root_p @ sq @ root_p, "covariance product")
    diff = p.mean - q.mean
    value = diff @ diff + np.trace(sp) + np.trace(sq) - 2.0 * np.sum(np.sqrt(wm))
    return float(max(value, 0.0))


def frechet_audio_distance(embeddings_a, embeddings_b) -> float:
    return frechet_distance(fit_gaussian(embeddings_a), fit_gaussian(embeddings_b))


def embedding_cosine(a, b) -> float:
    return cosine_similarity(a, b)
