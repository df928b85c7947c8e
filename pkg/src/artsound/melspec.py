"""Mel-spectrogram analysis, normalization and Griffin-Lim inversion.

Analysis follows the usual librosa-style defaults: periodic Hann window,
reflect padding by ``fft_size // 2`` on both sides, HTK Mel scale
(``2595 * log10(1 + f / 700)``) with area-normalized triangular filters, and
power-to-dB conversion with an 80 dB dynamic range.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .audio_io import AudioBuffer

AMIN = 1e-10
TOP_DB = 80.0

MELS_MAGIC = b"MELS"
MELS_VERSION = 1
_NORM_TAGS = {"raw_db": 0, "minmax_unit": 1}
_NORM_NAMES = {v: k for k, v in _NORM_TAGS.items()}


class MelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class MelConfig:
    sample_rate_hz: int = 22050
    fft_size: int = 1024
    hop_length: int = 256
    n_mels: int = 80
    target_frames: int = 896
    fmin_hz: float = 0.0
    fmax_hz: float | None = None

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.fft_size < 2 or self.fft_size % 2:
            raise ValueError(f"fft_size must be an even integer >= 2, got {self.fft_size}")
        if not 1 <= self.hop_length <= self.fft_size:
            raise ValueError(f"hop_length must be in [1, fft_size], got {self.hop_length}")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if self.target_frames < 1:
            raise ValueError("target_frames must be >= 1")
        if not 0.0 <= self.fmin_hz < self.fmax:
            raise ValueError(f"need 0 <= fmin < fmax, got fmin={self.fmin_hz}, fmax={self.fmax}")
        if self.fmax > self.sample_rate_hz / 2:
            raise ValueError(f"fmax {self.fmax} exceeds Nyquist {self.sample_rate_hz / 2}")

    @property
    def fmax(self) -> float:
        return self.sample_rate_hz / 2 if self.fmax_hz is None else float(self.fmax_hz)

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass(eq=False)
class MelSpectrogram:
    """T x F matrix of Mel values (rows are frames)."""

    values: np.ndarray
    config: MelConfig = field(default_factory=MelConfig)
    normalization: str = "raw_db"

    def __post_init__(self):
        if self.normalization not in _NORM_TAGS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-D (T, F), got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("spectrogram contains non-finite values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(config: MelConfig) -> np.ndarray:
    """The ``n_mels + 2`` corner frequencies in Hz; filter i peaks at edge i + 1."""
    mels = np.linspace(hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax), config.n_mels + 2)
    return mel_to_hz(mels)


def mel_center_frequencies(config: MelConfig) -> np.ndarray:
    return mel_band_edges(config)[1:-1]


def mel_filterbank(config: MelConfig) -> np.ndarray:
    edges = mel_band_edges(config)
    fft_freqs = np.arange(config.n_bins) * config.sample_rate_hz / config.fft_size
    lower = edges[:-2, None]
    center = edges[1:-1, None]
    upper = edges[2:, None]
    rising = (fft_freqs[None, :] - lower) / (center - lower)
    falling = (upper - fft_freqs[None, :]) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    weights *= (2.0 / (upper - lower))
    empty = np.flatnonzero(~np.any(weights > 0, axis=1))
    if empty.size:
        raise ValueError(
            f"n_mels={config.n_mels} too large for fft_size={config.fft_size}: "
            f"filters {empty.tolist()} have no nonzero weight"
        )
    return weights


def _check_rate(buffer: AudioBuffer, config: MelConfig) -> None:
    if buffer.sample_rate_hz != config.sample_rate_hz:
        raise ValueError(
            f"sample rate mismatch: buffer is {buffer.sample_rate_hz} Hz, "
            f"config expects {config.sample_rate_hz} Hz"
        )
    if len(buffer) < 1:
        raise ValueError("buffer is empty")


def _window(n_fft: int) -> np.ndarray:
    # periodic Hann
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n_fft) / n_fft)


def _stft(y: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    pad = n_fft // 2
    y = np.pad(y, pad, mode="reflect")
    n_frames = 1 + (y.shape[0] - n_fft) // hop
    frames = np.lib.stride_tricks.sliding_window_view(y, n_fft)[::hop][:n_frames]
    return np.fft.rfft(frames * _window(n_fft), axis=1)


def _istft(spec: np.ndarray, n_fft: int, hop: int, length: int) -> np.ndarray:
    window = _window(n_fft)
    frames = np.fft.irfft(spec, n=n_fft, axis=1) * window
    n_frames = spec.shape[0]
    total = n_fft + hop * (n_frames - 1)
    out = np.zeros(total)
    norm = np.zeros(total)
    wsq = window ** 2
    for t in range(n_frames):
        s = t * hop
        out[s:s + n_fft] += frames[t]
        norm[s:s + n_fft] += wsq
    nz = norm > 1e-11
    out[nz] /= norm[nz]
    pad = n_fft // 2
    out = out[pad:pad + length]
    if out.shape[0] < length:
        out = np.pad(out, (0, length - out.shape[0]))
    return out


def stft_power(buffer: AudioBuffer, config: MelConfig) -> np.ndarray:
    """Power spectrogram, shape ``(1 + len // hop, fft_size // 2 + 1)``."""
    _check_rate(buffer, config)
    spec = _stft(buffer.samples, config.fft_size, config.hop_length)
    return spec.real ** 2 + spec.imag ** 2


def power_to_db(power: np.ndarray) -> np.ndarray:
    db = 10.0 * np.log10(np.maximum(power, AMIN))
    return np.maximum(db, db.max() - TOP_DB)


def mel_spectrogram(buffer: AudioBuffer, config: MelConfig | None = None) -> MelSpectrogram:
    config = config or MelConfig()
    power = stft_power(buffer, config)
    mel_power = power @ mel_filterbank(config).T
    return MelSpectrogram(power_to_db(mel_power).astype(np.float32), config, "raw_db")


def normalize_unit(spec: MelSpectrogram) -> MelSpectrogram:
    v = spec.values.astype(np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        out = np.full_like(v, -1.0)
    else:
        out = np.clip(2.0 * (v - lo) / (hi - lo) - 1.0, -1.0, 1.0)
    return MelSpectrogram(out.astype(spec.values.dtype), spec.config, "minmax_unit")


def fix_length(spec: MelSpectrogram, target_frames: int) -> MelSpectrogram:
    """Pad or truncate at the end to exactly ``target_frames`` rows.

    Unit-normalized spectrograms are padded with 0. A raw dB spectrogram has
    no meaningful zero, so it is padded with its own floor (minimum) instead.
    """
    if target_frames < 1:
        raise ValueError("target_frames must be >= 1")
    v = spec.values
    if v.shape[0] >= target_frames:
        out = v[:target_frames].copy()
    else:
        fill = 0.0 if spec.normalization == "minmax_unit" else v.min()
        out = np.full((target_frames, v.shape[1]), fill, dtype=v.dtype)
        out[:v.shape[0]] = v
    return replace(spec, values=out)


def to_db(spec: MelSpectrogram) -> np.ndarray:
    """dB values; unit-normalized input is mapped back onto [-80, 0] dB."""
    v = spec.values.astype(np.float64)
    if spec.normalization == "raw_db":
        return v
    return (v + 1.0) * (TOP_DB / 2.0) - TOP_DB


def griffin_lim_invert(spec: MelSpectrogram, iterations: int = 32, seed: int = 0) -> AudioBuffer:
    """Waveform from a Mel-spectrogram via pseudo-inverse + Griffin-Lim.

    Stands in for a neural vocoder. Output length is ``(T - 1) * hop``.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    config = spec.config
    if spec.shape[1] != config.n_mels:
        raise ValueError(f"spectrogram has {spec.shape[1]} bands, config has {config.n_mels}")
    mel_power = 10.0 ** (to_db(spec) / 10.0)
    basis = mel_filterbank(config)
    linear = np.maximum(mel_power @ np.linalg.pinv(basis).T, 0.0)
    magnitude = np.sqrt(linear)

    n_fft, hop = config.fft_size, config.hop_length
    length = (spec.shape[0] - 1) * hop
    if length == 0:
        return AudioBuffer(np.zeros(1), config.sample_rate_hz)
    rng = np.random.default_rng(seed)
    phase = np.exp(2j * np.pi * rng.random(magnitude.shape))
    y = _istft(magnitude * phase, n_fft, hop, length)
    for _ in range(iterations):
        rebuilt = _stft(y, n_fft, hop)
        phase = np.exp(1j * np.angle(rebuilt))
        y = _istft(magnitude * phase, n_fft, hop, length)
    return AudioBuffer(np.clip(y, -1.0, 1.0), config.sample_rate_hz)


def save_mels(spec: MelSpectrogram) -> bytes:
    t, f = spec.shape
    header = MELS_MAGIC + struct.pack("<BIIB", MELS_VERSION, t, f, _NORM_TAGS[spec.normalization])
    return header + np.ascontiguousarray(spec.values, dtype="<f4").tobytes()


def load_mels(data: bytes, config: MelConfig | None = None) -> MelSpectrogram:
    """Parse a MELS v1 byte string.

    The file does not carry analysis parameters; ``config`` defaults to
    :class:`MelConfig` with ``n_mels``/``target_frames`` taken from the header.
    """
    if len(data) < 14:
        raise MelFormatError(f"MELS stream truncated: {len(data)} bytes, header needs 14")
    if data[:4] != MELS_MAGIC:
        raise MelFormatError(f"bad magic {data[:4]!r}, expected {MELS_MAGIC!r}")
    version, t, f, tag = struct.unpack_from("<BIIB", data, 4)
    if version != MELS_VERSION:
        raise MelFormatError(f"unsupported MELS version {version}")
    if tag not in _NORM_NAMES:
        raise MelFormatError(f"unknown normalization tag {tag}")
    expected = 14 + 4 * t * f
    if len(data) != expected:
        raise MelFormatError(f"MELS payload size mismatch: {len(data)} bytes, expected {expected}")
    values = np.frombuffer(data, dtype="<f4", offset=14).reshape(t, f).astype(np.float32)
    if config is None:
        config = MelConfig(n_mels=f, target_frames=t)
    elif config.n_mels != f:
        raise MelFormatError(f"file has {f} Mel bands, config expects {config.n_mels}")
    return MelSpectrogram(values, config, _NORM_NAMES[tag])
