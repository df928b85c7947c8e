"""WAV reading/writing and sample-rate conversion.

Only two codecs are handled: 16-bit integer PCM (format tag 0x0001) and
32-bit IEEE float (0x0003), optionally wrapped in WAVE_FORMAT_EXTENSIBLE.
Everything is downmixed to mono on load.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

KAISER_BETA = 8.6
TAPS_PER_PHASE = 64


class WavError(ValueError):
    """Malformed or unreadable WAV data."""


class UnsupportedCodecError(WavError):
    def __init__(self, tag: int, bits: int | None = None):
        self.tag = tag
        self.bits = bits
        detail = f" ({bits}-bit)" if bits is not None else ""
        super().__init__(f"unsupported WAV codec: format tag 0x{tag:04X}{detail}")


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Mono signal with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


def _parse_chunks(data: bytes, path) -> tuple[bytes, bytes]:
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            # tolerate a truncated trailing data chunk, reject anything else
            if chunk_id != b"data":
                raise WavError(f"{path}: chunk {chunk_id!r} truncated at offset {pos}")
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavError(f"{path}: missing fmt chunk")
    if payload is None:
        raise WavError(f"{path}: missing data chunk")
    return fmt, payload


def read_wav(path) -> AudioBuffer:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such WAV file: {path}")
    data = path.read_bytes()
    fmt, payload = _parse_chunks(data, path)
    if len(fmt) < 16:
        raise WavError(f"{path}: fmt chunk too short ({len(fmt)} bytes)")
    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 26:
            raise WavError(f"{path}: extensible fmt chunk too short")
        # first two bytes of the SubFormat GUID carry the real tag
        (tag,) = struct.unpack_from("<H", fmt, 24)
    if channels < 1:
        raise WavError(f"{path}: channel count is {channels}")
    if rate == 0:
        raise WavError(f"{path}: sample rate is 0")

    if tag == WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    elif tag in (WAVE_FORMAT_PCM, WAVE_FORMAT_IEEE_FLOAT):
        raise UnsupportedCodecError(tag, bits)
    else:
        raise UnsupportedCodecError(tag)

    frame_bytes = dtype.itemsize * channels
    n_frames = len(payload) // frame_bytes
    raw = np.frombuffer(payload[:n_frames * frame_bytes], dtype=dtype)
    frames = raw.reshape(n_frames, channels).astype(np.float64) * scale
    if not np.all(np.isfinite(frames)):
        raise WavError(f"{path}: non-finite sample values")
    mono = frames[:, 0] if channels == 1 else frames.mean(axis=1)
    return AudioBuffer(np.clip(mono, -1.0, 1.0), int(rate))


def write_wav(buffer: AudioBuffer, path, format: str = "float32") -> None:
    if len(buffer) == 0:
        raise ValueError("cannot write an empty buffer")
    if format == "pcm16":
        q = np.clip(np.round(buffer.samples * 32768.0), -32768, 32767)
        payload = q.astype("<i2").tobytes()
        tag, bits = WAVE_FORMAT_PCM, 16
    elif format == "float32":
        payload = buffer.samples.astype("<f4").tobytes()
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ValueError(f"unknown WAV format {format!r}; expected 'pcm16' or 'float32'")
    block_align = bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, tag, 1, buffer.sample_rate_hz,
        buffer.sample_rate_hz * block_align, block_align, bits,
        b"data", len(payload),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def _kaiser_lowpass(up: int, down: int) -> np.ndarray:
    numtaps = TAPS_PER_PHASE * up + 1
    cutoff = 1.0 / max(up, down)
    return signal.firwin(numtaps, cutoff, window=("kaiser", KAISER_BETA)) * up


def resample(buffer: AudioBuffer, target_hz: int) -> AudioBuffer:
    """Polyphase windowed-sinc resampling, hard-clipped to [-1, 1]."""
    if target_hz <= 0:
        raise ValueError(f"target rate must be positive, got {target_hz}")
    if len(buffer) == 0:
        raise ValueError("cannot resample an empty buffer")
    source_hz = buffer.sample_rate_hz
    if target_hz == source_hz:
        return buffer
    g = math.gcd(source_hz, target_hz)
    up, down = target_hz // g, source_hz // g
    out = signal.resample_poly(buffer.samples, up, down, window=_kaiser_lowpass(up, down))
    # round-half-up in exact integer arithmetic
    n_out = (2 * len(buffer) * target_hz + source_hz) // (2 * source_hz)
    if out.shape[0] >= n_out:
        out = out[:n_out]
    else:
        out = np.pad(out, (0, n_out - out.shape[0]))
    return AudioBuffer(np.clip(out, -1.0, 1.0), target_hz)
