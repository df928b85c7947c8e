"""A2MP v1 parameter files.

Layout: ``b"A2MP"``, u8 version, eight u32 dims
``(d_x, d_h, d_r, d_in, hidden, layers, frames, n_mels)``, then every tensor
as little-endian float32 in :meth:`ModelParams.named_tensors` order.
"""

from __future__ import annotations

import struct

import numpy as np

from .model import ModelDims, ModelParams, empty_model

MAGIC = b"A2MP"
VERSION = 1
_HEADER = struct.Struct("<4sB8I")


class ParamFormatError(ValueError):
    pass


class TruncatedStreamError(ParamFormatError):
    def __init__(self, offset: int, needed: int, available: int):
        self.offset = offset
        super().__init__(
            f"parameter stream truncated at offset {offset}: "
            f"needed {needed} bytes, {available} available"
        )


class DimensionMismatchError(ParamFormatError):
    pass


def save_params(model: ModelParams) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, *model.dims.as_tuple())]
    parts += [np.ascontiguousarray(t, dtype="<f4").tobytes() for t in model.tensors()]
    return b"".join(parts)


def read_header(data: bytes) -> ModelDims:
    if len(data) < _HEADER.size:
        raise TruncatedStreamError(0, _HEADER.size, len(data))
    magic, version, *dims = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ParamFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ParamFormatError(f"unsupported A2MP version {version}")
    try:
        return ModelDims(*dims)
    except ValueError as exc:
        raise ParamFormatError(f"invalid dimensions in header: {exc}") from None


def load_params(data: bytes, expected: ModelDims | None = None) -> ModelParams:
    """Inverse of :func:`save_params`. Tensors come back as float32."""
    dims = read_header(data)
    if expected is not None and dims != expected:
        diffs = [
            f"{name}={got} (expected {want})"
            for name, got, want in zip(ModelDims.__dataclass_fields__, dims.as_tuple(), expected.as_tuple())
            if got != want
        ]
        raise DimensionMismatchError("header dimensions do not match model: " + ", ".join(diffs))
    template = empty_model(dims)
    offset = _HEADER.size
    tensors = []
    for name, t in template.named_tensors():
        nbytes = 4 * t.size
        if offset + nbytes > len(data):
            raise TruncatedStreamError(offset, nbytes, len(data) - offset)
        arr = np.frombuffer(data, dtype="<f4", count=t.size, offset=offset)
        tensors.append(arr.reshape(t.shape).astype(np.float32))
        offset += nbytes
    if offset != len(data):
        raise ParamFormatError(f"{len(data) - offset} trailing bytes after last tensor")
    return template.with_tensors(tensors)
