"""Embedding tables and the EMB1 file format.

EMB1 layout: ``b"EMB1"``, u32 count, u32 dim, then per entry a u16 id
length, the UTF-8 id bytes and ``dim`` little-endian float32 values.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"EMB1"
HASH_DIM = 256
_HASH_KEY = b"artsound-hash-v1"
_TOKEN = re.compile(r"[a-z]+")


class EmbeddingFormatError(ValueError):
    pass


class MissingEmbeddingError(KeyError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"missing embeddings for ids: {', '.join(map(str, self.ids))}")

    def __str__(self):
        return self.args[0]


@dataclass(eq=False)
class EmbeddingTable:
    ids: list[str]
    vectors: np.ndarray  # (n, dim)
    provider_tag: str = "unknown"
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.vectors = np.asarray(self.vectors)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.ids):
            raise ValueError(f"vectors shape {self.vectors.shape} does not match {len(self.ids)} ids")
        if np.isnan(self.vectors).any():
            raise ValueError("embedding table contains NaN entries")
        self._index = {k: n for n, k in enumerate(self.ids)}
        if len(self._index) != len(self.ids):
            seen, dup = set(), []
            for k in self.ids:
                if k in seen:
                    dup.append(k)
                seen.add(k)
            raise ValueError(f"duplicate embedding ids: {dup}")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, key) -> bool:
        return key in self._index

    def __getitem__(self, key: str) -> np.ndarray:
        try:
            return self.vectors[self._index[key]]
        except KeyError:
            raise MissingEmbeddingError([key]) from None

    def get(self, key, default=None):
        n = self._index.get(key)
        return default if n is None else self.vectors[n]

    def missing(self, keys) -> list[str]:
        return [k for k in keys if k not in self._index]

    @classmethod
    def from_dict(cls, mapping: dict, provider_tag: str = "unknown") -> "EmbeddingTable":
        ids = list(mapping)
        vectors = np.stack([np.asarray(mapping[k]) for k in ids]) if ids else np.zeros((0, 0))
        return cls(ids, vectors, provider_tag)


def save_embeddings(table: EmbeddingTable) -> bytes:
    out = [MAGIC, struct.pack("<II", len(table), table.dim)]
    data = np.ascontiguousarray(table.vectors, dtype="<f4")
    for k, row in zip(table.ids, data):
        key = k.encode("utf-8")
        if len(key) > 0xFFFF:
            raise ValueError(f"id too long for EMB1: {k[:40]}...")
        out.append(struct.pack("<H", len(key)))
        out.append(key)
        out.append(row.tobytes())
    return b"".join(out)


def load_embeddings(data: bytes, provider_tag: str = "emb1") -> EmbeddingTable:
    if len(data) < 12:
        raise EmbeddingFormatError(f"EMB1 stream truncated: {len(data)} bytes")
    if data[:4] != MAGIC:
        raise EmbeddingFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    count, dim = struct.unpack_from("<II", data, 4)
    pos = 12
    ids = []
    vectors = np.empty((count, dim), dtype=np.float32)
    for n in range(count):
        if pos + 2 > len(data):
            raise EmbeddingFormatError(f"EMB1 truncated at offset {pos} (entry {n})")
        (klen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        end = pos + klen + 4 * dim
        if end > len(data):
            raise EmbeddingFormatError(f"EMB1 truncated at offset {pos} (entry {n})")
        ids.append(data[pos:pos + klen].decode("utf-8"))
        vectors[n] = np.frombuffer(data, dtype="<f4", count=dim, offset=pos + klen)
        pos = end
    if pos != len(data):
        raise EmbeddingFormatError(f"{len(data) - pos} trailing bytes in EMB1 stream")
    return EmbeddingTable(ids, vectors, provider_tag)


def read_embeddings(path) -> EmbeddingTable:
    path = Path(path)
    return load_embeddings(path.read_bytes(), provider_tag=path.name)


def write_embeddings(table: EmbeddingTable, path) -> None:
    Path(path).write_bytes(save_embeddings(table))


def hash_embed(text: str, dim: int = HASH_DIM) -> np.ndarray:
    """Feature-hashed unigram counts, L2-normalized.

    A deterministic stand-in for a sentence encoder, for tests and toy runs.
    Text without any alphabetic token maps to the zero vector.
    """
    vec = np.zeros(dim)
    for tok in _TOKEN.findall(text.lower()):
        digest = hashlib.blake2b(tok.encode("utf-8"), digest_size=8, key=_HASH_KEY).digest()
        vec[int.from_bytes(digest, "little") % dim] += 1.0
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec
