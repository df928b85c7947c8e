import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from artsound.embeddings import (
    HASH_DIM,
    EmbeddingFormatError,
    EmbeddingTable,
    MissingEmbeddingError,
    hash_embed,
    load_embeddings,
    read_embeddings,
    save_embeddings,
    write_embeddings,
)


def table(n=3, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    return EmbeddingTable([f"id{i}" for i in range(n)], rng.normal(size=(n, dim)).astype(np.float32))


class TestTable:
    def test_lookup(self):
        t = table()
        np.testing.assert_array_equal(t["id1"], t.vectors[1])
        assert "id2" in t and "x" not in t
        assert t.get("x") is None
        assert t.missing(["id0", "x", "y"]) == ["x", "y"]

    def test_missing_names_id(self):
        with pytest.raises(MissingEmbeddingError, match="nope"):
            table()["nope"]

    def test_nan_rejected(self):
        v = np.zeros((2, 3))
        v[1, 2] = np.nan
        with pytest.raises(ValueError, match="NaN"):
            EmbeddingTable(["a", "b"], v)

    def test_duplicate_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            EmbeddingTable(["a", "a"], np.zeros((2, 3)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            EmbeddingTable(["a"], np.zeros((2, 3)))


class TestEmb1:
    def test_layout(self):
        t = EmbeddingTable(["ab"], np.array([[1.0, -2.0]], dtype=np.float32))
        want = b"EMB1" + struct.pack("<II", 1, 2) + struct.pack("<H", 2) + b"ab" + struct.pack("<ff", 1.0, -2.0)
        assert save_embeddings(t) == want

    @settings(max_examples=40, deadline=None)
    @given(hnp.arrays(np.float32, st.tuples(st.integers(0, 5), st.integers(1, 6)),
                      elements=st.floats(width=32, allow_nan=False)))
    def test_round_trip_bit_exact(self, vectors):
        ids = [f"é{i}" for i in range(vectors.shape[0])]
        data = save_embeddings(EmbeddingTable(ids, vectors))
        back = load_embeddings(data)
        assert back.ids == ids
        assert back.vectors.tobytes() == vectors.tobytes()
        assert save_embeddings(back) == data

    def test_file_round_trip(self, tmp_path):
        t = table(5, 7)
        write_embeddings(t, tmp_path / "x.emb")
        back = read_embeddings(tmp_path / "x.emb")
        np.testing.assert_array_equal(back.vectors, t.vectors)
        assert back.provider_tag == "x.emb"

    def test_bad_magic(self):
        data = bytearray(save_embeddings(table()))
        data[:4] = b"EMB2"
        with pytest.raises(EmbeddingFormatError, match="magic"):
            load_embeddings(bytes(data))

    @pytest.mark.parametrize("cut", [3, 11, 14, 20])
    def test_truncated(self, cut):
        data = save_embeddings(table())
        with pytest.raises(EmbeddingFormatError, match="truncated"):
            load_embeddings(data[:cut])

    def test_trailing(self):
        with pytest.raises(EmbeddingFormatError, match="trailing"):
            load_embeddings(save_embeddings(table()) + b"\0")


class TestHashEmbed:
    def test_deterministic_and_unit(self):
        a = hash_embed("A calm warm harbour")
        np.testing.assert_array_equal(a, hash_embed("a CALM, warm harbour!"))
        assert a.shape == (HASH_DIM,)
        assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-12)

    def test_empty_text(self):
        np.testing.assert_array_equal(hash_embed("123 ..."), 0.0)

    def test_shared_words_raise_similarity(self):
        a, b, c = hash_embed("sad slow cello"), hash_embed("sad slow piano"), hash_embed("bright brass fanfare")
        assert a @ b > a @ c
