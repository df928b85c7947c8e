import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artsound.align import (
    ArtRecord,
    MusicRecord,
    SentimentLexicon,
    TripletRecord,
    best_matches,
    build_prompt,
    classify_polarity,
    cosine_similarity,
    extract_keywords,
    feeling_report,
    keyword_similarity,
    match_triplets,
    parse_prompt,
    polarity_distribution,
    polarity_heatmap,
    polarity_percentages,
    read_art_manifest,
    read_music_manifest,
    similarity_histogram,
)
from artsound.embeddings import EmbeddingTable, MissingEmbeddingError, hash_embed
from toy import PLANTED, planted_triplets

LEX = SentimentLexicon.from_words(
    ["happy", "well", "calm", "pleased", "beautiful", "peaceful"],
    ["sad", "slowly", "weird", "eerie", "smug"],
    ["the", "and"],
)


def exhaustive_argmax(art_ids, music_ids, art_vecs, music_vecs):
    """Double loop over every pair; ties within 1e-12 go to the smallest id."""
    out = []
    for a in art_ids:
        va = art_vecs[a]
        best_id, best = None, -math.inf
        for m in sorted(music_ids):
            vm = music_vecs[m]
            dot = sum(float(x) * float(y) for x, y in zip(va, vm))
            na = math.sqrt(sum(float(x) ** 2 for x in va))
            nm = math.sqrt(sum(float(y) ** 2 for y in vm))
            s = dot / (na * nm)
            if s > best + 1e-12:
                best_id, best = m, s
        out.append(best_id)
    return out


def random_corpus(rng, n_art, n_music, dim, ties=True):
    art_ids = [f"a{i:03d}" for i in range(n_art)]
    music_ids = [f"m{i:03d}" for i in rng.permutation(n_music)]
    music = rng.integers(-3, 4, size=(n_music, dim)).astype(np.float64)
    music[np.all(music == 0, axis=1), 0] = 1.0
    if ties and n_music > 2:
        # duplicate a few rows (scaled) so exact ties occur
        for _ in range(max(1, n_music // 10)):
            i, j = rng.integers(n_music, size=2)
            music[j] = music[i] * rng.integers(1, 4)
    art = rng.integers(-3, 4, size=(n_art, dim)).astype(np.float64)
    art[np.all(art == 0, axis=1), 0] = 1.0
    if ties:
        # some art vectors copy a music vector exactly
        for k in range(0, n_art, 3):
            art[k] = music[rng.integers(n_music)]
    return art_ids, music_ids, art, music


class TestCosine:
    def test_identity(self):
        assert cosine_similarity([3.0, 4.0], [3.0, 4.0]) == 1.0

    def test_orthogonal(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 2.0]) == 0.0

    def test_closed_form(self):
        assert cosine_similarity([1.0, 0.0], [1.0, 1.0]) == pytest.approx(1 / math.sqrt(2), rel=1e-15)

    def test_zero_norm(self):
        with pytest.raises(ValueError, match="zero-norm"):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_dim_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            cosine_similarity([1.0], [1.0, 0.0])


class TestMatching:
    def test_copy_beats_orthogonal(self):
        art = [ArtRecord("a", "", "some text")]
        music = [MusicRecord("m1", "", "one"), MusicRecord("m2", "", "two")]
        ae = EmbeddingTable(["a"], np.array([[0.6, 0.8]]))
        me = EmbeddingTable(["m1", "m2"], np.array([[0.8, -0.6], [0.6, 0.8]]))
        (t,) = match_triplets(art, music, ae, me)
        assert t.music_id == "m2" and t.similarity == pytest.approx(1.0, abs=1e-15)

    def test_identical_music_smaller_id_wins(self):
        art = [ArtRecord("a", "", "x")]
        music = [MusicRecord("zz", "", "c"), MusicRecord("bb", "", "c")]
        ae = EmbeddingTable(["a"], np.array([[1.0, 2.0]]))
        me = EmbeddingTable(["zz", "bb"], np.array([[2.0, 1.0], [2.0, 1.0]]))
        assert match_triplets(art, music, ae, me)[0].music_id == "bb"

    def test_single_pair_similarity(self):
        art = [ArtRecord("a", "", "x")]
        music = [MusicRecord("m", "", "y")]
        va, vm = np.array([[0.3, -1.2, 2.0]]), np.array([[1.0, 0.5, -0.25]])
        (t,) = match_triplets(art, music, EmbeddingTable(["a"], va), EmbeddingTable(["m"], vm))
        assert t.similarity == cosine_similarity(va[0], vm[0])

    def test_random_corpus_matches_exhaustive(self):
        rng = np.random.default_rng(0)
        art_ids, music_ids, art, music = random_corpus(rng, 100, 50, 16)
        ae, me = EmbeddingTable(art_ids, art), EmbeddingTable(music_ids, music)
        got = best_matches(art_ids, music_ids, ae, me)
        want = exhaustive_argmax(art_ids, music_ids, dict(zip(art_ids, art)), dict(zip(music_ids, music)))
        assert got == want

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_positive_rescaling_invariant(self, seed):
        rng = np.random.default_rng(seed)
        art_ids, music_ids, art, music = random_corpus(rng, 12, 9, 5, ties=False)
        base = best_matches(art_ids, music_ids, EmbeddingTable(art_ids, art), EmbeddingTable(music_ids, music))
        art2 = art * rng.uniform(0.1, 10, (len(art_ids), 1))
        music2 = music * rng.uniform(0.1, 10, (len(music_ids), 1))
        assert best_matches(art_ids, music_ids, EmbeddingTable(art_ids, art2),
                            EmbeddingTable(music_ids, music2)) == base

    def test_missing_embedding_lists_ids(self):
        art = [ArtRecord("a1", "", "x"), ArtRecord("a2", "", "y")]
        music = [MusicRecord("m", "", "c")]
        ae = EmbeddingTable(["a1"], np.ones((1, 2)))
        with pytest.raises(MissingEmbeddingError, match="a2"):
            match_triplets(art, music, ae, EmbeddingTable(["m"], np.ones((1, 2))))

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            match_triplets([], [MusicRecord("m", "", "c")], EmbeddingTable([], np.zeros((0, 2))),
                           EmbeddingTable(["m"], np.ones((1, 2))))

    def test_music_reuse_and_count(self):
        art = [ArtRecord(f"a{i}", "", "x") for i in range(5)]
        music = [MusicRecord("m0", "", "c"), MusicRecord("m1", "", "d")]
        ae = EmbeddingTable([a.id for a in art], np.tile([1.0, 0.1], (5, 1)))
        me = EmbeddingTable(["m0", "m1"], np.array([[1.0, 0.0], [0.0, 1.0]]))
        out = match_triplets(art, music, ae, me)
        assert len(out) == 5 and {t.music_id for t in out} == {"m0"}

    def test_hash_embeddings_match_shared_words(self):
        art = [ArtRecord("a", "", "a calm quiet lake at dawn")]
        music = [MusicRecord("m1", "", "loud electric guitar riff"),
                 MusicRecord("m2", "", "calm quiet ambient pads")]
        ae = EmbeddingTable(["a"], np.stack([hash_embed(art[0].commentary)]))
        me = EmbeddingTable(["m1", "m2"], np.stack([hash_embed(m.caption) for m in music]))
        assert match_triplets(art, music, ae, me)[0].music_id == "m2"

    def test_lexicon_fills_keywords(self):
        art = [ArtRecord("a", "", "The girls look happy and the ducks do as well", "contentment")]
        music = [MusicRecord("m", "", "A sad tune played slowly", ["Music"], ["eerie"])]
        ae, me = EmbeddingTable(["a"], np.ones((1, 2))), EmbeddingTable(["m"], np.ones((1, 2)))
        (t,) = match_triplets(art, music, ae, me, LEX)
        assert t.art_keywords == ["contentment", "happy", "well"]
        assert t.music_keywords == ["sad", "slowly", "eerie"]
        assert (t.art_polarity, t.music_polarity) == ("positive", "negative")


class TestKeywords:
    def test_worked_commentary_example(self):
        kw = extract_keywords("The girls look happy and the ducks do as well", LEX, "contentment")
        assert kw == ["contentment", "happy", "well"]

    def test_no_hits(self):
        assert extract_keywords("a table with chairs", LEX) == []

    def test_dedup(self):
        assert extract_keywords("sad, so sad", LEX) == ["sad"]

    def test_stopwords_removed(self):
        lex = SentimentLexicon.from_words(["the", "calm"], ["sad"], ["the"])
        assert extract_keywords("the calm", lex) == ["calm"]

    def test_lexicon_overlap_rejected(self):
        with pytest.raises(ValueError):
            SentimentLexicon.from_words(["good"], ["good"])

    def test_lexicon_file_comments(self, tmp_path):
        pos, neg = tmp_path / "p.txt", tmp_path / "n.txt"
        pos.write_text(";comment\n;another\nhappy\n\nCalm\n")
        neg.write_text("sad\n")
        lex = SentimentLexicon.load(pos, neg)
        assert lex.positive == frozenset({"happy", "calm"})


class TestPolarity:
    def test_positive(self):
        assert classify_polarity(["happy", "calm"], LEX) == "positive"

    def test_empty_is_neutral(self):
        assert classify_polarity([], LEX) == "neutral"

    def test_tie_is_neutral(self):
        assert classify_polarity(["happy", "sad"], LEX) == "neutral"

    def test_pleased_vs_slowly(self):
        assert classify_polarity(["pleased"], LEX) == "positive"
        assert classify_polarity(["slowly"], LEX) == "negative"

    def test_distribution_counts(self):
        records = [ArtRecord("1", "", "happy"), ArtRecord("2", "", "calm"),
                   ArtRecord("3", "", "sad"), ArtRecord("4", "", "a chair")]
        assert polarity_distribution(records, LEX) == (50, 25, 25)

    def test_all_neutral(self):
        records = [MusicRecord(str(i), "", "plain words") for i in range(3)]
        assert polarity_distribution(records, LEX) == (0, 100, 0)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.sampled_from(["positive", "neutral", "negative"]), min_size=1, max_size=200))
    def test_percentages_sum_to_100(self, labels):
        pct = polarity_percentages(labels)
        assert sum(pct) == 100
        for p, name in zip(pct, ["positive", "neutral", "negative"]):
            assert abs(p - 100 * labels.count(name) / len(labels)) < 1

    def test_empty_records(self):
        with pytest.raises(ValueError):
            polarity_distribution([], LEX)


class TestPrompt:
    def test_worked_sample(self):
        art = ArtRecord("s3", "", "Looks like a painting of some smug weirdo", "smug")
        music = MusicRecord("m", "", "caption", ["Music", "Electronic music", "House music", "Trance music"],
                            ["classical music", "contemporary", "theremin", "electronic sounding"])
        assert build_prompt(art, ["smug"], music) == (
            "Art Commentary: Looks like a painting of some smug weirdo. Painting Emotion: smug. "
            "Audio: Music,Electronic music,House music,Trance music. "
            "Audio keywords: classical music, contemporary, theremin, electronic sounding."
        )

    def test_empty_music_fields(self):
        p = build_prompt(ArtRecord("a", "", "X"), ["Y"], MusicRecord("m", "", "c"))
        assert p == "Art Commentary: X. Painting Emotion: Y. Audio: . Audio keywords: ."

    @settings(max_examples=100, deadline=None)
    @given(st.text(st.characters(codec="ascii", exclude_characters="."), min_size=1).filter(str.strip),
           st.lists(st.text(st.characters(codec="ascii", exclude_characters=".,"), min_size=1), max_size=3),
           st.lists(st.text(st.characters(codec="ascii", exclude_characters=".,"), min_size=1), max_size=3))
    def test_round_trip(self, commentary, labels, keywords):
        art = ArtRecord("a", "", commentary)
        music = MusicRecord("m", "", "c", labels, keywords)
        fields = parse_prompt(build_prompt(art, ["calm"], music))
        assert fields["commentary"] == commentary
        assert fields["audio"] == ",".join(labels)
        assert fields["audio_keywords"] == ", ".join(keywords)


class TestStatistics:
    def test_point_mass_histogram(self):
        ts = [TripletRecord("a", "m", 0.3) for _ in range(7)]
        bins = dict(similarity_histogram(ts, 0.1))
        assert len(bins) == 20
        assert bins[0.3] == 7 and sum(bins.values()) == 7

    def test_histogram_tally_oracle(self):
        ts = planted_triplets()
        hist = dict(similarity_histogram(ts, 0.1))
        want = {}
        for (_, _), (n, s) in PLANTED.items():
            # decimal bin start, computed by hand-rounding the planted value
            start = round(math.floor(round(s * 10, 6)) / 10, 1)
            want[start] = want.get(start, 0) + n
        assert {k: v for k, v in hist.items() if v} == want

    def test_one_goes_in_last_bin(self):
        hist = similarity_histogram([TripletRecord("a", "m", 1.0)], 0.25)
        assert hist[-1] == (0.75, 1)

    def test_single_cell_heatmap(self):
        ts = [TripletRecord("a", "m", 0.5, art_polarity="positive", music_polarity="positive")] * 3
        heat = polarity_heatmap(ts)
        assert heat[0][0] == 0.5
        assert all(heat[i][j] is None for i in range(3) for j in range(3) if (i, j) != (0, 0))

    def test_planted_heatmap_diagonal_dominant(self):
        heat = polarity_heatmap(planted_triplets())
        for i in range(3):
            off = [heat[i][j] for j in range(3) if j != i] + [heat[j][i] for j in range(3) if j != i]
            assert all(heat[i][i] > v for v in off)

    def test_keyword_similarity_preferred(self):
        t = TripletRecord("a", "m", 0.9, keyword_similarity=0.1)
        assert dict(similarity_histogram([t], 0.1))[0.1] == 1

    def test_keyword_similarity_mean_pooling(self):
        table = EmbeddingTable(["x", "y", "z"], np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
        assert keyword_similarity(["x", "y"], ["z"], table) == pytest.approx(1.0)
        assert keyword_similarity(["x"], ["unknown"], table) is None

    def test_report_values(self):
        ts = planted_triplets()
        rep = feeling_report(ts, 0.1)
        n = len(ts)
        diag = sum(PLANTED[(p, p)][0] for p in ("positive", "neutral", "negative"))
        below = sum(c for c, s in PLANTED.values() if s < 0.25)
        assert rep["count"] == n
        assert rep["same_polarity_pct"] == pytest.approx(100 * diag / n)
        assert rep["below_025_pct"] == pytest.approx(100 * below / n)
        assert sum(rep["polarity_distribution"]["painting"].values()) == 100

    def test_empty_input(self):
        with pytest.raises(ValueError):
            similarity_histogram([], 0.1)
        with pytest.raises(ValueError):
            polarity_heatmap([])


class TestManifests:
    def test_art_manifest(self, tmp_path):
        p = tmp_path / "art.jsonl"
        p.write_text('{"id": 7, "image": "x.jpg", "commentary": "calm", "emotion": "awe"}\n\n')
        (r,) = read_art_manifest(p)
        assert (r.id, r.image_path, r.emotion_label) == ("7", "x.jpg", "awe")

    def test_music_manifest_keyword_string(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text('{"id": "m", "caption": "c", "keywords": "warm, slow tempo", "set_labels": ["Music"]}\n')
        (r,) = read_music_manifest(p)
        assert r.caption_keywords == ["warm", "slow tempo"]

    def test_missing_field_names_line(self, tmp_path):
        p = tmp_path / "art.jsonl"
        p.write_text('{"id": "a", "commentary": "x"}\n{"id": "b"}\n')
        with pytest.raises(ValueError, match=":2: missing field 'commentary'"):
            read_art_manifest(p)

    def test_empty_commentary(self):
        with pytest.raises(ValueError):
            ArtRecord("a", "", "   ")
