"""Weakly aligned art/music triplets and their feeling-consistency statistics.

Each artwork commentary is paired with the music caption whose text
embedding has the highest cosine similarity. Keywords come from a
sentiment lexicon; polarity is a simple positive/negative hit count.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .embeddings import EmbeddingTable, MissingEmbeddingError

POLARITIES = ("positive", "neutral", "negative")
# cosine values this close to the row maximum count as a tie
TIE_TOLERANCE = 1e-12

_WORD = re.compile(r"[a-z]+")
_PROMPT_HEADERS = ("Art Commentary: ", ". Painting Emotion: ", ". Audio: ", ". Audio keywords: ")


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for a zero-norm vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


@dataclass
class ArtRecord:
    id: str
    image_path: str
    commentary: str
    emotion_label: str = ""

    def __post_init__(self):
        if not self.commentary.strip():
            raise ValueError(f"art record {self.id}: empty commentary")


@dataclass
class MusicRecord:
    id: str
    audio_path: str
    caption: str
    set_labels: list[str] = field(default_factory=list)
    caption_keywords: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.caption.strip():
            raise ValueError(f"music record {self.id}: empty caption")


@dataclass
class TripletRecord:
    art_id: str
    music_id: str
    similarity: float
    composite_prompt: str = ""
    art_keywords: list[str] = field(default_factory=list)
    music_keywords: list[str] = field(default_factory=list)
    art_polarity: str = "neutral"
    music_polarity: str = "neutral"
    keyword_similarity: float | None = None

    def __post_init__(self):
        for p in (self.art_polarity, self.music_polarity):
            if p not in POLARITIES:
                raise ValueError(f"unknown polarity {p!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TripletRecord":
        return cls(**d)

    @property
    def stat_similarity(self) -> float:
        """Keyword-level similarity when known, else the matching similarity."""
        return self.similarity if self.keyword_similarity is None else self.keyword_similarity


@dataclass(frozen=True)
class SentimentLexicon:
    positive: frozenset
    negative: frozenset
    stopwords: frozenset = frozenset()

    def __post_init__(self):
        overlap = self.positive & self.negative
        if overlap:
            raise ValueError(f"words listed as both positive and negative: {sorted(overlap)[:10]}")

    @classmethod
    def from_words(cls, positive: Iterable[str], negative: Iterable[str],
                   stopwords: Iterable[str] = ()) -> "SentimentLexicon":
        norm = lambda words: frozenset(w.strip().lower() for w in words if w.strip())
        return cls(norm(positive), norm(negative), norm(stopwords))

    @classmethod
    def load(cls, positive_path, negative_path, stopwords_path=None) -> "SentimentLexicon":
        """One word per line; lines starting with ';' are comments (Opinion Lexicon style)."""
        def words(path):
            if path is None:
                return []
            text = Path(path).read_text(encoding="utf-8", errors="replace")
            return [w for w in text.splitlines() if w.strip() and not w.startswith(";")]
        return cls.from_words(words(positive_path), words(negative_path), words(stopwords_path))


def read_art_manifest(path) -> list[ArtRecord]:
    out = []
    for n, d in _jsonl(path):
        try:
            out.append(ArtRecord(str(d["id"]), d.get("image", ""), d["commentary"], d.get("emotion", "")))
        except KeyError as exc:
            raise ValueError(f"{path}:{n}: missing field {exc.args[0]!r}") from None
    return out


def read_music_manifest(path) -> list[MusicRecord]:
    out = []
    for n, d in _jsonl(path):
        try:
            out.append(MusicRecord(str(d["id"]), d.get("audio", ""), d["caption"],
                                   _as_list(d.get("set_labels", [])), _as_list(d.get("keywords", []))))
        except KeyError as exc:
            raise ValueError(f"{path}:{n}: missing field {exc.args[0]!r}") from None
    return out


def _as_list(v) -> list[str]:
    if isinstance(v, str):
        return [s.strip() for s in v.split(",") if s.strip()]
    return [str(s) for s in v]


def _jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    yield n, json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{n}: invalid JSON ({exc.msg})") from None


def read_triplets(path) -> list[TripletRecord]:
    return [TripletRecord.from_dict(d) for _, d in _jsonl(path)]


def extract_keywords(text: str, lexicon: SentimentLexicon, emotion_label: str = "") -> list[str]:
    """Lexicon hits in first-occurrence order, with the emotion label in front.

    Stands in for POS filtering: opinion-lexicon entries are almost always
    content words, so membership plus a stopword list is a close proxy.
    """
    sentiment = lexicon.positive | lexicon.negative
    out = []
    for tok in _WORD.findall(text.lower()):
        if tok in sentiment and tok not in lexicon.stopwords and tok not in out:
            out.append(tok)
    label = emotion_label.strip().lower()
    if label and label not in out:
        out.insert(0, label)
    return out


def classify_polarity(keywords: Sequence[str], lexicon: SentimentLexicon) -> str:
    pos = sum(1 for k in keywords if k.lower() in lexicon.positive)
    neg = sum(1 for k in keywords if k.lower() in lexicon.negative)
    if pos > neg:
        return "positive"
    if neg > pos:
        return "negative"
    return "neutral"


def art_keywords(art: ArtRecord, lexicon: SentimentLexicon) -> list[str]:
    return extract_keywords(art.commentary, lexicon, art.emotion_label)


def music_keywords(music: MusicRecord, lexicon: SentimentLexicon) -> list[str]:
    text = " ".join([music.caption, *music.caption_keywords])
    return extract_keywords(text, lexicon)


def build_prompt(art: ArtRecord, emotion_keywords: Sequence[str], music: MusicRecord) -> str:
    return (
        f"Art Commentary: {art.commentary}. "
        f"Painting Emotion: {', '.join(emotion_keywords)}. "
        f"Audio: {','.join(music.set_labels)}. "
        f"Audio keywords: {', '.join(music.caption_keywords)}."
    )


def parse_prompt(prompt: str) -> dict[str, str]:
    """Split a composite prompt back into its four raw fields."""
    if not (prompt.startswith(_PROMPT_HEADERS[0]) and prompt.endswith(".")):
        raise ValueError("not a composite prompt")
    body = prompt[len(_PROMPT_HEADERS[0]):-1]
    fields_ = []
    for header in _PROMPT_HEADERS[1:]:
        head, sep, body = body.partition(header)
        if not sep:
            raise ValueError(f"composite prompt lacks {header.strip('. ')!r}")
        fields_.append(head)
    fields_.append(body)
    return dict(zip(("commentary", "emotion", "audio", "audio_keywords"), fields_))


def _unit_rows(table: EmbeddingTable, keys: Sequence[str], side: str) -> np.ndarray:
    missing = table.missing(keys)
    if missing:
        raise MissingEmbeddingError(missing)
    m = np.stack([table[k] for k in keys]).astype(np.float64)
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0):
        bad = [keys[i] for i in np.flatnonzero(norms == 0)]
        raise ValueError(f"zero-norm {side} embeddings: {bad}")
    return m / norms[:, None]


def best_matches(art_ids: Sequence[str], music_ids: Sequence[str],
                 art_emb: EmbeddingTable, music_emb: EmbeddingTable) -> list[str]:
    """For every art id, the music id of maximal cosine (ties -> smallest id)."""
    if not art_ids or not music_ids:
        raise ValueError("both corpora must be non-empty")
    if art_emb.dim != music_emb.dim:
        raise ValueError(f"embedding dims differ: art {art_emb.dim}, music {music_emb.dim}")
    music_sorted = sorted(music_ids)
    A = _unit_rows(art_emb, art_ids, "art")
    M = _unit_rows(music_emb, music_sorted, "music")
    out = []
    for row in A:
        sims = M @ row
        # first index within tolerance of the max is the smallest id
        k = int(np.flatnonzero(sims >= sims.max() - TIE_TOLERANCE)[0])
        out.append(music_sorted[k])
    return out


def keyword_similarity(art_kw: Sequence[str], music_kw: Sequence[str],
                       keyword_emb: EmbeddingTable) -> float | None:
    """Cosine between the mean keyword vectors of the two sides, if both exist."""
    a = [keyword_emb[k] for k in art_kw if k in keyword_emb]
    m = [keyword_emb[k] for k in music_kw if k in keyword_emb]
    if not a or not m:
        return None
    va, vm = np.mean(a, axis=0), np.mean(m, axis=0)
    if not np.any(va) or not np.any(vm):
        return None
    return cosine_similarity(va, vm)


def match_triplets(art: Sequence[ArtRecord], music: Sequence[MusicRecord],
                   art_emb: EmbeddingTable, music_emb: EmbeddingTable,
                   lexicon: SentimentLexicon | None = None,
                   keyword_emb: EmbeddingTable | None = None) -> list[TripletRecord]:
    """One triplet per artwork; music entries may be reused.

    Without a lexicon the keyword fields stay empty and polarities neutral.
    """
    music_by_id = {m.id: m for m in music}
    chosen = best_matches([a.id for a in art], list(music_by_id), art_emb, music_emb)
    out = []
    for a, mid in zip(art, chosen):
        m = music_by_id[mid]
        a_kw = art_keywords(a, lexicon) if lexicon else []
        m_kw = music_keywords(m, lexicon) if lexicon else []
        out.append(TripletRecord(
            art_id=a.id,
            music_id=mid,
            similarity=cosine_similarity(art_emb[a.id], music_emb[mid]),
            composite_prompt=build_prompt(a, a_kw or ([a.emotion_label] if a.emotion_label else []), m),
            art_keywords=a_kw,
            music_keywords=m_kw,
            art_polarity=classify_polarity(a_kw, lexicon) if lexicon else "neutral",
            music_polarity=classify_polarity(m_kw, lexicon) if lexicon else "neutral",
            keyword_similarity=keyword_similarity(a_kw, m_kw, keyword_emb) if keyword_emb else None,
        ))
    return out


def _require(triplets) -> None:
    if not triplets:
        raise ValueError("no triplets given")


def histogram_bins(bin_width: float) -> int:
    if not 0 < bin_width <= 2:
        raise ValueError(f"bin width must be in (0, 2], got {bin_width}")
    return math.ceil(2.0 / bin_width - 1e-9)


def similarity_histogram(triplets: Sequence[TripletRecord], bin_width: float = 0.1):
    """Counts over fixed-width bins ``[-1 + k*w, -1 + (k+1)*w)`` covering [-1, 1].

    Returns every bin as ``(bin_start, count)``; 1.0 falls in the last bin.
    """
    _require(triplets)
    n_bins = histogram_bins(bin_width)
    counts = [0] * n_bins
    for t in triplets:
        # the epsilon keeps values such as 0.3 out of the bin below
        k = math.floor((t.stat_similarity + 1.0) / bin_width + 1e-9)
        counts[min(max(k, 0), n_bins - 1)] += 1
    return [(round(-1.0 + k * bin_width, 12), c) for k, c in enumerate(counts)]


def polarity_heatmap(triplets: Sequence[TripletRecord]) -> list[list[float | None]]:
    """Mean similarity per (art polarity, music polarity); ``None`` where empty.

    Rows and columns follow :data:`POLARITIES`.
    """
    _require(triplets)
    sums = np.zeros((3, 3))
    counts = np.zeros((3, 3), dtype=int)
    for t in triplets:
        i, j = POLARITIES.index(t.art_polarity), POLARITIES.index(t.music_polarity)
        sums[i, j] += t.stat_similarity
        counts[i, j] += 1
    return [[float(sums[i, j] / counts[i, j]) if counts[i, j] else None for j in range(3)]
            for i in range(3)]


def polarity_percentages(labels: Sequence[str]) -> tuple[int, int, int]:
    """Integer (positive, neutral, negative) percentages summing to exactly 100.

    Uses largest-remainder rounding; remainder ties go to the earlier class.
    """
    if not labels:
        raise ValueError("no polarity labels given")
    counts = [sum(1 for p in labels if p == name) for name in POLARITIES]
    if sum(counts) != len(labels):
        raise ValueError(f"unknown polarity labels in {sorted(set(labels) - set(POLARITIES))}")
    exact = [100 * c / len(labels) for c in counts]
    pct = [math.floor(e) for e in exact]
    order = sorted(range(3), key=lambda i: (-(exact[i] - pct[i]), i))
    for i in order[:100 - sum(pct)]:
        pct[i] += 1
    return tuple(pct)


def polarity_distribution(records, lexicon: SentimentLexicon) -> tuple[int, int, int]:
    """Polarity percentages for art or music records."""
    if not records:
        raise ValueError("no records given")
    labels = []
    for r in records:
        kw = art_keywords(r, lexicon) if isinstance(r, ArtRecord) else music_keywords(r, lexicon)
        labels.append(classify_polarity(kw, lexicon))
    return polarity_percentages(labels)


def same_polarity_pct(triplets: Sequence[TripletRecord]) -> float:
    _require(triplets)
    return 100.0 * sum(t.art_polarity == t.music_polarity for t in triplets) / len(triplets)


def below_threshold_pct(triplets: Sequence[TripletRecord], threshold: float = 0.25) -> float:
    _require(triplets)
    return 100.0 * sum(t.stat_similarity < threshold for t in triplets) / len(triplets)


def feeling_report(triplets: Sequence[TripletRecord], bin_width: float = 0.1,
                   lexicon: SentimentLexicon | None = None) -> dict:
    """All consistency statistics as plain JSON-ready data.

    With a lexicon, polarities are recomputed from the stored keywords.
    """
    _require(triplets)
    if lexicon is not None:
        triplets = [
            TripletRecord(**{**t.to_dict(),
                             "art_polarity": classify_polarity(t.art_keywords, lexicon),
                             "music_polarity": classify_polarity(t.music_keywords, lexicon)})
            for t in triplets
        ]
    heat = polarity_heatmap(triplets)
    return {
        "count": len(triplets),
        "histogram": {
            "bin_width": bin_width,
            "bins": [{"start": s, "count": c} for s, c in similarity_histogram(triplets, bin_width)],
        },
        "heatmap": {
            "labels": list(POLARITIES),
            "rows": "art_polarity",
            "columns": "music_polarity",
            "mean_similarity": heat,
        },
        "polarity_distribution": {
            "painting": dict(zip(POLARITIES, polarity_percentages([t.art_polarity for t in triplets]))),
            "audio": dict(zip(POLARITIES, polarity_percentages([t.music_polarity for t in triplets]))),
        },
        "same_polarity_pct": same_polarity_pct(triplets),
        "below_025_pct": below_threshold_pct(triplets, 0.25),
    }
