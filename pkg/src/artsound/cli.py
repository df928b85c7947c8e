"""Command-line entry point.

Exit codes: 0 success, 1 input/data error, 2 usage or configuration error.
Every command writes into ``--out`` (a directory) with fixed file names.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import align, metrics
from .audio_io import read_wav, resample, write_wav
from .config import ConfigError, PipelineConfig, load_config
from .embeddings import MissingEmbeddingError, read_embeddings
from .melspec import (
    fix_length,
    griffin_lim_invert,
    load_mels,
    mel_spectrogram,
    normalize_unit,
    save_mels,
)
from .neuralnet import (
    FusionInput,
    TrainingDiverged,
    decode_mel,
    init_model,
    load_params,
    save_params,
    train,
)
from .rating import RatingParseError, validate_rating

log = logging.getLogger("artsound")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2
TABLE_COLUMNS = {"mcd": "MCD", "fad": "FAD", "lsd": "LSD", "cossim": "Cosine Similarity"}


class DataError(Exception):
    """Bad or inconsistent input data (exit code 1)."""


def _round(obj):
    if isinstance(obj, float):
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, floats at 9 significant digits."""
    return json.dumps(_round(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _out_dir(args, cfg: PipelineConfig) -> Path:
    out = Path(args.out or cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pick(value, fallback, name):
    v = value if value is not None else fallback
    if v is None:
        raise ConfigError(f"missing required input: --{name.replace('_', '-')} (or [paths].{name})")
    return v


# ---------------------------------------------------------------- melspec

def _wav_inputs(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix.lower() == ".wav")
    if not path.exists():
        raise DataError(f"input not found: {path}")
    return [path]


def cmd_melspec(args, cfg: PipelineConfig) -> int:
    inputs = _wav_inputs(Path(args.input))
    out = _out_dir(args, cfg)
    if not inputs:
        log.warning("no .wav files in %s", args.input)
        return EXIT_OK
    failed = 0
    for path in inputs:
        try:
            buf = resample(read_wav(path), cfg.mel.sample_rate_hz)
            raw = mel_spectrogram(buf, cfg.mel)
            spec = fix_length(normalize_unit(raw), cfg.mel.target_frames)
            target = out / (path.stem + ".mels")
            target.write_bytes(save_mels(spec))
        except (OSError, ValueError) as exc:
            failed += 1
            print(f"error: {path}: {exc}", file=sys.stderr)
            continue
        print(f"{path.name}: frames {raw.shape[0]} -> {spec.shape[0]}, "
              f"dB min {raw.values.min():.2f} max {raw.values.max():.2f} -> {target}")
    return EXIT_DATA if failed else EXIT_OK


# ---------------------------------------------------------------- align / stats

def _lexicon(args, cfg: PipelineConfig, required: bool):
    pos = args.positive or cfg.paths.positive_lexicon
    neg = args.negative or cfg.paths.negative_lexicon
    if not (pos and neg):
        if required:
            raise ConfigError("positive and negative lexicon files are required")
        return None
    return align.SentimentLexicon.load(pos, neg, args.stopwords or cfg.paths.stopwords)


def cmd_align(args, cfg: PipelineConfig) -> int:
    p = cfg.paths
    art = align.read_art_manifest(_pick(args.art, p.art_manifest, "art_manifest"))
    music = align.read_music_manifest(_pick(args.music, p.music_manifest, "music_manifest"))
    art_emb = read_embeddings(_pick(args.art_emb, p.art_embeddings, "art_embeddings"))
    music_emb = read_embeddings(_pick(args.music_emb, p.music_embeddings, "music_embeddings"))
    kw_path = args.keyword_emb or p.keyword_embeddings
    kw_emb = read_embeddings(kw_path) if kw_path else None
    lexicon = _lexicon(args, cfg, required=True)

    missing = art_emb.missing([a.id for a in art]) + music_emb.missing([m.id for m in music])
    if missing:
        raise MissingEmbeddingError(missing)
    triplets = align.match_triplets(art, music, art_emb, music_emb, lexicon, kw_emb)
    target = _out_dir(args, cfg) / "triplets.jsonl"
    with open(target, "w", encoding="utf-8") as fh:
        for t in triplets:
            fh.write(json.dumps(_round(t.to_dict()), sort_keys=True, ensure_ascii=False) + "\n")
    print(f"wrote {len(triplets)} triplets to {target}")
    return EXIT_OK


def cmd_stats(args, cfg: PipelineConfig) -> int:
    triplets = align.read_triplets(args.triplets)
    if not triplets:
        raise DataError(f"{args.triplets}: no triplets")
    lexicon = _lexicon(args, cfg, required=False)
    width = args.bin_width or cfg.stats.bin_width
    report = align.feeling_report(triplets, width, lexicon)
    target = _out_dir(args, cfg) / "stats.json"
    target.write_text(dumps(report), encoding="utf-8")
    print(f"wrote statistics for {len(triplets)} triplets to {target}")
    return EXIT_OK


# ---------------------------------------------------------------- train

def split_indices(n: int, seed: int, val_fraction: float, test_fraction: float):
    """Seeded shuffle into (train, validation, test) index lists."""
    order = np.random.default_rng(seed).permutation(n).tolist()
    n_val = int(round(n * val_fraction))
    n_test = int(round(n * test_fraction))
    if n - n_val - n_test < 1:
        n_val = n_test = 0
    return order[n_val + n_test:], order[:n_val], order[n_val:n_val + n_test]


def _fusion_input(image: np.ndarray, text: np.ndarray, cfg: PipelineConfig) -> FusionInput:
    dims = cfg.model_dims
    if image.shape[0] + text.shape[0] != dims.d_x or text.shape[0] != dims.d_r:
        raise DataError(
            f"embedding dims image={image.shape[0]}, text={text.shape[0]} do not fit the model "
            f"(d_x={dims.d_x} = image + text, d_r={dims.d_r} = text)"
        )
    return FusionInput.from_embeddings(image, text)


def _training_samples(triplets, image_emb, text_emb, mels_dir: Path, cfg: PipelineConfig):
    missing = image_emb.missing([t.art_id for t in triplets]) + text_emb.missing([t.art_id for t in triplets])
    if missing:
        raise MissingEmbeddingError(sorted(set(missing)))
    samples = []
    for t in triplets:
        path = mels_dir / f"{t.music_id}.mels"
        if not path.is_file():
            raise DataError(f"triplet {t.art_id}: no target spectrogram {path}")
        spec = load_mels(path.read_bytes(), cfg.mel)
        if spec.shape != (cfg.mel.target_frames, cfg.mel.n_mels):
            raise DataError(f"{path}: shape {spec.shape}, expected {(cfg.mel.target_frames, cfg.mel.n_mels)}")
        samples.append((_fusion_input(image_emb[t.art_id], text_emb[t.art_id], cfg), spec))
    return samples


def cmd_train(args, cfg: PipelineConfig) -> int:
    p = cfg.paths
    triplets = align.read_triplets(args.triplets)
    if not triplets:
        raise DataError(f"{args.triplets}: no triplets")
    image_emb = read_embeddings(_pick(args.image_emb, p.image_embeddings, "image_embeddings"))
    text_emb = read_embeddings(_pick(args.text_emb, p.text_embeddings, "text_embeddings"))
    mels_dir = Path(_pick(args.mels, p.mels_dir, "mels_dir"))
    samples = _training_samples(triplets, image_emb, text_emb, mels_dir, cfg)

    t = cfg.train
    tr, va, te = split_indices(len(samples), t.seed, t.validation_fraction, t.test_fraction)
    model = init_model(cfg.model_dims, seed=t.seed)
    result = train(model, [samples[i] for i in tr], cfg.train_config(),
                   validation=[samples[i] for i in va] or None)

    out = _out_dir(args, cfg)
    (out / "model.a2mp").write_bytes(save_params(result.model))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "train_loss", "val_loss"])
    for e in result.epochs:
        writer.writerow([e.epoch, f"{e.train_loss:.9g}", "" if e.val_loss is None else f"{e.val_loss:.9g}"])
    (out / "loss.csv").write_text(buf.getvalue(), encoding="utf-8")
    split = {name: [triplets[i].art_id for i in idx] for name, idx in
             (("train", tr), ("validation", va), ("test", te))}
    (out / "split.json").write_text(dumps(split), encoding="utf-8")
    print(f"trained {len(result.epochs)} epochs on {len(tr)} samples; "
          f"best epoch {result.best_epoch}; model -> {out / 'model.a2mp'}")
    return EXIT_OK


# ---------------------------------------------------------------- generate

def cmd_generate(args, cfg: PipelineConfig) -> int:
    model = load_params(Path(args.model).read_bytes())
    dims = model.dims
    image = read_embeddings(args.image_emb)[args.image_id]
    text = read_embeddings(args.text_emb)[args.text_id]
    if image.shape[0] + text.shape[0] != dims.d_x or text.shape[0] != dims.d_r:
        raise DataError(
            f"embedding dims image={image.shape[0]}, text={text.shape[0]} do not match model "
            f"d_x={dims.d_x}, d_r={dims.d_r}"
        )
    mel_cfg = replace(cfg.mel, n_mels=dims.n_mels, target_frames=dims.frames)
    spec = decode_mel(model, FusionInput.from_embeddings(image, text), mel_cfg)
    iterations = args.iterations or cfg.generate.iterations
    audio = griffin_lim_invert(spec, iterations, seed=cfg.train.seed)

    out = _out_dir(args, cfg)
    name = args.name or f"{args.image_id}"
    (out / f"{name}.mels").write_bytes(save_mels(spec))
    write_wav(audio, out / f"{name}.wav", "float32")
    print(f"generated {audio.duration_s:.2f} s of audio -> {out / (name + '.wav')}")
    return EXIT_OK


# ---------------------------------------------------------------- eval

def _mels_pairs(a: Path, b: Path):
    if a.is_dir() != b.is_dir():
        raise DataError("compare two .mels files or two directories")
    if a.is_file():
        return [(a.stem, a, b)]
    names_a = {p.name for p in a.glob("*.mels")}
    names_b = {p.name for p in b.glob("*.mels")}
    if names_a != names_b:
        raise DataError(f"unpaired spectrograms: {sorted(names_a ^ names_b)}")
    return [(Path(n).stem, a / n, b / n) for n in sorted(names_a)]


def evaluate_pair(metric: str, spec_a, spec_b, order: int = 13) -> float:
    if spec_a.shape != spec_b.shape:
        raise DataError(f"spectrogram shapes differ: {spec_a.shape} vs {spec_b.shape}")
    if metric == "mcd":
        d = min(order, spec_a.shape[1] - 1)
        return metrics.mcd(metrics.mel_cepstra(spec_a, d), metrics.mel_cepstra(spec_b, d))
    return metrics.lsd(spec_a, spec_b)


def cmd_eval(args, cfg: PipelineConfig) -> int:
    metric = args.metric
    a, b = Path(args.a), Path(args.b)
    report = {"metric": metric, "columns": {c: None for c in TABLE_COLUMNS.values()}}
    if metric in ("mcd", "lsd"):
        pairs = []
        for key, pa, pb in _mels_pairs(a, b):
            sa, sb = load_mels(pa.read_bytes()), load_mels(pb.read_bytes())
            pairs.append({"id": key, "value": evaluate_pair(metric, sa, sb, args.order)})
        mean = float(np.mean([p["value"] for p in pairs])) if pairs else None
    elif metric == "fad":
        ea, eb = read_embeddings(a), read_embeddings(b)
        if ea.dim != eb.dim:
            raise DataError(f"embedding dims differ: {ea.dim} vs {eb.dim}")
        mean = metrics.frechet_audio_distance(ea.vectors, eb.vectors)
        pairs = []
        report["counts"] = [len(ea), len(eb)]
    else:
        ea, eb = read_embeddings(a), read_embeddings(b)
        shared = [k for k in ea.ids if k in eb]
        if not shared:
            raise DataError("no shared ids between the two embedding files")
        pairs = [{"id": k, "value": metrics.embedding_cosine(ea[k], eb[k])} for k in sorted(shared)]
        mean = float(np.mean([p["value"] for p in pairs]))
    report["pairs"] = pairs
    report["mean"] = mean
    report["columns"][TABLE_COLUMNS[metric]] = mean
    target = _out_dir(args, cfg) / f"eval_{metric}.json"
    target.write_text(dumps(report), encoding="utf-8")
    print(f"{TABLE_COLUMNS[metric]}: {mean:.6g} -> {target}")
    return EXIT_OK


# ---------------------------------------------------------------- rate-validate

def cmd_rate_validate(args, cfg: PipelineConfig) -> int:
    path = Path(args.input)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    if not path.exists():
        raise DataError(f"input not found: {path}")
    report = {}
    for f in files:
        try:
            result = validate_rating(f.read_text(encoding="utf-8"))
        except RatingParseError as exc:
            report[str(f)] = [{"path": "$", "constraint": "valid JSON",
                               "found": f"line {exc.line}, column {exc.column}: {exc}"}]
            continue
        report[str(f)] = [] if not isinstance(result, list) else [v.to_dict() for v in result]
    print(dumps(report), end="")
    if args.out:
        (_out_dir(args, cfg) / "rating_report.json").write_text(dumps(report), encoding="utf-8")
    return EXIT_OK if all(not v for v in report.values()) else EXIT_DATA


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    def common(suppress: bool) -> argparse.ArgumentParser:
        p = argparse.ArgumentParser(add_help=False)
        default = argparse.SUPPRESS if suppress else None
        p.add_argument("--config", default=default, help="TOML config (default: $ARTSOUND_CONFIG)")
        p.add_argument("--seed", type=int, default=default, help="override [train].seed")
        p.add_argument("--out", default=default, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true", default=default)
        return p

    parser = argparse.ArgumentParser(prog="artsound", parents=[common(False)],
                                     description="Art/text conditioned Mel generation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    shared = [common(True)]

    p = sub.add_parser("melspec", parents=shared, help="WAV file/dir -> normalized MELS files")
    p.add_argument("input")
    p.set_defaults(func=cmd_melspec)

    def lexicon_args(p):
        p.add_argument("--positive", help="positive word list")
        p.add_argument("--negative", help="negative word list")
        p.add_argument("--stopwords", help="stopword list")

    p = sub.add_parser("align", parents=shared, help="match art and music records into triplets")
    p.add_argument("--art", help="art manifest (JSONL)")
    p.add_argument("--music", help="music manifest (JSONL)")
    p.add_argument("--art-emb", help="EMB1 commentary embeddings keyed by art id")
    p.add_argument("--music-emb", help="EMB1 caption embeddings keyed by music id")
    p.add_argument("--keyword-emb", help="EMB1 embeddings keyed by keyword (optional)")
    lexicon_args(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("stats", parents=shared, help="feeling-consistency statistics of triplets")
    p.add_argument("triplets")
    p.add_argument("--bin-width", type=float)
    lexicon_args(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", parents=shared, help="train the fusion + decoder model")
    p.add_argument("triplets")
    p.add_argument("--image-emb", help="EMB1 image embeddings keyed by art id")
    p.add_argument("--text-emb", help="EMB1 prompt embeddings keyed by art id")
    p.add_argument("--mels", help="directory of <music_id>.mels targets")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", parents=shared, help="predict a spectrogram and a waveform")
    p.add_argument("--model", required=True)
    p.add_argument("--image-emb", required=True)
    p.add_argument("--image-id", required=True)
    p.add_argument("--text-emb", required=True)
    p.add_argument("--text-id", required=True)
    p.add_argument("--iterations", type=int, help="Griffin-Lim iterations")
    p.add_argument("--name", help="output file stem (default: image id)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", parents=shared, help="MCD / LSD / FAD / cosine similarity")
    p.add_argument("metric", choices=sorted(TABLE_COLUMNS))
    p.add_argument("a", help="generated: .mels file/dir, or EMB1 file")
    p.add_argument("b", help="reference: .mels file/dir, or EMB1 file")
    p.add_argument("--order", type=int, default=13, help="cepstral order for MCD (capped at F-1)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rate-validate", parents=shared, help="check rating JSON files")
    p.add_argument("input", help="JSON file or directory of *.json")
    p.set_defaults(func=cmd_rate_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, MissingEmbeddingError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
