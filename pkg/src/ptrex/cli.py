"""Command-line entry point: ``ptrex <command> [options]``.

Exit codes: 0 success (including empty results), 1 processing error,
2 usage or input error. Relative ``--out`` paths resolve under
``$PTREX_OUTPUT_ROOT`` when that variable is set.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from collections import Counter
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .checkpoint import CheckpointError, VocabularyMismatch, load_checkpoint, save_checkpoint
from .core import RELATIONS, AnnotatedSentence, Sentence
from .corpus import DEFAULT_INDICATORS, DEFAULT_WINDOW, build_corpus
from .evaluation import evaluate, five_run_protocol
from .formats import (
    article_sentences,
    emit_sent_pointer,
    emit_structured,
    read_article,
    read_battery_records,
    read_structured,
    to_structured,
)
from .splits import five_fold_splits, nested_subsets, sample_k_shot, split_dataset
from .trainer import TrainConfig, TrainingDiverged, fit

log = logging.getLogger("ptrex")

OUTPUT_ROOT_ENV = "PTREX_OUTPUT_ROOT"


class UsageError(Exception):
    """Bad flags or unusable inputs (exit 2)."""


# ---------------------------------------------------------------------------
# helpers


def out_dir(path: Optional[str], default: str) -> Path:
    p = Path(path or default)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    p.mkdir(parents=True, exist_ok=True)
    return p


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def input_hashes(*paths) -> dict[str, str]:
    out = {}
    for p in paths:
        if p is None:
            continue
        p = Path(p)
        if p.is_dir():
            for f in sorted(p.glob("*.json")):
                out[str(f)] = file_hash(f)
        else:
            out[str(p)] = file_hash(p)
    return out


def write_manifest(out: Path, command: str, config: dict, inputs: dict, seed, outputs: Sequence, started: float, **extra) -> Path:
    manifest = {
        "command": command,
        "config": config,
        "inputs": inputs,
        "seed": seed,
        "outputs": [str(o) for o in outputs],
        **extra,
        "timings": {"started": started, "seconds": time.time() - started},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def require_file(path: Optional[str], what: str) -> Path:
    if not path:
        raise UsageError(f"{what} is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} {p} does not exist")
    return p


def load_corpus(path: str):
    p = require_file(path, "corpus")
    try:
        return read_structured(p)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def resolve_config(args) -> TrainConfig:
    """Defaults, then ``--config FILE``, then explicit flags; all problems reported together."""
    values = TrainConfig().to_dict()
    errors = []
    if getattr(args, "config", None):
        p = Path(args.config)
        if not p.is_file():
            raise UsageError(f"config file {p} does not exist")
        data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        if not isinstance(data, dict):
            raise UsageError(f"config file {p} must hold key-value pairs")
        unknown = sorted(set(data) - set(values))
        if unknown:
            errors.append(f"unknown config keys: {', '.join(unknown)}")
        values.update({k: v for k, v in data.items() if k in values})
    for name in values:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    cfg = TrainConfig(**values)
    errors += cfg.validate()
    if errors:
        raise UsageError("invalid configuration:\n  " + "\n  ".join(errors))
    return cfg


def add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML/JSON key-value file overriding defaults")
    p.add_argument("--decoder", choices=["pointer", "word"])
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--epochs", dest="num_epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-teacher-forcing", dest="teacher_forcing", action="store_const", const=False)


def _write_split(split, out: Path) -> list[Path]:
    paths = []
    for name in ("train", "dev", "test"):
        paths.append(emit_structured(getattr(split, name), out / f"{name}.jsonl"))
    return paths


# ---------------------------------------------------------------------------
# commands


def cmd_build_corpus(args) -> int:
    started = time.time()
    records_path = require_file(args.records, "--records")
    art_dir = Path(args.articles)
    if not art_dir.is_dir():
        raise UsageError(f"--articles {art_dir} is not a directory")
    indicators = DEFAULT_INDICATORS
    if args.indicators:
        ind_path = require_file(args.indicators, "--indicators")
        data = yaml.safe_load(ind_path.read_text(encoding="utf-8"))
        if not isinstance(data, dict) or set(data) - set(RELATIONS):
            raise UsageError(f"{ind_path} must map relation names to lists of indicator phrases")
        indicators = {**DEFAULT_INDICATORS, **{k: tuple(v) for k, v in data.items()}}
    rejected: Counter = Counter()
    try:
        records = read_battery_records(records_path, rejected)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read records {records_path}: {exc}") from exc
    files = sorted(art_dir.glob("*.json"))
    if not files:
        log.warning("no article files in %s; the corpus will be empty", art_dir)
    articles = []
    for f in files:
        try:
            articles.append(article_sentences(read_article(f)))
        except ValueError as exc:
            rejected["unparseable_article"] += 1
            log.warning("%s", exc)
    corpus, stats = build_corpus(records, articles, indicators, args.window)
    stats.rejected.update(rejected)
    out = out_dir(args.out, "corpus")
    outputs = [emit_structured(corpus, out / "corpus.jsonl"), *emit_sent_pointer(corpus, out / "corpus")]
    stats_path = out / "stats.json"
    stats_path.write_text(json.dumps(stats.to_dict(), indent=2) + "\n", encoding="utf-8")
    outputs.append(stats_path)
    print(json.dumps(stats.to_dict(), indent=2))
    write_manifest(
        out, "build-corpus", {"window": args.window, "indicators": {k: list(v) for k, v in indicators.items()}},
        input_hashes(records_path, art_dir), None, outputs, started, stats=stats.to_dict(),
    )
    return 0


def cmd_split(args) -> int:
    started = time.time()
    corpus = load_corpus(args.corpus)
    out = out_dir(args.out, "split")
    try:
        if args.folds:
            splits = five_fold_splits(corpus, seed=args.seed, n_folds=args.folds)
        else:
            splits = [split_dataset(corpus, seed=args.seed)]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    outputs = []
    for s in splits:
        d = out / f"fold{s.fold}" if s.fold is not None else out
        d.mkdir(parents=True, exist_ok=True)
        outputs += _write_split(s, d)
    write_manifest(out, "split", {"folds": args.folds}, input_hashes(args.corpus), args.seed, outputs, started,
                   splits=[s.manifest() for s in splits])
    return 0


def cmd_kshot(args) -> int:
    started = time.time()
    train = load_corpus(args.corpus)
    try:
        picked = sample_k_shot(train, args.k, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = out_dir(args.out, "kshot")
    path = emit_structured(picked, out / f"kshot{args.k}.jsonl")
    n = sum(len(a.triplets) for a in picked)
    print(f"{args.k}-shot: {n} triplets in {len(picked)} sentences")
    write_manifest(out, "kshot", {"k": args.k}, input_hashes(args.corpus), args.seed, [path], started,
                   n_triplets=n, sentence_ids=[a.sentence.id for a in picked])
    return 0


def cmd_train(args) -> int:
    started = time.time()
    cfg = resolve_config(args)
    if args.echo_config:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return 0
    corpus = load_corpus(args.corpus)
    try:
        split = split_dataset(corpus, seed=cfg.seed, fold=args.fold)
        train = split.train
        if args.fraction is not None:
            train = nested_subsets(split.train, [args.fraction], len(corpus), seed=cfg.seed)[args.fraction]
        if args.k_shot is not None:
            train = sample_k_shot(train, args.k_shot, seed=cfg.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = out_dir(args.out, "train")
    log_path = out / "train_log.jsonl"
    ckpt = out / "model.pt"
    with log_path.open("w", encoding="utf-8") as fh:

        def on_epoch(entry):
            fh.write(json.dumps(entry) + "\n")
            fh.flush()

        try:
            res = fit(train, split.dev, cfg, on_epoch=on_epoch)
        except TrainingDiverged as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    save_checkpoint(res.model, ckpt, {"train_config": cfg.to_dict(), "epoch": res.best_epoch})
    test_report = evaluate(res.model, split.test)
    test_report.write_records(out / "test_report.jsonl")
    print(test_report.table())
    write_manifest(
        out, "train", cfg.to_dict(), input_hashes(args.corpus), cfg.seed,
        [ckpt, log_path, out / "test_report.jsonl"], started,
        split=split.manifest(), train_size=len(train), fraction=args.fraction, k_shot=args.k_shot,
        vocab_hash=res.model.vocab.content_hash(), decoder=res.model.kind, best_epoch=res.best_epoch,
        epochs=[{k: v for k, v in e.items() if k != "seconds"} for e in res.log],
    )
    return 0


def cmd_evaluate(args) -> int:
    started = time.time()
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        print(f"error: checkpoint {ckpt} does not exist", file=sys.stderr)
        return 2
    try:
        model = load_checkpoint(ckpt, expected_vocab_hash=args.vocab_hash)
    except VocabularyMismatch as exc:
        raise UsageError(str(exc)) from exc
    data = load_corpus(args.corpus)
    out = out_dir(args.out, "evaluate")
    extra = {"vocab_hash": model.vocab.content_hash(), "decoder": model.kind}
    if args.folds:
        stored = (getattr(model, "checkpoint_extra", {}) or {}).get("train_config") or {}
        cfg = TrainConfig.from_dict({**stored, **({"seed": args.seed} if args.seed is not None else {})})

        def factory(split, config):
            return fit(split.train, split.dev, config).model

        try:
            report = five_run_protocol(data, factory, cfg, seed=cfg.seed, n_folds=args.folds)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        extra["folds"] = report.meta["folds"]
        seed = cfg.seed
    else:
        report = evaluate(model, data)
        seed = None
    rec_path = out / "report.jsonl"
    report.write_records(rec_path)
    table_path = out / "report.txt"
    table_path.write_text(report.table() + "\n", encoding="utf-8")
    print(report.table())
    write_manifest(out, "evaluate", {"folds": args.folds}, input_hashes(ckpt, args.corpus), seed,
                   [rec_path, table_path], started, **extra)
    return 0


def cmd_extract(args) -> int:
    started = time.time()
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        print(f"error: checkpoint {ckpt} does not exist", file=sys.stderr)
        return 2
    article_path = require_file(args.article, "--article")
    try:
        texts = article_sentences(read_article(article_path))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    model = load_checkpoint(ckpt)
    sentences = []
    for text in texts:
        try:
            sentences.append(Sentence.from_text(text, id=len(sentences), doc_id=0))
        except ValueError:
            continue
    preds = model.predict(sentences) if sentences else []
    out = out_dir(args.out, "extract")
    lines = []
    records = []
    for s, trips in zip(sentences, preds):
        if not trips:
            continue
        ann = AnnotatedSentence(s, tuple(trips))
        records.append(to_structured(ann))
        lines.append(f"# {s.id}: {s.raw_text}")
        lines.extend(t.render() for t in ann.triplets)
    txt_path = out / "triplets.txt"
    txt_path.write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    rec_path = out / "triplets.jsonl"
    rec_path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records), encoding="utf-8")
    print("\n".join(lines) if lines else "no triplets found")
    write_manifest(out, "extract", {}, input_hashes(ckpt, article_path), None, [txt_path, rec_path], started,
                   sentences=len(sentences), triplets=sum(r["numTriples"] for r in records))
    return 0


def cmd_sweep(args) -> int:
    started = time.time()
    cfg = resolve_config(args)
    corpus = load_corpus(args.corpus)
    try:
        fractions = [float(f) for f in args.fractions.split(",")]
        split = split_dataset(corpus, seed=cfg.seed)
        subsets = nested_subsets(split.train, fractions, len(corpus), seed=cfg.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = out_dir(args.out, "sweep")
    rows = {}
    outputs = []
    for f in fractions:
        res = fit(subsets[f], split.dev, cfg)
        rep = evaluate(res.model, split.test)
        p = out / f"report_{f}.jsonl"
        rep.write_records(p)
        outputs.append(p)
        rows[str(f)] = {"train_size": len(subsets[f]), "macro_f1": rep.macro.f1, "weighted_f1": rep.weighted.f1}
        print(f"fraction {f}: {len(subsets[f])} sentences, macro F1 {rep.macro.f1:.3f}, weighted F1 {rep.weighted.f1:.3f}")
    write_manifest(out, "sweep", cfg.to_dict(), input_hashes(args.corpus), cfg.seed, outputs, started,
                   split=split.manifest(), results=rows)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ptrex", description="Battery-materials triplet extraction")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-corpus", help="distantly supervise article sentences against battery records")
    p.add_argument("--records", required=True)
    p.add_argument("--articles", required=True, help="directory of parsed-article JSON files")
    p.add_argument("--out")
    p.add_argument("--indicators", help="YAML/JSON map: relation -> indicator phrases")
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.set_defaults(func=cmd_build_corpus)

    p = sub.add_parser("split", help="train/dev/test split, or K disjoint test folds")
    p.add_argument("--corpus", "--in", dest="corpus", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("kshot", help="sample k triplets per relation")
    p.add_argument("--corpus", "--in", dest="corpus", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_kshot)

    p = sub.add_parser("train", help="train a pointer or word decoder")
    p.add_argument("--corpus", required=False)
    p.add_argument("--out")
    p.add_argument("--fraction", type=float, help="fraction of the full dataset to train on")
    p.add_argument("--k-shot", dest="k_shot", type=int)
    p.add_argument("--fold", type=int, help="use the fold-th of 5 disjoint test folds")
    p.add_argument("--echo-config", action="store_true", help="print the resolved config and exit")
    add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint, or run the K-fold protocol")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", "--test", dest="corpus", required=True)
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--vocab-hash", help="fail unless the checkpoint vocabulary has this hash")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("extract", help="extract triplets from a parsed article")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--article", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("sweep", help="train on nested fractions of the training split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--fractions", default="0.1,0.3,0.5,0.7")
    p.add_argument("--out")
    add_train_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # report, do not dump a traceback at users
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
