"""Operator surface: synthesis, training, cross-validation, scoring, export.

Exit codes: 0 success, 2 configuration error, 3 data-format error,
4 numerical failure. Progress goes to stderr; machine-readable output goes
only to files or stdout. Every command is reproducible from (config, seed).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import crossval as cv
from . import inconsistency as inc
from .config import apply_overrides, build_config, load_config
from .dataset import load_dataset, make_batches, save_dataset
from .errors import ConfigError, DataFormatError, NumericalError
from .fusion import DepressionModel, train_incremental
from .lexicon import Lexicon, score_text_sentiment
from .synthetic import generate_synthetic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _progress(message: str) -> None:
    print(message, file=sys.stderr)


def _resolve_config(args):
    document = {}
    if args.config:
        document = load_config(args.config, profile=None).to_dict()
        if args.profile:
            # profile flag wins over the file's profile field
            document["profile"] = args.profile
    elif args.profile:
        document["profile"] = args.profile
    else:
        document["profile"] = "desk"
    if args.seed is not None:
        document.setdefault("train", {})["seed"] = args.seed
        document.setdefault("synth", {})["seed"] = args.seed
    document = apply_overrides(document, args.set or [])
    profile = document.pop("profile")
    return build_config(document, profile)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument(
        "--profile", choices=("paper", "desk"), help="named profile (default: desk)"
    )
    parser.add_argument("--seed", type=int, help="override train and synth seeds")
    parser.add_argument(
        "--set",
        action="append",
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable)",
    )


def cmd_synth(args) -> int:
    cfg = _resolve_config(args)
    out = Path(args.out)
    _progress(f"synthesizing corpus (seed {cfg.synth.seed}) into {out}")
    records, summary = generate_synthetic(cfg.synth)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(records, out)
    oracle = {"config": cfg.to_dict()["synth"], "oracle": summary.to_dict()}
    (out / "oracle.json").write_text(
        json.dumps(oracle, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _progress(
        f"wrote {summary.n_segments} segments / {summary.n_subjects} subjects; "
        f"vote-oracle subject accuracy {summary.bayes_subject_accuracy:.4f}"
    )
    return EXIT_OK


def cmd_pretrain_atei(args) -> int:
    cfg = _resolve_config(args)
    if cfg.train.atei_mode == inc.OFF:
        raise ConfigError("pretrain-atei needs atei_mode != 'off'")
    records = load_dataset(args.data)
    _progress(f"pretraining consistency subnet on {len(records)} segments")
    model = DepressionModel(cfg, records[0].acoustic.dim, records[0].textual.dim)
    streams = np.random.SeedSequence(cfg.train.seed).spawn(2)
    batch_rng = np.random.default_rng(streams[0])
    dropout_rng = np.random.default_rng(streams[1])
    history = inc.pretrain_atei(
        lambda epoch: make_batches(records, cfg.train.batch_size, batch_rng),
        model.atei,
        cfg.encoder,
        cfg.atei,
        lr=cfg.train.lr,
        epochs=cfg.train.pretrain_epochs,
        dropout_rng=dropout_rng,
    )
    meta = ckpt.model_meta(cfg, records[0].acoustic.dim, records[0].textual.dim)
    ckpt.save_checkpoint(model.atei.parameters(), meta, args.out)
    print(json.dumps({"history": history}, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    records = load_dataset(args.data)
    model = None
    if args.atei_init:
        tensors, _ = ckpt.load_checkpoint(args.atei_init)
        model = DepressionModel(cfg, records[0].acoustic.dim, records[0].textual.dim)
        if model.atei is None:
            raise ConfigError("--atei-init given but atei_mode is 'off'")
        ckpt.load_into_parameters(model.atei.parameters(), tensors, args.atei_init)
        cfg = replace(cfg, train=replace(cfg.train, pretrain_epochs=0))
        _progress("warm-started consistency subnet; skipping pretraining phase")
    _progress(f"training on {len(records)} segments (seed {cfg.train.seed})")
    model, history = train_incremental(records, cfg, model=model)
    meta = ckpt.model_meta(cfg, model.input_dim_a, model.input_dim_t)
    ckpt.save_checkpoint(model.parameters(), meta, args.out)
    print(json.dumps({"history": [h.to_dict() for h in history]}, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_cv(args) -> int:
    cfg = _resolve_config(args)
    records = load_dataset(args.data)
    _progress(
        f"cross-validating: k={args.k}, parallel_folds={args.parallel_folds}, "
        f"{len(records)} segments"
    )
    report = cv.run_cross_validation(
        records, cfg, k=args.k, parallel_folds=args.parallel_folds
    )
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    agg = report.aggregate()
    _progress(
        f"done: subject accuracy {agg['subject']['accuracy']:.4f}, "
        f"segment accuracy {agg['segment']['accuracy']:.4f}"
    )
    return EXIT_OK


def cmd_score_text(args) -> int:
    lexicon = Lexicon.load(args.lexicon)
    tokens_path = Path(args.tokens)
    if not tokens_path.exists():
        raise DataFormatError(f"tokens file not found: {tokens_path}")
    labels = [
        score_text_sentiment(line.split(), lexicon)
        for line in tokens_path.read_text(encoding="utf-8").splitlines()
    ]
    output = "\n".join(labels) + ("\n" if labels else "")
    if args.out:
        Path(args.out).write_text(output, encoding="utf-8")
    else:
        sys.stdout.write(output)
    return EXIT_OK


def cmd_export_embeddings(args) -> int:
    model = ckpt.restore_model(args.checkpoint)
    records = load_dataset(args.data)
    _progress(f"exporting layer {args.layer!r} for {len(records)} segments")
    rows = cv.export_embeddings(model, records, args.layer, model.cfg.train.batch_size)
    cv.write_embeddings(rows, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emogap",
        description="Cross-modal emotion-mismatch depression screening pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with its oracle")
    _add_common(p)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pretrain-atei", help="pretrain the consistency subnet")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_pretrain_atei)

    p = sub.add_parser("train", help="full incremental training")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--atei-init", help="warm-start subnet checkpoint; skips pretraining")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="speaker-disjoint cross-validation")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--parallel-folds", type=int, default=1)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("score-text", help="lexicon sentiment labels for token lines")
    p.add_argument("--lexicon", required=True, help="TSV word<TAB>score file")
    p.add_argument("--tokens", required=True, help="one whitespace-tokenized line per segment")
    p.add_argument("--out", help="write labels here instead of stdout")
    p.set_defaults(func=cmd_score_text)

    p = sub.add_parser("export-embeddings", help="JSON-lines embedding export")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--layer", default="head_hidden", choices=cv.EXPORT_LAYERS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_embeddings)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _progress(f"config error: {exc}")
        return EXIT_CONFIG
    except DataFormatError as exc:
        _progress(f"data error: {exc}")
        return EXIT_DATA
    except NumericalError as exc:
        _progress(f"numerical error: {exc}")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
