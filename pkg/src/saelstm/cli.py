"""Command-line interface.

Subcommands mirror the pipeline stages:

    preprocess   parse + split + fit encodings/stats, write manifest.json
    train-sae    pretrain the autoencoder, write a model bundle
    train-lstm   train the classifier inside an existing bundle
    encode       emit latent encodings for a data file as CSV
    evaluate     score a data file with a bundle, write report files
    pipeline     run everything end to end
    importance   print the encoder's feature ranking

Flags override config-file values; --seed sets the split/sae/lstm seeds at
once (a specific --*-seed flag still wins). The output directory may also
come from $SAELSTM_OUTPUT_DIR (precedence: flag, then env, then config).

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .dataflow import parse_csv
from .errors import (
    ConfigError,
    DataError,
    DomainError,
    FormatError,
    IntegrityError,
    NumericError,
    SchemaError,
)
from .lstm import build_classifier, train_classifier
from .pipeline import (
    OUTPUT_DIR_ENV,
    ModelBundle,
    PipelineConfig,
    apply_preprocessing,
    evaluate_only,
    importance_report,
    load_model,
    persist_model,
    preprocess,
    run_pipeline,
    split_raw,
    write_history,
    write_report_files,
)
from .sae import SAE_DIMS, build_sae, encode, train_sae


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--data", help="input CSV path")
    p.add_argument("--schema", help="schema JSON path")
    p.add_argument("--out", help="output directory")
    p.add_argument("--test-fraction", type=float, default=None)
    p.add_argument("--seed", type=int, default=None, help="set split, sae, and lstm seeds")
    p.add_argument("--split-seed", type=int, default=None)
    p.add_argument("--sae-seed", type=int, default=None)
    p.add_argument("--lstm-seed", type=int, default=None)
    p.add_argument("--sae-epochs", type=int, default=None)
    p.add_argument("--sae-batch", type=int, default=None)
    p.add_argument("--sae-lr", type=float, default=None)
    p.add_argument("--layerwise", action="store_true", default=None,
                   help="greedy layer-wise pretraining instead of end-to-end")
    p.add_argument("--lstm-epochs", type=int, default=None)
    p.add_argument("--lstm-batch", type=int, default=None)
    p.add_argument("--lstm-lr", type=float, default=None)
    p.add_argument("--clip-norm", type=float, default=None)
    p.add_argument("--fine-tune-encoder", action="store_true", default=None)
    p.add_argument("--lstm-depth", type=int, default=None)
    p.add_argument("--strict-vocab", action="store_true", default=None)
    p.add_argument("--drop-duplicates", action="store_true", default=None)


def resolve_config(args) -> PipelineConfig:
    """Config file values, overridden by flags, then the env output dir."""
    if args.config:
        config = PipelineConfig.from_json(args.config)
    else:
        if not args.data or not args.schema:
            raise ConfigError("--data and --schema are required without --config")
        config = PipelineConfig(data_path=args.data, schema_path=args.schema)
    if args.data:
        config.data_path = args.data
    if args.schema:
        config.schema_path = args.schema
    out = args.out or os.environ.get(OUTPUT_DIR_ENV)
    if out:
        config.output_dir = out
    if args.test_fraction is not None:
        config.test_fraction = args.test_fraction
    if args.seed is not None:
        config.split_seed = config.sae_seed = config.lstm_seed = args.seed
    for attr, flag in (
        ("split_seed", args.split_seed),
        ("sae_seed", args.sae_seed),
        ("lstm_seed", args.lstm_seed),
    ):
        if flag is not None:
            setattr(config, attr, flag)
    for attr, flag in (
        ("epochs", args.sae_epochs),
        ("batch_size", args.sae_batch),
        ("lr", args.sae_lr),
        ("layerwise", args.layerwise),
    ):
        if flag is not None:
            setattr(config.sae, attr, flag)
    for attr, flag in (
        ("epochs", args.lstm_epochs),
        ("batch_size", args.lstm_batch),
        ("lr", args.lstm_lr),
        ("clip_norm", args.clip_norm),
        ("fine_tune_encoder", args.fine_tune_encoder),
    ):
        if flag is not None:
            setattr(config.lstm, attr, flag)
    if args.lstm_depth is not None:
        config.lstm_depth = args.lstm_depth
    if args.strict_vocab is not None:
        config.strict_vocab = args.strict_vocab
    if args.drop_duplicates is not None:
        config.drop_duplicates = args.drop_duplicates
    return config


def _out_dir(config: PipelineConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_preprocess(args) -> int:
    config = resolve_config(args)
    config.validate()
    result = preprocess(config)
    out = _out_dir(config)
    (out / "manifest.json").write_text(
        json.dumps(result.manifest, indent=2) + "\n", encoding="utf-8"
    )
    counts = result.manifest["row_counts"]
    print(f"wrote {out / 'manifest.json'}")
    print(f"train rows {counts['train']} {counts['train_per_class']}, "
          f"test rows {counts['test']} {counts['test_per_class']}")
    return 0


def cmd_train_sae(args) -> int:
    config = resolve_config(args)
    config.validate()
    config.seed_config()
    result = preprocess(config)
    out = _out_dir(config)
    model = build_sae(seed=config.sae_seed)
    history = train_sae(model, result.train.features, config.sae)
    write_history(history, out / "sae_history.json")
    bundle = ModelBundle(
        schema=result.schema,
        vocab=result.vocab,
        stats=result.stats,
        sae_model=model,
        classifier=build_classifier(
            input_dim=SAE_DIMS[0],
            units=168,
            classes=len(result.schema.class_labels),
            seed=config.lstm_seed,
            depth=config.lstm_depth,
        ),
        strict_vocab=config.strict_vocab,
        split_seed=config.split_seed,
        test_fraction=config.test_fraction,
        config_fingerprint=config.fingerprint(),
    )
    persist_model(bundle, out / "model.saelstm")
    final = history.losses[-1] if history.losses else float("nan")
    print(f"wrote {out / 'model.saelstm'} (classifier untrained)")
    print(f"pretraining epochs {history.epochs_completed}, final loss {final:.6f}")
    return 0


def cmd_train_lstm(args) -> int:
    bundle = load_model(args.bundle)
    config = PipelineConfig(
        data_path=args.data,
        schema_path="-",  # schema travels inside the bundle
        output_dir=args.out or os.environ.get(OUTPUT_DIR_ENV) or str(Path(args.bundle).parent),
    )
    if args.lstm_epochs is not None:
        config.lstm.epochs = args.lstm_epochs
    if args.lstm_batch is not None:
        config.lstm.batch_size = args.lstm_batch
    if args.lstm_lr is not None:
        config.lstm.lr = args.lstm_lr
    if args.clip_norm is not None:
        config.lstm.clip_norm = args.clip_norm
    if args.fine_tune_encoder:
        config.lstm.fine_tune_encoder = True
    config.lstm.seed = args.lstm_seed if args.lstm_seed is not None else 42
    if not Path(args.data).is_file():
        raise ConfigError(f"data file not found: {args.data}")

    raw = parse_csv(args.data, bundle.schema)
    train_raw, _ = split_raw(raw, bundle.test_fraction, bundle.split_seed)
    table = apply_preprocessing(train_raw, bundle.vocab, bundle.stats, bundle.strict_vocab)
    if config.lstm.fine_tune_encoder:
        history = train_classifier(
            bundle.classifier, table.features, table.labels, config.lstm,
            encoder=bundle.sae_model,
        )
    else:
        history = train_classifier(
            bundle.classifier,
            encode(bundle.sae_model, table.features),
            table.labels,
            config.lstm,
        )
    out = _out_dir(config)
    write_history(history, out / "lstm_history.json")
    persist_model(bundle, args.bundle)
    final = history.losses[-1] if history.losses else float("nan")
    print(f"updated {args.bundle}")
    print(f"classifier epochs {history.epochs_completed}, final loss {final:.6f}")
    return 0


def cmd_encode(args) -> int:
    bundle = load_model(args.bundle)
    if not Path(args.data).is_file():
        raise ConfigError(f"data file not found: {args.data}")
    raw = parse_csv(args.data, bundle.schema)
    table = apply_preprocessing(raw, bundle.vocab, bundle.stats, bundle.strict_vocab)
    encoded = encode(bundle.sae_model, table.features)
    out_path = Path(args.out or "encodings.csv")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"e{i}" for i in range(encoded.shape[1])] + ["label"])
        for row, label in zip(encoded, table.labels):
            writer.writerow([f"{v:.17g}" for v in row] + [bundle.schema.class_labels[label]])
    print(f"wrote {out_path} ({encoded.shape[0]} rows)")
    return 0


def cmd_evaluate(args) -> int:
    bundle = load_model(args.bundle)
    report = evaluate_only(bundle, args.data)
    print(report.render_table())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        from datetime import datetime, timezone

        write_report_files(
            report,
            out,
            extras={
                "bundle": str(args.bundle),
                "data_path": str(args.data),
                "timestamp": datetime.now(timezone.utc).isoformat(),
            },
        )
        print(f"wrote {out / 'report.json'} and {out / 'confusion_matrix.csv'}")
    return 0


def cmd_pipeline(args) -> int:
    config = resolve_config(args)
    report = run_pipeline(config)
    print(report.render_table())
    print(f"artifacts in {config.output_dir}")
    return 0


def cmd_importance(args) -> int:
    bundle = load_model(args.bundle)
    ranked = importance_report(bundle, method=args.method, data_path=args.data)
    for name, score in ranked:
        print(f"{name:<24}{score:.6f}")
    if args.json:
        Path(args.json).write_text(
            json.dumps([{"feature": n, "score": s} for n, s in ranked], indent=2) + "\n",
            encoding="utf-8",
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saelstm",
        description="Autoencoder feature extraction + LSTM classification "
        "for zero-day threat detection on UGRansome-format records.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="fit and record the preprocessing stage")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("train-sae", help="pretrain the autoencoder, write a bundle")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_train_sae)

    p = sub.add_parser("train-lstm", help="train the classifier inside a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="directory for the training history")
    p.add_argument("--lstm-epochs", type=int, default=None)
    p.add_argument("--lstm-batch", type=int, default=None)
    p.add_argument("--lstm-lr", type=float, default=None)
    p.add_argument("--clip-norm", type=float, default=None)
    p.add_argument("--lstm-seed", type=int, default=None)
    p.add_argument("--fine-tune-encoder", action="store_true")
    p.set_defaults(fn=cmd_train_lstm)

    p = sub.add_parser("encode", help="write latent encodings for a data file")
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="output CSV path (default encodings.csv)")
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("evaluate", help="score a data file with a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="directory for report.json / confusion_matrix.csv")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("pipeline", help="run all stages end to end")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("importance", help="feature ranking from a bundle's encoder")
    p.add_argument("--bundle", required=True)
    p.add_argument("--method", choices=["weight", "activation"], default="weight")
    p.add_argument("--data", help="data CSV (required for --method activation)")
    p.add_argument("--json", help="also write the ranking as JSON")
    p.set_defaults(fn=cmd_importance)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, SchemaError, FormatError, IntegrityError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
