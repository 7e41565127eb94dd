"""End-to-end orchestration: preprocess, pretrain, encode, classify, evaluate.

Stages run in a fixed order with frozen-encoder classification by default;
every stage is seeded so two runs with the same config produce bit-identical
weights and metrics. Artifacts land in the output directory:

    manifest.json          preprocessing record (schema, vocab, stats, split)
    model.saelstm          binary model bundle (see persist_model)
    sae_history.json       per-epoch pretraining losses
    lstm_history.json      per-epoch classifier losses
    report.json            metrics report
    confusion_matrix.csv   rows = true class, columns = predicted

The bundle format is self-describing: magic "SAELSTM1", a little-endian
uint32 format version, a uint64-length-prefixed JSON section (schema, vocab,
stats, model dims, named block list), then each block's float64 row-major
payload in declared order.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__ as _package_version
from .dataflow import (
    ExampleTable,
    FeatureSchema,
    NormStats,
    RawTable,
    VocabMap,
    drop_duplicate_rows,
    encode_categoricals,
    minmax_normalize,
    parse_csv,
    stratified_indices,
    take_rows,
)
from .errors import (
    ConfigError,
    ConsistencyError,
    FormatError,
    IntegrityError,
    SaeLstmError,
)
from .lstm import (
    GATES,
    LSTMCell,
    LSTMClassifier,
    LSTMTrainConfig,
    build_classifier,
    predict,
    train_classifier,
)
from .metrics import MetricsReport, build_report
from .numerics import DenseLayer
from .sae import (
    SAE_DIMS,
    SAEModel,
    SAETrainConfig,
    build_sae,
    encode,
    feature_importance,
    train_sae,
)

MAGIC = b"SAELSTM1"
BUNDLE_VERSION = 1
MANIFEST_VERSION = 1
OUTPUT_DIR_ENV = "SAELSTM_OUTPUT_DIR"


@dataclass
class PipelineConfig:
    """Everything one run needs; mirrors the JSON config file layout."""

    data_path: str
    schema_path: str
    output_dir: str = "runs/latest"
    test_fraction: float = 0.2
    split_seed: int = 42
    sae_seed: int = 42
    lstm_seed: int = 42
    sae: SAETrainConfig = field(default_factory=SAETrainConfig)
    lstm: LSTMTrainConfig = field(default_factory=LSTMTrainConfig)
    lstm_depth: int = 1
    strict_vocab: bool = False
    drop_duplicates: bool = False

    def validate(self) -> None:
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must be in (0, 1), got {self.test_fraction}")
        for name, cfg in (("sae", self.sae), ("lstm", self.lstm)):
            if cfg.epochs < 0:
                raise ConfigError(f"{name}.epochs must be >= 0")
            if cfg.batch_size < 1:
                raise ConfigError(f"{name}.batch_size must be >= 1")
            if cfg.lr <= 0:
                raise ConfigError(f"{name}.lr must be positive")
        if self.lstm_depth < 1:
            raise ConfigError("lstm_depth must be >= 1")
        if not Path(self.data_path).is_file():
            raise ConfigError(f"data file not found: {self.data_path}")
        if not Path(self.schema_path).is_file():
            raise ConfigError(f"schema file not found: {self.schema_path}")

    def to_dict(self) -> dict:
        return {
            "data_path": str(self.data_path),
            "schema_path": str(self.schema_path),
            "output_dir": str(self.output_dir),
            "test_fraction": self.test_fraction,
            "seeds": {
                "split": self.split_seed,
                "sae": self.sae_seed,
                "lstm": self.lstm_seed,
            },
            "sae": {
                "epochs": self.sae.epochs,
                "batch_size": self.sae.batch_size,
                "lr": self.sae.lr,
                "layerwise": self.sae.layerwise,
            },
            "lstm": {
                "epochs": self.lstm.epochs,
                "batch_size": self.lstm.batch_size,
                "lr": self.lstm.lr,
                "clip_norm": self.lstm.clip_norm,
                "fine_tune_encoder": self.lstm.fine_tune_encoder,
                "depth": self.lstm_depth,
            },
            "strict_vocab": self.strict_vocab,
            "drop_duplicates": self.drop_duplicates,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        try:
            seeds = d.get("seeds", {})
            sae_d = d.get("sae", {})
            lstm_d = d.get("lstm", {})
            config = cls(
                data_path=d["data_path"],
                schema_path=d["schema_path"],
                output_dir=d.get("output_dir", "runs/latest"),
                test_fraction=d.get("test_fraction", 0.2),
                split_seed=seeds.get("split", 42),
                sae_seed=seeds.get("sae", 42),
                lstm_seed=seeds.get("lstm", 42),
                sae=SAETrainConfig(
                    epochs=sae_d.get("epochs", 50),
                    batch_size=sae_d.get("batch_size", 32),
                    lr=sae_d.get("lr", 0.001),
                    layerwise=sae_d.get("layerwise", False),
                ),
                lstm=LSTMTrainConfig(
                    epochs=lstm_d.get("epochs", 400),
                    batch_size=lstm_d.get("batch_size", 32),
                    lr=lstm_d.get("lr", 0.001),
                    clip_norm=lstm_d.get("clip_norm", 5.0),
                    fine_tune_encoder=lstm_d.get("fine_tune_encoder", False),
                ),
                lstm_depth=lstm_d.get("depth", 1),
                strict_vocab=d.get("strict_vocab", False),
                drop_duplicates=d.get("drop_duplicates", False),
            )
        except KeyError as exc:
            raise ConfigError(f"config missing key {exc}") from None
        return config

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.from_dict(doc)

    def fingerprint(self) -> str:
        """Digest over everything that affects the trained artifact.

        output_dir is excluded: it changes where results land, not what
        they are, so re-running the same experiment elsewhere fingerprints
        (and serializes) identically.
        """
        d = self.to_dict()
        d.pop("output_dir")
        canon = json.dumps(d, sort_keys=True).encode("utf-8")
        return hashlib.sha256(canon).hexdigest()

    def seed_config(self) -> "PipelineConfig":
        """Training configs with the pipeline-level seeds folded in."""
        self.sae.seed = self.sae_seed
        self.lstm.seed = self.lstm_seed
        return self


@dataclass
class PreprocessResult:
    schema: FeatureSchema
    vocab: VocabMap
    stats: NormStats
    train: ExampleTable
    test: ExampleTable
    manifest: dict


@dataclass
class ModelBundle:
    """Models plus every fitted artifact inference needs."""

    schema: FeatureSchema
    vocab: VocabMap
    stats: NormStats
    sae_model: SAEModel
    classifier: LSTMClassifier
    strict_vocab: bool = False
    split_seed: int = 42
    test_fraction: float = 0.2
    config_fingerprint: str = ""


def split_raw(raw: RawTable, test_fraction: float, seed: int) -> tuple[RawTable, RawTable]:
    """Stratified raw-row split, stratifying on the target labels."""
    labels = np.array([raw.schema.label_index(t) for t in raw.target], dtype=np.int64)
    train_idx, test_idx = stratified_indices(labels, test_fraction, seed)
    return take_rows(raw, train_idx), take_rows(raw, test_idx)


def preprocess(config: PipelineConfig) -> PreprocessResult:
    """Parse, split, then fit vocab and normalization on the train rows only."""
    schema = FeatureSchema.from_json(config.schema_path)
    raw = parse_csv(config.data_path, schema)
    if config.drop_duplicates:
        raw = drop_duplicate_rows(raw)
    train_raw, test_raw = split_raw(raw, config.test_fraction, config.split_seed)
    train_coded, vocab = encode_categoricals(train_raw)
    test_coded, _ = encode_categoricals(test_raw, vocab=vocab, strict=config.strict_vocab)
    train_norm, stats = minmax_normalize(
        train_coded.features, feature_names=schema.feature_columns
    )
    test_norm, _ = minmax_normalize(test_coded.features, stats=stats)
    train = ExampleTable(features=train_norm, labels=train_coded.labels)
    test = ExampleTable(features=test_norm, labels=test_coded.labels)
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "artifact_version": _package_version,
        "data_path": str(config.data_path),
        "schema": schema.to_dict(),
        "vocab": vocab.to_dict(),
        "norm_stats": stats.to_dict(),
        "split": {"seed": config.split_seed, "test_fraction": config.test_fraction},
        "strict_vocab": config.strict_vocab,
        "drop_duplicates": config.drop_duplicates,
        "row_counts": {
            "train": train.n_rows,
            "test": test.n_rows,
            "train_per_class": np.bincount(train.labels, minlength=3).tolist(),
            "test_per_class": np.bincount(test.labels, minlength=3).tolist(),
        },
    }
    return PreprocessResult(
        schema=schema, vocab=vocab, stats=stats, train=train, test=test, manifest=manifest
    )


def apply_preprocessing(
    raw: RawTable, vocab: VocabMap, stats: NormStats, strict: bool
) -> ExampleTable:
    """Inference-path preprocessing: stored vocab and stats, never refit."""
    coded, _ = encode_categoricals(raw, vocab=vocab, strict=strict)
    normalized, _ = minmax_normalize(coded.features, stats=stats)
    return ExampleTable(features=normalized, labels=coded.labels)


# ------------------------------------------------------------ persistence


def _bundle_blocks(bundle: ModelBundle) -> list[tuple[str, np.ndarray]]:
    blocks: list[tuple[str, np.ndarray]] = []
    for i, layer in enumerate(bundle.sae_model.layers):
        blocks.append((f"sae.layer{i}.weights", layer.weights))
        blocks.append((f"sae.layer{i}.bias", layer.bias))
    for li, cell in enumerate(bundle.classifier.cells):
        for name, arr in cell.parameter_items():
            blocks.append((f"lstm.cell{li}.{name}", arr))
    blocks.append(("lstm.head.weights", bundle.classifier.head.weights))
    blocks.append(("lstm.head.bias", bundle.classifier.head.bias))
    return blocks


def persist_model(bundle: ModelBundle, path) -> None:
    """Write the self-describing binary bundle (atomically via a temp file)."""
    blocks = _bundle_blocks(bundle)
    header = {
        "format_version": BUNDLE_VERSION,
        "artifact_version": _package_version,
        "schema": bundle.schema.to_dict(),
        "vocab": bundle.vocab.to_dict(),
        "norm_stats": bundle.stats.to_dict(),
        "strict_vocab": bundle.strict_vocab,
        "split": {"seed": bundle.split_seed, "test_fraction": bundle.test_fraction},
        "config_fingerprint": bundle.config_fingerprint,
        "sae": {
            "dims": list(SAE_DIMS),
            "activations": [l.activation for l in bundle.sae_model.layers],
            "seed": bundle.sae_model.rng_seed,
        },
        "lstm": {
            "input_dim": bundle.classifier.input_dim,
            "units": bundle.classifier.units,
            "classes": bundle.classifier.classes,
            "depth": len(bundle.classifier.cells),
            "sequence_length": bundle.classifier.sequence_length,
        },
        "blocks": [{"name": n, "shape": list(a.shape)} for n, a in blocks],
    }
    payload = json.dumps(header).encode("utf-8")
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", BUNDLE_VERSION))
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_model(path) -> ModelBundle:
    """Read a bundle back; raises FormatError / IntegrityError, never a
    partially-populated bundle."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) + 12 or data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: not a model bundle (bad magic)")
    offset = len(MAGIC)
    (version,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if version != BUNDLE_VERSION:
        raise FormatError(f"{path}: unsupported bundle version {version}")
    (json_len,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    if offset + json_len > len(data):
        raise IntegrityError(f"{path}: truncated inside the JSON header")
    try:
        header = json.loads(data[offset : offset + json_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"{path}: corrupt JSON header: {exc}") from None
    offset += json_len

    arrays: dict[str, np.ndarray] = {}
    for block in header["blocks"]:
        shape = tuple(block["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(data):
            raise IntegrityError(
                f"{path}: truncated inside block {block['name']!r}"
            )
        arrays[block["name"]] = np.frombuffer(
            data, dtype="<f8", count=count, offset=offset
        ).reshape(shape).copy()
        offset += nbytes
    if offset != len(data):
        raise IntegrityError(f"{path}: {len(data) - offset} trailing bytes after blocks")

    sae_meta = header["sae"]
    layers = []
    for i, activation in enumerate(sae_meta["activations"]):
        layers.append(
            DenseLayer(
                weights=arrays[f"sae.layer{i}.weights"],
                bias=arrays[f"sae.layer{i}.bias"],
                activation=activation,
            )
        )
    sae_model = SAEModel(layers=layers, rng_seed=sae_meta.get("seed", 0))

    lstm_meta = header["lstm"]
    cells = []
    for li in range(lstm_meta["depth"]):
        cells.append(
            LSTMCell(
                w={g: arrays[f"lstm.cell{li}.w_{g}"] for g in GATES},
                u={g: arrays[f"lstm.cell{li}.u_{g}"] for g in GATES},
                b={g: arrays[f"lstm.cell{li}.b_{g}"] for g in GATES},
            )
        )
    classifier = LSTMClassifier(
        cells=cells,
        head=DenseLayer(
            weights=arrays["lstm.head.weights"],
            bias=arrays["lstm.head.bias"],
            activation="softmax",
        ),
        sequence_length=lstm_meta.get("sequence_length", 1),
    )
    if classifier.input_dim != sae_meta["dims"][0]:
        raise ConsistencyError(
            f"{path}: classifier input width {classifier.input_dim} does not match "
            f"encoder output width {sae_meta['dims'][0]}"
        )
    return ModelBundle(
        schema=FeatureSchema.from_dict(header["schema"]),
        vocab=VocabMap.from_dict(header["vocab"]),
        stats=NormStats.from_dict(header["norm_stats"]),
        sae_model=sae_model,
        classifier=classifier,
        strict_vocab=header.get("strict_vocab", False),
        split_seed=header["split"]["seed"],
        test_fraction=header["split"]["test_fraction"],
        config_fingerprint=header.get("config_fingerprint", ""),
    )


# ------------------------------------------------------------ orchestration


def _staged(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except SaeLstmError as exc:
        raise type(exc)(f"[{stage}] {exc}") from exc


def write_history(history, path) -> None:
    doc = {"artifact_version": _package_version, **history.to_dict()}
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def write_report_files(report: MetricsReport, out_dir: Path, extras: dict) -> dict:
    """report.json + confusion_matrix.csv; returns the report dict written."""
    doc = report.to_dict()
    doc.update(extras)
    (out_dir / "report.json").write_text(
        json.dumps(doc, indent=2) + "\n", encoding="utf-8"
    )
    lines = ["true\\pred," + ",".join(report.labels)]
    for j, label in enumerate(report.labels):
        lines.append(label + "," + ",".join(str(int(c)) for c in report.confusion.counts[j]))
    (out_dir / "confusion_matrix.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return doc


def run_pipeline(config: PipelineConfig) -> MetricsReport:
    """Execute every stage in order and write all artifacts.

    Returns the metrics report computed on the held-out test partition.
    """
    config.validate()
    config.seed_config()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    pre = _staged("preprocess", preprocess, config)
    timings["preprocess"] = time.perf_counter() - t0
    (out_dir / "manifest.json").write_text(
        json.dumps(pre.manifest, indent=2) + "\n", encoding="utf-8"
    )

    t0 = time.perf_counter()
    sae_model = build_sae(seed=config.sae_seed)
    sae_history = _staged("train-sae", train_sae, sae_model, pre.train.features, config.sae)
    timings["train_sae"] = time.perf_counter() - t0
    write_history(sae_history, out_dir / "sae_history.json")

    classifier = build_classifier(
        input_dim=SAE_DIMS[0],
        units=168,
        classes=len(pre.schema.class_labels),
        seed=config.lstm_seed,
        depth=config.lstm_depth,
    )
    t0 = time.perf_counter()
    if config.lstm.fine_tune_encoder:
        lstm_history = _staged(
            "train-lstm",
            train_classifier,
            classifier,
            pre.train.features,
            pre.train.labels,
            config.lstm,
            encoder=sae_model,
        )
    else:
        train_encoded = _staged("encode", encode, sae_model, pre.train.features)
        lstm_history = _staged(
            "train-lstm",
            train_classifier,
            classifier,
            train_encoded,
            pre.train.labels,
            config.lstm,
        )
    timings["train_lstm"] = time.perf_counter() - t0
    write_history(lstm_history, out_dir / "lstm_history.json")

    t0 = time.perf_counter()
    test_encoded = _staged("encode", encode, sae_model, pre.test.features)
    predictions, _ = predict(classifier, test_encoded)
    report = build_report(pre.test.labels, predictions, labels=pre.schema.class_labels)
    timings["evaluate"] = time.perf_counter() - t0

    bundle = ModelBundle(
        schema=pre.schema,
        vocab=pre.vocab,
        stats=pre.stats,
        sae_model=sae_model,
        classifier=classifier,
        strict_vocab=config.strict_vocab,
        split_seed=config.split_seed,
        test_fraction=config.test_fraction,
        config_fingerprint=config.fingerprint(),
    )
    persist_model(bundle, out_dir / "model.saelstm")
    write_report_files(
        report,
        out_dir,
        extras={
            "config_echo": config.to_dict(),
            "seeds": {
                "split": config.split_seed,
                "sae": config.sae_seed,
                "lstm": config.lstm_seed,
            },
            "timings": timings,
            "artifact_version": _package_version,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        },
    )
    return report


def evaluate_only(bundle: ModelBundle, data_path) -> MetricsReport:
    """Score a data file with a persisted bundle; nothing is refit."""
    if not Path(data_path).is_file():
        raise ConfigError(f"data file not found: {data_path}")
    raw = _staged("parse", parse_csv, data_path, bundle.schema)
    table = _staged(
        "preprocess", apply_preprocessing, raw, bundle.vocab, bundle.stats, bundle.strict_vocab
    )
    encoded = _staged("encode", encode, bundle.sae_model, table.features)
    predictions, _ = predict(bundle.classifier, encoded)
    return build_report(table.labels, predictions, labels=bundle.schema.class_labels)


def importance_report(
    bundle: ModelBundle, method: str = "weight", data_path=None
) -> list[tuple[str, float]]:
    """Feature ranking from a persisted bundle's encoder."""
    data = None
    if method == "activation":
        if data_path is None:
            raise ConfigError("activation importance needs --data")
        raw = parse_csv(data_path, bundle.schema)
        table = apply_preprocessing(raw, bundle.vocab, bundle.stats, bundle.strict_vocab)
        data = table.features
    return feature_importance(
        bundle.sae_model, bundle.schema.feature_columns, method=method, data=data
    )
