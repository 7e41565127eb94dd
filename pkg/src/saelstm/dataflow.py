"""UGRansome-format CSV ingestion: parsing, encoding, normalization, splits.

The canonical layout is 14 columns: 13 feature columns (numeric or
categorical) plus one target column holding one of three class labels.
A FeatureSchema (usually loaded from a JSON file) pins the layout; all
fitting (vocabularies, min/max stats) happens on training rows only.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DomainError, SchemaError, ShapeError

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass
class FeatureSchema:
    """Column layout of an input CSV.

    column_names lists every column in canonical order, target included.
    column_kinds maps each feature column to "numeric" or "categorical".
    class_labels fixes the label-to-index encoding (index = list position),
    e.g. ["A", "S", "SS"] gives A=0, S=1, SS=2.
    """

    column_names: list[str]
    column_kinds: dict[str, str]
    target_column: str
    class_labels: list[str]

    def __post_init__(self) -> None:
        if self.target_column not in self.column_names:
            raise SchemaError(f"target column {self.target_column!r} not in column_names")
        if len(set(self.column_names)) != len(self.column_names):
            raise SchemaError("duplicate column names in schema")
        features = self.feature_columns
        if len(features) != 13:
            raise SchemaError(
                f"expected exactly 13 feature columns, got {len(features)}"
            )
        for name in features:
            kind = self.column_kinds.get(name)
            if kind not in (NUMERIC, CATEGORICAL):
                raise SchemaError(f"column {name!r} has invalid kind {kind!r}")
        if len(self.class_labels) != 3 or len(set(self.class_labels)) != 3:
            raise SchemaError("class_labels must be 3 distinct label strings")

    @property
    def feature_columns(self) -> list[str]:
        return [c for c in self.column_names if c != self.target_column]

    def label_index(self, label: str) -> int:
        return self.class_labels.index(label)

    def to_dict(self) -> dict:
        return {
            "column_names": list(self.column_names),
            "column_kinds": dict(self.column_kinds),
            "target_column": self.target_column,
            "class_labels": list(self.class_labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        try:
            return cls(
                column_names=list(d["column_names"]),
                column_kinds=dict(d["column_kinds"]),
                target_column=d["target_column"],
                class_labels=list(d["class_labels"]),
            )
        except KeyError as exc:
            raise SchemaError(f"schema file missing key {exc}") from None

    @classmethod
    def from_json(cls, path) -> "FeatureSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class RawTable:
    """Parsed but unencoded rows: numeric cells as floats, the rest as strings."""

    schema: FeatureSchema
    columns: dict[str, list]
    target: list[str]

    @property
    def n_rows(self) -> int:
        return len(self.target)


@dataclass
class VocabMap:
    """Per-column mapping from categorical value to integer code.

    Codes are contiguous from 0 in lexicographic value order, so the
    encoding is stable across runs and platforms. Built from training
    data only.
    """

    maps: dict[str, dict[str, int]] = field(default_factory=dict)

    def encode(self, column: str, value: str, strict: bool = False) -> int:
        mapping = self.maps[column]
        code = mapping.get(value)
        if code is None:
            if strict:
                raise DataError(
                    f"value {value!r} in column {column!r} is not in the vocabulary"
                )
            return len(mapping)  # the "unknown" bucket
        return code

    def decode(self, column: str, code: int) -> str:
        for value, c in self.maps[column].items():
            if c == code:
                return value
        raise DomainError(f"code {code} not present in column {column!r} vocabulary")

    def to_dict(self) -> dict:
        return {col: dict(mapping) for col, mapping in self.maps.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "VocabMap":
        return cls(maps={col: {k: int(v) for k, v in m.items()} for col, m in d.items()})


@dataclass
class NormStats:
    """Per-feature (min, max) observed on training data."""

    feature_names: list[str]
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self) -> None:
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.maxs = np.asarray(self.maxs, dtype=np.float64)
        if self.mins.shape != (len(self.feature_names),) or self.maxs.shape != self.mins.shape:
            raise ShapeError("mins/maxs must be vectors matching feature_names")
        if np.any(self.mins > self.maxs):
            raise DomainError("normalization stats have min > max")

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mins": self.mins.tolist(),
            "maxs": self.maxs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(
            feature_names=list(d["feature_names"]),
            mins=np.array(d["mins"], dtype=np.float64),
            maxs=np.array(d["maxs"], dtype=np.float64),
        )


@dataclass
class CodedTable:
    """Feature matrix with categoricals integer-coded, plus label indices."""

    features: np.ndarray  # (n, 13) float64
    labels: np.ndarray  # (n,) int64
    feature_names: list[str]


@dataclass
class ExampleTable:
    """Normalized features in [0, 1] and class indices, ready for the models."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"features {self.features.shape} and labels {self.labels.shape} disagree"
            )

    @property
    def n_rows(self) -> int:
        return int(self.labels.shape[0])


def parse_csv(path, schema: FeatureSchema) -> RawTable:
    """Read a header-first, comma-separated UTF-8 file against `schema`.

    Columns may appear in any order but every schema column must be present
    and no extra column is allowed. Raises SchemaError for header problems
    and DataError (with 1-based file line numbers) for bad cells.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty, expected a header row") from None
        missing = [c for c in schema.column_names if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(map(repr, missing))}")
        extra = [c for c in header if c not in schema.column_names]
        if extra:
            raise SchemaError(f"{path}: unexpected column(s) {', '.join(map(repr, extra))}")
        col_pos = {name: header.index(name) for name in schema.column_names}

        columns: dict[str, list] = {name: [] for name in schema.feature_columns}
        target: list[str] = []
        valid_labels = set(schema.class_labels)
        numeric_cols = [
            (name, col_pos[name])
            for name in schema.feature_columns
            if schema.column_kinds[name] == NUMERIC
        ]
        categorical_cols = [
            (name, col_pos[name])
            for name in schema.feature_columns
            if schema.column_kinds[name] == CATEGORICAL
        ]
        target_pos = col_pos[schema.target_column]
        width = len(header)
        for line_no, row in enumerate(reader, start=2):
            if len(row) != width:
                raise DataError(
                    f"{path}: row at line {line_no} has {len(row)} cells, expected {width}"
                )
            label = row[target_pos]
            if label not in valid_labels:
                raise DataError(
                    f"{path}: unknown target label {label!r} at line {line_no}"
                )
            for name, pos in numeric_cols:
                try:
                    columns[name].append(float(row[pos]))
                except ValueError:
                    raise DataError(
                        f"{path}: unparseable numeric {row[pos]!r} at line {line_no}, column {name!r}"
                    ) from None
            for name, pos in categorical_cols:
                columns[name].append(row[pos])
            target.append(label)
    return RawTable(schema=schema, columns=columns, target=target)


def take_rows(raw: RawTable, indices) -> RawTable:
    """Row subset of a raw table, in the given index order."""
    return RawTable(
        schema=raw.schema,
        columns={n: [vals[i] for i in indices] for n, vals in raw.columns.items()},
        target=[raw.target[i] for i in indices],
    )


def drop_duplicate_rows(raw: RawTable) -> RawTable:
    """Keep the first occurrence of each fully-identical row."""
    names = raw.schema.feature_columns
    seen: set[tuple] = set()
    keep: list[int] = []
    for i in range(raw.n_rows):
        key = tuple(raw.columns[n][i] for n in names) + (raw.target[i],)
        if key not in seen:
            seen.add(key)
            keep.append(i)
    return take_rows(raw, keep)


def build_vocab(raw: RawTable) -> VocabMap:
    """Lexicographically-ordered vocabulary for every categorical column."""
    maps = {}
    for name in raw.schema.feature_columns:
        if raw.schema.column_kinds[name] == CATEGORICAL:
            values = sorted(set(raw.columns[name]))
            maps[name] = {v: i for i, v in enumerate(values)}
    return VocabMap(maps=maps)


def encode_categoricals(
    raw: RawTable, vocab: VocabMap | None = None, strict: bool = False
) -> tuple[CodedTable, VocabMap]:
    """Replace categorical values by integer codes; numeric columns pass through.

    With no vocab given, one is built from `raw` (the training path). With a
    vocab supplied (the inference path), unseen values raise DataError in
    strict mode and fall into the unknown bucket (code = vocabulary size)
    otherwise.
    """
    if vocab is None:
        vocab = build_vocab(raw)
    schema = raw.schema
    names = schema.feature_columns
    features = np.empty((raw.n_rows, len(names)), dtype=np.float64)
    for j, name in enumerate(names):
        if schema.column_kinds[name] == NUMERIC:
            features[:, j] = np.asarray(raw.columns[name], dtype=np.float64)
        else:
            features[:, j] = [
                vocab.encode(name, v, strict=strict) for v in raw.columns[name]
            ]
    labels = np.array([schema.label_index(t) for t in raw.target], dtype=np.int64)
    return CodedTable(features=features, labels=labels, feature_names=names), vocab


def minmax_normalize(
    features: np.ndarray,
    stats: NormStats | None = None,
    feature_names: list[str] | None = None,
) -> tuple[np.ndarray, NormStats]:
    """Map each column through (x - min) / (max - min).

    Fitting (stats=None) computes per-column (min, max) from `features` and
    maps constant columns to 0. Applying supplied stats (the inference path)
    additionally clips the result to [0, 1].
    """
    features = np.asarray(features, dtype=np.float64)
    fitted = stats is None
    if fitted:
        stats = NormStats(
            feature_names=list(
                feature_names or [f"f{i}" for i in range(features.shape[1])]
            ),
            mins=features.min(axis=0),
            maxs=features.max(axis=0),
        )
    if features.shape[1] != stats.mins.shape[0]:
        raise ShapeError(
            f"{features.shape[1]} columns but stats cover {stats.mins.shape[0]}"
        )
    span = stats.maxs - stats.mins
    safe_span = np.where(span == 0.0, 1.0, span)
    out = (features - stats.mins) / safe_span
    out[:, span == 0.0] = 0.0
    if not fitted:
        out = np.clip(out, 0.0, 1.0)
    return out, stats


def stratified_indices(
    labels: np.ndarray, test_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class row assignment for a stratified split.

    Each class contributes round(count * test_fraction) rows to test
    (round-half-even), chosen by a seeded shuffle. Returned index arrays
    are ascending and partition range(n).
    """
    if not 0.0 < test_fraction < 1.0:
        raise DomainError(f"test_fraction must be in (0, 1), got {test_fraction}")
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("cannot split an empty table")
    rng = np.random.default_rng(seed)
    train_parts: list[np.ndarray] = []
    test_parts: list[np.ndarray] = []
    for cls in np.unique(labels):
        rows = np.flatnonzero(labels == cls)
        if rows.size < 2:
            raise DataError(f"class {cls} has {rows.size} row(s); need at least 2")
        n_test = int(round(rows.size * test_fraction))
        shuffled = rng.permutation(rows)
        test_parts.append(shuffled[:n_test])
        train_parts.append(shuffled[n_test:])
    train_idx = np.sort(np.concatenate(train_parts)).astype(np.int64)
    test_idx = np.sort(np.concatenate(test_parts)).astype(np.int64)
    return train_idx, test_idx


def stratified_split(
    table: ExampleTable, test_fraction: float, seed: int
) -> tuple[ExampleTable, ExampleTable]:
    """Split an ExampleTable into stratified (train, test) partitions."""
    train_idx, test_idx = stratified_indices(table.labels, test_fraction, seed)
    return (
        ExampleTable(features=table.features[train_idx], labels=table.labels[train_idx]),
        ExampleTable(features=table.features[test_idx], labels=table.labels[test_idx]),
    )


@dataclass
class ClassDistribution:
    """Per-subset class counts with totals and across-subset means."""

    per_subset: dict[str, list[int]]
    totals: list[int]
    means: list[float]


def _labels_of(table) -> np.ndarray:
    if isinstance(table, ExampleTable):
        return table.labels
    return np.asarray(table, dtype=np.int64)


def class_distribution(tables, class_count: int = 3) -> ClassDistribution:
    """Class histogram per named subset, plus totals and arithmetic means.

    `tables` is either a single ExampleTable / label array (treated as one
    subset named "all") or a mapping of subset name to table/labels.
    """
    if not isinstance(tables, dict):
        tables = {"all": tables}
    per_subset: dict[str, list[int]] = {}
    totals = np.zeros(class_count, dtype=np.int64)
    for name, table in tables.items():
        labels = _labels_of(table)
        if labels.size and (labels.min() < 0 or labels.max() >= class_count):
            raise DomainError(f"subset {name!r} has labels outside 0..{class_count - 1}")
        counts = np.bincount(labels, minlength=class_count).astype(np.int64)
        per_subset[name] = counts.tolist()
        totals += counts
    n_subsets = max(len(tables), 1)
    means = (totals / n_subsets).tolist()
    return ClassDistribution(per_subset=per_subset, totals=totals.tolist(), means=means)
