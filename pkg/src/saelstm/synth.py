"""Synthetic UGRansome-format data with class-conditional structure.

Produces CSV files in the canonical 14-column layout whose numeric and
categorical distributions differ per attack class, so the full pipeline has
real signal to learn. Useful for smoke runs, acceptance gates, and demos
when the real corpus is not at hand.
"""

from __future__ import annotations

import csv

import numpy as np

from .dataflow import CATEGORICAL, NUMERIC, FeatureSchema

CLASS_LABELS = ["A", "S", "SS"]

_COLUMNS = [
    ("time", NUMERIC),
    ("protocol", CATEGORICAL),
    ("flag", CATEGORICAL),
    ("family", CATEGORICAL),
    ("clusters", NUMERIC),
    ("seed_address", CATEGORICAL),
    ("exp_address", CATEGORICAL),
    ("btc", NUMERIC),
    ("usd", NUMERIC),
    ("netflow_bytes", NUMERIC),
    ("ip_kind", CATEGORICAL),
    ("threats", CATEGORICAL),
    ("port", NUMERIC),
    ("prediction", "target"),
]

# per class: numeric (mean, sd) and categorical value weights
_NUMERIC_PROFILE = {
    "time": [(43000, 21000), (40000, 20000), (46000, 22000)],
    "clusters": [(8.0, 1.5), (2.0, 1.0), (5.0, 1.2)],
    "btc": [(42.0, 9.0), (6.0, 2.5), (19.0, 5.0)],
    "usd": [(520.0, 110.0), (90.0, 35.0), (260.0, 70.0)],
    "netflow_bytes": [(9.2e5, 2.1e5), (1.4e5, 5.0e4), (4.6e5, 1.2e5)],
    "port": [(5062, 900), (445, 180), (3389, 600)],
}
_CATEGORICAL_PROFILE = {
    "protocol": {
        "values": ["ICMP", "TCP", "UDP"],
        "weights": [[0.55, 0.25, 0.20], [0.05, 0.80, 0.15], [0.15, 0.30, 0.55]],
    },
    "flag": {
        "values": ["ACK", "FIN", "PSH", "RST", "SYN"],
        "weights": [
            [0.10, 0.10, 0.15, 0.25, 0.40],
            [0.45, 0.25, 0.15, 0.05, 0.10],
            [0.15, 0.15, 0.35, 0.15, 0.20],
        ],
    },
    "family": {
        "values": ["APT", "CryptoLocker", "EDA2", "Globe", "JigSaw", "Locky", "WannaCry"],
        "weights": [
            [0.40, 0.05, 0.25, 0.20, 0.02, 0.03, 0.05],
            [0.02, 0.35, 0.03, 0.05, 0.05, 0.25, 0.25],
            [0.08, 0.10, 0.12, 0.10, 0.40, 0.10, 0.10],
        ],
    },
    "seed_address": {
        "values": ["1BonuSr7", "1DA11mPS", "1Gsk8khs", "1SYSTEMQ"],
        "weights": [
            [0.45, 0.25, 0.20, 0.10],
            [0.10, 0.45, 0.25, 0.20],
            [0.20, 0.15, 0.20, 0.45],
        ],
    },
    "exp_address": {
        "values": ["1AEoiHYZ", "1BonuSr7", "1FAKeMZx", "1KZKCrf7"],
        "weights": [
            [0.40, 0.20, 0.25, 0.15],
            [0.15, 0.40, 0.10, 0.35],
            [0.20, 0.15, 0.45, 0.20],
        ],
    },
    "ip_kind": {
        "values": ["dmz", "external", "internal"],
        "weights": [[0.20, 0.65, 0.15], [0.10, 0.20, 0.70], [0.45, 0.35, 0.20]],
    },
    "threats": {
        "values": ["Blacklist", "Bonet", "DoS", "Port scanning", "Spam", "UDP scan"],
        "weights": [
            [0.05, 0.40, 0.10, 0.10, 0.05, 0.30],
            [0.30, 0.05, 0.35, 0.05, 0.20, 0.05],
            [0.10, 0.10, 0.10, 0.40, 0.10, 0.20],
        ],
    },
}


def default_schema() -> FeatureSchema:
    """Schema matching the generator's 14-column output."""
    return FeatureSchema(
        column_names=[name for name, _ in _COLUMNS],
        column_kinds={name: kind for name, kind in _COLUMNS if kind != "target"},
        target_column="prediction",
        class_labels=list(CLASS_LABELS),
    )


def generate_rows(
    n_rows: int, seed: int = 0, priors: tuple[float, float, float] = (0.4, 0.35, 0.25)
) -> tuple[list[list[str]], list[str]]:
    """Rows (as CSV string cells, canonical column order) and their labels."""
    rng = np.random.default_rng(seed)
    classes = rng.choice(3, size=n_rows, p=np.asarray(priors) / np.sum(priors))
    columns: dict[str, list[str]] = {}
    for name, (profiles) in _NUMERIC_PROFILE.items():
        means = np.array([p[0] for p in profiles])
        sds = np.array([p[1] for p in profiles])
        values = np.maximum(rng.normal(means[classes], sds[classes]), 0.0)
        if name in ("clusters", "port"):
            columns[name] = [str(int(round(v))) for v in values]
        else:
            columns[name] = [f"{v:.2f}" for v in values]
    for name, profile in _CATEGORICAL_PROFILE.items():
        values = np.asarray(profile["values"])
        weights = np.asarray(profile["weights"])
        picks = np.empty(n_rows, dtype=values.dtype)
        for c in range(3):
            mask = classes == c
            picks[mask] = rng.choice(values, size=int(mask.sum()), p=weights[c])
        columns[name] = picks.tolist()
    labels = [CLASS_LABELS[c] for c in classes]
    rows = []
    for r in range(n_rows):
        row = []
        for name, kind in _COLUMNS:
            row.append(labels[r] if kind == "target" else columns[name][r])
        rows.append(row)
    return rows, labels


def generate_csv(
    path,
    n_rows: int = 3000,
    seed: int = 0,
    priors: tuple[float, float, float] = (0.4, 0.35, 0.25),
):
    """Write a synthetic dataset to `path`; returns the path."""
    rows, _ = generate_rows(n_rows, seed=seed, priors=priors)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([name for name, _ in _COLUMNS])
        writer.writerows(rows)
    return path
