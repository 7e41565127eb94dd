"""Confusion matrix and the evaluation algebra: precision, recall, F1, accuracy.

Convention: rows are true classes, columns are predicted classes, label
order A, S, SS. Per-class rates are one-vs-rest; any 0/0 is reported as 0.
The "Average" row is support-weighted, which makes the recall average equal
overall accuracy identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SchemaError, ShapeError

DEFAULT_LABELS = ["A", "S", "SS"]


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (k, k) non-negative ints, counts[i][j] = #(true i, pred j)
    labels: list[str] | None = None

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ShapeError(f"confusion matrix must be square, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise DomainError("confusion matrix entries must be non-negative")
        if self.labels is not None and len(self.labels) != self.counts.shape[0]:
            raise SchemaError("label count does not match matrix size")

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def supports(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def one_vs_rest(self, j: int) -> tuple[int, int, int, int]:
        """(TP, FP, FN, TN) treating class j as positive."""
        tp = int(self.counts[j, j])
        fp = int(self.counts[:, j].sum()) - tp
        fn = int(self.counts[j, :].sum()) - tp
        tn = self.total - tp - fp - fn
        return tp, fp, fn, tn


def confusion_matrix(y_true, y_pred, k: int, labels: list[str] | None = None) -> ConfusionMatrix:
    """Tally counts[i][j] = #(true i, predicted j) over paired index arrays."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ShapeError(f"index arrays disagree: {y_true.shape} vs {y_pred.shape}")
    if y_true.size and (
        y_true.min() < 0 or y_true.max() >= k or y_pred.min() < 0 or y_pred.max() >= k
    ):
        raise DomainError(f"class indices must lie in 0..{k - 1}")
    counts = np.bincount(y_true * k + y_pred, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts=counts, labels=labels)


@dataclass
class PerClassMetrics:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def per_class_metrics(cm: ConfusionMatrix) -> PerClassMetrics:
    """One-vs-rest precision/recall/F1 and support per class (0/0 -> 0)."""
    k = cm.k
    precision = np.zeros(k)
    recall = np.zeros(k)
    f1 = np.zeros(k)
    for j in range(k):
        tp, fp, fn, _ = cm.one_vs_rest(j)
        precision[j] = _safe_div(tp, tp + fp)
        recall[j] = _safe_div(tp, tp + fn)
        f1[j] = _safe_div(2.0 * precision[j] * recall[j], precision[j] + recall[j])
    return PerClassMetrics(
        precision=precision, recall=recall, f1=f1, support=cm.supports.copy()
    )


def overall_accuracy(cm: ConfusionMatrix) -> float:
    """trace / total; the multiclass form of (TP+TN)/(TP+FN+TN+FP)."""
    total = cm.total
    if total == 0:
        raise DomainError("accuracy undefined on an empty confusion matrix")
    return float(np.trace(cm.counts)) / total


def support_weighted(values, supports) -> float:
    """Support-proportional mean of one per-class metric.

    A zero-support class contributes zero weight (it cannot appear in a
    report otherwise); the total support must be positive.
    """
    values = np.asarray(values, dtype=np.float64)
    supports = np.asarray(supports, dtype=np.float64)
    if values.shape != supports.shape:
        raise SchemaError(f"{values.shape} metric values for {supports.shape} supports")
    if np.any(supports < 0) or supports.sum() <= 0:
        raise DomainError("supports must be non-negative with a positive total")
    return float(values @ supports / supports.sum())


def weighted_average(
    metrics: PerClassMetrics, scheme: str = "weighted"
) -> tuple[float, float, float]:
    """(precision, recall, f1) averages, support-weighted by default.

    scheme "macro" gives the unweighted mean instead.
    """
    if scheme == "weighted":
        return (
            support_weighted(metrics.precision, metrics.support),
            support_weighted(metrics.recall, metrics.support),
            support_weighted(metrics.f1, metrics.support),
        )
    if scheme == "macro":
        return (
            float(metrics.precision.mean()),
            float(metrics.recall.mean()),
            float(metrics.f1.mean()),
        )
    raise DomainError(f"unknown averaging scheme {scheme!r}")


@dataclass
class MetricsReport:
    """Everything the evaluation stage publishes, Table-5 style."""

    labels: list[str]
    confusion: ConfusionMatrix
    per_class: PerClassMetrics
    accuracy: float
    weighted: tuple[float, float, float]
    total_support: int

    def to_dict(self) -> dict:
        per_class = {
            label: {
                "precision": float(self.per_class.precision[j]),
                "recall": float(self.per_class.recall[j]),
                "f1": float(self.per_class.f1[j]),
                "support": int(self.per_class.support[j]),
            }
            for j, label in enumerate(self.labels)
        }
        return {
            "accuracy": self.accuracy,
            "per_class": per_class,
            "weighted_avg": {
                "precision": self.weighted[0],
                "recall": self.weighted[1],
                "f1": self.weighted[2],
            },
            "confusion_matrix": self.confusion.counts.tolist(),
            "total_support": self.total_support,
        }

    def render_table(self) -> str:
        """Human-readable summary, six-digit rounding."""
        width = max(len(l) for l in self.labels + ["Accuracy", "Average"]) + 2
        lines = [
            f"{'':<{width}}{'Precision':>11}{'Recall':>11}{'F1 score':>11}{'Support':>9}"
        ]
        for j, label in enumerate(self.labels):
            lines.append(
                f"{label:<{width}}"
                f"{self.per_class.precision[j]:>11.6f}"
                f"{self.per_class.recall[j]:>11.6f}"
                f"{self.per_class.f1[j]:>11.6f}"
                f"{int(self.per_class.support[j]):>9d}"
            )
        lines.append(
            f"{'Accuracy':<{width}}{'':>11}{'':>11}{self.accuracy:>11.6f}"
            f"{self.total_support:>9d}"
        )
        lines.append(
            f"{'Average':<{width}}"
            f"{self.weighted[0]:>11.6f}{self.weighted[1]:>11.6f}{self.weighted[2]:>11.6f}"
            f"{self.total_support:>9d}"
        )
        return "\n".join(lines)


def build_report(y_true, y_pred, labels: list[str] | None = None) -> MetricsReport:
    """Full evaluation: confusion matrix, per-class rates, accuracy, averages."""
    labels = labels if labels is not None else DEFAULT_LABELS
    cm = confusion_matrix(y_true, y_pred, k=len(labels), labels=labels)
    per_class = per_class_metrics(cm)
    return MetricsReport(
        labels=list(labels),
        confusion=cm,
        per_class=per_class,
        accuracy=overall_accuracy(cm),
        weighted=weighted_average(per_class),
        total_support=cm.total,
    )
