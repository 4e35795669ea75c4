"""Reported quantities: per-class precision/recall, accuracy summaries,
forgetting curves, and the rank-correlation diagnostics.

Precision for a class nobody predicted is 0/0; it is reported as an
explicit undefined flag (NaN value + False in the defined mask), never
silently 0, so a fully-forgotten class cannot fake a precision-recall
asymmetry of zero.

Rank correlations are Spearman (average ranks on ties): the diagnostics
are about monotone trends, not about any particular linear scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "PerClassMetrics",
    "PerClassRow",
    "MetricsReport",
    "AsymmetryResult",
    "confusion_matrix",
    "confusion_and_prf",
    "asymmetry_index",
    "forgetting_curve",
    "spearman",
]


@dataclass(frozen=True)
class PerClassMetrics:
    precision: np.ndarray          # NaN where undefined
    recall: np.ndarray             # NaN where undefined (empty class support)
    support: np.ndarray
    precision_defined: np.ndarray  # bool mask
    recall_defined: np.ndarray


@dataclass(frozen=True)
class PerClassRow:
    """One (task, class) record in a training report."""

    task_id: int
    class_id: int
    precision: float
    recall: float
    support: int
    q_value: float
    precision_defined: bool = True


@dataclass(frozen=True)
class MetricsReport:
    """Everything one incremental run produces.

    accuracy_matrix[t][u] is the accuracy on task u's test split after
    training task t (u <= t; upper triangle is NaN).  overall_accuracy[t]
    is the accuracy over all classes seen by task t; its mean is a_mean
    and its last entry is a_last.
    """

    accuracy_matrix: np.ndarray
    overall_accuracy: np.ndarray
    per_class: tuple[PerClassRow, ...]
    a_mean: float
    a_last: float
    seed: int
    loss_kind: str
    q_snapshots: tuple[tuple[int, np.ndarray], ...] = field(default=())


def confusion_matrix(predictions, labels, class_count: int) -> np.ndarray:
    """counts[i, j] = number of samples with true class i predicted as j."""
    y_pred = np.asarray(predictions, dtype=np.int64)
    y_true = np.asarray(labels, dtype=np.int64)
    if y_pred.size == 0 or y_true.size == 0:
        raise DomainError("empty predictions or labels")
    if y_pred.shape != y_true.shape:
        raise DomainError("predictions and labels must have the same length")
    for arr in (y_pred, y_true):
        if arr.min() < 0 or arr.max() >= class_count:
            raise DomainError(f"entries outside [0, {class_count})")
    counts = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return counts


def confusion_and_prf(predictions, labels, class_count: int) -> PerClassMetrics:
    """Per-class precision/recall/support from a prediction vector."""
    counts = confusion_matrix(predictions, labels, class_count)
    tp = np.diag(counts).astype(np.float64)
    predicted = counts.sum(axis=0).astype(np.float64)   # tp + fp
    support = counts.sum(axis=1)                        # tp + fn
    precision_defined = predicted > 0
    recall_defined = support > 0
    precision = np.full(class_count, np.nan)
    recall = np.full(class_count, np.nan)
    np.divide(tp, predicted, out=precision, where=precision_defined)
    np.divide(tp, support.astype(np.float64), out=recall, where=recall_defined)
    return PerClassMetrics(
        precision=precision,
        recall=recall,
        support=support,
        precision_defined=precision_defined,
        recall_defined=recall_defined,
    )


def _rank(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based), ties share the mean of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0], dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < sorted_vals.shape[0]:
        j = i
        while j + 1 < sorted_vals.shape[0] and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation; NaN when either side has zero rank variance."""
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.shape != yv.shape or xv.ndim != 1:
        raise DomainError("spearman needs two equal-length vectors")
    if xv.shape[0] < 3:
        raise DomainError("rank correlation needs at least 3 points")
    if not (np.all(np.isfinite(xv)) and np.all(np.isfinite(yv))):
        raise DomainError("rank correlation inputs must be finite (mask NaNs first)")
    rx = _rank(xv)
    ry = _rank(yv)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt(np.dot(rx, rx) * np.dot(ry, ry))
    if denom == 0.0:
        return float("nan")
    return float(np.dot(rx, ry) / denom)


@dataclass(frozen=True)
class AsymmetryResult:
    """Per-class (precision - recall) and its rank correlation with age."""

    index: np.ndarray              # NaN where precision undefined
    age_correlation: float         # NaN when degenerate
    included: np.ndarray           # mask of classes that entered the correlation


def asymmetry_index(per_class: PerClassMetrics, class_age) -> AsymmetryResult:
    """Precision-minus-recall per class, correlated against class age.

    ``class_age`` is larger for classes learned longer ago.  A positive
    correlation means old classes skew toward precision (the temporal
    imbalance signature); classes with undefined precision are excluded
    from the correlation but stay visible in the index as NaN.
    """
    age = np.asarray(class_age, dtype=np.float64)
    if age.shape != per_class.precision.shape:
        raise DomainError("class_age must align with the per-class metrics")
    index = per_class.precision - per_class.recall
    included = per_class.precision_defined & per_class.recall_defined
    if int(included.sum()) < 3:
        raise DomainError(
            "need at least 3 classes with defined precision and recall "
            "for the age correlation"
        )
    corr = spearman(index[included], age[included])
    return AsymmetryResult(index=index, age_correlation=corr, included=included)


def forgetting_curve(accuracy_matrix: np.ndarray) -> list[np.ndarray]:
    """Each task's accuracy tracked over all subsequent evaluations.

    curves[t][i] is task t's accuracy after task t+i was trained.
    """
    acc = np.asarray(accuracy_matrix, dtype=np.float64)
    if acc.ndim != 2 or acc.shape[0] != acc.shape[1]:
        raise DomainError("accuracy matrix must be square")
    return [acc[t:, t].copy() for t in range(acc.shape[0])]
