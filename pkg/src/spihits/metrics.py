"""Binary-classification metrics, selection IoU and stability statistics.

Degenerate denominators yield an explicit ``None`` ("undefined"), never a
silent 0 or 1: with heavily imbalanced data an all-negative classifier
has no meaningful precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class SelectionSet:
    """Pattern ids one classifier (or a human) calls single hits."""

    method: str
    threshold: float | None
    ids: set[str] = field(default_factory=set)

    def __post_init__(self):
        self.ids = set(self.ids)


@dataclass(frozen=True)
class MetricReport:
    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    counts: ConfusionCounts

    def to_machine_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.counts.tp,
            "tn": self.counts.tn,
            "fp": self.counts.fp,
            "fn": self.counts.fn,
        }

    def to_human_dict(self) -> dict:
        """Percentages at 0.1 resolution; undefined stays the word."""

        def pct(v):
            return "undefined" if v is None else f"{100.0 * v:.1f}%"

        return {
            "accuracy": pct(self.accuracy),
            "precision": pct(self.precision),
            "recall": pct(self.recall),
            "f1": pct(self.f1),
            "tp": self.counts.tp,
            "tn": self.counts.tn,
            "fp": self.counts.fp,
            "fn": self.counts.fn,
        }


def confusion(predicted: SelectionSet, reference: SelectionSet,
              universe: set[str]) -> ConfusionCounts:
    """Tally TP/FP/FN/TN of a predicted selection against a reference."""
    universe = set(universe)
    for name, sel in (("predicted", predicted), ("reference", reference)):
        outside = sel.ids - universe
        if outside:
            raise ValueError(
                f"{name} selection contains ids outside the universe: "
                f"{sorted(outside)[:5]}"
            )
    p, r = predicted.ids, reference.ids
    return ConfusionCounts(
        tp=len(p & r),
        fp=len(p - r),
        fn=len(r - p),
        tn=len(universe) - len(p | r),
    )


def metric_report(counts: ConfusionCounts) -> MetricReport:
    if counts.total == 0:
        raise ValueError("no evaluated patterns: all confusion counts are zero")
    accuracy = (counts.tp + counts.tn) / counts.total
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else None
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return MetricReport(accuracy, precision, recall, f1, counts)


def f1_score(precision: float, recall: float) -> float | None:
    """Harmonic mean of precision and recall; None when both are zero."""
    if precision + recall == 0:
        return None
    return 2.0 * precision * recall / (precision + recall)


def selection_iou(model_sel: SelectionSet, reference_sel: SelectionSet) -> float:
    """|A&B| / (|A| + |B| - |A&B|); two empty selections count as equal."""
    inter = len(model_sel.ids & reference_sel.ids)
    union = len(model_sel.ids) + len(reference_sel.ids) - inter
    if union == 0:
        return 1.0
    return inter / union


def population_std(values) -> float:
    """Standard deviation with divisor N."""
    values = list(values)
    if not values:
        raise ValueError("population_std of an empty list")
    mean = sum(values) / len(values)
    return math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
