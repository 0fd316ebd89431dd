"""Confusion counts, precision / recall / accuracy, and F1."""

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyEvaluation, ShapeMismatch

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other):
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


@dataclass(frozen=True)
class MetricValues:
    precision: float
    recall: float
    accuracy: float
    f1: float = None
    undefined: dict = field(default_factory=dict)


def confusion_counts(p, y, threshold=DEFAULT_THRESHOLD):
    """Tally predictions against targets; ``p >= threshold`` counts as positive."""
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    y = np.asarray(y).reshape(-1)
    if p.shape != y.shape:
        raise ShapeMismatch(f"{p.shape[0]} probabilities vs {y.shape[0]} targets")
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    pred = p >= threshold
    truth = y == 1
    return ConfusionCounts(
        tp=int(np.count_nonzero(pred & truth)),
        fp=int(np.count_nonzero(pred & ~truth)),
        fn=int(np.count_nonzero(~pred & truth)),
        tn=int(np.count_nonzero(~pred & ~truth)),
    )


def _ratio(num, den):
    return (num / den, False) if den else (0.0, True)


def rates(c):
    """Precision, recall and accuracy; a zero denominator gives 0.0 and a flag."""
    if c.total == 0:
        raise EmptyEvaluation("no samples were evaluated")
    precision, p_undef = _ratio(c.tp, c.tp + c.fp)
    recall, r_undef = _ratio(c.tp, c.tp + c.fn)
    accuracy = (c.tp + c.tn) / c.total
    return MetricValues(precision, recall, accuracy, None, {"precision": p_undef, "recall": r_undef})


def f1_score(precision, recall):
    """Harmonic mean of precision and recall (0.0 when both are 0)."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def evaluate(p, y, threshold=DEFAULT_THRESHOLD):
    """Counts to rates to F1 in one call."""
    c = confusion_counts(p, y, threshold)
    v = rates(c)
    flags = dict(v.undefined, f1=v.precision + v.recall == 0)
    return MetricValues(v.precision, v.recall, v.accuracy, f1_score(v.precision, v.recall), flags)
