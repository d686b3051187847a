"""Classification metrics and two-sample t-tests."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import betainc


def _pair(pred, true):
    pred = np.asarray(pred).ravel()
    true = np.asarray(true).ravel()
    if pred.size == 0:
        raise ValueError("empty input")
    if pred.size != true.size:
        raise ValueError(f"length mismatch: {pred.size} predictions, {true.size} labels")
    return pred, true


def to_labels(probs, threshold: float = 0.5) -> np.ndarray:
    """Class 1 iff ``p >= threshold``; ties go to class 1."""
    return (np.asarray(probs, dtype=float) >= threshold).astype(int)


def accuracy(pred, true) -> float:
    """``(TP + TN) / (TP + TN + FP + FN)``."""
    pred, true = _pair(pred, true)
    return float(np.mean(pred == true))


def weighted_f1(pred, true) -> float:
    """Per-class F1 averaged with weights equal to class support in ``true``.

    A class whose precision and recall are both zero (or undefined) scores 0.
    """
    pred, true = _pair(pred, true)
    total = 0.0
    for c in np.unique(true):
        tp = np.sum((pred == c) & (true == c))
        fp = np.sum((pred == c) & (true != c))
        fn = np.sum((pred != c) & (true == c))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        total += f1 * np.sum(true == c)
    return float(total / true.size)


def brier(probs, true) -> float:
    """Mean of ``(p_i - y_i)**2``; lower is better."""
    p, y = _pair(probs, true)
    p = p.astype(float)
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must lie in [0, 1]")
    return float(np.mean((p - y) ** 2))


def single_class_flag(pred) -> bool:
    pred = np.asarray(pred).ravel()
    if pred.size == 0:
        raise ValueError("empty input")
    return bool(np.all(pred == pred[0]))


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail ``P(|T| >= |t|)`` for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def welch_t_test(a, b):
    """Unequal-variance two-sample t-test; returns ``(t, two-sided p)``."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least two values")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        if diff == 0:
            return 0.0, 1.0
        return math.copysign(math.inf, diff), 0.0
    t = diff / math.sqrt(se2)
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    return float(t), student_t_sf2(t, df)


def paired_t_test(a, b):
    """Paired t-test on per-split score pairs; returns ``(t, two-sided p)``."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError("paired test needs equal-length groups")
    if a.size < 2:
        raise ValueError("paired test needs at least two pairs")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0:
        if d.mean() == 0:
            return 0.0, 1.0
        return math.copysign(math.inf, d.mean()), 0.0
    t = d.mean() / (sd / math.sqrt(d.size))
    return float(t), student_t_sf2(t, d.size - 1)


@dataclass(frozen=True)
class MetricsRecord:
    model: str
    config_id: str
    split_id: int
    accuracy: float
    f1_weighted: float
    brier: float
    single_class: bool

    def __post_init__(self):
        for name in ("accuracy", "f1_weighted", "brier"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} is outside [0, 1]")

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(model: str, config_id: str, split_id: int, probs, true) -> MetricsRecord:
    pred = to_labels(probs)
    return MetricsRecord(
        model, config_id, int(split_id),
        accuracy(pred, true), weighted_f1(pred, true), brier(probs, true), single_class_flag(pred),
    )
