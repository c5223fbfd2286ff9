"""Evaluation metrics for clustering (NMI) and account-level detection."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import InputError, UndefinedMetricError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ThresholdMetrics:
    threshold: float
    confusion: ConfusionCounts
    accuracy: float
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvalReport:
    auc: float
    ap: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    threshold: float
    confusion: ConfusionCounts
    n_items: int

    def to_dict(self) -> dict:
        return asdict(self)


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(a, b) -> float:
    """Normalized mutual information ``2 I(a; b) / (H(a) + H(b))``.

    When both labelings are constant the partitions are identical and the
    result is 1; if only one of them is constant the result is 0.
    """
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.size != b.size or a.size == 0:
        raise InputError("labelings must be non-empty and of equal length")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia, ib), 1.0)
    h_a = _entropy(table.sum(axis=1))
    h_b = _entropy(table.sum(axis=0))
    if h_a == 0.0 and h_b == 0.0:
        return 1.0
    if h_a == 0.0 or h_b == 0.0:
        return 0.0
    n = a.size
    nz = table > 0
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))
    mi = float(np.sum(table[nz] / n * np.log(table[nz] * n / outer[nz])))
    value = 2.0 * mi / (h_a + h_b)
    return min(max(value, 0.0), 1.0)


def _check_binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(int)
    if s.size != y.size:
        raise InputError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise InputError("labels must be 0/1")
    return s, y


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes")
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Step-wise area under the precision-recall curve.

    Items are ranked by descending score; ties keep their input order.
    """
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision needs at least one positive")
    order = np.argsort(-s, kind="stable")
    hits = y[order]
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, y.size + 1)
    # fsum keeps the result independent of summation order
    return math.fsum(precision[hits == 1].tolist()) / n_pos


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def confusion_at(scores, labels, threshold: float) -> ThresholdMetrics:
    """Counts and derived metrics when predicting positive iff ``score >= threshold``."""
    s, y = _check_binary(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    f1 = _safe_div(2 * tp, 2 * tp + fp + fn)
    return ThresholdMetrics(
        threshold=float(threshold),
        confusion=ConfusionCounts(tp, fp, fn, tn),
        accuracy=_safe_div(tp + tn, y.size),
        precision=precision,
        recall=recall,
        f1=f1,
    )


def best_f1_threshold(scores, labels) -> tuple[float, float]:
    """Threshold among the observed scores (plus ``+inf``) that maximizes F1.

    Ties go to the lowest threshold, i.e. the highest recall.
    """
    s, y = _check_binary(scores, labels)
    if y.sum() == 0 or y.sum() == y.size:
        raise UndefinedMetricError("threshold search needs both classes")
    candidates = np.unique(s)
    best_t, best_f1 = math.inf, 0.0
    # walk from high to low so later (lower) thresholds win ties
    for t in candidates[::-1]:
        f1 = confusion_at(s, y, t).f1
        if f1 >= best_f1:
            best_t, best_f1 = float(t), f1
    return best_t, best_f1


def evaluate(scores, labels, threshold: float) -> EvalReport:
    s, y = _check_binary(scores, labels)
    m = confusion_at(s, y, threshold)
    return EvalReport(
        auc=roc_auc(s, y),
        ap=average_precision(s, y),
        accuracy=m.accuracy,
        precision=m.precision,
        recall=m.recall,
        f1=m.f1,
        threshold=float(threshold),
        confusion=m.confusion,
        n_items=int(y.size),
    )
