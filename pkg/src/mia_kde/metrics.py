"""Classification metrics, ROC analysis and the two-sample KS test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ._validation import check_1d, check_labels
from .tabular import MEMBER

DEFAULT_FPR_TARGETS = (1e-1, 1e-2, 1e-3)
DEFAULT_RISK_MULTIPLIER = 20.0


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.fp + self.tn


def confusion_from_labels(predicted, truth) -> ConfusionMatrix:
    pred = check_labels(predicted, name="predicted")
    true = check_labels(truth, len(pred), name="truth")
    if len(pred) == 0:
        raise ValueError("no outcomes to count")
    pm, tm = pred == MEMBER, true == MEMBER
    return ConfusionMatrix(
        int((pm & tm).sum()), int((pm & ~tm).sum()), int((~pm & ~tm).sum()), int((~pm & tm).sum())
    )


def confusion(outcomes) -> ConfusionMatrix:
    """Confusion counts of an :class:`~mia_kde.attacks.AttackOutcomes` (member = positive)."""
    return confusion_from_labels(outcomes.predicted, outcomes.truth)


class Scores(NamedTuple):
    accuracy: float
    precision: float
    recall: float
    f1: float


def accuracy_f1(cm: ConfusionMatrix) -> Scores:
    """Accuracy, precision, recall and F1. Zero denominators give 0."""
    if cm.total <= 0:
        raise ValueError("empty confusion matrix")
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    # 2TP / (2TP + FP + FN) avoids the precision/recall round trip
    denom = 2 * cm.tp + cm.fp + cm.fn
    f1 = 2 * cm.tp / denom if denom else 0.0
    return Scores(accuracy, precision, recall, f1)


# ---------------------------------------------------------------------------
# ROC


@dataclass(frozen=True, eq=False)
class RocCurve:
    """ROC points from the strictest threshold to the loosest.

    ``thresholds[k]`` is the lowest score predicted positive at point ``k``;
    the first point ``(0, 0)`` carries ``+inf``.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float
    n_positive: int
    n_negative: int

    def __len__(self) -> int:
        return len(self.fpr)


def roc_curve(scores, truths) -> RocCurve:
    """ROC curve with tied scores moving together; AUC by the trapezoid rule.

    The area is accumulated in integer counts and divided once, which makes
    it match Mann-Whitney pair counting (ties worth one half).
    """
    s = check_1d(scores, "scores")
    y = check_labels(truths, len(s), name="truths")
    pos = y == MEMBER
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC analysis needs both members and non-members")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    pos_sorted = pos[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.diff(s_sorted) != 0)
    ends = np.append(ends, len(s_sorted) - 1)
    tp = np.concatenate([[0], np.cumsum(pos_sorted)[ends]])
    fp = np.concatenate([[0], (ends + 1) - tp[1:]])
    thresholds = np.concatenate([[np.inf], s_sorted[ends]])
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    auc = twice_area / (2 * n_pos * n_neg)
    return RocCurve(fp / n_neg, tp / n_pos, thresholds, auc, n_pos, n_neg)


class FprReadout(NamedTuple):
    target: float
    tpr: float
    risk_ratio: float
    flagged: bool
    sufficient: bool


def tpr_at_fpr(
    curve: RocCurve,
    fpr_targets: Sequence[float] = DEFAULT_FPR_TARGETS,
    risk_multiplier: float = DEFAULT_RISK_MULTIPLIER,
) -> list[FprReadout]:
    """Largest TPR reached without exceeding each FPR target.

    ``flagged`` is ``tpr / target > risk_multiplier``. ``sufficient`` tells
    whether the curve has enough non-members (at least ``1/target``) for the
    readout to resolve that FPR at all.
    """
    out = []
    for t in fpr_targets:
        t = float(t)
        if not 0.0 < t < 1.0:
            raise ValueError(f"FPR target must lie in (0, 1), got {t!r}")
        ok = curve.fpr <= t
        tpr = float(curve.tpr[ok].max()) if ok.any() else 0.0
        ratio = tpr / t
        sufficient = curve.n_negative * t >= 1.0 - 1e-9
        out.append(FprReadout(t, tpr, ratio, ratio > risk_multiplier, sufficient))
    return out


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov


class KsResult(NamedTuple):
    statistic: float
    p_value: float


def kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution,
    ``2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lam^2)``, clamped to [0, 1].

    The alternating series is summed until terms become negligible; when it
    has not converged after 100 terms (``lam`` near 0) the value is 1.
    """
    if lam <= 0.0:
        return 1.0
    a2 = -2.0 * lam * lam
    total = 0.0
    sign = 2.0
    prev = 0.0
    for k in range(1, 101):
        term = sign * math.exp(a2 * k * k)
        total += term
        if abs(term) <= 1e-3 * prev or abs(term) <= 1e-12 * total:
            return min(1.0, max(0.0, total))
        sign = -sign
        prev = abs(term)
    return 1.0


def ks_two_sample(a, b) -> KsResult:
    """Two-sample KS statistic with the asymptotic p-value.

    Uses the effective size ``n_a n_b / (n_a + n_b)`` and the correction
    ``lam = (sqrt(n_e) + 0.12 + 0.11 / sqrt(n_e)) * D``.
    """
    a = np.sort(check_1d(a, "a"))
    b = np.sort(check_1d(b, "b"))
    if len(a) < 2 or len(b) < 2:
        raise ValueError("KS test needs at least 2 observations per sample")
    pooled = np.concatenate([a, b])
    # integer numerators over the common denominator, divided once
    count_a = np.searchsorted(a, pooled, side="right").astype(np.int64)
    count_b = np.searchsorted(b, pooled, side="right").astype(np.int64)
    gap = int(np.max(np.abs(count_a * len(b) - count_b * len(a))))
    stat = gap / (len(a) * len(b))
    ne = len(a) * len(b) / (len(a) + len(b))
    root = math.sqrt(ne)
    lam = (root + 0.12 + 0.11 / root) * stat
    return KsResult(stat, kolmogorov_sf(lam))


# ---------------------------------------------------------------------------
# TP/FP trajectory


class TrajectoryPoint(NamedTuple):
    tp: int
    fp: int
    tp_outpaces_fp: bool | None


def tp_fp_trajectory(per_threshold: Sequence[ConfusionMatrix]) -> list[TrajectoryPoint]:
    """``(tp, fp)`` per threshold, ascending, with whether TP grew faster than
    FP since the previous threshold (``None`` for the first point)."""
    out = []
    prev = None
    for cm in per_threshold:
        flag = None if prev is None else (cm.tp - prev.tp) > (cm.fp - prev.fp)
        out.append(TrajectoryPoint(cm.tp, cm.fp, flag))
        prev = cm
    return out
