"""Clip-level and frame-level evaluation.

Predicted clips are matched one-to-one to ground-truth clips by a greedy pass
in descending score order; a match requires both the temporal IoU and the
start/end-averaged box IoU to exceed ``phi``. Precision, recall and F-measure
use predictions binarised at ``tau``; AP and AUC rank all predictions with the
matched ones as positives.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .pipeline import BoundingBox

logger = logging.getLogger(__name__)

PHI = 0.1
TAU = 0.5


class UndefinedMetricError(ValueError):
    """A metric has no value for the given labels (e.g. AP without positives)."""


@dataclass(frozen=True)
class GroundTruthClip:
    start: int
    end: int
    b_start: BoundingBox
    b_end: BoundingBox
    object_id: Optional[int] = None

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"ground-truth range [{self.start}, {self.end}] is empty")


@dataclass(frozen=True)
class PredictedClip:
    start: int
    end: int
    b_start: BoundingBox
    b_end: BoundingBox
    score: float
    object_id: Optional[int] = None

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"predicted range [{self.start}, {self.end}] is empty")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"prediction score must lie in [0, 1], got {self.score}")


@dataclass
class MatchResult:
    is_tp: list[bool]  # aligned with the input prediction order
    matched_gt: list[Optional[int]]
    gt_matched: list[bool]

    @property
    def tp(self) -> int:
        return sum(self.is_tp)

    @property
    def fp(self) -> int:
        return len(self.is_tp) - self.tp

    @property
    def fn(self) -> int:
        return len(self.gt_matched) - sum(self.gt_matched)


@dataclass
class EvalReport:
    precision: float
    recall: float
    f_measure: float
    ap: Optional[float]
    auc: Optional[float]
    tp: int
    fp: int
    fn: int
    n_predictions: int
    n_ground_truth: int
    phi: float = PHI
    tau: float = TAU

    def to_dict(self) -> dict:
        return asdict(self)


def temporal_iou(pred: tuple[int, int], gt: tuple[int, int]) -> float:
    """IoU of two inclusive integer frame ranges."""
    (ps, pe), (gs, ge) = pred, gt
    inter = min(pe, ge) - max(ps, gs) + 1
    if inter <= 0:
        return 0.0
    union = (pe - ps + 1) + (ge - gs + 1) - inter
    return inter / union


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.w * a.h + b.w * b.h - inter)


def spatial_iou(b_p_s: BoundingBox, b_p_e: BoundingBox, b_g_s: BoundingBox, b_g_e: BoundingBox) -> float:
    """Mean of the start-box IoU and the end-box IoU."""
    return 0.5 * (box_iou(b_p_s, b_g_s) + box_iou(b_p_e, b_g_e))


def match_clips(preds: Sequence[PredictedClip], gts: Sequence[GroundTruthClip], phi: float = PHI) -> MatchResult:
    if not 0.0 < phi < 1.0:
        raise ValueError(f"phi must lie in (0, 1), got {phi}")
    order = sorted(range(len(preds)), key=lambda i: -preds[i].score)  # stable
    gt_matched = [False] * len(gts)
    matched_gt: list[Optional[int]] = [None] * len(preds)
    for i in order:
        p = preds[i]
        best, best_val = None, -1.0
        for j, g in enumerate(gts):
            if gt_matched[j]:
                continue
            tem = temporal_iou((p.start, p.end), (g.start, g.end))
            spa = spatial_iou(p.b_start, p.b_end, g.b_start, g.b_end)
            if tem > phi and spa > phi and (tem + spa) / 2 > best_val:
                best, best_val = j, (tem + spa) / 2
        if best is not None:
            gt_matched[best] = True
            matched_gt[i] = best
    return MatchResult([m is not None for m in matched_gt], matched_gt, gt_matched)


def f_measure(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def precision_recall_f(labels, scores, gt_count: int, tau: float = TAU) -> tuple[float, float, float]:
    """Precision, recall and F over predictions scoring at least ``tau``.

    ``labels`` marks true-positive predictions; ``gt_count`` is the number of
    ground-truth clips. Empty denominators give 0.
    """
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape:
        raise ValueError(f"{labels.size} labels vs {scores.size} scores")
    if gt_count < 0:
        raise ValueError(f"gt_count must be >= 0, got {gt_count}")
    selected = scores >= tau
    hits = int(np.count_nonzero(labels & selected))
    n_sel = int(np.count_nonzero(selected))
    pre = hits / n_sel if n_sel else 0.0
    rec = hits / gt_count if gt_count else 0.0
    return pre, rec, f_measure(pre, rec)


def average_precision(scores, labels) -> float:
    """Non-interpolated AP: mean precision at the rank of each positive.

    Ranking is by descending score with ties kept in input order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores vs {labels.size} labels")
    if not labels.any():
        raise UndefinedMetricError("average precision is undefined without positives")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order]
    hits = np.cumsum(ranked)
    ranks = np.arange(1, len(ranked) + 1)
    return float(np.mean(hits[ranked] / ranks[ranked]))


def roc_auc(scores, labels) -> float:
    """Probability a positive outscores a negative, ties counting one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores vs {labels.size} labels")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)  # average ranks handle ties
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def frame_metrics(scores, labels, tau: float = TAU) -> tuple[float, float, float, float]:
    """(precision, recall, false-positive rate, F) with frames binarised at ``tau``."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise ValueError(f"length mismatch: {scores.size} scores vs {labels.size} labels")
    pred = scores >= tau
    tp = int(np.count_nonzero(pred & labels))
    n_pred = int(np.count_nonzero(pred))
    n_pos = int(np.count_nonzero(labels))
    n_neg = labels.size - n_pos
    pre = tp / n_pred if n_pred else 0.0
    tpr = tp / n_pos if n_pos else 0.0
    fpr = (n_pred - tp) / n_neg if n_neg else 0.0
    return pre, tpr, fpr, f_measure(pre, tpr)


def evaluate(
    preds: Sequence[PredictedClip],
    gts: Sequence[GroundTruthClip],
    phi: float = PHI,
    tau: float = TAU,
) -> EvalReport:
    """Full clip-level protocol. AP/AUC are ``None`` when undefined."""
    match = match_clips(preds, gts, phi)
    scores = [p.score for p in preds]
    pre, rec, f = precision_recall_f(match.is_tp, scores, len(gts), tau)
    ap = auc = None
    if preds:
        try:
            ap = average_precision(scores, match.is_tp)
        except UndefinedMetricError:
            logger.warning("no true-positive predictions: AP reported as null")
        try:
            auc = roc_auc(scores, match.is_tp)
        except UndefinedMetricError:
            logger.warning("predictions are all positive or all negative: AUC reported as null")
    return EvalReport(
        precision=pre, recall=rec, f_measure=f, ap=ap, auc=auc,
        tp=match.tp, fp=match.fp, fn=match.fn,
        n_predictions=len(preds), n_ground_truth=len(gts), phi=phi, tau=tau,
    )
