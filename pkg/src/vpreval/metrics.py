"""Threshold-sweep evaluation metrics under both intended-output protocols.

All counts are exact integers from a sweep of thresholds over the
similarity matrix (``S >= t`` predicts a match); the precision-recall
curve and every scalar metric derive from those counts, so results are
invariant to any strictly increasing transform of the similarities.

Output CSV dialect: ``threshold,tp,fp,fn,precision,recall`` with header
(precision is ``nan`` where no prediction was made); scalar metrics are
``metric,value`` rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vpreval import kernels, similarity as _similarity
from vpreval.model import GroundTruthMatrix, SimilarityMatrix, SweepResult


@dataclass(frozen=True)
class PrCurve:
    """Precision as a function of recall, with the source thresholds.

    Points are sorted by ascending recall (ties by descending precision),
    deduplicated, and only include thresholds that retrieved at least one
    true positive; a curve with no such threshold is empty.
    """

    recalls: np.ndarray
    precisions: np.ndarray
    thresholds: np.ndarray
    protocol: str

    @property
    def points(self) -> list[tuple[float, float]]:
        return [(float(r), float(p)) for r, p in zip(self.recalls, self.precisions)]

    @property
    def is_empty(self) -> bool:
        return self.recalls.size == 0


def _sim_values(S) -> np.ndarray:
    if isinstance(S, SimilarityMatrix):
        return S.values
    return np.asarray(S, dtype=np.float64)


def _gt_values(gt) -> np.ndarray:
    if isinstance(gt, GroundTruthMatrix):
        return gt.values
    out = np.asarray(gt)
    if not np.isin(out, (0, 1)).all():
        raise ValueError("ground-truth entries must be 0 or 1")
    return out.astype(np.uint8)


def make_thresholds(S, count: int) -> np.ndarray:
    """Ascending thresholds: the exact distinct values when there are at
    most ``count`` of them, else ``count`` evenly spaced values spanning
    [min, max]."""
    if count < 2:
        raise ValueError("count must be >= 2")
    values = _sim_values(S).ravel()
    distinct = np.unique(values)
    if distinct.size <= count:
        return distinct
    return np.linspace(distinct[0], distinct[-1], count)


def _prep_thresholds(thresholds) -> np.ndarray:
    thr = np.unique(np.asarray(thresholds, dtype=np.float64).ravel())
    if thr.size == 0:
        raise ValueError("empty threshold list")
    return thr


def sweep_all_matchings(S, gt, thresholds) -> SweepResult:
    """Count every cell: TP = #(S>=t and GT), FP = #(S>=t and not GT),
    FN = #(S<t and GT), per threshold."""
    values = _sim_values(S)
    gtv = _gt_values(gt)
    if values.shape != gtv.shape:
        raise ValueError(f"shape mismatch: {values.shape} vs {gtv.shape}")
    positives = int(gtv.sum())
    if positives == 0:
        raise ValueError("no positives: precision/recall undefined")
    thr = _prep_thresholds(thresholds)
    tp, fp, fn = kernels.sweep_counts(values.ravel(), gtv.ravel(), thr)
    return SweepResult(thr, tp, fp, fn, "all_matchings", positives)


def sweep_single_best(S, gt, thresholds) -> SweepResult:
    """Only each query's argmax database row (ties to the lower index) is a
    candidate prediction; it is made when its similarity clears the
    threshold.  A query with ground-truth positives and no true positive
    counts as one false negative, so TP + FN equals the number of
    positive-bearing queries (reported as num_gt_positives)."""
    values = _sim_values(S)
    gtv = _gt_values(gt)
    if values.shape != gtv.shape:
        raise ValueError(f"shape mismatch: {values.shape} vs {gtv.shape}")
    if values.ndim != 2:
        raise ValueError("single-best protocol needs a 2-D matrix")
    if int(gtv.sum()) == 0:
        raise ValueError("no positives: precision/recall undefined")
    thr = _prep_thresholds(thresholds)
    best_rows = np.argmax(values, axis=0)
    cols = np.arange(values.shape[1])
    best_vals = values[best_rows, cols]
    best_hit = gtv[best_rows, cols]
    qpos = int((gtv.sum(axis=0) > 0).sum())
    tp, fp, _ = kernels.sweep_counts(best_vals, best_hit, thr)
    fn = qpos - tp
    return SweepResult(thr, tp, fp, fn, "single_best", qpos)


def pr_curve(sweep: SweepResult) -> PrCurve:
    """Precision/recall points from a sweep (thresholds with TP = 0 carry
    no retrieval and are dropped; an all-TP=0 sweep gives an empty curve)."""
    tp = sweep.tp.astype(np.float64)
    fp = sweep.fp.astype(np.float64)
    fn = sweep.fn.astype(np.float64)
    mask = sweep.tp > 0
    precision = tp[mask] / (tp[mask] + fp[mask])
    recall = tp[mask] / (tp[mask] + fn[mask])
    thr = sweep.thresholds[mask]
    order = np.lexsort((-precision, recall))
    recall, precision, thr = recall[order], precision[order], thr[order]
    if recall.size:
        keep = np.concatenate(
            ([True], (np.diff(recall) != 0) | (np.diff(precision) != 0))
        )
        recall, precision, thr = recall[keep], precision[keep], thr[keep]
    return PrCurve(recall, precision, thr, sweep.protocol)


def auc(curve: PrCurve) -> float:
    """Trapezoidal area under the curve, extended horizontally from the
    lowest-recall point down to recall 0 and not beyond the highest recall."""
    if curve.is_empty:
        raise ValueError("empty curve: AUC undefined")
    r = curve.recalls
    p = curve.precisions
    area = float(r[0] * p[0])
    for i in range(1, r.size):
        area += float((r[i] - r[i - 1]) * (p[i] + p[i - 1]) / 2.0)
    return area


def max_f1(curve: PrCurve) -> float:
    """Maximum harmonic mean of precision and recall over the curve."""
    if curve.is_empty:
        raise ValueError("empty curve: max F1 undefined")
    best = 0.0
    for r, p in zip(curve.recalls, curve.precisions):
        s = p + r
        f1 = 0.0 if s == 0 else 2.0 * p * r / s
        best = max(best, float(f1))
    return best


def recall_at_100_precision(sweep: SweepResult) -> float:
    """Maximum recall among thresholds with zero false positives (and at
    least one true positive); 0 when precision never reaches 100%."""
    mask = (sweep.fp == 0) & (sweep.tp > 0)
    if not mask.any():
        return 0.0
    tp = sweep.tp[mask].astype(np.float64)
    fn = sweep.fn[mask].astype(np.float64)
    return float(np.max(tp / (tp + fn)))


def extended_precision(sweep: SweepResult) -> float:
    """(precision at the smallest positive recall + recall at 100%
    precision) / 2; the smallest-recall precision is the best one when
    several thresholds share that recall."""
    mask = sweep.tp > 0
    if not mask.any():
        return 0.0
    tp = sweep.tp[mask].astype(np.float64)
    fp = sweep.fp[mask].astype(np.float64)
    fn = sweep.fn[mask].astype(np.float64)
    recall = tp / (tp + fn)
    precision = tp / (tp + fp)
    rmin = recall.min()
    p_at_min = float(precision[recall == rmin].max())
    return (p_at_min + recall_at_100_precision(sweep)) / 2.0


def recall_at_k(S, gt, k: int) -> float:
    """Fraction of positive-bearing queries whose top-k database rows
    contain at least one ground-truth positive."""
    values = _sim_values(S)
    gtv = _gt_values(gt)
    if values.shape != gtv.shape:
        raise ValueError(f"shape mismatch: {values.shape} vs {gtv.shape}")
    n, m = values.shape
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}]")
    has_pos = gtv.sum(axis=0) > 0
    if not has_pos.any():
        raise ValueError("no query has positives")
    top = _similarity.topk_candidates(values, k)
    hits = 0
    total = 0
    for j in range(m):
        if not has_pos[j]:
            continue
        total += 1
        if gtv[top[j], j].any():
            hits += 1
    return hits / total


# --- CSV emission -----------------------------------------------------------

def sweep_csv(sweep: SweepResult) -> str:
    lines = ["threshold,tp,fp,fn,precision,recall"]
    for t, tp, fp, fn in sweep.points:
        denom = tp + fp
        precision = repr(tp / denom) if denom else "nan"
        rdenom = tp + fn
        recall = repr(tp / rdenom) if rdenom else "nan"
        lines.append(f"{repr(t)},{tp},{fp},{fn},{precision},{recall}")
    return "\n".join(lines) + "\n"


def scalar_metrics(sweep: SweepResult) -> dict[str, float]:
    """The four headline scalars; degenerate sweeps (no TP anywhere) give 0."""
    curve = pr_curve(sweep)
    if curve.is_empty:
        return {"auc": 0.0, "max_f1": 0.0,
                "recall_at_100_precision": 0.0, "extended_precision": 0.0}
    return {
        "auc": auc(curve),
        "max_f1": max_f1(curve),
        "recall_at_100_precision": recall_at_100_precision(sweep),
        "extended_precision": extended_precision(sweep),
    }


def metrics_csv(values: dict[str, float]) -> str:
    lines = ["metric,value"]
    for name, value in values.items():
        lines.append(f"{name},{repr(float(value))}")
    return "\n".join(lines) + "\n"
