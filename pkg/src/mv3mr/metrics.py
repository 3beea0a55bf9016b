"""Ranking metrics for multi-label evaluation: 11-point AP, AUC and ranking loss.

Ground truth may be given as {0, 1} or {-1, +1}; entries > 0 count as
positive.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class UndefinedMetric(ValueError):
    """The metric is undefined for this input (e.g. no positives)."""


def _pair(scores, truth):
    s = np.asarray(scores, dtype=float).ravel()
    t = np.asarray(truth).ravel() > 0
    if s.shape != t.shape:
        raise ValueError(f"scores and truth differ in length: {s.size} vs {t.size}")
    return s, t


def precision_recall_points(scores, truth):
    """Precision and recall at every cut-off of the ranking.

    The ranking sorts scores in decreasing order; equal scores keep their
    original index order.
    """
    s, t = _pair(scores, truth)
    order = np.argsort(-s, kind="stable")
    tp = np.cumsum(t[order])
    k = np.arange(1, s.size + 1)
    npos = int(t.sum())
    if npos == 0:
        raise UndefinedMetric("no positive samples")
    return tp / k, tp / npos


def average_precision_11pt(scores, truth) -> float:
    """Mean over r in {0, 0.1, ..., 1} of the best precision at recall >= r."""
    s, t = _pair(scores, truth)
    npos = int(t.sum())
    if npos == 0:
        raise UndefinedMetric("no positive samples")
    order = np.argsort(-s, kind="stable")
    tp = np.cumsum(t[order])
    precision = tp / np.arange(1, s.size + 1)
    total = 0.0
    for r in range(11):
        # recall >= r/10, compared in integers
        reached = 10 * tp >= r * npos
        total += precision[reached].max()
    return total / 11.0


def auc(scores, truth) -> float:
    """Mann-Whitney estimate; tied positive/negative pairs get half credit."""
    s, t = _pair(scores, truth)
    npos = int(t.sum())
    nneg = s.size - npos
    if npos == 0 or nneg == 0:
        raise UndefinedMetric("AUC needs at least one positive and one negative")
    ranks = rankdata(s)
    return float((ranks[t].sum() - npos * (npos + 1) / 2.0) / (npos * nneg))


def ranking_loss_per_sample(scores, truth) -> np.ndarray:
    """Fraction of (relevant, irrelevant) label pairs with ``f(rel) <= f(irr)``.

    Rows with no relevant or no irrelevant label get NaN.
    """
    S = np.atleast_2d(np.asarray(scores, dtype=float))
    T = np.atleast_2d(np.asarray(truth)) > 0
    if S.shape != T.shape:
        raise ValueError(f"score and truth shapes differ: {S.shape} vs {T.shape}")
    out = np.full(S.shape[0], np.nan)
    for i in range(S.shape[0]):
        pos, neg = S[i, T[i]], S[i, ~T[i]]
        if pos.size and neg.size:
            out[i] = np.count_nonzero(pos[:, None] <= neg[None, :]) / (pos.size * neg.size)
    return out


def ranking_loss(scores, truth) -> float:
    """Mean ranking loss over samples with a nonempty, non-full label set."""
    per = ranking_loss_per_sample(scores, truth)
    if np.all(np.isnan(per)):
        raise UndefinedMetric("no sample has both relevant and irrelevant labels")
    return float(np.nanmean(per))


def mean_over_labels(values, valid=None) -> tuple[float, int]:
    """Masked mean. Returns ``(mean, number_of_invalid_entries)``.

    Without an explicit mask, NaN entries are invalid.
    """
    v = np.asarray(values, dtype=float).ravel()
    mask = ~np.isnan(v) if valid is None else np.asarray(valid, dtype=bool).ravel()
    if not np.any(mask):
        raise UndefinedMetric("no valid labels")
    return float(v[mask].mean()), int(v.size - mask.sum())


def per_label(metric, scores, truth) -> np.ndarray:
    """Apply a per-label metric column by column; undefined columns give NaN."""
    S = np.asarray(scores, dtype=float)
    T = np.asarray(truth)
    out = np.full(S.shape[1], np.nan)
    for j in range(S.shape[1]):
        try:
            out[j] = metric(S[:, j], T[:, j])
        except UndefinedMetric:
            pass
    return out


def evaluate(scores, truth) -> dict:
    """mAP, mAUC, RL and per-label AP/AUC with counts of undefined entries."""
    ap = per_label(average_precision_11pt, scores, truth)
    au = per_label(auc, scores, truth)
    rl = ranking_loss_per_sample(scores, truth)
    report = {}
    for key, values in (("mAP", ap), ("mAUC", au), ("RL", rl)):
        try:
            report[key], report[f"{key}_invalid"] = mean_over_labels(values)
        except UndefinedMetric:
            # e.g. ranking loss with a single label: report NaN rather than fail
            report[key], report[f"{key}_invalid"] = float("nan"), int(np.size(values))
    for j in range(ap.size):
        report[f"AP.{j}"] = ap[j]
        report[f"AUC.{j}"] = au[j]
    return report
