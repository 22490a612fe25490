"""AUROC, run aggregation and salience entropy."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import MetricError


@dataclasses.dataclass(frozen=True)
class ScoredSample:
    score: float
    label: int


def _split(scores, labels):
    if labels is None:
        samples = list(scores)
        scores = [s.score for s in samples]
        labels = [s.label for s in samples]
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")
    return scores, labels


def auroc(scores, labels=None):
    """Mann-Whitney AUROC; ties count one half.

    Accepts either ``(scores, labels)`` arrays or a sequence of
    :class:`ScoredSample`.  Runs in O(N log N) with integer pair counts, so
    the only rounding is the final division.
    """
    scores, labels = _split(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC needs at least one positive and one negative sample")
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    # group equal scores; count negatives strictly below each positive
    starts = np.r_[0, np.flatnonzero(np.diff(s)) + 1]
    pos_here = np.add.reduceat(y, starts)
    neg_here = np.diff(np.r_[starts, s.size]) - pos_here
    neg_below = np.cumsum(neg_here) - neg_here
    # doubled so ties stay integral
    twice_concordant = int(np.sum(2 * pos_here * neg_below + pos_here * neg_here))
    return twice_concordant / (2 * n_pos * n_neg)


def roc_points(scores, labels):
    """(FPR, TPR) arrays over all distinct thresholds, starting at (0, 0)."""
    scores, labels = _split(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    n_pos, n_neg = max(int(y.sum()), 1), max(int((1 - y).sum()), 1)
    return np.r_[0.0, fp / n_neg], np.r_[0.0, tp / n_pos]


def aggregate(values):
    """Mean and sample standard deviation (0 for a single value)."""
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise MetricError("cannot aggregate an empty list")
    m = float(v.mean())
    if v.size == 1:
        return m, 0.0
    return m, float(v.std(ddof=1))


def salience_entropy(saliency):
    """Shannon entropy of the map as a distribution, divided by log(pixels)."""
    m = np.asarray(saliency, dtype=np.float64)
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise MetricError("saliency must be finite and nonnegative")
    total = m.sum()
    if total <= 0:
        raise MetricError("salience entropy is undefined for an all-zero map")
    if m.size == 1:
        return 0.0
    p = m[m > 0] / total
    h = -float(np.sum(p * np.log(p)))
    return min(max(0.0, h / math.log(m.size)), 1.0)
