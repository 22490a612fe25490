"""Classification, saliency-matching and joint training losses."""

from __future__ import annotations

import dataclasses

import numpy as np

from . import autodiff as ad
from .errors import ConfigError

KINDS = ("xent", "joint_cam", "joint_gaze", "mentor_pretrain")


@dataclasses.dataclass
class LossConfig:
    kind: str = "xent"
    alpha: float = 0.5
    dissimilarity: str = "mse"
    per_pixel: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.dissimilarity not in ("mse", "l1"):
            raise ConfigError(f"unknown dissimilarity {self.dissimilarity!r}")


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"saliency shapes differ: {a.shape} vs {b.shape}")


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of ``labels`` under softmax(logits)."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    picked = ad.gather_rows(ad.log_softmax(logits, axis=1), labels)
    return -ad.mean(picked)


def salience_dissimilarity(predicted, human, d="mse"):
    """Batch mean of the per-pixel dissimilarity between two stacks of maps."""
    predicted = ad.as_tensor(predicted)
    human = ad.as_tensor(human, like=predicted)
    _check_same_shape(predicted, human)
    diff = predicted - human
    if d == "mse":
        per_pixel = ad.square(diff)
    elif d == "l1":
        per_pixel = ad.tabs(diff)
    else:
        raise ConfigError(f"unknown dissimilarity {d!r}")
    return ad.mean(per_pixel)


def joint_loss(logits, labels, model_saliency, human_saliency, alpha=0.5, d="mse"):
    """``alpha * cross_entropy + (1 - alpha) * salience_dissimilarity``."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    return combine(cross_entropy(logits, labels),
                   salience_dissimilarity(model_saliency, human_saliency, d), alpha)


def combine(classification, saliency, alpha):
    return classification * float(alpha) + saliency * (1.0 - float(alpha))


def mentor_pretrain_loss(predicted, human, per_pixel=True):
    """Mean over the batch of the squared L2 distance between map pairs.

    With ``per_pixel`` (the default) each squared norm is divided by the pixel
    count, so the value does not depend on resolution. Takes no labels.
    """
    predicted = ad.as_tensor(predicted)
    human = ad.as_tensor(human, like=predicted)
    _check_same_shape(predicted, human)
    sq = ad.square(predicted - human)
    if per_pixel:
        return ad.mean(sq)
    k = predicted.shape[0]
    return ad.tsum(sq) / float(k)


def normalize_human_map(m):
    """Min-max normalise one map to [0, 1]; flat maps become zeros."""
    m = np.asarray(m, dtype=np.float32)
    lo, hi = float(m.min()), float(m.max())
    if hi == lo:
        return np.zeros_like(m)
    return ((m - lo) / (hi - lo)).astype(np.float32)
