"""Procedural anomaly-detection task with ground-truth saliency.

Bona fide images are a subject-specific smooth background over a fixed
structural pattern. Anomalous images add one localized defect; its support
mask, softened by two 3x3 box blurs, is the ground-truth saliency. Training
and validation anomalies use the known defect kinds and, with probability
``spurious_cue_strength``, also carry a bright corner patch that predicts the
label without being part of the defect. Test anomalies use only the unknown
kinds and never carry the cue.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy import ndimage

from .datasets import Sample, SampleSet
from .errors import ConfigError

DEFECT_KINDS = ("blob", "stripe", "ring", "checker")
CUE_SIZE = 3
CUE_OFFSET = 1


@dataclasses.dataclass
class SyntheticTaskSpec:
    extent: int = 32
    n_train: int = 600
    n_val: int = 150
    n_test: int = 800
    known_anomaly_kinds: tuple = ("blob", "stripe")
    unknown_anomaly_kinds: tuple = ("ring", "checker")
    spurious_cue_strength: float = 1.0
    noise_sigma: float = 0.03
    defect_contrast: tuple = (0.15, 0.25)
    anomaly_fraction: float = 2.0 / 3.0
    samples_per_subject: int = 5
    seed: int = 0

    def validate(self):
        known, unknown = set(self.known_anomaly_kinds), set(self.unknown_anomaly_kinds)
        if known & unknown:
            raise ConfigError(f"known and unknown anomaly kinds overlap: {sorted(known & unknown)}")
        bad = (known | unknown) - set(DEFECT_KINDS)
        if bad:
            raise ConfigError(f"unknown defect kinds {sorted(bad)}; choose from {DEFECT_KINDS}")
        if not known or not unknown:
            raise ConfigError("need at least one known and one unknown anomaly kind")
        if min(self.n_train, self.n_val, self.n_test) <= 0:
            raise ConfigError("sample counts must be positive")
        if self.extent < 16:
            raise ConfigError(f"extent must be at least 16, got {self.extent}")
        if not 0.0 <= self.spurious_cue_strength <= 1.0:
            raise ConfigError("spurious_cue_strength must lie in [0, 1]")
        if not 0.0 < self.anomaly_fraction < 1.0:
            raise ConfigError("anomaly_fraction must lie strictly between 0 and 1")
        lo, hi = self.defect_contrast
        if not 0 < lo <= hi:
            raise ConfigError(f"defect_contrast must satisfy 0 < low <= high, got {self.defect_contrast}")
        if self.noise_sigma < 0 or self.samples_per_subject < 1:
            raise ConfigError("noise_sigma must be >= 0 and samples_per_subject >= 1")
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["known_anomaly_kinds"] = list(self.known_anomaly_kinds)
        d["unknown_anomaly_kinds"] = list(self.unknown_anomaly_kinds)
        d["defect_contrast"] = list(self.defect_contrast)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown SyntheticTaskSpec fields: {sorted(unknown)}")
        d = dict(d)
        for key in ("known_anomaly_kinds", "unknown_anomaly_kinds", "defect_contrast"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def box_blur(mask):
    # direct 3x3 sums keep untouched pixels exactly zero
    return ndimage.correlate(mask.astype(np.float64), np.ones((3, 3)), mode="constant") / 9.0


def structural_pattern(extent):
    """Fixed darker disc with a soft rim, centred in the frame."""
    yy, xx = np.mgrid[0:extent, 0:extent] + 0.5
    r = np.hypot(yy - extent / 2, xx - extent / 2) / extent
    return -0.15 / (1.0 + np.exp((r - 0.3) * 40.0))


def smooth_field(rng, extent, amplitude=0.08, grid=4):
    coarse = rng.normal(0.0, amplitude, size=(grid, grid))
    return ndimage.zoom(coarse, extent / grid, order=3, mode="nearest")[:extent, :extent]


def _defect(kind, rng, extent, contrast_range):
    """Return (signed intensity field, support mask) for one defect."""
    size = 9
    half = size // 2
    lo = CUE_OFFSET + CUE_SIZE + 2 + half
    cy, cx = rng.integers(lo, extent - half - 1, size=2)
    yy, xx = np.mgrid[0:extent, 0:extent]
    dy, dx = yy - cy, xx - cx
    contrast = rng.uniform(*contrast_range) * rng.choice([-1.0, 1.0])
    if kind == "blob":
        mask = np.hypot(dy, dx) <= rng.uniform(2.5, 3.8)
        field = contrast * mask
    elif kind == "stripe":
        theta = rng.uniform(0, np.pi)
        along = dx * np.cos(theta) + dy * np.sin(theta)
        across = -dx * np.sin(theta) + dy * np.cos(theta)
        mask = (np.abs(along) <= 4.0) & (np.abs(across) <= 1.0)
        field = contrast * mask
    elif kind == "ring":
        r = np.hypot(dy, dx)
        mask = (r <= 4.2) & (r >= 2.2)
        field = contrast * mask
    elif kind == "checker":
        mask = (np.abs(dy) <= 3) & (np.abs(dx) <= 3)
        sign = np.where(((dy + 3) // 2 + (dx + 3) // 2) % 2 == 0, 1.0, -1.0)
        field = abs(contrast) * sign * mask
    else:
        raise ConfigError(f"unknown defect kind {kind!r}")
    return field, mask


def bounding_box(mask):
    """(row0, col0, row1, col1) inclusive bounds of the nonzero region."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return [int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1])]


def _make_sample(rng, spec, background, anomalous, kinds, cue_prob, subject, split):
    e = spec.extent
    img = background + rng.normal(0.0, spec.noise_sigma, size=(e, e)) + rng.uniform(-0.03, 0.03)
    saliency = np.zeros((e, e), np.float32)
    meta = {"kind": None, "cue": False}
    if anomalous:
        kind = kinds[rng.integers(len(kinds))]
        field, mask = _defect(kind, rng, e, spec.defect_contrast)
        img = img + field
        sal = box_blur(box_blur(mask))
        saliency = (sal / sal.max()).astype(np.float32)
        meta["kind"] = kind
        meta["bbox"] = bounding_box(saliency > 0)
        meta["defect_bbox"] = bounding_box(mask)
        if rng.random() < cue_prob:
            a, b = CUE_OFFSET, CUE_OFFSET + CUE_SIZE
            img[a:b, a:b] = 0.95
            meta["cue"] = True
    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    return Sample(image=img[None], label=int(anomalous), saliency=saliency,
                  subject_id=subject, split=split, meta=meta)


def generate_synthetic_task(spec):
    """Deterministic SampleSet for ``spec`` with subject-disjoint splits."""
    spec.validate()
    e = spec.extent
    pattern = 0.55 + structural_pattern(e)
    split_plan = [
        ("train", spec.n_train, tuple(spec.known_anomaly_kinds), spec.spurious_cue_strength),
        ("val", spec.n_val, tuple(spec.known_anomaly_kinds), spec.spurious_cue_strength),
        ("test", spec.n_test, tuple(spec.unknown_anomaly_kinds), 0.0),
    ]
    root = np.random.SeedSequence(spec.seed)
    samples = []
    for (split, n, kinds, cue_prob), ss in zip(split_plan, root.spawn(len(split_plan))):
        rng = np.random.default_rng(ss)
        n_anom = int(round(n * spec.anomaly_fraction))
        labels = np.array([1] * n_anom + [0] * (n - n_anom))
        labels = labels[rng.permutation(n)]
        background = None
        for i, y in enumerate(labels):
            if i % spec.samples_per_subject == 0:
                subject = f"{split}-{i // spec.samples_per_subject:04d}"
                background = pattern + smooth_field(rng, e)
            samples.append(_make_sample(rng, spec, background, bool(y), kinds, cue_prob,
                                        subject, split))
    return SampleSet(samples)


def corner_cue_score(images):
    """Mean intensity of the corner patch where the shortcut cue lives."""
    a, b = CUE_OFFSET, CUE_OFFSET + CUE_SIZE
    images = np.asarray(images)
    return images[:, 0, a:b, a:b].mean(axis=(1, 2))
