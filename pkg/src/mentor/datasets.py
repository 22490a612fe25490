"""Samples, annotation fusion, canonical resizing, subject-disjoint splits and
JSON-lines manifests."""

from __future__ import annotations

import dataclasses
import json
import os

import numpy as np
from scipy import ndimage

from .errors import DataError
from .pgm import read_pgm, write_pgm

SPLITS = ("train", "val", "test")


@dataclasses.dataclass
class Sample:
    image: np.ndarray  # (1, H, W) float32 in [0, 1]
    label: int | None = None
    saliency: np.ndarray | None = None  # (H, W) float32 in [0, 1]
    subject_id: str = ""
    split: str = "train"
    meta: dict = dataclasses.field(default_factory=dict)


class SampleSet:
    """Ordered collection of samples with split-aware accessors."""

    def __init__(self, samples):
        self.samples = list(samples)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def subset(self, split):
        return SampleSet(s for s in self.samples if s.split == split)

    def images(self):
        if not self.samples:
            return np.zeros((0, 1, 0, 0), np.float32)
        return np.stack([s.image for s in self.samples]).astype(np.float32)

    def labels(self):
        if any(s.label is None for s in self.samples):
            raise DataError("some samples carry no label")
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def saliency(self):
        """Stacked maps as (N, 1, H, W); raises if any sample lacks one."""
        missing = [i for i, s in enumerate(self.samples) if s.saliency is None]
        if missing:
            raise DataError(f"{len(missing)} samples lack a saliency map (first index {missing[0]})")
        return np.stack([s.saliency for s in self.samples])[:, None].astype(np.float32)

    def subjects(self):
        return {s.subject_id for s in self.samples}

    def with_labels(self, labels):
        labels = list(labels)
        if len(labels) != len(self.samples):
            raise ValueError("label count does not match sample count")
        return SampleSet(dataclasses.replace(s, label=None if y is None else int(y))
                         for s, y in zip(self.samples, labels))

    def counts(self):
        """{split: {label: count}} with unlabeled samples under ``None``."""
        out = {}
        for s in self.samples:
            per = out.setdefault(s.split, {})
            per[s.label] = per.get(s.label, 0) + 1
        return out


# -------------------------------------------------------------------- fusion
def _stack_maps(maps):
    maps = [np.asarray(m, dtype=np.float64) for m in maps]
    if not maps:
        raise DataError("cannot fuse an empty list of maps")
    shape = maps[0].shape
    for m in maps[1:]:
        if m.shape != shape:
            raise DataError(f"saliency maps differ in shape: {shape} vs {m.shape}")
    return np.stack(maps)


def fuse_annotations_mean(maps):
    """Per-pixel mean of several annotators' maps."""
    return _stack_maps(maps).mean(axis=0).astype(np.float32)


def fuse_annotations_max(maps):
    """Per-pixel maximum, keeping whatever any single annotator marked."""
    return _stack_maps(maps).max(axis=0).astype(np.float32)


FUSIONS = {"mean": fuse_annotations_mean, "max": fuse_annotations_max}


# -------------------------------------------------------------------- resize
def resize_canonical(arr, target_extent):
    """Bilinear resize of an (H, W) or (C, H, W) array to a square extent.

    Pixel centres are aligned (half-pixel convention) and borders are
    clamped, so outputs never leave the input's value range.
    """
    if isinstance(target_extent, int):
        target_extent = (target_extent, target_extent)
    th, tw = target_extent
    arr = np.asarray(arr)
    if th <= 0 or tw <= 0 or 0 in arr.shape:
        raise ValueError(f"resize needs positive extents, got {arr.shape} -> {target_extent}")
    if arr.ndim == 3:
        return np.stack([resize_canonical(c, target_extent) for c in arr])
    h, w = arr.shape
    if (h, w) == (th, tw):
        return arr.astype(np.float32, copy=True)
    ys = np.clip((np.arange(th) + 0.5) * (h / th) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(tw) + 0.5) * (w / tw) - 0.5, 0, w - 1)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = ndimage.map_coordinates(arr.astype(np.float64), [yy, xx], order=1, mode="nearest")
    return np.clip(out, arr.min(), arr.max()).astype(np.float32)


# -------------------------------------------------------------------- splits
def split_subject_disjoint(samples, ratios, seed, names=SPLITS):
    """Assign whole subjects to splits in proportion to ``ratios``."""
    ratios = np.asarray(ratios, dtype=np.float64)
    if len(ratios) > len(names):
        raise ValueError("more ratios than split names")
    if np.any(ratios < 0) or abs(ratios.sum() - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be nonnegative and sum to 1, got {ratios.tolist()}")
    samples = list(samples)
    subjects = sorted({s.subject_id for s in samples})
    if len(subjects) < len(ratios):
        raise DataError(f"{len(subjects)} subjects cannot fill {len(ratios)} splits")
    order = np.random.default_rng(seed).permutation(len(subjects))
    bounds = np.rint(np.cumsum(ratios) * len(subjects)).astype(int)
    bounds[-1] = len(subjects)
    assign = {}
    start = 0
    for name, stop in zip(names, bounds):
        for i in order[start:stop]:
            assign[subjects[i]] = name
        start = stop
    return SampleSet(dataclasses.replace(s, split=assign[s.subject_id]) for s in samples)


def check_subject_disjoint(samples):
    """Raise if any subject appears in more than one split."""
    seen = {}
    for s in samples:
        prev = seen.setdefault(s.subject_id, s.split)
        if prev != s.split:
            raise DataError(f"subject {s.subject_id!r} appears in both {prev!r} and {s.split!r}")


# ------------------------------------------------------------------ manifest
def load_manifest(path, extent=None):
    """Read a JSON-lines manifest; saliency from annotators flagged incorrect
    is dropped before fusion. Paths are relative to the manifest's folder."""
    root = os.path.dirname(os.path.abspath(path))
    samples = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            samples.append(_sample_from_record(rec, root, extent, f"{path}:{lineno}"))
    out = SampleSet(samples)
    check_subject_disjoint(out)
    return out


def _sample_from_record(rec, root, extent, where):
    for key in ("image_path", "subject_id", "split"):
        if key not in rec:
            raise DataError(f"{where}: missing field {key!r}")
    if rec["split"] not in SPLITS:
        raise DataError(f"{where}: unknown split {rec['split']!r}")
    image = read_pgm(os.path.join(root, rec["image_path"]))
    paths = rec.get("saliency_paths") or []
    correct = rec.get("annotator_correct")
    if correct is None:
        correct = [True] * len(paths)
    if len(correct) != len(paths):
        raise DataError(f"{where}: annotator_correct has {len(correct)} entries for {len(paths)} maps")
    maps = [read_pgm(os.path.join(root, p)) for p, ok in zip(paths, correct) if ok]
    fusion = rec.get("fusion", "mean")
    if fusion not in FUSIONS:
        raise DataError(f"{where}: unknown fusion {fusion!r}")
    saliency = FUSIONS[fusion](maps) if maps else None
    if extent is not None:
        if image.shape != (extent, extent):
            image = resize_canonical(image, extent)
        if saliency is not None and saliency.shape != (extent, extent):
            saliency = resize_canonical(saliency, extent)
    label = rec.get("label")
    return Sample(image=image[None].astype(np.float32),
                  label=None if label is None else int(label),
                  saliency=saliency, subject_id=str(rec["subject_id"]), split=rec["split"],
                  meta=dict(rec.get("meta", {})))


def write_manifest(samples, out_dir, name="manifest.jsonl"):
    """Write PGM files and a manifest describing ``samples`` under ``out_dir``."""
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "saliency"), exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        for i, s in enumerate(samples):
            img_rel = f"images/{s.split}_{i:05d}.pgm"
            write_pgm(os.path.join(out_dir, img_rel), s.image[0])
            rec = {"image_path": img_rel, "label": s.label, "subject_id": s.subject_id,
                   "split": s.split, "saliency_paths": [], "annotator_correct": [],
                   "fusion": "mean"}
            if s.saliency is not None:
                sal_rel = f"saliency/{s.split}_{i:05d}.pgm"
                write_pgm(os.path.join(out_dir, sal_rel), s.saliency)
                rec["saliency_paths"] = [sal_rel]
                rec["annotator_correct"] = [True]
            if s.meta:
                rec["meta"] = s.meta
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path
