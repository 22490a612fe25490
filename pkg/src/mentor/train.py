"""Training strategies: saliency pretraining (step 1), classification
fine-tuning (step 2), the single-phase baselines, and saliency synthesis."""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import time

import numpy as np

from . import autodiff as ad
from .checkpoint import load_checkpoint, save_model
from .errors import ConfigError, DataError
from .losses import (combine, cross_entropy, mentor_pretrain_loss, normalize_human_map,
                     salience_dissimilarity)
from .metrics import auroc, salience_entropy
from .models import (Autoencoder, build_autoencoder, build_classifier, build_encoder,
                     build_gaze_classifier, cam_maps, class_activation_map, forward_saliency)
from .optim import OptimizerSpec

log = logging.getLogger(__name__)

PHASES = ("step1", "step2", "baseline_xent", "baseline_joint_cam", "baseline_joint_gaze")
BASELINES = ("xent", "joint_cam", "joint_gaze")
EVAL_BATCH = 64


@dataclasses.dataclass
class TrainSpec:
    phase: str = "step2"
    optimizer: OptimizerSpec = dataclasses.field(default_factory=OptimizerSpec.sgd)
    batch_size: int = 8
    max_epochs: int = 50
    # stop once val loss has not improved for this many epochs (0 disables)
    patience: int = 10
    seed: int = 0
    # "random" or a checkpoint path
    init: str = "random"
    alpha: float = 0.5
    dissimilarity: str = "mse"
    per_pixel: bool = True

    def validate(self):
        if self.phase not in PHASES:
            raise ConfigError(f"unknown phase {self.phase!r}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ConfigError("batch_size and max_epochs must be >= 1, patience >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        self.optimizer.validate()
        return self

    @classmethod
    def step1(cls, **kw):
        kw.setdefault("optimizer", OptimizerSpec.adamw())
        return cls(phase="step1", **kw)

    @classmethod
    def step2(cls, **kw):
        kw.setdefault("optimizer", OptimizerSpec.sgd())
        return cls(phase="step2", **kw)

    @classmethod
    def baseline(cls, kind, **kw):
        kw.setdefault("optimizer", OptimizerSpec.sgd())
        return cls(phase=f"baseline_{kind}", **kw)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["optimizer"] = self.optimizer.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown TrainSpec fields: {sorted(unknown)}")
        if "optimizer" in d and isinstance(d["optimizer"], dict):
            d["optimizer"] = OptimizerSpec.from_dict(d["optimizer"])
        return cls(**d)


@dataclasses.dataclass
class RunReport:
    strategy: str
    phase: str
    seed: int
    train_loss: list = dataclasses.field(default_factory=list)
    val_loss: list = dataclasses.field(default_factory=list)
    lr: list = dataclasses.field(default_factory=list)
    initial_val_loss: float | None = None
    best_epoch: int = -1
    metrics: dict = dataclasses.field(default_factory=dict)
    first_batch_grad_norms: dict = dataclasses.field(default_factory=dict)
    checkpoint: str | None = None
    status: str = "ok"
    error: str | None = None
    wall_time: float = dataclasses.field(default=0.0, compare=False)

    def to_dict(self):
        return dataclasses.asdict(self)

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


# ------------------------------------------------------------------ helpers
def epoch_rng(seed, epoch):
    """Shuffling RNG for one epoch, derived from (run seed, epoch)."""
    return np.random.default_rng([int(seed), int(epoch)])


def _batches(n, batch_size, order):
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _human_maps(samples):
    """Normalised saliency targets (N,1,H,W); labels are never read."""
    sal = samples.saliency()
    return np.stack([normalize_human_map(m[0]) for m in sal])[:, None]


def _grad_norm(params):
    return float(np.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params)))


def _copy_state(model):
    return {k: v.copy() for k, v in model.state_dict().items()}


def _fit(model, batch_loss, val_loss, n_train, spec, report, groups=None, on_epoch=None):
    """Shared epoch loop with best-val-loss checkpoint selection.

    ``batch_loss(idx)`` returns a scalar tensor for the training rows ``idx``;
    ``val_loss()`` returns a float. Restores the best state into ``model``.
    """
    params = model.parameters()
    opt = spec.optimizer.build(params)
    report.initial_val_loss = float(val_loss())
    best = (np.inf, -1, _copy_state(model))
    stale = 0
    for epoch in range(spec.max_epochs):
        opt.lr = spec.optimizer.lr_at(epoch)
        order = epoch_rng(spec.seed, epoch).permutation(n_train)
        total = 0.0
        for b, idx in enumerate(_batches(n_train, spec.batch_size, order)):
            opt.zero_grad()
            loss = batch_loss(idx)
            loss.backward()
            if epoch == 0 and b == 0 and groups:
                report.first_batch_grad_norms = {k: _grad_norm(v) for k, v in groups.items()}
            opt.step()
            total += loss.item() * len(idx)
        if opt.has_nan():
            raise FloatingPointError(f"optimizer state became non-finite in epoch {epoch}")
        v = float(val_loss())
        report.train_loss.append(total / n_train)
        report.val_loss.append(v)
        report.lr.append(opt.lr)
        log.debug("%s seed=%d epoch=%d train=%.5f val=%.5f", report.strategy, spec.seed,
                  epoch, total / n_train, v)
        if on_epoch is not None:
            on_epoch(epoch, model, report)
        if v < best[0]:
            best = (v, epoch, _copy_state(model))
            stale = 0
        else:
            stale += 1
            if spec.patience and stale >= spec.patience:
                break
    report.best_epoch = best[1]
    model.load_state_dict(best[2])


def predict_saliency(enc, dec, images, batch=EVAL_BATCH):
    out = []
    with ad.no_grad():
        for i in range(0, len(images), batch):
            out.append(forward_saliency(enc, dec, ad.Tensor(images[i:i + batch])).data)
    return np.concatenate(out) if out else np.zeros((0,) + images.shape[1:], np.float32)


def predict_scores(model, images, batch=EVAL_BATCH):
    """Softmax probability of the anomalous class (index 1)."""
    out = []
    with ad.no_grad():
        for i in range(0, len(images), batch):
            logits = model(ad.Tensor(images[i:i + batch])).data
            out.append(ad.softmax(ad.Tensor(logits.astype(np.float64)), axis=1).data[:, 1])
    return np.concatenate(out)


def _eval_xent(model, images, labels, batch=EVAL_BATCH):
    total = 0.0
    with ad.no_grad():
        for i in range(0, len(images), batch):
            loss = cross_entropy(model(ad.Tensor(images[i:i + batch])), labels[i:i + batch])
            total += loss.item() * len(labels[i:i + batch])
    return total / len(labels)


def mass_in_support_box(pred, target):
    """Fraction of predicted mass inside the bounding box of ``target > 0``."""
    rows = np.flatnonzero((target > 0).any(axis=1))
    cols = np.flatnonzero((target > 0).any(axis=0))
    inside = pred[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1].sum(dtype=np.float64)
    return float(inside / pred.sum(dtype=np.float64))


def saliency_metrics(pred, target):
    """Label-free summary of predicted maps against ground-truth maps."""
    pred = pred[:, 0]
    target = target[:, 0]
    annotated = [i for i in range(len(target)) if target[i].max() > 0]
    out = {"saliency_entropy": float(np.mean([salience_entropy(p) for p in pred]))}
    if annotated:
        out["mass_in_bbox"] = float(np.mean([mass_in_support_box(pred[i], target[i])
                                             for i in annotated]))
    return out


def cam_entropy(model, images, class_index=1):
    """Mean salience entropy of CAMs; flat (all-zero) CAMs are skipped."""
    vals = []
    for img in images:
        cam = class_activation_map(model, img, class_index)
        if cam.max() > 0:
            vals.append(salience_entropy(cam))
    return (float(np.mean(vals)) if vals else None), len(images) - len(vals)


def classifier_metrics(model, data):
    test = data.subset("test")
    out = {}
    if len(test):
        images = test.images()
        labels = test.labels()
        out["test_auroc"] = auroc(predict_scores(model, images), labels)
        out["test_s_entropy"], out["test_flat_cams"] = cam_entropy(model, images)
    val = data.subset("val")
    if len(val):
        labels = val.labels()
        if 0 < labels.sum() < len(labels):
            out["val_auroc"] = auroc(predict_scores(model, val.images()), labels)
    return out


def _report(strategy, spec):
    return RunReport(strategy=strategy, phase=spec.phase, seed=spec.seed)


def _require_split(data, split):
    part = data.subset(split)
    if not len(part):
        raise DataError(f"dataset has no {split!r} samples")
    return part


# ------------------------------------------------------------------- step 1
def train_step1(enc, dec, data, spec, out_dir=None, strategy="mentor", on_epoch=None):
    """Fit the autoencoder to reproduce saliency maps; uses no labels.

    Returns ``(report, Autoencoder)`` with the best-validation weights loaded.
    """
    spec.validate()
    if spec.phase != "step1":
        raise ConfigError(f"train_step1 needs phase 'step1', got {spec.phase!r}")
    train, val = _require_split(data, "train"), _require_split(data, "val")
    # raises DataError if any map is missing, before any training happens
    x_train, s_train = train.images(), _human_maps(train)
    x_val, s_val = val.images(), _human_maps(val)
    model = Autoencoder(enc, dec)
    report = _report(strategy, spec)
    t0 = time.perf_counter()

    def batch_loss(idx):
        pred = forward_saliency(enc, dec, ad.Tensor(x_train[idx]))
        return mentor_pretrain_loss(pred, s_train[idx], per_pixel=spec.per_pixel)

    def val_loss():
        pred = predict_saliency(enc, dec, x_val)
        return mentor_pretrain_loss(ad.Tensor(pred), s_val, per_pixel=spec.per_pixel).item()

    _fit(model, batch_loss, val_loss, len(x_train), spec, report,
         groups={"encoder": enc.parameters(), "decoder": dec.parameters()}, on_epoch=on_epoch)
    report.metrics = {"val_loss": report.val_loss[report.best_epoch]}
    report.metrics.update(saliency_metrics(predict_saliency(enc, dec, x_val), s_val))
    report.wall_time = time.perf_counter() - t0
    if out_dir is not None:
        report.checkpoint = _save(out_dir, model, "autoencoder", report)
    return report, model


def _save(out_dir, model, kind, report):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "model.ckpt")
    save_model(path, model, kind, strategy=report.strategy, seed=report.seed,
               best_epoch=report.best_epoch)
    return path


# ------------------------------------------------------------------- step 2
def _encoder_from(source, spec_model):
    """Accept an EncoderNet, an Autoencoder, a state dict or a checkpoint path."""
    from .models import EncoderNet, ModelSpec

    if isinstance(source, EncoderNet):
        return source
    if isinstance(source, Autoencoder):
        return source.encoder
    if isinstance(source, (str, os.PathLike)):
        params, meta = load_checkpoint(source)
        spec_model = ModelSpec.from_dict(meta["model_spec"])
    else:
        params = source
    if spec_model is None:
        raise ConfigError("a ModelSpec is needed to load an encoder from a state dict")
    enc = build_encoder(spec_model.validate(), 0)
    enc.load_state_dict(params, "encoder.")
    return enc


def train_step2(encoder_ckpt, data, spec, model_spec=None, out_dir=None, strategy="mentor",
                on_epoch=None):
    """Attach a fresh head to the pretrained encoder and fine-tune everything
    with cross-entropy. Returns ``(report, ComposedClassifier)``."""
    spec.validate()
    enc = _encoder_from(encoder_ckpt, model_spec)
    model = build_classifier(enc, enc.spec.num_classes, spec.seed)
    return _train_classifier(model, "xent", data, spec, out_dir, strategy, on_epoch)


def _train_classifier(model, kind, data, spec, out_dir, strategy, on_epoch=None):
    train, val = _require_split(data, "train"), _require_split(data, "val")
    x_train, y_train = train.images(), train.labels()
    x_val, y_val = val.images(), val.labels()
    s_train = _human_maps(train) if kind != "xent" else None
    extent = model.spec.input_extent
    report = _report(strategy, spec)
    t0 = time.perf_counter()

    if kind == "xent":
        def batch_loss(idx):
            return cross_entropy(model(ad.Tensor(x_train[idx])), y_train[idx])
    elif kind == "joint_cam":
        def batch_loss(idx):
            logits, feats = model.forward_features(ad.Tensor(x_train[idx]))
            cams = cam_maps(feats, model.head.params["weight"], y_train[idx], extent)
            sal = salience_dissimilarity(cams, s_train[idx], spec.dissimilarity)
            return combine(cross_entropy(logits, y_train[idx]), sal, spec.alpha)
    elif kind == "joint_gaze":
        def batch_loss(idx):
            logits, maps = model.forward_all(ad.Tensor(x_train[idx]))
            sal = salience_dissimilarity(maps, s_train[idx], spec.dissimilarity)
            return combine(cross_entropy(logits, y_train[idx]), sal, spec.alpha)
    else:
        raise ConfigError(f"unknown baseline kind {kind!r}")

    groups = {"encoder": model.encoder.parameters(), "head": model.head.parameters()}
    if kind == "joint_gaze":
        groups["decoder"] = model.decoder.parameters()
    _fit(model, batch_loss, lambda: _eval_xent(model, x_val, y_val), len(x_train), spec,
         report, groups=groups, on_epoch=on_epoch)
    report.metrics = classifier_metrics(model, data)
    report.wall_time = time.perf_counter() - t0
    if out_dir is not None:
        kind_name = "gaze_classifier" if kind == "joint_gaze" else "classifier"
        report.checkpoint = _save(out_dir, model, kind_name, report)
    return report, model


def train_baseline(kind, data, spec, model_spec, encoder_init=None, out_dir=None,
                   strategy=None, on_epoch=None):
    """Single-phase training with cross-entropy or a joint saliency loss.

    The encoder starts from ``encoder_init`` when given (e.g. a step 1
    checkpoint), otherwise from the seeded random initialisation shared with
    the other strategies.
    """
    spec.validate()
    if kind not in BASELINES:
        raise ConfigError(f"unknown baseline kind {kind!r}")
    model_spec.validate()
    if kind == "joint_gaze":
        model = build_gaze_classifier(model_spec, model_spec.num_classes, spec.seed)
        if encoder_init is not None:
            model.encoder.load_state_dict(_encoder_from(encoder_init, model_spec).state_dict())
    else:
        enc = (_encoder_from(encoder_init, model_spec) if encoder_init is not None
               else build_encoder(model_spec, spec.seed))
        model = build_classifier(enc, model_spec.num_classes, spec.seed)
    return _train_classifier(model, kind, data, spec, out_dir, strategy or kind, on_epoch)


# ------------------------------------------------------- teacher / student
def generate_saliency_for_unlabeled(enc, dec, images):
    """Predicted maps (N, H, W) in [0, 1] for images that have no annotation."""
    images = np.asarray(images, dtype=np.float32)
    if images.ndim == 3:
        images = images[:, None]
    return predict_saliency(enc, dec, images)[:, 0]
