"""Experiment configuration and the strategy x seed driver."""

from __future__ import annotations

import concurrent.futures
import copy
import csv
import dataclasses
import io
import json
import logging
import os
import traceback

from . import __version__
from .datasets import SampleSet, load_manifest
from .errors import ConfigError
from .metrics import aggregate
from .models import ModelSpec, build_autoencoder
from .synthetic import SyntheticTaskSpec, generate_synthetic_task
from .train import RunReport, TrainSpec, train_baseline, train_step1, train_step2

log = logging.getLogger(__name__)

STRATEGIES = ("xent", "joint_cam", "joint_gaze", "mentor", "mentor_joint_cam",
              "mentor_joint_gaze")
METRICS_COLUMNS = ("strategy", "seed", "epoch", "train_loss", "val_loss", "lr")

DEFAULT_CONFIG = {
    "data": {**SyntheticTaskSpec().to_dict(), "manifest": None},
    "model": ModelSpec().to_dict(),
    "train": {
        "seed": 0,
        "n_seeds": 5,
        "alpha": 0.5,
        "step1": {
            "optimizer": {"name": "adamw", "lr": 1e-4, "betas": [0.9, 0.999], "eps": 1e-8,
                          "weight_decay": 0.01, "momentum": 0.0, "step_epochs": 0, "gamma": 1.0},
            "batch_size": 8, "max_epochs": 50, "patience": 10,
        },
        "step2": {
            "optimizer": {"name": "sgd", "lr": 0.005, "betas": [0.9, 0.999], "eps": 1e-8,
                          "weight_decay": 0.0, "momentum": 0.9, "step_epochs": 12, "gamma": 0.1},
            "batch_size": 8, "max_epochs": 50, "patience": 10,
        },
    },
    "strategies": ["xent", "mentor"],
}


# -------------------------------------------------------------------- config
def _merge(base, update, path=""):
    out = copy.deepcopy(base)
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in out:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _merge(out[key], value, where + ".")
        else:
            out[key] = value
    return out


def parse_override(text):
    """``a.b.c=value`` -> (["a", "b", "c"], value); values are JSON when they parse."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_overrides(config, overrides):
    config = copy.deepcopy(config)
    for text in overrides or ():
        keys, value = parse_override(text)
        node = config
        for k in keys[:-1]:
            if not isinstance(node.get(k), dict):
                raise ConfigError(f"override {text!r}: {k!r} is not a config section")
            node = node[k]
        if keys[-1] not in node:
            raise ConfigError(f"override {text!r}: unknown key {keys[-1]!r}")
        node[keys[-1]] = value
    return config


def load_config(path=None, overrides=None):
    """Defaults, then the JSON file at ``path``, then dotted overrides."""
    config = DEFAULT_CONFIG
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        config = _merge(config, user)
    config = apply_overrides(config, overrides)
    validate_config(config)
    return config


@dataclasses.dataclass
class ExperimentPlan:
    task: SyntheticTaskSpec
    manifest: str | None
    model: ModelSpec
    step1: dict
    step2: dict
    alpha: float
    seeds: list
    strategies: list


def validate_config(config):
    data = dict(config["data"])
    manifest = data.pop("manifest", None)
    task = SyntheticTaskSpec.from_dict(data).validate()
    model = ModelSpec.from_dict(config["model"]).validate()
    if not manifest and task.extent != model.input_extent:
        raise ConfigError(f"data.extent ({task.extent}) must equal model.input_extent "
                          f"({model.input_extent})")
    train = config["train"]
    if not isinstance(train.get("n_seeds"), int) or train["n_seeds"] < 1:
        raise ConfigError("train.n_seeds must be a positive integer")
    if not isinstance(train.get("seed"), int):
        raise ConfigError("train.seed must be an integer")
    strategies = list(config["strategies"])
    if not strategies:
        raise ConfigError("at least one strategy is required")
    bad = [s for s in strategies if s not in STRATEGIES]
    if bad:
        raise ConfigError(f"unknown strategies {bad}; choose from {list(STRATEGIES)}")
    for phase in ("step1", "step2"):
        TrainSpec.from_dict(train[phase]).validate()
    TrainSpec(alpha=train["alpha"]).validate()
    return ExperimentPlan(task=task, manifest=manifest, model=model, step1=train["step1"],
                          step2=train["step2"], alpha=float(train["alpha"]),
                          seeds=run_seeds(config), strategies=strategies)


def run_seeds(config):
    """Per-run seeds derived from the single root seed ``train.seed``."""
    root = config["train"]["seed"]
    return [root + i for i in range(config["train"]["n_seeds"])]


def load_data(plan, base_dir=None):
    if plan.manifest:
        path = plan.manifest
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return load_manifest(path, extent=plan.model.input_extent)
    return generate_synthetic_task(plan.task)


def _train_spec(fields, phase, seed, alpha):
    return TrainSpec.from_dict({**fields, "phase": phase, "seed": seed, "alpha": alpha})


# --------------------------------------------------------------------- cells
def run_seed(plan, data, seed, strategies, out_dir=None):
    """Run every strategy for one seed; step 1 is shared by the mentor variants."""
    reports = []
    ae = None

    def cell_dir(name):
        return None if out_dir is None else os.path.join(out_dir, "runs", name, str(seed))

    def record(name, fn):
        try:
            report, model = fn()
        except Exception as exc:  # a failed cell is reported, not dropped
            log.error("%s seed=%d failed: %s", name, seed, exc)
            report, model = RunReport(strategy=name, phase="", seed=seed, status="failed",
                                      error="".join(traceback.format_exception_only(type(exc), exc)).strip()), None
        if out_dir is not None:
            d = cell_dir(name)
            os.makedirs(d, exist_ok=True)
            report.write_json(os.path.join(d, "report.json"))
        reports.append(report)
        return model

    if any(s.startswith("mentor") for s in strategies):
        def step1():
            enc, dec = build_autoencoder(plan.model, seed)
            spec = _train_spec(plan.step1, "step1", seed, plan.alpha)
            return train_step1(enc, dec, data, spec, out_dir=cell_dir("step1"), strategy="step1")
        ae = record("step1", step1)

    for name in strategies:
        if name.startswith("mentor") and ae is None:
            reports.append(RunReport(strategy=name, phase="", seed=seed, status="failed",
                                     error="step 1 failed"))
            continue
        if name == "mentor":
            fn = lambda: train_step2(ae.encoder, data,  # noqa: E731
                                     _train_spec(plan.step2, "step2", seed, plan.alpha),
                                     out_dir=cell_dir(name), strategy=name)
        else:
            kind = name.replace("mentor_", "")
            init = ae.encoder if name.startswith("mentor_") else None
            fn = (lambda kind=kind, init=init, name=name: train_baseline(
                kind, data, _train_spec(plan.step2, f"baseline_{kind}", seed, plan.alpha),
                plan.model, encoder_init=init, out_dir=cell_dir(name), strategy=name))
        record(name, fn)
    return reports


def _run_seed_job(args):
    plan, data, seed, out_dir = args
    return run_seed(plan, data, seed, plan.strategies, out_dir)


@dataclasses.dataclass
class AggregateReport:
    strategies: list
    seeds: list
    runs: list
    summary: dict

    @property
    def failed(self):
        return [r for r in self.runs if r.status != "ok"]

    def table(self):
        """Two-line table: strategy names, then AUROC mean+-std per strategy."""
        names, cells = [], []
        for s in self.strategies:
            row = self.summary[s]
            names.append(s)
            if row["auroc_mean"] is None:
                cells.append("failed")
            else:
                cells.append(f"{row['auroc_mean']:.3f}±{row['auroc_std']:.3f}")
        widths = [max(len(a), len(b)) for a, b in zip(names, cells)]
        head = "| " + " | ".join(n.ljust(w) for n, w in zip(names, widths)) + " |"
        body = "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"
        return head + "\n" + body


def summarize(strategies, seeds, runs):
    summary = {}
    for s in strategies:
        ok = [r for r in runs if r.strategy == s and r.status == "ok"]
        aurocs = [r.metrics["test_auroc"] for r in ok if "test_auroc" in r.metrics]
        ents = [r.metrics["test_s_entropy"] for r in ok
                if r.metrics.get("test_s_entropy") is not None]
        row = {"strategy": s, "seeds": [r.seed for r in ok], "aurocs": aurocs,
               "auroc_mean": None, "auroc_std": None,
               "s_entropy_mean": None, "s_entropy_std": None,
               "failed_seeds": [r.seed for r in runs if r.strategy == s and r.status != "ok"]}
        if aurocs:
            row["auroc_mean"], row["auroc_std"] = aggregate(aurocs)
        if ents:
            row["s_entropy_mean"], row["s_entropy_std"] = aggregate(ents)
        summary[s] = row
    return summary


def metrics_csv(runs):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for r in runs:
        for e, (tl, vl, lr) in enumerate(zip(r.train_loss, r.val_loss, r.lr)):
            writer.writerow([r.strategy, r.seed, e, repr(tl), repr(vl), repr(lr)])
    return buf.getvalue()


def run_experiment(plan, data, out_dir=None, jobs=1):
    """Run ``plan.strategies`` x ``plan.seeds``; writes outputs when ``out_dir`` is set.

    Independent seeds may run in parallel processes; results are gathered
    in seed order so the outputs do not depend on ``jobs``.
    """
    if not plan.strategies or not plan.seeds:
        raise ConfigError("need at least one strategy and one seed")
    args = [(plan, data, seed, out_dir) for seed in plan.seeds]
    if jobs > 1 and len(args) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(_run_seed_job, args))
    else:
        per_seed = [_run_seed_job(a) for a in args]
    order = ["step1"] + list(plan.strategies)
    runs = sorted((r for rs in per_seed for r in rs),
                  key=lambda r: (order.index(r.strategy), r.seed))
    report = AggregateReport(strategies=list(plan.strategies), seeds=list(plan.seeds), runs=runs,
                             summary=summarize(plan.strategies, plan.seeds, runs))
    if out_dir is not None:
        write_outputs(report, out_dir)
    return report


def write_outputs(report, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as fh:
        fh.write(metrics_csv(report.runs))
    metric_reports = [
        {k: report.summary[s][k] for k in ("strategy", "seeds", "auroc_mean", "auroc_std",
                                           "s_entropy_mean", "s_entropy_std")}
        for s in report.strategies
    ]
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump({"metrics": metric_reports,
                   "failed": [{"strategy": r.strategy, "seed": r.seed, "error": r.error}
                              for r in report.failed],
                   "per_seed": {s: report.summary[s]["aurocs"] for s in report.strategies}},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_provenance(out_dir, config, seeds):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "effective_config.json"), "w") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "provenance.json"), "w") as fh:
        json.dump({"tool": "mentor", "version": __version__, "seeds": list(seeds)}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")


def with_generated_saliency(enc, dec, samples):
    """Copy of ``samples`` whose saliency maps are predicted by the autoencoder."""
    from .train import generate_saliency_for_unlabeled

    samples = SampleSet(samples)
    maps = generate_saliency_for_unlabeled(enc, dec, samples.images())
    return SampleSet(dataclasses.replace(s, saliency=m) for s, m in zip(samples, maps))
