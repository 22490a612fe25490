"""Command-line entry point: ``mentor <verb> [--config C] [--out D] ...``.

Exit codes: 0 success, 1 a run failed, 2 bad config or usage.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import shutil
import sys
import tempfile

import numpy as np

from . import __version__
from .checkpoint import load_model
from .datasets import write_manifest
from .errors import ConfigError, DataError
from .experiment import (STRATEGIES, load_config, load_data, run_experiment, validate_config,
                         write_provenance)
from .models import class_activation_map
from .pgm import write_pgm
from .train import classifier_metrics, predict_saliency, saliency_metrics

log = logging.getLogger("mentor")

EXIT_OK, EXIT_RUN_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@contextlib.contextmanager
def staged_dir(out):
    """Yield a scratch directory that becomes ``out`` only if the block succeeds."""
    if out is None:
        raise UsageError("--out is required for this verb")
    out = os.path.abspath(out)
    if os.path.exists(out) and (not os.path.isdir(out) or os.listdir(out)):
        raise UsageError(f"output directory {out} already exists and is not empty")
    parent = os.path.dirname(out)
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=f".{os.path.basename(out)}.", dir=parent)
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if os.path.isdir(out):
        os.rmdir(out)
    os.rename(tmp, out)


def _config(args):
    return load_config(args.config, args.overrides)


def _data(plan, args):
    base = os.path.dirname(os.path.abspath(args.config)) if args.config else None
    return load_data(plan, base)


def cmd_gen_data(args):
    config = _config(args)
    plan = validate_config(config)
    data = _data(plan, args)
    with staged_dir(args.out) as tmp:
        write_manifest(data, tmp)
        write_provenance(tmp, config, [plan.task.seed])
    for split, per in data.counts().items():
        labels = ", ".join(f"label {k}: {v}" for k, v in sorted(per.items(), key=str))
        print(f"{split}: {sum(per.values())} samples ({labels})")
    return EXIT_OK


def _run(args, strategies, seeds):
    config = _config(args)
    plan = validate_config(config)
    if strategies is not None:
        plan.strategies = strategies
    if seeds is not None:
        plan.seeds = seeds
    data = _data(plan, args)
    with staged_dir(args.out) as tmp:
        write_provenance(tmp, config, plan.seeds)
        report = run_experiment(plan, data, out_dir=tmp, jobs=max(1, args.jobs))
    for r in report.failed:
        print(f"FAILED {r.strategy} seed={r.seed}: {r.error}", file=sys.stderr)
    print(report.table())
    return EXIT_RUN_FAILED if report.failed else EXIT_OK


def cmd_train(args):
    config = _config(args)
    return _run(args, [args.strategy], [config["train"]["seed"]])


def cmd_experiment(args):
    return _run(args, None, None)


def _load_checkpoint(path):
    if not path:
        raise UsageError("--checkpoint is required for this verb")
    try:
        return load_model(path)
    except OSError as exc:
        raise UsageError(f"cannot read checkpoint: {exc}") from None


def _check_extent(model, data):
    want = model.spec.input_extent
    got = data[0].image.shape[-1] if len(data) else want
    if got != want:
        raise ConfigError(f"checkpoint expects {want}x{want} images, data has {got}x{got}")


def cmd_evaluate(args):
    model, meta = _load_checkpoint(args.checkpoint)
    plan = validate_config(_config(args))
    data = _data(plan, args)
    _check_extent(model, data)
    if meta["kind"] == "autoencoder":
        part = data.subset(args.split)
        metrics = saliency_metrics(predict_saliency(model.encoder, model.decoder, part.images()),
                                   part.saliency())
    else:
        metrics = classifier_metrics(model, data)
    text = json.dumps({"checkpoint": os.path.abspath(args.checkpoint), "kind": meta["kind"],
                       "metrics": metrics}, indent=2, sort_keys=True)
    if args.out:
        with staged_dir(args.out) as tmp:
            with open(os.path.join(tmp, "evaluation.json"), "w") as fh:
                fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_export_saliency(args):
    model, meta = _load_checkpoint(args.checkpoint)
    plan = validate_config(_config(args))
    data = _data(plan, args)
    _check_extent(model, data)
    part = data.subset(args.split)
    images = part.images()
    if meta["kind"] == "autoencoder":
        maps = predict_saliency(model.encoder, model.decoder, images)[:, 0]
    else:
        maps = np.stack([class_activation_map(model, img, args.class_index) for img in images])
    with staged_dir(args.out) as tmp:
        for i, (s, m) in enumerate(zip(part, maps)):
            write_pgm(os.path.join(tmp, f"{args.split}_{i:05d}.pgm"), m)
    print(f"wrote {len(maps)} maps")
    return EXIT_OK


def cmd_inspect_checkpoint(args):
    model, meta = _load_checkpoint(args.checkpoint)
    print(json.dumps(meta, indent=2, sort_keys=True))
    state = model.state_dict()
    for name in sorted(state):
        arr = state[name]
        print(f"{name:40s} {str(tuple(arr.shape)):18s} |w|={float(np.abs(arr).mean()):.5f}")
    print(f"total parameters: {sum(a.size for a in state.values())}")
    return EXIT_OK


VERBS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
    "export-saliency": cmd_export_saliency,
    "inspect-checkpoint": cmd_inspect_checkpoint,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config; unspecified keys take defaults")
    common.add_argument("--out", help="output directory (must not exist or be empty)")
    common.add_argument("--jobs", type=int, default=1, help="parallel seeds for experiment")
    common.add_argument("--overrides", nargs="*", default=[], metavar="KEY=VALUE",
                        help="dotted-key overrides, e.g. train.seed=7")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mentor", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mentor {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset manifest")
    p = sub.add_parser("train", parents=[common], help="train one strategy for train.seed")
    p.add_argument("--strategy", choices=STRATEGIES, default="mentor")
    sub.add_parser("experiment", parents=[common], help="strategy x seed matrix")
    for verb, helptext in (("evaluate", "score a checkpoint"),
                           ("export-saliency", "write predicted maps or CAMs as PGM"),
                           ("inspect-checkpoint", "print checkpoint metadata")):
        p = sub.add_parser(verb, parents=[common], help=helptext)
        p.add_argument("--checkpoint", required=True)
        if verb != "inspect-checkpoint":
            p.add_argument("--split", default="test", choices=("train", "val", "test"))
        if verb == "export-saliency":
            p.add_argument("--class-index", type=int, default=1)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return VERBS[args.verb](args)
    except (ConfigError, DataError, UsageError) as exc:
        print(f"mentor {args.verb}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"mentor {args.verb}: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILED


if __name__ == "__main__":
    sys.exit(main())
