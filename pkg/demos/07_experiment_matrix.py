"""
A strategy x seed matrix
========================

The same thing the ``mentor experiment`` command runs, called from Python.
The default here is a reduced task so it finishes in a few minutes; pass
``--full`` for the default 600/150/800 task with five seeds.
"""

import sys
import tempfile

from mentor.experiment import load_config, load_data, run_experiment, validate_config

overrides = ['strategies=["xent", "mentor", "joint_cam", "mentor_joint_cam"]']
if "--full" not in sys.argv:
    overrides += ["data.n_train=200", "data.n_val=60", "data.n_test=200", "train.n_seeds=2",
                  "train.step1.max_epochs=10", "train.step2.max_epochs=15"]

config = load_config(None, overrides)
plan = validate_config(config)
data = load_data(plan)

with tempfile.TemporaryDirectory() as out:
    report = run_experiment(plan, data, out_dir=out)
    print(open(f"{out}/metrics.csv").read().splitlines()[:3])

for s in plan.strategies:
    row = report.summary[s]
    print(f"{s:18s} per-seed {[round(a, 3) for a in row['aurocs']]}")
print(report.table())
