"""
The synthetic shortcut task
===========================

Bona fide images share a structural pattern plus a per-subject background.
Anomalies add a localized defect whose blurred mask is the ground-truth
saliency. Training anomalies also carry a bright corner patch, a shortcut that
disappears at test time, where the defect kinds are new as well.
"""

import os
import sys

from mentor.datasets import write_manifest
from mentor.synthetic import SyntheticTaskSpec, corner_cue_score, generate_synthetic_task

spec = SyntheticTaskSpec(n_train=60, n_val=20, n_test=40, seed=0)
data = generate_synthetic_task(spec)

for split in ("train", "val", "test"):
    part = data.subset(split)
    labels = part.labels()
    cue = corner_cue_score(part.images()) > 0.9
    kinds = sorted({s.meta["kind"] for s in part if s.meta["kind"]})
    print(f"{split:5s} n={len(part):3d} anomalous={labels.sum():3d} "
          f"cue on anomalies={cue[labels == 1].mean():.2f} kinds={kinds}")

# %%
# Subjects never cross splits
subjects = {split: data.subset(split).subjects() for split in ("train", "val", "test")}
print("overlap train/test:", subjects["train"] & subjects["test"])

# %%
# Ground-truth saliency is confined to the defect neighbourhood
s = next(s for s in data.subset("train") if s.label == 1)
r0, c0, r1, c1 = s.meta["bbox"]
share = s.saliency[r0:r1 + 1, c0:c1 + 1].sum() / s.saliency.sum()
print("defect kind", s.meta["kind"], "bbox", s.meta["bbox"], f"saliency inside box {share:.3f}")

# %%
# Optionally write the dataset as PGM files plus a JSON-lines manifest
if len(sys.argv) > 1:
    out = sys.argv[1]
    path = write_manifest(data, out)
    print("wrote", path, "and", len(os.listdir(os.path.join(out, "images"))), "images")

# A coarse text rendering of that sample's saliency map
for row in s.saliency[::2, ::2]:
    print("".join("#" if v > 0.5 else ("+" if v > 0 else ".") for v in row))
