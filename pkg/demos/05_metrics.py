"""
AUROC and salience entropy
==========================
"""

import numpy as np

from mentor.metrics import ScoredSample, aggregate, auroc, roc_points, salience_entropy

# Ties count one half; the value only depends on the ranking of the scores
scores = np.array([0.1, 0.4, 0.4, 0.35, 0.8, 0.9])
labels = np.array([0, 0, 1, 0, 1, 1])
print("AUROC", auroc(scores, labels))
print("AUROC of log scores", auroc(np.log(scores), labels))
print("AUROC from samples", auroc([ScoredSample(s, y) for s, y in zip(scores, labels)]))
fpr, tpr = roc_points(scores, labels)
print("ROC points", list(zip(fpr.round(2).tolist(), tpr.round(2).tolist())))

# Across runs: mean and sample standard deviation
print("mean, std over seeds", aggregate([0.91, 0.87, 0.93, 0.88, 0.90]))

# %%
# Entropy is 1 for a flat map and 0 for a single hot pixel, whatever the scale
flat = np.ones((32, 32))
spot = np.zeros((32, 32))
spot[10, 12] = 5.0
blob = np.exp(-((np.arange(32)[:, None] - 16) ** 2 + (np.arange(32)[None] - 16) ** 2) / 20)
for name, m in (("flat", flat), ("spot", spot), ("blob", blob), ("blob x 100", 100 * blob)):
    print(f"{name:10s} entropy {salience_entropy(m):.4f}")
