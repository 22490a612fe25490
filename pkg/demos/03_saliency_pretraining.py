"""
Label-free saliency pretraining
===============================

An encoder/decoder learns to reproduce the human (here: ground-truth) saliency
maps from the images alone. Class labels are never read; the script drops them
before training to make that visible.
"""

import numpy as np

from mentor.models import ModelSpec, build_autoencoder
from mentor.synthetic import SyntheticTaskSpec, generate_synthetic_task
from mentor.train import TrainSpec, predict_saliency, train_step1

data = generate_synthetic_task(SyntheticTaskSpec(n_train=300, n_val=100, n_test=40))
unlabeled = data.with_labels([None] * len(data))

enc, dec = build_autoencoder(ModelSpec(), seed=0)


def show(epoch, model, report):
    print(f"epoch {epoch:2d} train {report.train_loss[-1]:.5f} val {report.val_loss[-1]:.5f}")


report, ae = train_step1(enc, dec, unlabeled, TrainSpec.step1(max_epochs=12), on_epoch=show)
print("initial val loss", round(report.initial_val_loss, 5), "best epoch", report.best_epoch)
print("val metrics", {k: round(v, 3) for k, v in report.metrics.items()})

# %%
# How much predicted mass lands in the defect neighbourhood, per image
val = data.subset("val")
pred = predict_saliency(ae.encoder, ae.decoder, val.images())[:, 0]
for s, p in list(zip(val, pred))[:6]:
    if s.label != 1:
        continue
    r0, c0, r1, c1 = s.meta["bbox"]
    share = p[r0:r1 + 1, c0:c1 + 1].sum() / p.sum()
    print(f"{s.meta['kind']:7s} mass in box {share:.2f}  peak {p.max():.2f}")
print("bona fide mean prediction", float(np.mean([p.mean() for s, p in zip(val, pred)
                                                  if s.label == 0])))
