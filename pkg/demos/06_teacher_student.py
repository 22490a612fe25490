"""
Saliency for images nobody annotated
====================================

A pretrained encoder/decoder can label new images with saliency maps. Those
maps can then drive a saliency-aware loss on data that never had annotations.
Here the teacher sees a small annotated set, the student trains on a larger
set with generated maps only.
"""

import numpy as np

from mentor.datasets import SampleSet
from mentor.experiment import with_generated_saliency
from mentor.models import ModelSpec, build_autoencoder
from mentor.synthetic import SyntheticTaskSpec, generate_synthetic_task
from mentor.train import TrainSpec, train_baseline, train_step1

small = generate_synthetic_task(SyntheticTaskSpec(n_train=150, n_val=60, n_test=40, seed=1))
big = generate_synthetic_task(SyntheticTaskSpec(n_train=450, n_val=100, n_test=400, seed=2))

enc, dec = build_autoencoder(ModelSpec(), 0)
report, teacher = train_step1(enc, dec, small, TrainSpec.step1(max_epochs=20))
print("teacher val mass in box", round(report.metrics["mass_in_bbox"], 3))

# Replace every map in the big set with the teacher's prediction; test maps are unused
student_data = SampleSet(list(with_generated_saliency(teacher.encoder, teacher.decoder,
                                                      big.subset("train")))
                         + list(with_generated_saliency(teacher.encoder, teacher.decoder,
                                                        big.subset("val")))
                         + list(big.subset("test")))
agree = np.mean([np.corrcoef(a.saliency.ravel(), b.saliency.ravel())[0, 1]
                 for a, b in zip(student_data.subset("train"), big.subset("train"))
                 if b.label == 1])
print("correlation of generated and true maps on anomalies", round(float(agree), 3))

spec = TrainSpec.baseline("joint_cam", max_epochs=20)
with_maps, _ = train_baseline("joint_cam", student_data, spec, ModelSpec())
plain, _ = train_baseline("xent", big, TrainSpec.baseline("xent", max_epochs=20), ModelSpec())
print("test AUROC, joint CAM loss with generated maps:", round(with_maps.metrics["test_auroc"], 3))
print("test AUROC, cross-entropy only:               ", round(plain.metrics["test_auroc"], 3))
