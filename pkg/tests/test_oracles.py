"""Small brute-force oracles and construction checks across modules."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mentor import autodiff as ad
from mentor.datasets import (Sample, check_subject_disjoint, fuse_annotations_max,
                             fuse_annotations_mean, resize_canonical, split_subject_disjoint)
from mentor.losses import salience_dissimilarity
from mentor.metrics import aggregate, auroc, salience_entropy
from mentor.synthetic import SyntheticTaskSpec, corner_cue_score, generate_synthetic_task


def test_conv_six_loop_oracle_float32():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(2, 3, 8, 8)).astype(np.float32)
    k = rng.normal(size=(4, 3, 3, 3)).astype(np.float32)
    got = ad.conv2d(ad.Tensor(x), ad.Tensor(k)).data
    want = np.zeros((2, 4, 6, 6))
    for n in range(2):
        for o in range(4):
            for i in range(6):
                for j in range(6):
                    for c in range(3):
                        for a in range(3):
                            for b in range(3):
                                want[n, o, i, j] += float(x[n, c, i + a, j + b]) * float(k[o, c, a, b])
    assert got.dtype == np.float32
    np.testing.assert_allclose(got, want, atol=1e-5)


def test_upsample_replication_and_gradient():
    x = ad.Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), requires_grad=True)
    out = ad.upsample_nearest2x(x)
    np.testing.assert_array_equal(out.data[0, 0], [[1, 1, 2, 2], [1, 1, 2, 2],
                                                   [3, 3, 4, 4], [3, 3, 4, 4]])
    ad.tsum(out).backward()
    np.testing.assert_array_equal(x.grad, np.full((1, 1, 2, 2), 4.0))


def test_linear_nested_loop_oracle():
    rng = np.random.default_rng(12)
    x, w, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=2)
    got = ad.linear(ad.Tensor(x), ad.Tensor(w), ad.Tensor(b)).data
    want = [[sum(x[i, d] * w[d, m] for d in range(4)) + b[m] for m in range(2)] for i in range(3)]
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_mse_double_loop_oracle():
    rng = np.random.default_rng(13)
    p, h = rng.uniform(size=(1, 1, 7, 5)), rng.uniform(size=(1, 1, 7, 5))
    total = 0.0
    for i in range(7):
        for j in range(5):
            total += (p[0, 0, i, j] - h[0, 0, i, j]) ** 2
    assert abs(salience_dissimilarity(p, h).item() - total / 35) < 1e-7


def test_fusion_loop_oracle_and_endpoints():
    rng = np.random.default_rng(14)
    maps = list(rng.uniform(size=(3, 6, 6)))
    want = np.zeros((6, 6))
    for i in range(6):
        for j in range(6):
            want[i, j] = (maps[0][i, j] + maps[1][i, j] + maps[2][i, j]) / 3
    assert np.abs(fuse_annotations_mean(maps) - want).max() < 1e-7
    zeros, ones = np.zeros((4, 4)), np.ones((4, 4))
    assert np.all(fuse_annotations_mean([zeros, ones]) == 0.5)
    assert np.all(fuse_annotations_max([zeros, ones]) == 1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_fusion_properties(seed, m):
    rng = np.random.default_rng(seed)
    maps = list(rng.uniform(size=(m, 5, 5)).astype(np.float32))
    mean, mx = fuse_annotations_mean(maps), fuse_annotations_max(maps)
    assert np.all(mx >= mean - 1e-7)
    order = rng.permutation(m)
    assert np.allclose(fuse_annotations_mean([maps[i] for i in order]), mean, atol=1e-7)
    assert np.array_equal(fuse_annotations_max([maps[i] for i in order]), mx)
    assert np.allclose(fuse_annotations_mean([maps[0]] * m), maps[0], atol=1e-7)
    assert np.array_equal(fuse_annotations_max([maps[0]] * m), maps[0])


def test_resize_monotone_rows_and_round_trip():
    up = resize_canonical(np.array([[0.0, 1.0], [0.0, 1.0]]), 4)
    assert np.all(np.diff(up, axis=1) >= 0)
    yy, xx = np.mgrid[0:64, 0:64] / 63.0
    smooth = 0.5 * xx + 0.3 * yy + 0.1
    back = resize_canonical(resize_canonical(smooth, 16), 64)
    assert np.abs(back - smooth).max() < 0.05
    with pytest.raises(ValueError):
        resize_canonical(smooth, 0)


def test_corner_threshold_classifier_is_a_shortcut():
    data = generate_synthetic_task(SyntheticTaskSpec(n_train=300, n_val=50, n_test=300))
    train, test = data.subset("train"), data.subset("test")
    pred = corner_cue_score(train.images()) > 0.9
    assert np.mean(pred == (train.labels() == 1)) > 0.95
    assert auroc(corner_cue_score(test.images()), test.labels()) < 0.6


def test_every_anomaly_has_a_strong_saliency_pixel(tiny_task):
    for s in tiny_task:
        assert (s.saliency.max() > 0.5) == (s.label == 1)


def test_exhaustive_subject_scan_1000_samples():
    samples = [Sample(image=np.zeros((1, 2, 2)), subject_id=f"p{i % 50}") for i in range(1000)]
    out = split_subject_disjoint(samples, [0.6, 0.2, 0.2], 5)
    owner = {}
    for s in out:
        assert owner.setdefault(s.subject_id, s.split) == s.split
    assert len(owner) == 50
    three = split_subject_disjoint([Sample(image=np.zeros((1, 2, 2)), subject_id=c) for c in "abc"],
                                   [1 / 3, 1 / 3, 1 / 3], 0)
    assert sorted(s.split for s in three) == ["test", "train", "val"]
    check_subject_disjoint(three)


def test_aggregate_two_pass_oracle():
    v = np.random.default_rng(15).uniform(size=10)
    mean = sum(v) / 10
    var = sum((x - mean) ** 2 for x in v) / 9
    m, s = aggregate(v)
    assert abs(m - mean) < 1e-12 and abs(s - math.sqrt(var)) < 1e-12
    m, s = aggregate([0.8, 1.0])
    assert m == pytest.approx(0.9) and s == pytest.approx(math.sqrt(0.02))


def test_entropy_loop_oracle():
    m = np.random.default_rng(16).uniform(size=(8, 8))
    total = sum(m[i, j] for i in range(8) for j in range(8))
    h = 0.0
    for i in range(8):
        for j in range(8):
            p = m[i, j] / total
            h -= p * math.log(p)
    assert abs(salience_entropy(m) - h / math.log(64)) < 1e-10


def test_auroc_flip_symmetry():
    rng = np.random.default_rng(17)
    for _ in range(20):
        s = rng.integers(0, 6, size=30).astype(float)
        y = rng.integers(0, 2, size=30)
        y[:2] = [0, 1]
        assert auroc(-s, 1 - y) == auroc(s, y)
