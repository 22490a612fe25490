import math

import numpy as np
import pytest
from hypothesis import given, settings
from scipy.integrate import trapezoid
from hypothesis import strategies as st

from mentor.errors import MetricError
from mentor.metrics import ScoredSample, aggregate, auroc, roc_points, salience_entropy


def pair_count_auroc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def random_scored(rng, n):
    labels = rng.integers(0, 2, size=n)
    labels[:2] = [0, 1]
    # coarse grid forces plenty of ties
    scores = rng.integers(0, rng.integers(2, 12), size=n) / 7.0
    return scores, labels


def test_matches_pair_counting_oracle_on_100_sets():
    rng = np.random.default_rng(0)
    for _ in range(100):
        scores, labels = random_scored(rng, int(rng.integers(2, 60)))
        assert auroc(scores, labels) == pair_count_auroc(scores, labels)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(0, 1)), min_size=2, max_size=40))
def test_property_oracle_and_monotone_invariance(pairs):
    scores = np.array([p[0] for p in pairs], dtype=np.float64)
    labels = np.array([p[1] for p in pairs])
    if labels.min() == labels.max():
        with pytest.raises(MetricError):
            auroc(scores, labels)
        return
    a = auroc(scores, labels)
    assert a == pair_count_auroc(scores, labels)
    assert auroc(np.exp(scores / 3.0) * 2 + 1, labels) == a
    assert auroc(scores ** 3, labels) == a
    assert auroc(-scores, labels) == pytest.approx(1 - a, abs=1e-15)


def test_known_values():
    assert auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auroc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0
    assert auroc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == 0.5
    samples = [ScoredSample(0.3, 0), ScoredSample(0.3, 1), ScoredSample(0.9, 1)]
    assert auroc(samples) == 0.75


def test_auroc_errors():
    with pytest.raises(MetricError):
        auroc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        auroc([0.1, np.nan], [0, 1])
    with pytest.raises(ValueError):
        auroc([0.1, 0.2], [0, 2])


def test_roc_curve_area_equals_auroc():
    rng = np.random.default_rng(3)
    scores, labels = random_scored(rng, 50)
    fpr, tpr = roc_points(scores, labels)
    assert fpr[0] == 0 and tpr[0] == 0 and fpr[-1] == 1 and tpr[-1] == 1
    assert trapezoid(tpr, fpr) == pytest.approx(auroc(scores, labels), abs=1e-12)


def test_aggregate():
    m, s = aggregate([0.8, 0.9, 1.0])
    assert m == pytest.approx(0.9)
    assert s == pytest.approx(0.1)
    assert aggregate([0.7]) == (0.7, 0.0)
    with pytest.raises(MetricError):
        aggregate([])


def test_entropy_endpoints():
    assert salience_entropy(np.ones((8, 8))) == pytest.approx(1.0, abs=1e-12)
    one_hot = np.zeros((8, 8))
    one_hot[3, 4] = 1.0
    assert salience_entropy(one_hot) == 0.0


def test_entropy_oracle():
    m = np.array([[1.0, 3.0], [0.0, 4.0]])
    p = np.array([1, 3, 4]) / 8
    assert salience_entropy(m) == pytest.approx(-np.sum(p * np.log(p)) / math.log(4), abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_entropy_scale_invariant_and_bounded(seed, scale):
    m = np.random.default_rng(seed).uniform(size=(6, 6))
    h = salience_entropy(m)
    assert 0.0 <= h <= 1.0
    assert abs(salience_entropy(m * scale) - h) < 1e-10


def test_entropy_errors():
    with pytest.raises(MetricError):
        salience_entropy(np.zeros((4, 4)))
    with pytest.raises(MetricError):
        salience_entropy(-np.ones((4, 4)))
