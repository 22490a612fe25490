import math

import numpy as np
import pytest

from mentor import autodiff as ad
from mentor.errors import ConfigError
from mentor.optim import SGD, AdamW, OptimizerSpec, step_lr


def _param(value):
    return ad.Tensor(np.array([value], dtype=np.float64), requires_grad=True)


def test_adamw_three_step_hand_trace():
    lr, wd, b1, b2, eps = 0.1, 0.01, 0.9, 0.999, 1e-8
    grads = [0.5, -0.2, 0.1]
    p = _param(1.0)
    opt = AdamW([p], lr=lr, betas=(b1, b2), eps=eps, weight_decay=wd)
    # step 1: m = 0.05, v = 0.00025, m_hat = 0.5, v_hat = 0.25
    w1 = 1.0 * (1 - lr * wd) - lr * 0.5 / (math.sqrt(0.25) + eps)
    # step 2
    m2 = 0.9 * 0.05 + 0.1 * -0.2
    v2 = 0.999 * 0.00025 + 0.001 * 0.04
    w2 = w1 * (1 - lr * wd) - lr * (m2 / (1 - 0.81)) / (math.sqrt(v2 / (1 - 0.999 ** 2)) + eps)
    # step 3
    m3 = 0.9 * m2 + 0.1 * 0.1
    v3 = 0.999 * v2 + 0.001 * 0.01
    w3 = w2 * (1 - lr * wd) - lr * (m3 / (1 - 0.729)) / (math.sqrt(v3 / (1 - 0.999 ** 3)) + eps)
    for g, want in zip(grads, [w1, w2, w3]):
        p.grad = np.array([g])
        opt.step()
        assert p.data[0] == pytest.approx(want, rel=1e-14, abs=1e-15)


def test_adamw_decay_is_decoupled():
    # with zero gradient only the decay moves the weight
    p = _param(2.0)
    opt = AdamW([p], lr=0.1, weight_decay=0.5)
    p.grad = np.zeros(1)
    opt.step()
    assert p.data[0] == pytest.approx(2.0 * (1 - 0.05), rel=1e-15)


def test_sgd_heavy_ball_trace():
    p = _param(1.0)
    opt = SGD([p], lr=0.1, momentum=0.9)
    w, buf = 1.0, 0.0
    for g in [1.0, -0.5, 0.25, 0.0]:
        buf = 0.9 * buf + g
        w -= 0.1 * buf
        p.grad = np.array([g])
        opt.step()
        assert p.data[0] == pytest.approx(w, rel=1e-15)


def test_step_schedule_is_exact():
    spec = OptimizerSpec.sgd()
    assert [spec.lr_at(e) for e in (0, 11, 12, 23, 24)] == [0.005, 0.005, 0.005 * 0.1,
                                                            0.005 * 0.1, 0.005 * 0.1 ** 2]
    assert step_lr(1e-4, 40, 0, 0.1) == 1e-4


def test_spec_defaults_and_round_trip():
    a = OptimizerSpec.adamw()
    assert (a.lr, a.betas, a.weight_decay, a.eps) == (1e-4, (0.9, 0.999), 0.01, 1e-8)
    s = OptimizerSpec.sgd()
    assert (s.lr, s.momentum, s.step_epochs, s.gamma) == (0.005, 0.9, 12, 0.1)
    assert OptimizerSpec.from_dict(a.to_dict()) == a


def test_spec_validation():
    with pytest.raises(ConfigError):
        OptimizerSpec(name="rmsprop").validate()
    with pytest.raises(ConfigError):
        OptimizerSpec(lr=0).validate()
    with pytest.raises(ConfigError):
        OptimizerSpec.from_dict({"nesterov": True})


def test_nan_detection():
    p = _param(1.0)
    opt = AdamW([p])
    p.grad = np.array([np.inf])
    with np.errstate(invalid="ignore"):
        opt.step()
    assert opt.has_nan()
