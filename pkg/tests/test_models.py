import numpy as np
import pytest

from mentor import autodiff as ad
from mentor.errors import ConfigError
from mentor.losses import mentor_pretrain_loss
from mentor.models import (ModelSpec, build_autoencoder, build_classifier, build_encoder,
                           build_gaze_classifier, cam_maps, class_activation_map,
                           forward_saliency)
from conftest import grad_check

SPEC = ModelSpec(input_extent=16, base_width=4, depth=2)


def test_shapes():
    enc, dec = build_autoencoder(SPEC, 0)
    x = ad.Tensor(np.random.default_rng(0).uniform(size=(3, 1, 16, 16)))
    feats, skips = enc(x)
    assert feats.shape == (3, 8, 4, 4)
    assert [s.shape for s in skips] == [(3, 4, 16, 16), (3, 8, 8, 8)]
    maps = dec(feats, skips)
    assert maps.shape == (3, 1, 16, 16)
    assert np.all((maps.data > 0) & (maps.data < 1))
    clf = build_classifier(enc, 2, 0)
    assert clf(x).shape == (3, 2)
    gaze = build_gaze_classifier(SPEC, 2, 0)
    logits, maps = gaze.forward_all(x)
    assert logits.shape == (3, 2) and maps.shape == (3, 1, 16, 16)


def test_seeded_construction_is_deterministic():
    a, _ = build_autoencoder(SPEC, 5)
    b = build_encoder(SPEC, 5)
    c, _ = build_autoencoder(SPEC, 6)
    for k, v in a.state_dict().items():
        assert np.array_equal(v, b.state_dict()[k])
    assert any(not np.array_equal(v, c.state_dict()[k]) for k, v in a.state_dict().items())


def test_classifier_copies_encoder_weights():
    enc = build_encoder(SPEC, 1)
    clf = build_classifier(enc, 2, 1)
    for k, v in enc.state_dict().items():
        assert np.array_equal(clf.encoder.params[k].data, v)
    clf.encoder.params["stage0.weight"].data += 1.0
    assert not np.array_equal(clf.encoder.params["stage0.weight"].data,
                              enc.params["stage0.weight"].data)


def test_head_init_bounds_and_bias():
    clf = build_classifier(build_encoder(SPEC, 0), 3, 0)
    bound = 1 / np.sqrt(8)
    assert np.abs(clf.head.params["weight"].data).max() <= bound
    _, dec = build_autoencoder(SPEC, 0)
    assert np.all(dec.params["head.bias"].data == SPEC.head_bias_init)


def test_spec_validation():
    with pytest.raises(ConfigError, match="divisible"):
        ModelSpec(input_extent=20, depth=3).validate()
    with pytest.raises(ConfigError):
        build_classifier(build_encoder(SPEC, 0), 1, 0)
    with pytest.raises(ValueError, match="extent"):
        forward_saliency(*build_autoencoder(SPEC, 0), np.zeros((1, 1, 32, 32), np.float32))


def test_state_dict_round_trip():
    gaze = build_gaze_classifier(SPEC, 2, 0)
    other = build_gaze_classifier(SPEC, 2, 9)
    other.load_state_dict(gaze.state_dict())
    x = ad.Tensor(np.random.default_rng(0).uniform(size=(2, 1, 16, 16)).astype(np.float32))
    a, b = gaze.forward_all(x), other.forward_all(x)
    assert np.array_equal(a[0].data, b[0].data) and np.array_equal(a[1].data, b[1].data)
    with pytest.raises(ConfigError, match="shape"):
        build_classifier(build_encoder(ModelSpec(input_extent=16, base_width=2, depth=2), 0),
                         2, 0).load_state_dict(gaze.state_dict())


def _as_float64(*modules):
    for m in modules:
        for p in m.parameters():
            p.data = p.data.astype(np.float64)


@pytest.mark.parametrize("seed", range(10))
def test_end_to_end_gradient_through_autoencoder(seed):
    enc, dec = build_autoencoder(SPEC, seed)
    _as_float64(enc, dec)
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(2, 1, 16, 16))
    target = rng.uniform(size=(2, 1, 16, 16))
    w0 = dec.params["head.weight"]

    def loss(w):
        dec.params["head.weight"] = w
        return mentor_pretrain_loss(forward_saliency(enc, dec, ad.Tensor(x)), target)

    assert grad_check(loss, w0.data) < 1e-3


def cam_oracle(feats, weight, cls, extent):
    raw = np.maximum(np.einsum("dhw,d->hw", feats, weight[:, cls]), 0)
    f = extent // raw.shape[0]
    raw = np.kron(raw, np.ones((f, f)))
    return (raw - raw.min()) / (raw.max() - raw.min())


def test_class_activation_map_matches_oracle():
    enc = build_encoder(SPEC, 2)
    clf = build_classifier(enc, 2, 2)
    img = np.random.default_rng(2).uniform(size=(1, 16, 16)).astype(np.float32)
    _, feats = clf.forward_features(ad.Tensor(img[None]))
    w = clf.head.params["weight"].data.astype(np.float64)
    want = cam_oracle(feats.data[0].astype(np.float64), w, 1, 16)
    got = class_activation_map(clf, img, 1)
    np.testing.assert_allclose(got, want, atol=1e-6)
    assert got.min() == 0.0 and got.max() == pytest.approx(1.0)
    diff = cam_maps(feats, clf.head.params["weight"], [1], 16).data[0, 0]
    np.testing.assert_allclose(diff, want, atol=1e-5)


def test_constant_cam_is_zero():
    clf = build_classifier(build_encoder(SPEC, 0), 2, 0)
    for p in clf.encoder.parameters():
        p.data[:] = 0
    assert not class_activation_map(clf, np.zeros((1, 16, 16), np.float32), 0).any()


@pytest.mark.parametrize("seed", range(10))
def test_cam_maps_gradient(seed):
    rng = np.random.default_rng(seed)
    while True:
        feats = rng.uniform(0.1, 1.0, size=(2, 3, 2, 2))
        weight = rng.normal(size=(3, 2))
        # redraw near relu kinks or min/max ties
        raw = np.einsum("ndhw,d->nhw", feats, weight[:, 1])
        if np.abs(raw).min() > 0.05 and len(np.unique(np.round(raw, 2))) == raw.size:
            break
    target = rng.uniform(size=(2, 1, 4, 4))

    def loss(f, w):
        return ad.mean(ad.square(cam_maps(f, w, [1, 1], 4) - ad.Tensor(target)))

    assert grad_check(loss, feats, weight) < 1e-3
