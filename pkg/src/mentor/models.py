"""UNET-lite encoder/decoder and the encoder + linear-head classifier."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError


@dataclasses.dataclass
class ModelSpec:
    in_channels: int = 1
    input_extent: int = 32
    base_width: int = 8
    depth: int = 3
    kernel_size: int = 3
    skip_connections: bool = True
    # only "unet" is implemented; the field reserves room for nested skips
    skip_style: str = "unet"
    num_classes: int = 2
    # saliency maps are sparse: start the sigmoid head near 0.05, not 0.5
    head_bias_init: float = -3.0

    def validate(self):
        if self.depth < 1 or self.base_width < 1 or self.in_channels < 1:
            raise ConfigError("depth, base_width and in_channels must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.input_extent < 1 or self.input_extent % (2 ** self.depth):
            raise ConfigError(
                f"input extent {self.input_extent} is not divisible by 2**depth={2 ** self.depth}"
            )
        if self.skip_style != "unet":
            raise ConfigError(f"unsupported skip_style {self.skip_style!r}")
        return self

    def widths(self):
        return [self.base_width * 2 ** i for i in range(self.depth)]

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown ModelSpec fields: {sorted(unknown)}")
        return cls(**d)


def _rngs(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _conv_params(rng, cin, cout, k):
    std = math.sqrt(2.0 / (cin * k * k))
    w = rng.normal(0.0, std, size=(cout, cin, k, k)).astype(np.float32)
    return Tensor(w, requires_grad=True), Tensor(np.zeros(cout, np.float32), requires_grad=True)


class Module:
    """Named-parameter container; subclasses fill ``self.params``."""

    def __init__(self):
        self.params = {}

    def parameters(self):
        return list(self.params.values())

    def named_parameters(self, prefix=""):
        return {prefix + name: p for name, p in self.params.items()}

    def state_dict(self, prefix=""):
        return {prefix + name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, state, prefix=""):
        for name, p in self.params.items():
            key = prefix + name
            if key not in state:
                raise ConfigError(f"missing parameter {key!r} in checkpoint")
            arr = np.asarray(state[key])
            if arr.shape != p.shape:
                raise ConfigError(
                    f"parameter {key!r}: checkpoint shape {arr.shape} != model shape {p.shape}"
                )
            p.data = arr.astype(p.dtype, copy=True)
            p.zero_grad()

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def num_parameters(self):
        return int(sum(p.size for p in self.params.values()))


class EncoderNet(Module):
    """Stages of conv + relu + 2x2 max-pool; halves the extent per stage."""

    def __init__(self, spec, rng):
        super().__init__()
        self.spec = spec
        k = spec.kernel_size
        cin = spec.in_channels
        for i, w in enumerate(spec.widths()):
            self.params[f"stage{i}.weight"], self.params[f"stage{i}.bias"] = _conv_params(rng, cin, w, k)
            cin = w

    @property
    def out_channels(self):
        return self.spec.widths()[-1]

    def forward(self, x):
        """Return (pooled features, pre-pool stage outputs for skips)."""
        skips = []
        pad = self.spec.kernel_size // 2
        for i in range(self.spec.depth):
            x = ad.relu(ad.conv2d(x, self.params[f"stage{i}.weight"], padding=pad,
                                  bias=self.params[f"stage{i}.bias"]))
            skips.append(x)
            x = ad.maxpool2x(x)
        return x, skips

    __call__ = forward


class DecoderNet(Module):
    def __init__(self, spec, rng):
        super().__init__()
        self.spec = spec
        k = spec.kernel_size
        widths = spec.widths()
        cin = widths[-1]
        for j in range(spec.depth):
            level = spec.depth - 1 - j
            skip_c = widths[level] if spec.skip_connections else 0
            cout = widths[level]
            self.params[f"stage{j}.weight"], self.params[f"stage{j}.bias"] = _conv_params(
                rng, cin + skip_c, cout, k
            )
            cin = cout
        self.params["head.weight"], self.params["head.bias"] = _conv_params(rng, cin, 1, 1)
        self.params["head.bias"].data[:] = spec.head_bias_init

    def forward(self, features, skips):
        pad = self.spec.kernel_size // 2
        x = features
        for j in range(self.spec.depth):
            x = ad.upsample_nearest2x(x)
            if self.spec.skip_connections:
                x = ad.concat([x, skips[self.spec.depth - 1 - j]], axis=1)
            x = ad.relu(ad.conv2d(x, self.params[f"stage{j}.weight"], padding=pad,
                                  bias=self.params[f"stage{j}.bias"]))
        return ad.sigmoid(ad.conv2d(x, self.params["head.weight"], bias=self.params["head.bias"]))

    __call__ = forward


class ClassifierHead(Module):
    """Global average pooling followed by one fully-connected layer."""

    def __init__(self, in_features, num_classes, rng):
        super().__init__()
        bound = 1.0 / math.sqrt(in_features)
        self.params["weight"] = Tensor(
            rng.uniform(-bound, bound, size=(in_features, num_classes)).astype(np.float32),
            requires_grad=True,
        )
        self.params["bias"] = Tensor(
            rng.uniform(-bound, bound, size=num_classes).astype(np.float32), requires_grad=True
        )

    def forward(self, features):
        return ad.linear(ad.global_avg_pool(features), self.params["weight"], self.params["bias"])

    __call__ = forward


class ComposedClassifier:
    """Encoder followed by a classifier head; all parameters trainable."""

    def __init__(self, encoder, head):
        self.encoder = encoder
        self.head = head
        self.spec = encoder.spec

    def forward_features(self, images):
        feats, _ = self.encoder(images)
        return self.head(feats), feats

    def forward(self, images):
        return self.forward_features(images)[0]

    __call__ = forward

    def named_parameters(self):
        out = self.encoder.named_parameters("encoder.")
        out.update(self.head.named_parameters("head."))
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def state_dict(self):
        out = self.encoder.state_dict("encoder.")
        out.update(self.head.state_dict("head."))
        return out

    def load_state_dict(self, state):
        self.encoder.load_state_dict(state, "encoder.")
        self.head.load_state_dict(state, "head.")

    def zero_grad(self):
        self.encoder.zero_grad()
        self.head.zero_grad()

    def num_parameters(self):
        return self.encoder.num_parameters() + self.head.num_parameters()


class GazeClassifier(ComposedClassifier):
    """Encoder with both a saliency decoder and a classifier head, trained jointly."""

    def __init__(self, encoder, decoder, head):
        super().__init__(encoder, head)
        self.decoder = decoder

    def forward_all(self, images):
        feats, skips = self.encoder(images)
        return self.head(feats), self.decoder(feats, skips)

    def named_parameters(self):
        out = super().named_parameters()
        out.update(self.decoder.named_parameters("decoder."))
        return out

    def state_dict(self):
        out = super().state_dict()
        out.update(self.decoder.state_dict("decoder."))
        return out

    def load_state_dict(self, state):
        super().load_state_dict(state)
        self.decoder.load_state_dict(state, "decoder.")

    def zero_grad(self):
        super().zero_grad()
        self.decoder.zero_grad()

    def num_parameters(self):
        return super().num_parameters() + self.decoder.num_parameters()


class Autoencoder:
    """Thin pair wrapper so the encoder/decoder share checkpoint plumbing."""

    def __init__(self, encoder, decoder):
        self.encoder = encoder
        self.decoder = decoder
        self.spec = encoder.spec

    def __call__(self, images):
        return forward_saliency(self.encoder, self.decoder, images)

    def named_parameters(self):
        out = self.encoder.named_parameters("encoder.")
        out.update(self.decoder.named_parameters("decoder."))
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def state_dict(self):
        out = self.encoder.state_dict("encoder.")
        out.update(self.decoder.state_dict("decoder."))
        return out

    def load_state_dict(self, state):
        self.encoder.load_state_dict(state, "encoder.")
        self.decoder.load_state_dict(state, "decoder.")

    def zero_grad(self):
        self.encoder.zero_grad()
        self.decoder.zero_grad()


def build_autoencoder(spec, seed):
    spec.validate()
    enc_rng, dec_rng = _rngs(seed, 2)
    return EncoderNet(spec, enc_rng), DecoderNet(spec, dec_rng)


def build_encoder(spec, seed):
    """The encoder half of :func:`build_autoencoder` (identical weights for a seed)."""
    return build_autoencoder(spec, seed)[0]


def build_classifier(encoder, num_classes, seed):
    """Attach a freshly seeded head to ``encoder``; encoder weights are copied unchanged."""
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    enc = EncoderNet.__new__(EncoderNet)
    Module.__init__(enc)
    enc.spec = encoder.spec
    for name, p in encoder.params.items():
        enc.params[name] = Tensor(p.data.copy(), requires_grad=True)
    head_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x4EAD]))
    head = ClassifierHead(enc.out_channels, num_classes, head_rng)
    return ComposedClassifier(enc, head)


def build_gaze_classifier(spec, num_classes, seed):
    enc, dec = build_autoencoder(spec, seed)
    model = build_classifier(enc, num_classes, seed)
    return GazeClassifier(model.encoder, dec, model.head)


def _check_images(spec, images):
    if images.ndim != 4 or images.shape[1] != spec.in_channels:
        raise ValueError(
            f"expected images shaped (N,{spec.in_channels},H,W), got {images.shape}"
        )
    if images.shape[2:] != (spec.input_extent, spec.input_extent):
        raise ValueError(
            f"image extent {images.shape[2:]} does not match model extent {spec.input_extent}"
        )


def forward_saliency(enc, dec, images):
    """Predicted saliency maps (N,1,H,W) in [0, 1]."""
    images = ad.as_tensor(images)
    _check_images(enc.spec, images)
    feats, skips = enc(images)
    return dec(feats, skips)


# --------------------------------------------------------------------- CAM
def _upsample_to(x, factor):
    while factor > 1:
        x = ad.upsample_nearest2x(x)
        factor //= 2
    return x


def cam_maps(features, fc_weight, class_index, extent, eps=1e-8):
    """Differentiable min-max normalised CAMs, shape (N,1,extent,extent).

    ``class_index`` is one class per sample. Constant maps come out as zeros.
    """
    n, d = features.shape[:2]
    cols = ad.take(fc_weight, np.broadcast_to(np.asarray(class_index), (n,)), axis=1)  # (D,N)
    w = ad.reshape(ad.transpose(cols, (1, 0)), (n, d, 1, 1))
    raw = ad.relu(ad.tsum(features * w, axis=1, keepdims=True))
    raw = _upsample_to(raw, extent // features.shape[-1])
    lo = ad.amin(raw, axis=(1, 2, 3), keepdims=True)
    hi = ad.amax(raw, axis=(1, 2, 3), keepdims=True)
    return (raw - lo) / (hi - lo + eps)


def class_activation_map(model, image, class_index):
    """CAM of one image for ``class_index`` as a (H, W) array in [0, 1]."""
    image = ad.as_tensor(image)
    if image.ndim == 3:
        image = ad.reshape(image, (1,) + image.shape)
    _check_images(model.spec, image)
    with ad.no_grad():
        _, feats = model.forward_features(image)
        w = model.head.params["weight"].data[:, class_index].astype(np.float64)
        raw = np.maximum(np.tensordot(w, feats.data[0].astype(np.float64), axes=(0, 0)), 0.0)
    factor = model.spec.input_extent // raw.shape[-1]
    raw = raw.repeat(factor, axis=0).repeat(factor, axis=1)
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)
