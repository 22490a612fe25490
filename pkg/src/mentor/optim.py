"""AdamW and momentum SGD with a step learning-rate schedule."""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ConfigError


@dataclasses.dataclass
class OptimizerSpec:
    name: str = "sgd"
    lr: float = 0.005
    # adamw
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    # sgd
    momentum: float = 0.9
    # schedule: lr * gamma ** (epoch // step_epochs); step_epochs=0 keeps lr fixed
    step_epochs: int = 0
    gamma: float = 1.0

    def validate(self):
        if self.name not in ("adamw", "sgd"):
            raise ConfigError(f"unknown optimizer {self.name!r}")
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.step_epochs < 0 or self.weight_decay < 0 or not 0 <= self.momentum < 1:
            raise ConfigError("step_epochs, weight_decay must be >= 0 and momentum in [0, 1)")
        return self

    @classmethod
    def adamw(cls, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01, **kw):
        return cls(name="adamw", lr=lr, betas=tuple(betas), eps=eps, weight_decay=weight_decay, **kw)

    @classmethod
    def sgd(cls, lr=0.005, momentum=0.9, step_epochs=12, gamma=0.1, weight_decay=0.0):
        return cls(name="sgd", lr=lr, momentum=momentum, step_epochs=step_epochs, gamma=gamma,
                   weight_decay=weight_decay)

    def lr_at(self, epoch):
        return step_lr(self.lr, epoch, self.step_epochs, self.gamma)

    def build(self, params):
        self.validate()
        if self.name == "adamw":
            return AdamW(params, lr=self.lr, betas=self.betas, eps=self.eps,
                         weight_decay=self.weight_decay)
        return SGD(params, lr=self.lr, momentum=self.momentum, weight_decay=self.weight_decay)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown optimizer fields: {sorted(unknown)}")
        d = dict(d)
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)


def step_lr(lr0, epoch, step_epochs, gamma):
    if not step_epochs:
        return lr0
    return lr0 * gamma ** (epoch // step_epochs)


class Optimizer:
    def __init__(self, params, lr):
        self.params = list(params)
        self.lr = lr

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def has_nan(self):
        return False


class SGD(Optimizer):
    """Heavy-ball momentum: ``buf = momentum * buf + g; p -= lr * buf``."""

    def __init__(self, params, lr=0.005, momentum=0.9, weight_decay=0.0):
        super().__init__(params, lr)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.bufs = [None] * len(self.params)

    def step(self):
        for i, p in enumerate(self.params):
            g = p.grad.astype(np.float64)
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            if self.momentum:
                buf = g if self.bufs[i] is None else self.momentum * self.bufs[i] + g
                self.bufs[i] = buf
                g = buf
            p.data = (p.data - self.lr * g).astype(p.dtype)

    def has_nan(self):
        return any(b is not None and not np.all(np.isfinite(b)) for b in self.bufs)


class AdamW(Optimizer):
    """Adam with decoupled weight decay applied before the moment update."""

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        super().__init__(params, lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros(p.shape) for p in self.params]
        self.v = [np.zeros(p.shape) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad.astype(np.float64)
            w = p.data.astype(np.float64)
            if self.weight_decay:
                w = w * (1.0 - self.lr * self.weight_decay)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            w = w - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = w.astype(p.dtype)

    def has_nan(self):
        return any(not (np.all(np.isfinite(m)) and np.all(np.isfinite(v)))
                   for m, v in zip(self.m, self.v))
