"""Flat binary parameter archive plus JSON sidecar.

Each record is ``u32 name_len | name (utf-8) | u32 rank | u32 extents[rank] |
float32 data`` with every integer and float little-endian.  Records are
written in sorted name order so identical parameters give identical bytes.
"""

import json
import os
import struct

import numpy as np

from .errors import ConfigError

_U32 = struct.Struct("<I")


def sidecar_path(path):
    return os.fspath(path) + ".json"


def encode_params(params):
    chunks = []
    for name in sorted(params):
        arr = np.asarray(params[name], dtype="<f4", order="C")
        raw = name.encode("utf-8")
        chunks.append(_U32.pack(len(raw)))
        chunks.append(raw)
        chunks.append(_U32.pack(arr.ndim))
        chunks.extend(_U32.pack(n) for n in arr.shape)
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def decode_params(blob):
    params = {}
    pos = 0

    def u32():
        nonlocal pos
        if pos + 4 > len(blob):
            raise ConfigError("truncated checkpoint")
        (v,) = _U32.unpack_from(blob, pos)
        pos += 4
        return v

    while pos < len(blob):
        n = u32()
        name = blob[pos:pos + n].decode("utf-8")
        pos += n
        rank = u32()
        shape = tuple(u32() for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64))
        end = pos + 4 * count
        if end > len(blob):
            raise ConfigError(f"truncated checkpoint while reading {name!r}")
        params[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(shape).astype(np.float32)
        pos = end
    return params


def save_checkpoint(path, params, meta):
    """Write ``params`` (name -> array) and a JSON sidecar ``meta``."""
    with open(path, "wb") as fh:
        fh.write(encode_params(params))
    with open(sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    with open(path, "rb") as fh:
        params = decode_params(fh.read())
    try:
        with open(sidecar_path(path)) as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"checkpoint {path} has no sidecar {sidecar_path(path)}") from None
    return params, meta


def save_model(path, model, kind, **extra):
    meta = {"kind": kind, "model_spec": model.spec.to_dict(), **extra}
    save_checkpoint(path, model.state_dict(), meta)


def load_model(path):
    """Rebuild an autoencoder or classifier from a checkpoint."""
    from .models import (Autoencoder, ModelSpec, build_autoencoder, build_classifier,
                         build_gaze_classifier)

    params, meta = load_checkpoint(path)
    spec = ModelSpec.from_dict(meta["model_spec"]).validate()
    kind = meta.get("kind")
    if kind == "autoencoder":
        model = Autoencoder(*build_autoencoder(spec, 0))
    elif kind == "classifier":
        enc, _ = build_autoencoder(spec, 0)
        model = build_classifier(enc, spec.num_classes, 0)
    elif kind == "gaze_classifier":
        model = build_gaze_classifier(spec, spec.num_classes, 0)
    else:
        raise ConfigError(f"unknown checkpoint kind {kind!r}")
    extra = set(params) - set(model.state_dict())
    if extra:
        raise ConfigError(f"checkpoint has parameters the model lacks: {sorted(extra)}")
    model.load_state_dict(params)
    return model, meta
