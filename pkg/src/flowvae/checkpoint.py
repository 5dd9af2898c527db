"""Binary checkpoint format for trained models.

Layout (little-endian throughout)::

    b"FVAE"  u16 version  u16 len + preset name (UTF-8)  u32 layer count
    per layer:  u8 role  u8 kind  u32 n_ints + i64 config ints
                params then buffers, each as u32 size + f64 values
    b"HEAD"  u8 head kind (0 none, 1 llc dense, 2 lbd scalar) + f64 values
    b"META"  u32 len + JSON (preset, schema, scaling)

Floats are stored as raw 64-bit values, so a save/load round trip is
bit-exact.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from flowvae.classifiers import LbdDetector, LlcHead, TrainedModel
from flowvae.data.schema import FeatureSchema
from flowvae.data.transforms import ScalingSpec
from flowvae.errors import DataError
from flowvae.nn.functional import ACTIVATIONS, PADDINGS
from flowvae.nn.layers import BatchNorm, Conv1D, Dense, Reshape, Sequential, TransposedConv1D
from flowvae.presets import Preset
from flowvae.vae import VaeModel

MAGIC = b"FVAE"
VERSION = 1
ROLES = ("encoder", "mu", "logvar", "decoder")
KINDS = ("dense", "conv1d", "tconv1d", "batchnorm", "reshape")
HEAD_NONE, HEAD_LLC, HEAD_LBD = 0, 1, 2


def _layer_config(layer) -> list[int]:
    if isinstance(layer, Dense):
        return [layer.n_in, layer.n_out, ACTIVATIONS.index(layer.activation)]
    if isinstance(layer, TransposedConv1D):
        return [layer.k, layer.c_in, layer.c_out, layer.stride, PADDINGS.index(layer.padding),
                ACTIVATIONS.index(layer.activation), layer.out_len]
    if isinstance(layer, Conv1D):
        return [layer.k, layer.c_in, layer.c_out, layer.stride, PADDINGS.index(layer.padding),
                ACTIVATIONS.index(layer.activation)]
    if isinstance(layer, BatchNorm):
        # momentum/epsilon travel as their raw float bits
        return [layer.channels, *np.array([layer.momentum, layer.epsilon], "<f8").view("<i8").tolist()]
    if isinstance(layer, Reshape):
        return list(layer.shape)
    raise TypeError(f"cannot serialize {type(layer).__name__}")


def _make_layer(kind: str, cfg: list[int]):
    if kind == "dense":
        return Dense(cfg[0], cfg[1], ACTIVATIONS[cfg[2]])
    if kind == "conv1d":
        return Conv1D(cfg[0], cfg[1], cfg[2], cfg[3], PADDINGS[cfg[4]], ACTIVATIONS[cfg[5]])
    if kind == "tconv1d":
        return TransposedConv1D(cfg[0], cfg[1], cfg[2], cfg[3], PADDINGS[cfg[4]], cfg[6], ACTIVATIONS[cfg[5]])
    if kind == "batchnorm":
        momentum, epsilon = np.array(cfg[1:3], "<i8").view("<f8").tolist()
        return BatchNorm(cfg[0], momentum, epsilon)
    return Reshape(cfg)


def _flat_layers(vae: VaeModel):
    for role, part in vae.parts():
        for layer in (part if isinstance(part, Sequential) else [part]):
            yield ROLES.index(role), layer


def _write_array(fh, arr):
    arr = np.ascontiguousarray(arr, dtype="<f8").ravel()
    fh.write(struct.pack("<I", arr.size))
    fh.write(arr.tobytes())


def _read_exact(fh, n):
    data = fh.read(n)
    if len(data) != n:
        raise DataError("truncated checkpoint")
    return data


def _read_array(fh, out: np.ndarray):
    (size,) = struct.unpack("<I", _read_exact(fh, 4))
    if size != out.size:
        raise DataError(f"checkpoint array has {size} values, layer expects {out.size}")
    out[...] = np.frombuffer(_read_exact(fh, 8 * size), "<f8").reshape(out.shape)


def _scaling_json(spec: ScalingSpec) -> dict:
    return {"kind": spec.kind, "features": list(spec.features),
            **{k: v.tolist() for k, v in spec.arrays().items()}}


def _scaling_from_json(d: dict) -> ScalingSpec:
    arrays = {k: np.array(d[k], dtype=np.float64) for k in ("low", "high", "mean", "std") if k in d}
    return ScalingSpec(d["kind"], tuple(d["features"]), **arrays)


def dumps(model: TrainedModel) -> bytes:
    fh = io.BytesIO()
    name = model.preset.name.encode("utf-8")
    layers = list(_flat_layers(model.vae))
    fh.write(MAGIC + struct.pack("<HH", VERSION, len(name)) + name + struct.pack("<I", len(layers)))
    for role, layer in layers:
        cfg = _layer_config(layer)
        fh.write(struct.pack("<BBI", role, KINDS.index(layer.kind), len(cfg)))
        fh.write(np.array(cfg, "<i8").tobytes())
        for arr in (*layer.params.values(), *layer.buffers().values()):
            _write_array(fh, arr)
    fh.write(b"HEAD")
    if isinstance(model.head, LlcHead):
        fh.write(struct.pack("<BII", HEAD_LLC, model.head.layer.n_in, model.head.layer.n_out))
        _write_array(fh, model.head.layer.params["W"])
        _write_array(fh, model.head.layer.params["b"])
    elif isinstance(model.head, LbdDetector):
        fh.write(struct.pack("<B", HEAD_LBD) + struct.pack("<dd", model.head.w, model.head.b))
    else:
        fh.write(struct.pack("<B", HEAD_NONE))
    meta = json.dumps({
        "preset": model.preset.as_dict(),
        "features": list(model.schema.features),
        "classes": list(model.schema.classes),
        "label_column": model.schema.label_column,
        "scaling": _scaling_json(model.scaling),
        "n_in": model.vae.n_in,
    }, sort_keys=True).encode("utf-8")
    fh.write(b"META" + struct.pack("<I", len(meta)) + meta)
    return fh.getvalue()


def loads(data: bytes) -> TrainedModel:
    fh = io.BytesIO(data)
    if _read_exact(fh, 4) != MAGIC:
        raise DataError("not a flowvae checkpoint (bad magic)")
    version, name_len = struct.unpack("<HH", _read_exact(fh, 4))
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    _read_exact(fh, name_len)
    (count,) = struct.unpack("<I", _read_exact(fh, 4))
    parts: dict[int, list] = {i: [] for i in range(len(ROLES))}
    for _ in range(count):
        role, kind, n_cfg = struct.unpack("<BBI", _read_exact(fh, 6))
        if role >= len(ROLES) or kind >= len(KINDS):
            raise DataError("corrupt checkpoint layer header")
        cfg = np.frombuffer(_read_exact(fh, 8 * n_cfg), "<i8").tolist()
        layer = _make_layer(KINDS[kind], cfg)
        for arr in (*layer.params.values(), *layer.buffers().values()):
            _read_array(fh, arr)
        parts[role].append(layer)
    if _read_exact(fh, 4) != b"HEAD":
        raise DataError("checkpoint head section missing")
    (head_kind,) = struct.unpack("<B", _read_exact(fh, 1))
    head = None
    if head_kind == HEAD_LLC:
        n_in, n_out = struct.unpack("<II", _read_exact(fh, 8))
        head = LlcHead(n_in, n_out)
        _read_array(fh, head.layer.params["W"])
        _read_array(fh, head.layer.params["b"])
    elif head_kind == HEAD_LBD:
        head = LbdDetector(*struct.unpack("<dd", _read_exact(fh, 16)))
    if _read_exact(fh, 4) != b"META":
        raise DataError("checkpoint meta section missing")
    (meta_len,) = struct.unpack("<I", _read_exact(fh, 4))
    meta = json.loads(_read_exact(fh, meta_len).decode("utf-8"))
    if len(parts[1]) != 1 or len(parts[2]) != 1:
        raise DataError("checkpoint lacks latent layers")
    decoder = Sequential(parts[3]) if parts[3] else None
    vae = VaeModel(Sequential(parts[0]), parts[1][0], parts[2][0], decoder, meta["n_in"])
    schema = FeatureSchema(tuple(meta["features"]), tuple(meta["classes"]), meta["label_column"])
    return TrainedModel(vae, head, Preset.from_dict(meta["preset"]), schema, _scaling_from_json(meta["scaling"]))


def save_model(model: TrainedModel, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(dumps(model))


def load_model(path) -> TrainedModel:
    return loads(Path(path).read_bytes())
