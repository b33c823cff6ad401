"""Binary checkpoints.

Layout: ``TDCKPT\\n``, an 8-byte little-endian header length, a UTF-8 JSON
header (sorted keys), then every array as raw little-endian float64 in
header order.  The bytes depend only on the config and parameter values,
so identical training runs produce identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import tdconv
from .model import ModelConfig, build_model

MAGIC = b"TDCKPT\n"
VERSION = 1


def _pack(header: dict, arrays: dict[str, np.ndarray]) -> bytes:
    header = dict(header, version=VERSION,
                  arrays=[{"name": k, "shape": list(v.shape)} for k, v in arrays.items()])
    blob = json.dumps(header, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in arrays.values())
    return MAGIC + struct.pack("<Q", len(blob)) + blob + body


def _unpack(raw: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if not raw.startswith(MAGIC):
        raise ValueError("not a checkpoint file")
    off = len(MAGIC)
    (n,) = struct.unpack_from("<Q", raw, off)
    off += 8
    header = json.loads(raw[off : off + n])
    off += n
    if header.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')}")
    arrays = {}
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        arrays[spec["name"]] = np.frombuffer(raw, "<f8", count, off).reshape(spec["shape"]).astype(np.float64)
        off += 8 * count
    if off != len(raw):
        raise ValueError("trailing bytes in checkpoint")
    return header, arrays


def dumps(model, meta: dict | None = None) -> bytes:
    """Serialize ``model``; ``meta`` is an optional JSON-able dict stored in the header."""
    header = {"kind": model.config.kind, "config": model.config.to_dict()}
    if meta is not None:
        header["meta"] = meta
    return _pack(header, model.params)


def read_meta(raw: bytes) -> dict:
    return _unpack(raw)[0].get("meta", {})


def loads(raw: bytes):
    header, arrays = _unpack(raw)
    config = ModelConfig.from_dict(header["config"])
    if header["kind"] != config.kind:
        raise ValueError("checkpoint kind does not match its config")
    model = build_model(config, 0)
    params = model.params
    if set(params) != set(arrays):
        raise ValueError(f"checkpoint arrays {sorted(arrays)} do not match model {sorted(params)}")
    for k, v in arrays.items():
        if params[k].shape != v.shape:
            raise ValueError(f"array {k} has shape {v.shape}, model expects {params[k].shape}")
        params[k][...] = v
    return model


def save(path: str | Path, model, meta: dict | None = None):
    Path(path).write_bytes(dumps(model, meta))


def load(path: str | Path):
    return loads(Path(path).read_bytes())


def dumps_params(p: tdconv.TdConvParams) -> bytes:
    header = {"kind": "tdconv-layer", "K_u": p.K_u, "K_v": p.K_v, "D": p.D,
              "patch_lengths": list(p.patch_lengths), "lam": p.lam, "mu": p.mu}
    return _pack(header, p.arrays())


def loads_params(raw: bytes) -> tdconv.TdConvParams:
    h, a = _unpack(raw)
    V = [a[f"V{k}"] for k in range(h["K_v"])]
    U = a["U"].reshape(h["K_u"], h["D"])
    return tdconv.TdConvParams(U, V, a["b"], h["lam"], h["mu"], tuple(h["patch_lengths"]))
