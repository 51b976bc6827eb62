"""Checkpoint container holding every parameter tensor plus the run config.

Layout (integers little-endian):

    magic "ATCK" | u32 version=1 | u32 tensor count
    per tensor: u16 name length | UTF-8 name | u32 rank | u32 extents...
                | raw little-endian float32 payload
    trailer: u32 JSON length | UTF-8 JSON (config echo and input dims)
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .autodiff import Parameter
from .config import RunConfig, build_config
from .errors import DataFormatError

MAGIC = b"ATCK"
VERSION = 1


def save_checkpoint(
    params: list[Parameter], meta: dict, path
) -> None:
    """Write parameters (in the given order) and a JSON metadata trailer."""
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise ValueError("duplicate parameter names in checkpoint")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(params)))
        for p in params:
            encoded = p.name.encode("utf-8")
            # ascontiguousarray alone would promote 0-d tensors to 1-d
            value = np.ascontiguousarray(p.value, dtype="<f4").reshape(p.value.shape)
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", value.ndim))
            fh.write(struct.pack(f"<{value.ndim}I", *value.shape))
            fh.write(value.tobytes())
        trailer = json.dumps(meta, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(trailer)))
        fh.write(trailer)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back (name -> float32 array, metadata)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise DataFormatError(f"{path}: not a checkpoint (bad magic at offset 0)")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    tensors: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, offset)
            offset += 2
            name = raw[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            shape = struct.unpack_from(f"<{rank}I", raw, offset)
            offset += 4 * rank
            n = int(np.prod(shape, dtype=np.int64)) if rank else 1
            data = np.frombuffer(raw, dtype="<f4", count=n, offset=offset)
            offset += 4 * n
            tensors[name] = data.reshape(shape).copy()
        (meta_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        meta = json.loads(raw[offset : offset + meta_len].decode("utf-8"))
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise DataFormatError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
    return tensors, meta


def model_meta(cfg: RunConfig, input_dim_a: int, input_dim_t: int) -> dict:
    return {
        "config": cfg.to_dict(),
        "input_dim_a": input_dim_a,
        "input_dim_t": input_dim_t,
    }


def restore_model(path):
    """Rebuild a DepressionModel from a full-model checkpoint."""
    from .fusion import DepressionModel  # local import avoids a cycle

    tensors, meta = load_checkpoint(path)
    if "config" not in meta:
        raise DataFormatError(f"{path}: checkpoint trailer lacks the config echo")
    doc = dict(meta["config"])
    profile = doc.pop("profile", None)
    cfg = build_config(doc, profile)
    model = DepressionModel(cfg, meta["input_dim_a"], meta["input_dim_t"])
    load_into_parameters(model.parameters(), tensors, path)
    return model


def load_into_parameters(
    params: list[Parameter], tensors: dict[str, np.ndarray], source="checkpoint"
) -> None:
    for p in params:
        if p.name not in tensors:
            raise DataFormatError(f"{source}: missing tensor {p.name!r}")
        stored = tensors[p.name]
        if stored.shape != p.value.shape:
            raise DataFormatError(
                f"{source}: tensor {p.name!r} has shape {stored.shape}, "
                f"model expects {p.value.shape}"
            )
        p.value[...] = stored.astype(p.value.dtype)
