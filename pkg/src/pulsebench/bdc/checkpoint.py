"""Self-describing checkpoint container.

Layout::

    b"PBCKPT\\0\\0"            8-byte magic
    uint32 LE                  format version
    uint64 LE                  header length H
    H bytes of UTF-8 JSON      config, metadata and tensor table
    payload                    little-endian tensors back to back

Each tensor table entry holds ``name``, ``dtype`` (``<f4`` or ``<f8``),
``shape`` and ``offset`` into the payload.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from ..errors import FormatError
from .config import AttentionStackConfig, param_shapes
from .model import ModelParams

MAGIC = b"PBCKPT\0\0"
VERSION = 1


def save_checkpoint(path: str | Path, cfg: AttentionStackConfig, params: ModelParams, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table, chunks, offset = [], [], 0
    for name, _ in param_shapes(cfg):
        arr = params[name].detach().cpu().numpy()
        dt = "<f8" if arr.dtype == np.float64 else "<f4"
        raw = np.ascontiguousarray(arr, dtype=dt).tobytes()
        table.append({"name": name, "dtype": dt, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"config": cfg.to_dict(), "meta": meta or {}, "tensors": table},
                        sort_keys=True).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for c in chunks:
            fh.write(c)
    tmp.replace(path)
    return path


def load_checkpoint(path: str | Path) -> tuple[AttentionStackConfig, ModelParams, dict]:
    """Return ``(config, params, meta)``; params are detached tensors."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    start = 8 + struct.calcsize("<IQ")
    if len(data) < start:
        raise FormatError(f"{path}: truncated header")
    version, hlen = struct.unpack_from("<IQ", data, 8)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    if len(data) < start + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
        cfg = AttentionStackConfig.from_dict(header["config"])
        table, meta = list(header["tensors"]), header["meta"]
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: corrupt header") from exc
    payload = memoryview(data)[start + hlen:]
    params: ModelParams = {}
    for entry in table:
        try:
            dt = np.dtype(entry["dtype"])
            shape = [int(v) for v in entry["shape"]]
            offset = int(entry["offset"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: corrupt tensor table") from exc
        if dt.str not in ("<f4", "<f8") or offset < 0:
            raise FormatError(f"{path}: corrupt tensor table")
        end = offset + int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if end > len(payload):
            raise FormatError(f"{path}: truncated payload for {entry['name']}")
        arr = np.frombuffer(payload[offset:end], dtype=dt).reshape(shape)
        params[entry["name"]] = torch.from_numpy(arr.astype(dt.newbyteorder("="), copy=True))
    expected = {name: tuple(shape) for name, shape in param_shapes(cfg)}
    got = {k: tuple(v.shape) for k, v in params.items()}
    if expected != got:
        raise FormatError(f"{path}: tensor table does not match its config")
    return cfg, params, meta
