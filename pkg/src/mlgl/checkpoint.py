"""Binary checkpoint format.

Layout (all integers little-endian):

    magic          4s   b"MLGL"
    version        u32
    epoch          u64
    config_len     u32, then UTF-8 JSON (canonical: sorted keys, no spaces)
    rng_len        u32, then UTF-8 JSON
    tensor_count   u64
    per tensor:
        name_len   u16, then UTF-8 name
        dtype      u8 (0 = float32, 1 = float64)
        ndim       u8
        dims       u32 * ndim
        crc32      u32 of the payload
        payload    raw little-endian values

Optimizer slots ride along under the "optim." prefix; loaders that only
need the model ignore them.  Every tensor carries its own checksum so a
corrupt record is reported by name.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"MLGL"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def collect_state(model, optimizer=None) -> dict[str, np.ndarray]:
    state: dict[str, np.ndarray] = {}
    for name, p in model.named_parameters():
        state[name] = p.data
    for name, b in model.named_buffers():
        state[name] = b
    if optimizer is not None:
        for name, arr in optimizer.state_tensors().items():
            state[f"optim.{name}"] = arr
    return state


def save_checkpoint(path, model, config: dict, epoch: int, rng_state: dict,
                    optimizer=None):
    state = collect_state(model, optimizer)
    cfg_blob = _canonical_json(config)
    rng_blob = _canonical_json(rng_state)
    parts = [MAGIC,
             struct.pack("<I", VERSION),
             struct.pack("<Q", epoch),
             struct.pack("<I", len(cfg_blob)), cfg_blob,
             struct.pack("<I", len(rng_blob)), rng_blob,
             struct.pack("<Q", len(state))]
    for name, arr in state.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _CODES:
            raise CheckpointError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        payload = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(struct.pack("<I", zlib.crc32(payload)))
        parts.append(payload)
    Path(path).write_bytes(b"".join(parts))


@dataclass
class Checkpoint:
    version: int
    epoch: int
    config: dict
    rng_state: dict
    tensors: dict[str, np.ndarray]


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint while reading {what} "
                                  f"at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path) -> Checkpoint:
    p = Path(path)
    if not p.is_file():
        raise CheckpointError(f"checkpoint not found: {p}")
    r = _Reader(p.read_bytes())
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError(f"{p} is not a checkpoint (bad magic)")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (epoch,) = r.unpack("<Q", "epoch")
    (n_cfg,) = r.unpack("<I", "config length")
    try:
        config = json.loads(r.take(n_cfg, "config").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt config block: {e}") from None
    (n_rng,) = r.unpack("<I", "rng length")
    try:
        rng_state = json.loads(r.take(n_rng, "rng state").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt rng block: {e}") from None
    (count,) = r.unpack("<Q", "tensor count")
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = r.unpack("<H", f"tensor {i} name length")
        name = r.take(name_len, f"tensor {i} name").decode("utf-8")
        code, ndim = r.unpack("<BB", f"tensor {name!r} header")
        if code not in _DTYPES:
            raise CheckpointError(f"tensor {name!r} has unknown dtype code {code}")
        shape = r.unpack(f"<{ndim}I", f"tensor {name!r} shape")
        (crc,) = r.unpack("<I", f"tensor {name!r} checksum")
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        payload = r.take(size * _DTYPES[code].itemsize, f"tensor {name!r} payload")
        if zlib.crc32(payload) != crc:
            raise CheckpointError(f"checksum mismatch in tensor {name!r}; "
                                  "the checkpoint is corrupt")
        tensors[name] = np.frombuffer(payload, dtype=_DTYPES[code]).reshape(shape).copy()
    if r.pos != len(r.data):
        raise CheckpointError(f"{len(r.data) - r.pos} trailing bytes after last tensor")
    return Checkpoint(version, epoch, config, rng_state, tensors)


def restore_model(model, tensors: dict[str, np.ndarray]):
    """Copy saved tensors into a model built from the same config."""
    wanted: dict[str, np.ndarray] = {}
    for name, p in model.named_parameters():
        wanted[name] = p.data
    for name, b in model.named_buffers():
        wanted[name] = b
    missing = [n for n in wanted if n not in tensors]
    if missing:
        raise CheckpointError(f"checkpoint is missing tensors: {', '.join(missing[:5])}")
    extra = [n for n in tensors if n not in wanted and not n.startswith("optim.")]
    if extra:
        raise CheckpointError(f"checkpoint has unexpected tensors: {', '.join(extra[:5])}")
    for name, dest in wanted.items():
        src = tensors[name]
        if src.shape != dest.shape:
            raise CheckpointError(f"tensor {name!r} has shape {src.shape}, "
                                  f"model expects {dest.shape}")
        dest[...] = src.astype(dest.dtype, copy=False)


def restore_optimizer(optimizer, tensors: dict[str, np.ndarray]):
    blob = {name[len("optim."):]: arr for name, arr in tensors.items()
            if name.startswith("optim.")}
    if not blob:
        raise CheckpointError("checkpoint has no optimizer state to resume from")
    optimizer.load_state_tensors(blob)
