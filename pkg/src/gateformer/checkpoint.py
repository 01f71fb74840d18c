"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"GFCK"                      magic
    u32  version (= 1)
    u32  config block length in bytes
    ...  UTF-8 config block, "key=value" lines
    then, per parameter in declared order:
    u16  name length, UTF-8 name
    u8   rank
    u32  dims[rank]
    f32  data, row-major

The config block holds every ModelConfig field plus the bookkeeping keys
``meta.best_val_loss`` and ``meta.epoch``.
"""

from __future__ import annotations

import os
import struct
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError, ConfigError
from .model import GateformerParams, ModelConfig, param_shapes

MAGIC = b"GFCK"
VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    params: "OrderedDict[str, np.ndarray]"
    best_val_loss: float = float("nan")
    epoch: int = -1

    def to_params(self, dtype=np.float32) -> GateformerParams:
        return GateformerParams.from_arrays(self.params, dtype=dtype)

    @classmethod
    def from_params(cls, config: ModelConfig, params: GateformerParams, best_val_loss: float = float("nan"),
                    epoch: int = -1) -> "Checkpoint":
        arrays = OrderedDict((n, t.data.astype(np.float32, copy=True)) for n, t in params.items())
        return cls(config, arrays, best_val_loss, epoch)


def _encode_config(ckpt: Checkpoint) -> bytes:
    lines = [f"{k}={v}" for k, v in ckpt.config.to_items()]
    lines.append(f"meta.best_val_loss={ckpt.best_val_loss!r}")
    lines.append(f"meta.epoch={ckpt.epoch}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def dumps(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    cfg = _encode_config(ckpt)
    parts += [struct.pack("<I", len(cfg)), cfg]
    for name, arr in ckpt.params.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        parts += [struct.pack("<H", len(raw)), raw, struct.pack("<B", arr.ndim)]
        parts += [struct.pack(f"<{arr.ndim}I", *arr.shape), arr.tobytes()]
    return b"".join(parts)


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(dumps(ckpt))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    (cfg_len,) = r.unpack("<I", "config length")
    try:
        text = r.take(cfg_len, "config block").decode("utf-8")
    except UnicodeDecodeError:
        raise CheckpointError("config block is not valid UTF-8") from None
    items, meta = {}, {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise CheckpointError(f"malformed config line {line!r}")
        (meta if key.startswith("meta.") else items)[key] = val
    try:
        config = ModelConfig.from_items(items)
    except ConfigError as exc:
        raise CheckpointError(f"invalid embedded config: {exc}") from None

    expected = param_shapes(config)
    params: OrderedDict[str, np.ndarray] = OrderedDict()
    for exp_name, exp_shape, _ in expected:
        (n,) = r.unpack("<H", "name length")
        name = r.take(n, "name").decode("utf-8")
        (rank,) = r.unpack("<B", f"rank of {name}")
        dims = r.unpack(f"<{rank}I", f"dims of {name}")
        if name != exp_name or tuple(dims) != exp_shape:
            raise CheckpointError(f"parameter {name} {tuple(dims)} does not match config "
                                  f"(expected {exp_name} {exp_shape})")
        count = int(np.prod(dims, dtype=np.int64))
        data = r.take(4 * count, f"data of {name}")
        params[name] = np.frombuffer(data, dtype="<f4").reshape(dims).astype(np.float32)
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after last parameter")
    return Checkpoint(config, params, float(meta.get("meta.best_val_loss", "nan")),
                      int(meta.get("meta.epoch", "-1")))


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    if not os.path.isfile(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        return loads(fh.read())
