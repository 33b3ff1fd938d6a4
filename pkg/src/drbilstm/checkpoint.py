"""Binary checkpoint format.

Layout (little-endian)::

    b"DRBL"  uint32 version
    uint32 n, n bytes    config block: UTF-8 "key = value" lines
    uint32 count
    count x (uint32 name_len, name, uint32 rank, rank x uint32 extent, float32 values)

Optimizer moments are stored as ordinary tensors named ``adam.m.<param>`` and
``adam.v.<param>``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ModelConfig, from_key_values, parse_key_values
from .errors import FormatError, VersionError
from .model import ModelParams, init_params
from .trainer import AdamState

MAGIC = b"DRBL"
VERSION = 1
_META_KEYS = ("vocab_size", "frozen_rows", "best_dev_accuracy", "seed", "adam_t", "adam_lr",
              "adam_beta1", "adam_beta2", "adam_eps")


@dataclass
class Checkpoint:
    config: ModelConfig
    tensors: dict
    vocab_size: int
    frozen_rows: list = field(default_factory=list)
    optimizer: Optional[AdamState] = None
    best_dev_accuracy: Optional[float] = None
    seed: Optional[int] = None

    def to_params(self) -> ModelParams:
        params = init_params(self.config, self.vocab_size, np.random.default_rng(0), unk_index=None)
        params.embedding.frozen_rows = np.asarray(self.frozen_rows, dtype=np.int64)
        for name, t in params.all_tensors().items():
            if name not in self.tensors:
                raise FormatError(f"checkpoint lacks tensor {name}")
            stored = self.tensors[name]
            if stored.shape != t.shape:
                raise FormatError(f"tensor {name}: stored {stored.shape}, model expects {t.shape}")
            t.data[...] = stored.astype(t.data.dtype)
        return params


def save_checkpoint(
    path,
    params: ModelParams,
    config: ModelConfig,
    optimizer: Optional[AdamState] = None,
    best_dev_accuracy: Optional[float] = None,
    seed: Optional[int] = None,
) -> None:
    tensors = {name: t.data for name, t in params.all_tensors().items()}
    meta = {
        "vocab_size": len(params.embedding),
        "frozen_rows": ",".join(str(int(i)) for i in params.embedding.frozen_rows),
        "best_dev_accuracy": "none" if best_dev_accuracy is None else repr(float(best_dev_accuracy)),
        "seed": "none" if seed is None else int(seed),
    }
    if optimizer is not None:
        meta.update(adam_t=optimizer.t, adam_lr=repr(optimizer.lr), adam_beta1=repr(optimizer.beta1),
                    adam_beta2=repr(optimizer.beta2), adam_eps=repr(optimizer.eps))
        for name in sorted(optimizer.m):
            tensors[f"adam.m.{name}"] = optimizer.m[name]
            tensors[f"adam.v.{name}"] = optimizer.v[name]
    lines = [f"{f.name} = {getattr(config, f.name)}" for f in fields(config)]
    lines += [f"{k} = {v}" for k, v in meta.items()]
    block = ("\n".join(lines) + "\n").encode("utf-8")

    out = bytearray(MAGIC)
    out += struct.pack("<I", VERSION)
    out += struct.pack("<I", len(block)) + block
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
        out += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("checkpoint is truncated")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path) -> Checkpoint:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise FormatError(f"{path} is not a checkpoint (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise VersionError(f"checkpoint version {version} is not supported (expected {VERSION})")
    try:
        values = parse_key_values(r.take(r.u32()).decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise FormatError("config block is not valid UTF-8") from exc
    meta = {k: values.pop(k) for k in _META_KEYS if k in values}
    config = from_key_values(ModelConfig, values)
    tensors = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank))
        count = int(np.prod(shape)) if rank else 1
        tensors[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(r.buf):
        raise FormatError("trailing bytes after the tensor table")

    optimizer = None
    if "adam_t" in meta:
        optimizer = AdamState(float(meta["adam_lr"]), float(meta["adam_beta1"]), float(meta["adam_beta2"]),
                              float(meta["adam_eps"]), int(meta["adam_t"]))
        for name in list(tensors):
            for kind, store in (("adam.m.", optimizer.m), ("adam.v.", optimizer.v)):
                if name.startswith(kind):
                    store[name[len(kind):]] = tensors.pop(name)
    best = meta.get("best_dev_accuracy", "none")
    seed = meta.get("seed", "none")
    frozen = meta.get("frozen_rows", "")
    return Checkpoint(
        config=config,
        tensors=tensors,
        vocab_size=int(meta["vocab_size"]),
        frozen_rows=[int(x) for x in frozen.split(",") if x],
        optimizer=optimizer,
        best_dev_accuracy=None if best == "none" else float(best),
        seed=None if seed == "none" else int(seed),
    )
