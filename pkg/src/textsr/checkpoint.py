"""Checkpoint container: a directory holding meta.json and weights.bin.

weights.bin is a flat sequence of length-prefixed records, one per tensor:
u32 name length + name bytes, u32 dtype length + dtype bytes ("f4"), u32
rank + u32 dims, u64 payload length + raw little-endian float32 data.
meta.json carries the format version, tensor roster, a sha256 of the
weights blob, and caller metadata (step, config snapshot, vocabulary).
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError

FORMAT_VERSION = 1
WEIGHTS_FILE = "weights.bin"
META_FILE = "meta.json"


@dataclass
class Checkpoint:
    tensors: dict  # name -> np.float32 array
    meta: dict

    @property
    def step(self) -> int:
        return int(self.meta.get("step", 0))

    @property
    def vocab_json(self) -> dict:
        return self.meta.get("vocab", {})

    @property
    def config_mapping(self) -> dict:
        return self.meta.get("config", {})


def _pack_tensor(name: str, array: np.ndarray) -> bytes:
    if not np.issubdtype(array.dtype, np.floating):
        raise CheckpointError(
            f"tensor {name!r} has dtype {array.dtype}, only float tensors are stored"
        )
    data = np.asarray(array, dtype="<f4", order="C")  # preserves 0-d shapes
    name_bytes = name.encode("utf-8")
    out = io.BytesIO()
    out.write(struct.pack("<I", len(name_bytes)))
    out.write(name_bytes)
    out.write(struct.pack("<I", 2))
    out.write(b"f4")
    out.write(struct.pack("<I", data.ndim))
    for dim in data.shape:
        out.write(struct.pack("<I", dim))
    payload = data.tobytes()
    out.write(struct.pack("<Q", len(payload)))
    out.write(payload)
    return out.getvalue()


def save_checkpoint(tensors: dict, meta: dict, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blob = io.BytesIO()
    names = sorted(tensors)
    for name in names:
        blob.write(_pack_tensor(name, np.asarray(tensors[name])))
    payload = blob.getvalue()
    (path / WEIGHTS_FILE).write_bytes(payload)
    full_meta = dict(meta)
    full_meta["format_version"] = FORMAT_VERSION
    full_meta["tensors"] = names
    full_meta["weights_sha256"] = hashlib.sha256(payload).hexdigest()
    with open(path / META_FILE, "w") as fh:
        json.dump(full_meta, fh, sort_keys=True, indent=2)
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("weights file truncated mid-record")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    @property
    def done(self) -> bool:
        return self.pos >= len(self.data)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    meta_path = path / META_FILE
    weights_path = path / WEIGHTS_FILE
    if not meta_path.exists() or not weights_path.exists():
        raise CheckpointError(f"no checkpoint at {path}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} unsupported "
            f"(this build reads version {FORMAT_VERSION})"
        )
    payload = weights_path.read_bytes()
    digest = hashlib.sha256(payload).hexdigest()
    if digest != meta.get("weights_sha256"):
        raise CheckpointError(
            f"weights checksum mismatch: file {digest[:12]}..., "
            f"manifest {str(meta.get('weights_sha256'))[:12]}..."
        )
    reader = _Reader(payload)
    tensors = {}
    while not reader.done:
        name = reader.take(reader.u32()).decode("utf-8")
        dtype = reader.take(reader.u32()).decode("ascii")
        if dtype != "f4":
            raise CheckpointError(f"tensor {name!r} has unsupported dtype {dtype!r}")
        shape = tuple(reader.u32() for _ in range(reader.u32()))
        nbytes = reader.u64()
        expected = int(np.prod(shape, dtype=np.int64)) * 4
        if nbytes != expected:
            raise CheckpointError(
                f"tensor {name!r} payload length {nbytes} != shape implies {expected}"
            )
        array = np.frombuffer(reader.take(nbytes), dtype="<f4").reshape(shape)
        tensors[name] = array.astype(np.float32, copy=True)
    if sorted(tensors) != meta.get("tensors", sorted(tensors)):
        raise CheckpointError("tensor roster in meta.json disagrees with weights file")
    return Checkpoint(tensors=tensors, meta=meta)
