"""Binary checkpoint format.

Layout (little-endian):
    b"AVLM" | u8 version | 32-byte config digest | u64 step
    | u32 n + n bytes of JSON state (rng, sampler, optimizer scalars, vocab)
    | u32 count | count x (u16 name_len, name, u8 dtype, u8 rank, rank x u32 dims, payload)
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"AVLM"
VERSION = 1
DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_TAG_OF = {np.dtype(v).str: k for k, v in DTYPE_TAGS.items()}


class CheckpointError(Exception):
    pass


class CheckpointFormatError(CheckpointError):
    """Not a checkpoint (bad magic) or structurally invalid."""


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class UnknownTensorError(CheckpointError):
    pass


class ConfigMismatchError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    config_digest: bytes
    step: int
    state: dict
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = VERSION


def encode(ckpt: Checkpoint) -> bytes:
    if len(ckpt.config_digest) != 32:
        raise ValueError("config digest must be 32 bytes")
    blob = json.dumps(ckpt.state, sort_keys=True).encode()
    out = [MAGIC, struct.pack("<B", ckpt.version), ckpt.config_digest, struct.pack("<Q", ckpt.step), struct.pack("<I", len(blob)), blob]
    out.append(struct.pack("<I", len(ckpt.tensors)))
    for name, arr in ckpt.tensors.items():
        arr = np.asarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        tag = _TAG_OF.get(le.dtype.str)
        if tag is None:
            raise TypeError(f"unsupported dtype {arr.dtype} for tensor {name!r}")
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb + struct.pack("<BB", tag, arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(le).tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointTruncatedError(f"file ends inside {what} (need {n} bytes at offset {self.pos}, have {len(self.buf) - self.pos})")
        b = self.buf[self.pos : self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if len(buf) < 4:
        raise CheckpointTruncatedError("file shorter than the magic header")
    if r.take(4, "magic") != MAGIC:
        raise CheckpointFormatError(f"bad magic {buf[:4]!r}; not an AVLM checkpoint")
    (version,) = r.unpack("<B", "version")
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint version {version}, this build reads version {VERSION}")
    digest = r.take(32, "config digest")
    (step,) = r.unpack("<Q", "step counter")
    (n,) = r.unpack("<I", "state length")
    try:
        state = json.loads(r.take(n, "state blob").decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"state blob is not valid JSON: {e}") from None
    (count,) = r.unpack("<I", "tensor count")
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        (ln,) = r.unpack("<H", f"name length of tensor {i}")
        name = r.take(ln, f"name of tensor {i}").decode()
        tag, rank = r.unpack("<BB", f"header of {name}")
        if tag not in DTYPE_TAGS:
            raise CheckpointFormatError(f"tensor {name!r} has unknown dtype tag {tag}")
        dims = r.unpack(f"<{rank}I", f"dims of {name}")
        dt = DTYPE_TAGS[tag]
        size = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        arr = np.frombuffer(r.take(size, f"payload of {name}"), dtype=dt).reshape(dims)
        tensors[name] = arr.astype(dt.newbyteorder("="))
    if r.pos != len(buf):
        raise CheckpointFormatError(f"{len(buf) - r.pos} trailing bytes after the last tensor")
    return Checkpoint(digest, step, state, tensors, version)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    """Atomic write: temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode(ckpt)
    fd, tmp = tempfile.mkstemp(prefix=path.name, suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    return decode(Path(path).read_bytes())


def check_config(ckpt: Checkpoint, digest: bytes) -> None:
    if ckpt.config_digest != digest:
        raise ConfigMismatchError(
            f"checkpoint was written under config {ckpt.config_digest.hex()[:16]}..., "
            f"current config is {digest.hex()[:16]}...; refusing to load (model shapes or schedule may differ)"
        )
