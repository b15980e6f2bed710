"""Binary persistence of named float32 tensors.

Layout (all integers little-endian):
    magic   4 bytes  "MPTC"
    version u32      currently 1
    count   u32
    then per tensor:
        name_len u16, name UTF-8 bytes
        rank     u8
        extents  u32 * rank
        payload  float32 little-endian, row-major
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MPTC"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        data = np.asarray(arr, dtype="<f4")  # ascontiguousarray would promote 0-d to 1-d
        if not data.flags["C_CONTIGUOUS"]:
            data = data.copy(order="C")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    off = 4

    def read(fmt: str):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(blob):
            raise CheckpointError(f"{path}: truncated at byte {off}")
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    version, count = read("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = read("<H")
        if off + name_len > len(blob):
            raise CheckpointError(f"{path}: truncated at byte {off}")
        name = blob[off:off + name_len].decode("utf-8")
        off += name_len
        (rank,) = read("<B")
        shape = read(f"<{rank}I") if rank else ()
        n = int(np.prod(shape)) if shape else 1
        nbytes = 4 * n
        if off + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated at byte {off}")
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(shape)
        out[name] = arr.copy()
        off += nbytes
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes at byte {off}")
    return out
