"""DSCK checkpoint files.

Little-endian binary layout: magic "DSCK", format version (u32), tensor
count (u32), then per tensor: name length (u16) + UTF-8 name, rank (u8),
extents (u32 each), and the data as 32-bit reals in row-major order.
Values are stored at 32-bit precision for compactness and widened back to
float64 on load.
"""

from __future__ import annotations

import os
import struct
import tempfile
from typing import Iterable

import numpy as np

from .tensor import Tensor

MAGIC = b"DSCK"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed or mismatched checkpoint file."""


def save_checkpoint(path: str, named: Iterable[tuple[str, Tensor]]) -> None:
    """Write (name, tensor) pairs in the given order; the write is atomic."""
    named = list(named)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", VERSION, len(named))
    for name, t in named:
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise CheckpointError(f"tensor name too long: {name[:40]}...")
        shape = t.data.shape
        if len(shape) > 0xFF:
            raise CheckpointError(f"tensor rank {len(shape)} exceeds format limit")
        blob += struct.pack("<H", len(raw)) + raw
        blob += struct.pack("<B", len(shape))
        blob += struct.pack(f"<{len(shape)}I", *shape)
        blob += np.ascontiguousarray(t.data, dtype="<f4").tobytes()
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> dict[str, np.ndarray]:
    """Read a DSCK file into {name: float64 array}, preserving file order."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    off = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            (nlen,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<B", blob, off)
            off += 1
            shape = struct.unpack_from(f"<{rank}I", blob, off)
            off += 4 * rank
            n = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(blob, dtype="<f4", count=n, offset=off)
            off += 4 * n
        except (struct.error, ValueError) as e:
            raise CheckpointError(f"{path}: truncated at byte {off}: {e}") from e
        if name in out:
            raise CheckpointError(f"{path}: duplicate tensor name {name!r}")
        out[name] = data.astype(np.float64).reshape(shape)
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes at offset {off}")
    return out
