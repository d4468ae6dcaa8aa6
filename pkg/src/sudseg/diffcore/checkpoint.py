"""Flat binary tensor container.

Layout: magic "SUDT", version u32, count u32, then per entry:
name length u32 + UTF-8 name, rank u32, extents u32[rank], float64
little-endian values in row-major order. Entry order is preserved, so a
save/load round trip keeps insertion order.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from typing import Mapping

import numpy as np

MAGIC = b"SUDT"
VERSION = 1


class CheckpointError(IOError):
    pass


def save_tensors(path, tensors: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            nb = name.encode("utf-8")
            # asarray with order keeps rank-0 entries rank-0 (ascontiguousarray
            # would promote them to shape (1,))
            a = np.asarray(arr, dtype="<f8", order="C")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", a.ndim))
            if a.ndim:
                f.write(struct.pack(f"<{a.ndim}I", *a.shape))
            f.write(a.tobytes())


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise CheckpointError("truncated checkpoint file")
    return buf


def load_tensors(path) -> "OrderedDict[str, np.ndarray]":
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    with open(path, "rb") as f:
        if _read_exact(f, 4) != MAGIC:
            raise CheckpointError("not a SUDT checkpoint (bad magic)")
        version, count = struct.unpack("<II", _read_exact(f, 8))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read_exact(f, 4))
            name = _read_exact(f, nlen).decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(f, 4))
            shape = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank)) if rank else ()
            n = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(_read_exact(f, 8 * n), dtype="<f8").reshape(shape)
            out[name] = data.astype(np.float64)  # own writable copy
    return out
