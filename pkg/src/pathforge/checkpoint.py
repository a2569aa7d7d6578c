"""Binary container for named float64 arrays.

Layout (all integers little-endian):

    magic   4 bytes  b"PFCK"
    version u32      currently 1
    count   u32
    entry*  name_len u16, name utf-8, ndim u8, dims u32 * ndim,
            payload float64 little-endian, C order

Strict by construction: wrong magic, unknown version, or a short read all
raise CheckpointError rather than returning partial state.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PFCK"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    parts = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)  # keeps 0-d arrays 0-d
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f8").tobytes())
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


def load_arrays(path: str | Path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    view = memoryview(blob)
    pos = 0

    def read(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError(f"truncated checkpoint {path}")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    if bytes(read(4)) != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    version, count = struct.unpack("<II", read(8))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")

    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", read(2))
        name = bytes(read(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<B", read(1))
        shape = struct.unpack(f"<{ndim}I", read(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(read(8 * size), dtype="<f8").reshape(shape).copy()
        out[name] = arr
    if pos != len(view):
        raise CheckpointError(f"{path} has {len(view) - pos} trailing bytes")
    return out
