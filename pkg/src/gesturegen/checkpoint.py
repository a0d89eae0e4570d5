"""Flat binary container for named float64 arrays.

Layout: magic "RGT1", version u32, then per entry: name length u32, name
bytes (utf-8), rank u32, dims u32 each, row-major little-endian f64 payload.
Entries are written in sorted name order so identical contents give
identical bytes; round-trips are bit-exact.
"""

import struct

import numpy as np

from .errors import DataError

MAGIC = b"RGT1"
VERSION = 1


def save_arrays(path, arrays):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name in sorted(arrays):
            arr = np.asarray(arrays[name], dtype="<f8", order="C")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_arrays(path):
    arrays = {}
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise DataError(f"{path}: unsupported container version {version}")
        while True:
            head = fh.read(4)
            if not head:
                break
            (name_len,) = struct.unpack("<I", head)
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", fh.read(4))
            dims = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
            count = int(np.prod(dims)) if dims else 1
            payload = fh.read(8 * count)
            if len(payload) != 8 * count:
                raise DataError(f"{path}: truncated payload for entry '{name}'")
            arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
    return arrays
