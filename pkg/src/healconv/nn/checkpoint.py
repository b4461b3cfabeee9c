"""Checkpoint container: named float32 arrays in a little-endian binary file.

Layout: magic ``STMW``, version u8, array count u32; then per array a u16
name length, the UTF-8 name, a u8 rank, u32 dims, and the raw float32 data.
All integers and floats are little-endian regardless of host.
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np

from ..errors import ParseError

MAGIC = b"STMW"
VERSION = 1

_PATHY = (str, bytes, os.PathLike)


def write_checkpoint(path_or_stream, arrays: dict) -> None:
    own = isinstance(path_or_stream, _PATHY)
    stream = open(path_or_stream, "wb") if own else path_or_stream
    try:
        stream.write(MAGIC)
        stream.write(struct.pack("<B", VERSION))
        stream.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype="<f4")      # keeps 0-d arrays 0-d
            if not arr.flags.c_contiguous:
                arr = np.ascontiguousarray(arr)
            encoded = name.encode("utf-8")
            stream.write(struct.pack("<H", len(encoded)))
            stream.write(encoded)
            stream.write(struct.pack("<B", arr.ndim))
            stream.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            stream.write(arr.tobytes())
    finally:
        if own:
            stream.close()


def read_checkpoint(path_or_stream) -> dict:
    own = isinstance(path_or_stream, _PATHY)
    stream = open(path_or_stream, "rb") if own else path_or_stream
    try:
        raw = stream.read()
    finally:
        if own:
            stream.close()

    buf = io.BytesIO(raw)

    def take(n, what):
        b = buf.read(n)
        if len(b) != n:
            raise ParseError(f"checkpoint truncated while reading {what}", offset=buf.tell())
        return b

    if take(4, "magic") != MAGIC:
        raise ParseError("bad checkpoint magic", offset=0)
    (version,) = struct.unpack("<B", take(1, "version"))
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", offset=4)
    (count,) = struct.unpack("<I", take(4, "array count"))
    arrays = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = np.frombuffer(take(4 * n, f"data of {name}"), dtype="<f4")
        arrays[name] = data.reshape(dims).copy()
    if buf.read(1):
        raise ParseError("trailing bytes after last array", offset=buf.tell() - 1)
    return arrays
