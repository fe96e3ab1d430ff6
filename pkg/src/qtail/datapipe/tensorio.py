"""Byte-exact binary tensor layout used by the on-disk cache.

Layout (little-endian throughout):

    bytes 0-3   magic ``QTTN``
    bytes 4-5   format version (u16), currently 1
    byte  6     dtype code (u8): 1=float32, 2=float64, 3=uint8, 4=int64
    byte  7     rank (u8)
    next 8*rank dims (u64 each)
    rest        row-major (C-order) element data

Non-executable by construction: the payload is raw numeric data only.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"QTTN"
VERSION = 1

_DTYPE_BY_CODE = {
    1: np.dtype("<f4"),
    2: np.dtype("<f8"),
    3: np.dtype("|u1"),
    4: np.dtype("<i8"),
}
_CODE_BY_DTYPE = {v: k for k, v in _DTYPE_BY_CODE.items()}


def serialize_tensor(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    dtype = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    code = _CODE_BY_DTYPE.get(np.dtype(dtype))
    if code is None:
        raise ValueError(f"unsupported tensor dtype {arr.dtype}")
    header = MAGIC + struct.pack("<HBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + arr.astype(dtype, copy=False).tobytes(order="C")


def deserialize_tensor(buf: bytes) -> np.ndarray:
    if buf[:4] != MAGIC:
        raise ValueError("bad tensor magic")
    version, code, rank = struct.unpack_from("<HBB", buf, 4)
    if version != VERSION:
        raise ValueError(f"unsupported tensor format version {version}")
    dtype = _DTYPE_BY_CODE.get(code)
    if dtype is None:
        raise ValueError(f"unknown dtype code {code}")
    shape = struct.unpack_from(f"<{rank}Q", buf, 8)
    start = 8 + 8 * rank
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    data = buf[start:]
    if len(data) != expected:
        raise ValueError(f"tensor payload is {len(data)} bytes, expected {expected}")
    return np.frombuffer(data, dtype=dtype).reshape(shape).copy()
