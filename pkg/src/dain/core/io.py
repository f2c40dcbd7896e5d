"""The DAIT tensor container.

Layout: ``b"DAIT"``, one ``u8`` rank, ``rank`` little-endian ``u32`` dims,
then the row-major little-endian ``f32`` payload.
"""
import struct

import numpy as np

from ..errors import DimensionError

MAGIC = b"DAIT"

__all__ = ["MAGIC", "encode_tensor", "decode_tensor", "save_tensor", "load_tensor"]


def encode_tensor(array):
    a = np.asarray(array, dtype="<f4")
    if a.ndim > 255:
        raise DimensionError("rank above 255 cannot be encoded")
    header = MAGIC + struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return header + np.ascontiguousarray(a).tobytes()


def decode_tensor(buf):
    buf = bytes(buf)
    if buf[:4] != MAGIC:
        raise ValueError("not a DAIT tensor (bad magic)")
    rank = buf[4]
    dims = struct.unpack_from(f"<{rank}I", buf, 5)
    offset = 5 + 4 * rank
    count = int(np.prod(dims, dtype=np.int64))
    if len(buf) - offset != 4 * count:
        raise ValueError(f"payload holds {(len(buf) - offset) // 4} floats, "
                         f"dims {dims} need {count}")
    return np.frombuffer(buf, dtype="<f4", offset=offset).reshape(dims).astype(np.float32)


def save_tensor(path, array):
    with open(path, "wb") as fh:
        fh.write(encode_tensor(array))


def load_tensor(path):
    with open(path, "rb") as fh:
        return decode_tensor(fh.read())
