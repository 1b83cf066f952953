"""SSRP representation file.

::

    b"SSRP" | u16 width | u16 height | u16 channels | u8 mode | f64 scale
    payload: row-major (height, width, channels), little-endian

mode 0: float32 reals (scale is 1.0); mode 1: int8 codes; mode 2: int16
codes. Real value = code * scale for the integer modes.
"""
import struct

import numpy as np

from ..exceptions import FormatError

MAGIC = b"SSRP"
HEADER = struct.Struct("<4sHHHBd")
MODES = {0: np.dtype("<f4"), 1: np.dtype("i1"), 2: np.dtype("<i2")}


def dumps_representation(rep, scale=None):
    """Serialise an (H, W, C) array; integer input is stored as codes with ``scale``."""
    rep = np.asarray(rep)
    H, W, C = rep.shape
    if np.issubdtype(rep.dtype, np.integer):
        if scale is None:
            raise ValueError("integer representations need their scale")
        lo, hi = (int(rep.min()), int(rep.max())) if rep.size else (0, 0)
        mode = 1 if -128 <= lo and hi <= 127 else 2
        if mode == 2 and not (-32768 <= lo and hi <= 32767):
            raise ValueError("integer codes exceed 16 bits")
    else:
        mode, scale = 0, 1.0
    head = HEADER.pack(MAGIC, W, H, C, mode, float(scale))
    return head + rep.astype(MODES[mode]).tobytes()


def loads_representation(data):
    """Return ``(array (H, W, C), mode, scale)``."""
    if len(data) < HEADER.size:
        raise FormatError("truncated SSRP header", offset=len(data))
    magic, W, H, C, mode, scale = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if mode not in MODES:
        raise FormatError(f"unknown SSRP mode {mode}", offset=10)
    dtype = MODES[mode]
    expected = HEADER.size + H * W * C * dtype.itemsize
    if len(data) != expected:
        raise FormatError(f"payload size mismatch: expected {expected} bytes, got {len(data)}",
                          offset=min(len(data), expected))
    rep = np.frombuffer(data, dtype=dtype, offset=HEADER.size).reshape(H, W, C).copy()
    return rep, mode, scale


def to_real(rep, mode, scale):
    return rep.astype(np.float64) if mode == 0 else rep.astype(np.float64) * scale


def save_representation(path, rep, scale=None):
    with open(path, "wb") as fh:
        fh.write(dumps_representation(rep, scale))


def load_representation(path):
    with open(path, "rb") as fh:
        return loads_representation(fh.read())
