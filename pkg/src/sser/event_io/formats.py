"""EVT-bin and CSV event containers.

EVT-bin layout (little-endian)::

    header  16 bytes   b"EVT1" | u16 width | u16 height | u64 count
    record  13 bytes   u64 t (us) | u16 x | u16 y | i8 p

CSV: header line ``t,x,y,p`` then one event per line as decimal integers.
CSV carries no sensor size, so ``width``/``height`` must be supplied.
"""
import io
import os
import struct

import numpy as np

from ..exceptions import ParseError, ValidationError
from .sequence import EVENT_DTYPE, EventSequence

MAGIC = b"EVT1"
HEADER = struct.Struct("<4sHHQ")
RECORD_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])
assert HEADER.size == 16 and RECORD_DTYPE.itemsize == 13

FORMATS = ("evt", "csv")


def _read_bytes(source):
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read()
    return source.read()


def guess_format(path):
    return "csv" if str(path).lower().endswith(".csv") else "evt"


def read_events(source, format="evt", width=None, height=None):
    """Parse an event stream from bytes, a path or a binary file object."""
    data = _read_bytes(source)
    if format == "evt":
        return _read_evt(data, width, height)
    if format == "csv":
        if width is None or height is None:
            raise ValidationError("CSV input needs explicit width and height")
        return _read_csv(data, width, height)
    raise ValueError(f"unknown event format {format!r}")


def _read_evt(data, width=None, height=None):
    if len(data) == 0:
        if width is None or height is None:
            raise ParseError("empty EVT-bin stream has no header", offset=0)
        return EventSequence.empty(width, height)
    if len(data) < HEADER.size:
        raise ParseError("truncated header", offset=len(data))
    magic, w, h, count = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", offset=0)
    expected = HEADER.size + count * RECORD_DTYPE.itemsize
    if len(data) < expected:
        complete = (len(data) - HEADER.size) // RECORD_DTYPE.itemsize
        raise ParseError(
            f"truncated record {complete} of {count}",
            offset=HEADER.size + complete * RECORD_DTYPE.itemsize,
        )
    if len(data) > expected:
        raise ParseError("trailing bytes after last record", offset=expected)
    raw = np.frombuffer(data, dtype=RECORD_DTYPE, count=count, offset=HEADER.size)
    if count and raw["t"].max() > np.iinfo(np.int64).max:
        bad = int(np.argmax(raw["t"] > np.iinfo(np.int64).max))
        raise ParseError("timestamp overflows int64", offset=HEADER.size + bad * 13)
    return EventSequence(raw, w, h)


def _read_csv(data, width, height):
    text = data.decode("ascii", errors="strict") if data else ""
    if not text.strip():
        return EventSequence.empty(width, height)
    lines = text.splitlines(keepends=True)
    if lines[0].strip().replace(" ", "") != "t,x,y,p":
        raise ParseError("expected CSV header 't,x,y,p'", offset=0)
    rows = []
    offset = len(lines[0].encode())
    for line in lines[1:]:
        stripped = line.strip()
        if stripped:
            parts = stripped.split(",")
            try:
                if len(parts) != 4:
                    raise ValueError
                rows.append(tuple(int(v) for v in parts))
            except ValueError:
                raise ParseError(f"malformed CSV line {stripped!r}", offset=offset) from None
        offset += len(line.encode())
    arr = np.empty(len(rows), dtype=EVENT_DTYPE)
    if rows:
        cols = np.array(rows, dtype=np.int64)
        arr["t"], arr["x"], arr["y"] = cols[:, 0], cols[:, 1], cols[:, 2]
        bad_p = (cols[:, 3] != 1) & (cols[:, 3] != -1)
        if bad_p.any():
            raise ValidationError("polarity must be -1 or +1", index=int(np.argmax(bad_p)))
        arr["p"] = cols[:, 3]
    return EventSequence(arr, width, height)


def dumps_events(seq, format="evt"):
    if format == "evt":
        if len(seq) and (seq.t.min() < 0):
            raise ValidationError("negative timestamps cannot be stored as u64")
        rec = np.empty(len(seq), dtype=RECORD_DTYPE)
        for name in ("t", "x", "y", "p"):
            rec[name] = seq.events[name]
        return HEADER.pack(MAGIC, seq.width, seq.height, len(seq)) + rec.tobytes()
    if format == "csv":
        buf = io.StringIO()
        buf.write("t,x,y,p\n")
        for t, x, y, p in seq.events.tolist():
            buf.write(f"{t},{x},{y},{p}\n")
        return buf.getvalue().encode("ascii")
    raise ValueError(f"unknown event format {format!r}")


def write_events(seq, dest, format="evt"):
    data = dumps_events(seq, format)
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "wb") as fh:
            fh.write(data)
    else:
        dest.write(data)
