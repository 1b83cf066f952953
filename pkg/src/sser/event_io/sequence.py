from dataclasses import dataclass

import numpy as np

from ..exceptions import ValidationError

# In-memory layout; the on-disk EVT-bin record is narrower (see formats.py).
EVENT_DTYPE = np.dtype([("t", "<i8"), ("x", "<i4"), ("y", "<i4"), ("p", "i1")])


@dataclass(frozen=True)
class Event:
    x: int
    y: int
    t: int
    p: int


class EventSequence:
    """Time-ordered events from a ``width`` x ``height`` sensor.

    Events live in a numpy structured array with fields ``t, x, y, p``.
    Construction validates bounds, polarity, ordering and rejects two events
    at the same pixel with the same timestamp.
    """

    def __init__(self, events, width, height, validate=True):
        if width <= 0 or height <= 0:
            raise ValidationError(f"sensor dims must be positive, got {width}x{height}")
        self.width = int(width)
        self.height = int(height)
        arr = np.asarray(events)
        if arr.dtype != EVENT_DTYPE:
            arr = _coerce(arr)
        self.events = arr
        self.events.flags.writeable = False
        if validate:
            validate_events(self.events, self.width, self.height)

    @classmethod
    def from_arrays(cls, t, x, y, p, width, height, validate=True):
        arr = np.empty(len(t), dtype=EVENT_DTYPE)
        arr["t"], arr["x"], arr["y"], arr["p"] = t, x, y, p
        return cls(arr, width, height, validate=validate)

    @classmethod
    def empty(cls, width, height):
        return cls(np.empty(0, dtype=EVENT_DTYPE), width, height)

    t = property(lambda self: self.events["t"])
    x = property(lambda self: self.events["x"])
    y = property(lambda self: self.events["y"])
    p = property(lambda self: self.events["p"])

    @property
    def pixel_index(self):
        """Row-major linear pixel index ``y * width + x``."""
        return self.events["y"].astype(np.int64) * self.width + self.events["x"]

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        for t, x, y, p in self.events.tolist():
            yield Event(x=x, y=y, t=t, p=p)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return EventSequence(self.events[i], self.width, self.height, validate=False)
        t, x, y, p = self.events[i].tolist()
        return Event(x=x, y=y, t=t, p=p)

    def __eq__(self, other):
        if not isinstance(other, EventSequence):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and np.array_equal(
            self.events, other.events
        )

    def __repr__(self):
        span = f", t=[{self.t[0]}, {self.t[-1]}]" if len(self) else ""
        return f"EventSequence(n={len(self)}, {self.width}x{self.height}{span})"


def _coerce(arr):
    if arr.dtype.names is None or not {"t", "x", "y", "p"} <= set(arr.dtype.names):
        raise ValidationError("events need fields t, x, y, p")
    out = np.empty(arr.shape[0], dtype=EVENT_DTYPE)
    for name in ("t", "x", "y", "p"):
        out[name] = arr[name]
    return out


def validate_events(ev, width, height):
    """Raise ValidationError naming the first offending record."""
    if len(ev) == 0:
        return
    t, x, y, p = ev["t"], ev["x"], ev["y"], ev["p"]
    checks = [
        ((x < 0) | (x >= width), f"x out of bounds [0, {width})"),
        ((y < 0) | (y >= height), f"y out of bounds [0, {height})"),
        ((p != 1) & (p != -1), "polarity must be -1 or +1"),
        (t < 0, "negative timestamp"),
    ]
    for bad, msg in checks:
        if bad.any():
            raise ValidationError(msg, index=int(np.argmax(bad)))
    back = np.diff(t) < 0
    if back.any():
        raise ValidationError("timestamp decreases", index=int(np.argmax(back)) + 1)
    pix = y.astype(np.int64) * width + x
    order = np.lexsort((t, pix))
    same = (np.diff(pix[order]) == 0) & (np.diff(t[order]) == 0)
    if same.any():
        k = int(np.argmax(same))
        raise ValidationError(
            "duplicate timestamp at the same pixel", index=int(max(order[k], order[k + 1]))
        )
