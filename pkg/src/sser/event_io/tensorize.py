from dataclasses import dataclass

import numpy as np

from ..exceptions import ValidationError
from .sequence import EventSequence


@dataclass(frozen=True)
class TensorizedWindow:
    """Padded per-pixel event tensor.

    ``values`` is (Z, W*H, 2) holding (t_norm, p); ``mask`` is (Z, W*H) with
    ones marking real events. Pixel column ``w`` is ``y * width + x``.
    """

    values: np.ndarray
    mask: np.ndarray
    width: int
    height: int

    @property
    def Z(self):
        return self.values.shape[0]

    @property
    def n_pixels(self):
        return self.values.shape[1]

    def active_columns(self):
        """Indices of pixel columns holding at least one event."""
        return np.flatnonzero(self.mask.any(axis=0))

    def select(self, columns):
        return TensorizedWindow(self.values[:, columns], self.mask[:, columns], self.width, self.height)


def slice_window(seq, t0, T):
    """Events with ``t0 <= t < t0 + T``, order preserved."""
    if T <= 0:
        raise ValidationError(f"window length must be positive, got {T}")
    lo, hi = np.searchsorted(seq.t, [t0, t0 + T], side="left")
    return EventSequence(seq.events[lo:hi], seq.width, seq.height, validate=False)


def normalize_timestamps(window, t0, T):
    """Map timestamps into the open interval (0, 1): ``(t - t0 + 1) / (T + 1)``.

    Zero stays free to mean "padding" in the tensorized form.
    """
    t = window.t if isinstance(window, EventSequence) else np.asarray(window)
    if T <= 0:
        raise ValidationError(f"window length must be positive, got {T}")
    outside = (t < t0) | (t >= t0 + T)
    if outside.any():
        raise ValidationError(f"timestamp outside window [{t0}, {t0 + T})", index=int(np.argmax(outside)))
    return (t - t0 + 1) / (T + 1)


def tensorize(window, z_cap=100, *, t0, T):
    """Pack a window into a Z x (W*H) x 2 tensor plus validity mask.

    Per pixel the earliest ``z_cap`` events are kept; ``Z`` is the largest
    per-pixel count after the cap (at least 1).
    """
    if z_cap < 1:
        raise ValidationError(f"z_cap must be >= 1, got {z_cap}")
    n_pix = window.width * window.height
    t_norm = normalize_timestamps(window, t0, T)
    pix = window.pixel_index
    counts = np.bincount(pix, minlength=n_pix)
    Z = int(min(z_cap, counts.max())) if len(window) else 1
    Z = max(Z, 1)
    values = np.zeros((Z, n_pix, 2))
    mask = np.zeros((Z, n_pix))
    if len(window):
        order = np.argsort(pix, kind="stable")
        sp = pix[order]
        starts = np.concatenate([[0], np.cumsum(counts)])[sp]
        rank = np.arange(len(sp)) - starts
        keep = rank < Z
        rows, cols, src = rank[keep], sp[keep], order[keep]
        values[rows, cols, 0] = t_norm[src]
        values[rows, cols, 1] = window.p[src]
        mask[rows, cols] = 1.0
    return TensorizedWindow(values, mask, window.width, window.height)


def detensorize(tw):
    """Per-pixel lists of (t_norm, p) recovered from the masked entries."""
    out = {}
    for col in tw.active_columns():
        n = int(tw.mask[:, col].sum())
        out[int(col)] = [tuple(v) for v in tw.values[:n, col].tolist()]
    return out


def crop(seq, x0, y0, width, height):
    """Events inside the rectangle, re-indexed to a ``width`` x ``height`` sensor."""
    keep = (seq.x >= x0) & (seq.x < x0 + width) & (seq.y >= y0) & (seq.y < y0 + height)
    ev = seq.events[keep].copy()
    ev["x"] -= x0
    ev["y"] -= y0
    return EventSequence(ev, width, height, validate=False)
