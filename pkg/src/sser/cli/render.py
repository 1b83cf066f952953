"""Per-channel image output for representations (binary PGM / PPM)."""
import os

import numpy as np


def to_gray(values):
    """Map [-1, 1] to 0..255 with 0 -> 128, -1 -> 0 and 1 -> 255.

    The two halves have slightly different slopes (128 and 127 levels) so
    that both endpoints and the midpoint land on exact codes.
    """
    v = np.clip(np.asarray(values, dtype=np.float64), -1.0, 1.0)
    g = np.where(v >= 0, 128 + 127 * v, 128 + 128 * v)
    return np.floor(g + 0.5).astype(np.uint8)


def to_diverging(values):
    """Blue (-1) / white (0) / red (+1) palette; cosmetic alternative to gray."""
    v = np.clip(np.asarray(values, dtype=np.float64), -1.0, 1.0)
    pos, neg = np.clip(v, 0, 1), np.clip(-v, 0, 1)
    r = 255 * (1 - neg)
    g = 255 * (1 - np.maximum(pos, neg))
    b = 255 * (1 - pos)
    return np.floor(np.stack([r, g, b], axis=-1) + 0.5).astype(np.uint8)


def write_pgm(path, img):
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def write_ppm(path, img):
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def read_pnm(path):
    """Minimal reader for the files written above (no comments in headers)."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, w, h, maxval, rest = data.split(maxsplit=4)
    w, h = int(w), int(h)
    ch = 1 if magic == b"P5" else 3
    img = np.frombuffer(rest, dtype=np.uint8, count=w * h * ch)
    return img.reshape(h, w) if ch == 1 else img.reshape(h, w, 3)


def render_channels(rep, out_dir, palette="gray"):
    """Write one image per channel of an (H, W, C) array; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for c in range(rep.shape[-1]):
        if palette == "gray":
            p = os.path.join(out_dir, f"ch{c:02d}.pgm")
            write_pgm(p, to_gray(rep[..., c]))
        else:
            p = os.path.join(out_dir, f"ch{c:02d}.ppm")
            write_ppm(p, to_diverging(rep[..., c]))
        paths.append(p)
    return paths
