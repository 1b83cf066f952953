"""Synthetic event scenes from the log-brightness threshold model.

Each pixel keeps a reference log-brightness. Whenever the sampled log
brightness moves a full threshold ``C`` away from the reference an event of
that sign fires and the reference steps by ``C``. Crossing times are
linearly interpolated between samples and rounded to whole microseconds.
"""
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ValidationError
from .sequence import EventSequence

_EPS = 1e-9


@dataclass(frozen=True)
class MovingBar:
    """Bar of ``width`` px sweeping along x (or y when ``vertical``) at ``speed`` px/ms."""

    start: float
    speed: float
    width: float = 3.0
    contrast: float = 3.0
    vertical: bool = False
    softness: float = 1.0


@dataclass(frozen=True)
class MovingDot:
    x0: float
    y0: float
    vx: float
    vy: float
    radius: float = 3.0
    contrast: float = 3.0
    softness: float = 1.0


@dataclass(frozen=True)
class PixelRamp:
    """Log brightness at one pixel rising linearly by ``delta`` over the scene."""

    x: int
    y: int
    delta: float


@dataclass(frozen=True)
class SceneConfig:
    width: int = 64
    height: int = 64
    threshold: float = 0.2
    pattern: object = "bar"
    duration: int = 200_000
    seed: int = 0
    dt: int = 250
    background: float = 0.2

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValidationError(f"threshold must be > 0, got {self.threshold}")
        if self.duration <= 0 or self.dt <= 0:
            raise ValidationError("duration and dt must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("sensor dims must be positive")


PATTERNS = ("bar", "dot", "mixed", "static")


def scene_shapes(config):
    """Resolve ``config.pattern`` into a tuple of shape objects (seeded)."""
    pattern = config.pattern
    if not isinstance(pattern, str):
        return tuple(pattern)
    if pattern not in PATTERNS:
        raise ValidationError(f"unknown pattern {pattern!r}; choose from {PATTERNS}")
    rng = np.random.default_rng(config.seed)
    W, H = config.width, config.height
    dur_ms = config.duration / 1000.0
    shapes = []

    def bar():
        vertical = bool(rng.integers(2))
        extent = H if vertical else W
        speed = rng.uniform(0.6, 1.4) * (extent + 8) / dur_ms
        if rng.integers(2):
            return MovingBar(extent + 4, -speed, rng.uniform(2, 5), rng.uniform(1.5, 3), vertical)
        return MovingBar(-4, speed, rng.uniform(2, 5), rng.uniform(1.5, 3), vertical)

    def dot():
        r = rng.uniform(2, max(3, min(W, H) / 6))
        x0, y0 = rng.uniform(0, W), rng.uniform(0, H)
        ang = rng.uniform(0, 2 * np.pi)
        speed = rng.uniform(0.3, 1.0) * min(W, H) / dur_ms
        return MovingDot(x0, y0, speed * np.cos(ang), speed * np.sin(ang), r, rng.uniform(1.5, 3))

    if pattern == "bar":
        shapes.append(bar())
    elif pattern == "dot":
        shapes.extend(dot() for _ in range(int(rng.integers(1, 4))))
    elif pattern == "mixed":
        shapes.extend(bar() for _ in range(int(rng.integers(1, 3))))
        shapes.extend(dot() for _ in range(int(rng.integers(1, 4))))
    return tuple(shapes)


def _coverage(dist, softness):
    # 1 inside, 0 outside, smooth over ~softness px
    return 1.0 / (1.0 + np.exp(np.clip(dist / softness, -50, 50)))


def log_brightness(config, shapes, t):
    """Log brightness frame (H, W) at time ``t`` microseconds."""
    H, W = config.height, config.width
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    intensity = np.full((H, W), config.background)
    ramp = np.zeros((H, W))
    t_ms = t / 1000.0
    for s in shapes:
        if isinstance(s, MovingBar):
            centre = s.start + s.speed * t_ms
            coord = yy if s.vertical else xx
            dist = np.abs(coord - centre) - s.width / 2
            intensity = intensity + s.contrast * _coverage(dist, s.softness)
        elif isinstance(s, MovingDot):
            cx, cy = s.x0 + s.vx * t_ms, s.y0 + s.vy * t_ms
            dist = np.hypot(xx - cx, yy - cy) - s.radius
            intensity = intensity + s.contrast * _coverage(dist, s.softness)
        elif isinstance(s, PixelRamp):
            ramp[s.y, s.x] += s.delta * t / config.duration
        else:
            raise ValidationError(f"unsupported shape {s!r}")
    return np.log(intensity) + ramp


def generate_synthetic(config):
    """Simulate the scene and return its events, deterministic in ``config.seed``."""
    shapes = scene_shapes(config)
    W, H, C = config.width, config.height, config.threshold
    times = np.arange(0, config.duration + 1, config.dt)
    if times[-1] != config.duration:
        times = np.append(times, config.duration)
    L_prev = log_brightness(config, shapes, 0).ravel()
    ref = L_prev.copy()
    last_t = np.full(W * H, -1, dtype=np.int64)
    chunks = []
    for t_prev, t_cur in zip(times[:-1], times[1:]):
        L = log_brightness(config, shapes, t_cur).ravel()
        diff = L - ref
        n = np.floor(np.abs(diff) / C + _EPS).astype(np.int64)
        active = np.flatnonzero(n > 0)
        if active.size:
            chunks.append(_emit(active, n[active], np.sign(diff[active]), ref, L_prev, L, C,
                                t_prev, t_cur, last_t))
        L_prev = L
    if not chunks:
        return EventSequence.empty(W, H)
    pix, t, p = (np.concatenate(c) for c in zip(*chunks))
    order = np.lexsort((pix, t))
    pix, t, p = pix[order], t[order], p[order]
    return EventSequence.from_arrays(t, pix % W, pix // W, p, W, H)


def _emit(active, n, sign, ref, L_prev, L, C, t_prev, t_cur, last_t):
    reps = np.repeat(np.arange(active.size), n)
    k = np.arange(reps.size) - np.repeat(np.cumsum(n) - n, n) + 1
    pix = active[reps]
    level = ref[pix] + sign[reps] * k * C
    span = L[pix] - L_prev[pix]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(np.abs(span) > 0, (level - L_prev[pix]) / span, 1.0)
    t = np.rint(t_prev + np.clip(frac, 0.0, 1.0) * (t_cur - t_prev)).astype(np.int64)
    # strictly increasing per pixel: events of one pixel are contiguous, in k order
    for i in range(t.size):
        q = pix[i]
        if t[i] <= last_t[q]:
            t[i] = last_t[q] + 1
        last_t[q] = t[i]
    ref[active] += sign * n * C
    return pix, t, sign[reps].astype(np.int8)
