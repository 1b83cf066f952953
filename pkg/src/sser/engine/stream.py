"""Event-driven streaming encoder.

Each event updates only its own pixel's per-layer hidden state; the
representation of the whole sensor can be read out at any time. The same
cell code as the batch encoder is used, so a window streamed event by event
gives exactly the states ``encode_window`` computes for it.
"""
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..event_io import Event, EventSequence
from ..exceptions import ConfigurationError, ValidationError
from ..quantize import QuantizedModel, q_stack_step, quantize_input
from ..rnn_core import EncoderModel, StateVec, stack_step

log = logging.getLogger(__name__)

EMISSION = ("on_window_boundary", "on_demand")
RESET = ("zero_each_window", "persist")


@dataclass(frozen=True)
class EngineConfig:
    width: int
    height: int
    window_us: int = 200_000
    emission: str = "on_window_boundary"
    reset: str = "zero_each_window"
    workers: int = 1

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigurationError("sensor size must be positive")
        if self.window_us < 1:
            raise ConfigurationError("window_us must be positive")
        if self.emission not in EMISSION:
            raise ConfigurationError(f"emission must be one of {EMISSION}")
        if self.reset not in RESET:
            raise ConfigurationError(f"reset must be one of {RESET}")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")


class HiddenStateMap:
    """Per-pixel, per-layer hidden state, indexed by ``y * width + x``.

    Float mode keeps ``StateVec`` arrays (LSTM cells included); integer mode
    keeps int64 codes on each layer's state grid.
    """

    def __init__(self, model, width, height):
        self.model = model
        self.width, self.height = width, height
        self.quantized = isinstance(model, QuantizedModel)
        self.reset()

    @property
    def n_pixels(self):
        return self.width * self.height

    def reset(self):
        self.layers = self.model.initial_state((self.n_pixels,))

    def pixel(self, pix):
        if self.quantized:
            return [a[pix] for a in self.layers]
        return [StateVec(s.h[pix], None if s.c is None else s.c[pix]) for s in self.layers]

    def store(self, pix, states):
        if self.quantized:
            for a, s in zip(self.layers, states):
                a[pix] = s
        else:
            for dst, s in zip(self.layers, states):
                dst.h[pix] = s.h
                if dst.c is not None:
                    dst.c[pix] = s.c

    def top(self):
        """Last-layer state (W*H, C): floats, or integer codes in quantised mode."""
        return self.layers[-1] if self.quantized else self.layers[-1].h

    def memory_bits(self, bits=None):
        """Storage for every layer's h (and LSTM c) at ``bits`` per value.

        Defaults to the activation width in quantised mode and 32 otherwise.
        """
        if bits is None:
            bits = self.model.scheme.act_bits if self.quantized else 32
        total = 0
        for layer in self.model.layers:
            per = layer.d_out * (2 if getattr(layer, "kind", "") == "lstm" else 1)
            total += self.n_pixels * per * bits
        return total


class StreamingEncoder:
    """Per-event encoder over a full sensor.

    >>> enc = StreamingEncoder(model, EngineConfig(64, 64))   # doctest: +SKIP
    >>> reps = enc.run_stream(events)                        # doctest: +SKIP
    """

    def __init__(self, model, config):
        if not isinstance(model, (EncoderModel, QuantizedModel)):
            raise ConfigurationError("model must be an EncoderModel or QuantizedModel")
        self.model = model
        self.config = config
        self.state = HiddenStateMap(model, config.width, config.height)
        self.rejected = Counter()
        self.processed = 0
        self.t0 = None
        self._last_t = None

    @property
    def quantized(self):
        return self.state.quantized

    def init_state(self):
        self.state.reset()
        self.rejected.clear()
        self.processed = 0
        self.t0 = None
        self._last_t = None

    def begin_window(self, t0):
        """Start a window at ``t0``; resets states under ``zero_each_window``."""
        if self.config.reset == "zero_each_window":
            self.state.reset()
        self.t0 = int(t0)

    def _input(self, t, p):
        T = self.config.window_us
        t_norm = (t - self.t0 + 1) / (T + 1)
        if self.quantized:
            return quantize_input(t_norm, p, self.model.scheme)
        return np.array([t_norm, float(p)])

    def _update(self, pix, t, p):
        u = self._input(t, p)
        prev = self.state.pixel(pix)
        if self.quantized:
            new = q_stack_step(self.model, u, prev)
        else:
            new = stack_step(self.model.layers, u, prev)
        self.state.store(pix, new)

    def process_event(self, event):
        """Update one pixel. Returns False (and counts why) for rejected events."""
        x, y, t, p = int(event.x), int(event.y), int(event.t), int(event.p)
        W, H = self.config.width, self.config.height
        if not (0 <= x < W and 0 <= y < H):
            self.rejected["out_of_bounds"] += 1
            return False
        if self._last_t is not None and t < self._last_t:
            self.rejected["time_regression"] += 1
            return False
        if p not in (-1, 1):
            self.rejected["bad_polarity"] += 1
            return False
        if self.t0 is None:
            self.begin_window(t)
        if not self.t0 <= t < self.t0 + self.config.window_us:
            raise ValidationError(
                f"event at t={t} lies outside the current window "
                f"[{self.t0}, {self.t0 + self.config.window_us})"
            )
        self._last_t = t
        self._update(y * W + x, t, p)
        self.processed += 1
        return True

    def _process_sharded(self, xs, ys, ts, ps):
        W = self.config.width
        pix = ys * W + xs
        shards = pix % self.config.workers

        def work(k):
            for i in np.flatnonzero(shards == k):
                self._update(int(pix[i]), int(ts[i]), int(ps[i]))

        # pixels never share a shard, so the per-shard order is all that matters
        with ThreadPoolExecutor(self.config.workers) as ex:
            list(ex.map(work, range(self.config.workers)))
        self.processed += len(xs)
        if len(ts):
            self._last_t = int(ts[-1])

    def emit(self, dequantize=False, layers=False):
        """Snapshot of the representation as (H, W, C).

        Float mode gives reals; quantised mode gives integer codes unless
        ``dequantize`` is set. With ``layers`` a list with one (H, W, d)
        array per layer is returned instead. Never mutates the state.
        """
        H, W = self.config.height, self.config.width
        if self.quantized:
            maps = [(a, l.h_scale) for a, l in zip(self.state.layers, self.model.layers)]
        else:
            maps = [(s.h, None) for s in self.state.layers]
        out = []
        for a, scale in maps:
            a = a * scale if dequantize and scale is not None else a.copy()
            out.append(a.reshape(H, W, -1))
        return out if layers else out[-1]

    emit_representation = emit

    def run_stream(self, events, t_start=None):
        """Stream a whole sequence through consecutive windows.

        Returns ``[(window_index, t0, representation), ...]`` for
        ``on_window_boundary`` emission and ``[]`` for ``on_demand``
        (read ``emit()`` afterwards).
        """
        if not isinstance(events, EventSequence):
            events = list(events)
            for e in events:
                self.process_event(e)
            return [] if self.config.emission == "on_demand" else [(0, self.t0, self.emit())]
        if len(events) == 0:
            return []
        T = self.config.window_us
        t = events.t
        start = int(t[0]) if t_start is None else int(t_start)
        if int(t[0]) < start:
            raise ValidationError("t_start lies after the first event")
        n_windows = (int(t[-1]) - start) // T + 1
        bounds = np.searchsorted(t, start + T * np.arange(n_windows + 1), side="left")
        out = []
        for k in range(n_windows):
            self.begin_window(start + k * T)
            lo, hi = bounds[k], bounds[k + 1]
            if self.config.workers > 1:
                self._process_sharded(events.x[lo:hi], events.y[lo:hi], t[lo:hi], events.p[lo:hi])
            else:
                for i in range(lo, hi):
                    self.process_event(Event(events.x[i], events.y[i], t[i], events.p[i]))
            if self.config.emission == "on_window_boundary":
                out.append((k, self.t0, self.emit()))
        return out


def process_event(engine, event):
    return engine.process_event(event)


def emit_representation(engine, dequantize=False, layers=False):
    return engine.emit(dequantize, layers)


def run_stream(model, events, config=None, **kwargs):
    """Convenience wrapper: build an engine for ``events`` and stream them."""
    if config is None:
        config = EngineConfig(events.width, events.height, **kwargs)
    return StreamingEncoder(model, config).run_stream(events)
