"""Cycle-level model of the per-event recurrent-layer pipeline.

Events enter in arrival order. An event issues at the first cycle that is
at or after its arrival, one cycle after the previous issue, and at least
``hazard_window`` cycles after the last issue to the same pixel; it retires
``pipeline_depth`` cycles later. Under the ``reject`` policy an event that
would have to wait on the hazard is dropped instead.
"""
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..event_io import EventSequence
from ..exceptions import ConfigurationError, ValidationError

POLICIES = ("stall", "reject")


@dataclass(frozen=True)
class PipelineConfig:
    clock_hz: int = 100_000_000
    pipeline_depth: int = 16
    hazard_window: int = None
    kind: str = "gru"
    dims: tuple = (12,)
    policy: str = "stall"

    def __post_init__(self):
        if int(self.clock_hz) != self.clock_hz or self.clock_hz <= 0:
            raise ConfigurationError("clock_hz must be a positive integer")
        if self.pipeline_depth < 1:
            raise ConfigurationError("pipeline_depth must be >= 1")
        if self.hazard_window is None:
            object.__setattr__(self, "hazard_window", self.pipeline_depth)
        if self.hazard_window < 1:
            raise ConfigurationError("hazard_window must be >= 1")
        if self.kind not in ("gru", "mgu"):
            raise ConfigurationError(f"kind must be gru or mgu, got {self.kind!r}")
        if self.policy not in POLICIES:
            raise ConfigurationError(f"policy must be one of {POLICIES}")
        object.__setattr__(self, "clock_hz", int(self.clock_hz))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def latency_ns(self):
        """Exact per-event latency ``depth / clock`` in nanoseconds."""
        return Fraction(self.pipeline_depth * 10**9, self.clock_hz)


def _exact(q):
    q = Fraction(q)
    return q.numerator if q.denominator == 1 else float(q)


@dataclass
class CycleReport:
    arrival: np.ndarray
    issue: np.ndarray     # -1 for rejected events
    retire: np.ndarray    # -1 for rejected events
    pixel: np.ndarray
    stalls: int           # hazard stall cycles in total
    stalled_events: int
    rejected: int
    makespan_cycles: int
    config: PipelineConfig = field(repr=False)

    @property
    def events(self):
        return len(self.arrival)

    @property
    def processed(self):
        return self.events - self.rejected

    @property
    def latency_ns(self):
        return self.config.latency_ns

    @property
    def throughput_eps(self):
        """Processed events per second over the makespan (Fraction)."""
        if self.makespan_cycles == 0:
            return Fraction(0)
        return Fraction(self.processed * self.config.clock_hz, self.makespan_cycles)

    def order(self):
        """Indices of processed events in retire order."""
        ok = np.flatnonzero(self.issue >= 0)
        return ok[np.argsort(self.retire[ok], kind="stable")]

    def to_dict(self, per_event=False):
        d = {
            "clock_hz": self.config.clock_hz,
            "pipeline_depth": self.config.pipeline_depth,
            "hazard_window": self.config.hazard_window,
            "kind": self.config.kind,
            "policy": self.config.policy,
            "events": self.events,
            "processed": self.processed,
            "stall_cycles": self.stalls,
            "stalled_events": self.stalled_events,
            "rejected": self.rejected,
            "makespan_cycles": self.makespan_cycles,
            "throughput_events_per_s": _exact(self.throughput_eps),
            "latency_ns": _exact(self.latency_ns),
        }
        if per_event:
            d["per_event"] = [[int(a), int(i), int(r)] for a, i, r in zip(self.arrival, self.issue, self.retire)]
        return d

    def to_json(self, per_event=False, **kw):
        return json.dumps(self.to_dict(per_event), **kw)

    def summary(self):
        d = self.to_dict()
        return (
            f"{d['events']} events ({d['rejected']} rejected), {d['stall_cycles']} stall cycles, "
            f"makespan {d['makespan_cycles']} cycles, "
            f"throughput {float(self.throughput_eps):.4g} ev/s, latency {d['latency_ns']} ns/event"
        )


def arrival_cycles(t_us, clock_hz, event_rate=None):
    """Arrival cycle per event: from µs timestamps, or a constant ``event_rate`` (events/s)."""
    t_us = np.asarray(t_us, dtype=np.int64)
    if event_rate is not None:
        if event_rate <= 0:
            raise ConfigurationError("event_rate must be positive")
        rate = Fraction(event_rate)
        k = np.arange(len(t_us), dtype=object)
        return np.array([int(Fraction(int(i)) * clock_hz / rate) for i in k], dtype=np.int64)
    return (t_us - (t_us[0] if len(t_us) else 0)) * clock_hz // 1_000_000


def schedule(trace, cfg=PipelineConfig(), arrivals=None, event_rate=None):
    """Simulate the in-order pipeline.

    ``trace`` is an EventSequence (pixel ids derived from x, y; arrivals from
    timestamps unless ``arrivals`` or ``event_rate`` is given) or a sequence
    of pixel ids together with explicit ``arrivals``.
    """
    if isinstance(trace, EventSequence):
        pixel = trace.pixel_index.astype(np.int64)
        if arrivals is None:
            arrivals = arrival_cycles(trace.t, cfg.clock_hz, event_rate)
    else:
        pixel = np.asarray(trace, dtype=np.int64).reshape(-1)
        if arrivals is None:
            if event_rate is None:
                raise ValidationError("pixel-id traces need arrivals or event_rate")
            arrivals = arrival_cycles(np.zeros(len(pixel)), cfg.clock_hz, event_rate)
    arrival = np.asarray(arrivals, dtype=np.int64).reshape(-1)
    if len(arrival) != len(pixel):
        raise ValidationError(f"{len(pixel)} events but {len(arrival)} arrival cycles")
    if len(arrival) and (np.diff(arrival) < 0).any():
        i = int(np.flatnonzero(np.diff(arrival) < 0)[0]) + 1
        raise ValidationError("arrival cycles must be non-decreasing", index=i)

    n = len(arrival)
    issue = np.full(n, -1, dtype=np.int64)
    last = {}
    prev = None
    stalls = stalled = rejected = 0
    hz = cfg.hazard_window
    for i in range(n):
        a, px = int(arrival[i]), int(pixel[i])
        ready = a if prev is None else max(a, prev + 1)
        gate = last.get(px)
        if gate is not None and ready < gate + hz:
            if cfg.policy == "reject":
                rejected += 1
                continue
            stalls += gate + hz - ready
            stalled += 1
            ready = gate + hz
        issue[i] = ready
        last[px] = ready
        prev = ready
    retire = np.where(issue >= 0, issue + cfg.pipeline_depth, -1)
    done = retire[retire >= 0]
    makespan = int(done.max() - arrival[0]) if len(done) else 0
    return CycleReport(arrival, issue, retire, pixel, stalls, stalled, rejected, makespan, cfg)


def verify_hazard_safety(trace, cfg=PipelineConfig(), min_same_pixel_gap_ns=None):
    """Check that consecutive same-pixel events are at least one latency apart.

    ``trace`` is an EventSequence (µs timestamps) or a pair
    ``(pixel_ids, t_ns)``. The required gap defaults to ``depth / clock``;
    ``min_same_pixel_gap_ns`` overrides it. Returns ``(ok, violations)`` with
    violations as ``(previous_index, index, gap_ns)``.
    """
    if isinstance(trace, EventSequence):
        pixel = trace.pixel_index.astype(np.int64)
        t_ns = trace.t.astype(np.int64) * 1000
    else:
        pixel, t_ns = (np.asarray(a, dtype=np.int64) for a in trace)
    need = cfg.latency_ns if min_same_pixel_gap_ns is None else Fraction(min_same_pixel_gap_ns)
    last = {}
    violations = []
    for i, (px, t) in enumerate(zip(pixel.tolist(), t_ns.tolist())):
        j = last.get(px)
        if j is not None and t - t_ns[j] < need:
            violations.append((j, i, int(t - t_ns[j])))
        last[px] = i
    return not violations, violations
