import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sser.event_io import EventSequence, SceneConfig, generate_synthetic

settings.register_profile("sser", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("sser")


@pytest.fixture(scope="session")
def small_scene():
    return generate_synthetic(SceneConfig(width=16, height=12, pattern="mixed", duration=40_000, seed=5))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_seq(rows, width=16, height=16):
    """EventSequence from (t, x, y, p) tuples (stably sorted by time)."""
    rows = sorted(rows, key=lambda r: r[0])
    if not rows:
        return EventSequence.empty(width, height)
    t, x, y, p = (np.array(c) for c in zip(*rows))
    return EventSequence.from_arrays(t, x, y, p, width, height)


# criterion number -> (passed, detail); filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
