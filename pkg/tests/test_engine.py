import numpy as np
import pytest
from conftest import make_seq
from hypothesis import given
from hypothesis import strategies as st

from sser.cli.render import read_pnm, render_channels
from sser.engine import (
    EngineConfig,
    StreamingEncoder,
    dumps_representation,
    loads_representation,
    run_stream,
    to_real,
)
from sser.event_io import Event, EventSequence, slice_window, tensorize
from sser.exceptions import ConfigurationError, FormatError, ValidationError
from sser.hwsim import estimate_resources
from sser.quantize import QuantScheme, q_encode_window, quantize_model
from sser.rnn_core import KINDS, CellParams, EncoderModel, encode_sequence, encode_window, init_encoder


def quant_model(rng, kind="gru", dims=(4, 3), bits=8):
    enc = init_encoder(kind, dims, rng)
    seq = random_seq(rng, 6, 5, 60, 2000)
    return quantize_model(enc, QuantScheme(bits, bits), [tensorize(seq, 100, t0=0, T=2000)])


def random_seq(rng, W, H, n, T, t0=0):
    rows = {}
    for _ in range(n):
        rows[(t0 + int(rng.integers(T)), int(rng.integers(W)), int(rng.integers(H)))] = int(rng.choice([-1, 1]))
    return make_seq([(t, x, y, p) for (t, x, y), p in rows.items()], W, H)


def test_memory_accounting_matches_formula():
    rng = np.random.default_rng(0)
    enc = init_encoder("gru", (12,), rng)
    q = quantize_model(enc, QuantScheme(8, 8), [tensorize(random_seq(rng, 8, 8, 20, 100), 10, t0=0, T=100)])
    eng = StreamingEncoder(q, EngineConfig(128, 128))
    assert eng.state.memory_bits() == 1_572_864 == estimate_resources([12], "gru", 8, 128, 128).memory_bits
    assert eng.state.memory_bits(8) - eng.state.memory_bits(7) == 196_608
    assert not eng.emit().any()
    multi = StreamingEncoder(init_encoder("gru", (5, 7), rng), EngineConfig(10, 6))
    assert multi.state.memory_bits(6) == 10 * 6 * (5 + 7) * 6


def test_fresh_and_reset_emissions_zero(rng):
    eng = StreamingEncoder(init_encoder("gru", (3,), rng), EngineConfig(4, 4, 100))
    assert eng.emit().shape == (4, 4, 3) and not eng.emit().any()
    eng.process_event(Event(1, 1, 5, 1))
    assert eng.emit().any()
    a, b = eng.emit(), eng.emit()
    np.testing.assert_array_equal(a, b)
    eng.begin_window(200)
    assert not eng.emit().any()


def test_pixel_independence_of_order(rng):
    m = init_encoder("mgu", (3, 2), rng)
    a = StreamingEncoder(m, EngineConfig(4, 4, 100))
    b = StreamingEncoder(m, EngineConfig(4, 4, 100))
    a.begin_window(0)
    b.begin_window(0)
    e1, e2 = Event(0, 0, 10, 1), Event(3, 2, 10, -1)
    for e in (e1, e2):
        a.process_event(e)
    for e in (e2, e1):
        b.process_event(e)
    np.testing.assert_array_equal(a.emit(), b.emit())


@pytest.mark.parametrize("kind", KINDS)
def test_single_pixel_stream_equals_encode_sequence(kind, rng):
    m = init_encoder(kind, (3, 4), rng)
    T = 1000
    ts = np.sort(rng.choice(T, 12, replace=False))
    ps = rng.choice([-1, 1], 12)
    eng = StreamingEncoder(m, EngineConfig(3, 3, T))
    eng.begin_window(0)
    for t, p in zip(ts, ps):
        eng.process_event(Event(2, 1, int(t), int(p)))
    ref = encode_sequence(m, np.column_stack([(ts + 1) / (T + 1), ps]))[-1].h
    np.testing.assert_array_equal(eng.emit()[1, 2], ref)


def test_zero_model_stays_zero():
    m = EncoderModel((CellParams("gru", np.zeros((6, 2)), np.zeros((6, 2)), np.zeros(6)),))
    eng = StreamingEncoder(m, EngineConfig(3, 3, 100))
    eng.run_stream(make_seq([(1, 0, 0, 1), (2, 1, 2, -1), (50, 0, 0, 1)], 3, 3))
    assert not eng.emit().any()


def test_rejections_are_counted(rng):
    eng = StreamingEncoder(init_encoder("gru", (2,), rng), EngineConfig(4, 4, 100))
    eng.begin_window(0)
    assert eng.process_event(Event(1, 1, 10, 1))
    assert not eng.process_event(Event(4, 1, 11, 1))
    assert not eng.process_event(Event(1, -1, 11, 1))
    assert not eng.process_event(Event(2, 2, 9, 1))
    assert eng.rejected == {"out_of_bounds": 2, "time_regression": 1}
    assert eng.processed == 1
    with pytest.raises(ValidationError):
        eng.process_event(Event(1, 1, 100, 1))


def test_empty_stream(rng):
    assert run_stream(init_encoder("gru", (2,), rng), EventSequence.empty(4, 4), window_us=100) == []


@pytest.mark.parametrize("kind", KINDS)
def test_single_window_equals_batch(kind, rng):
    m = init_encoder(kind, (4, 3), rng)
    seq = random_seq(rng, 7, 5, 80, 5000, t0=300)
    t0 = int(seq.t[0])
    out = run_stream(m, seq, window_us=5000)
    assert len(out) == 1
    tw = tensorize(slice_window(seq, t0, 5000), 10**6, t0=t0, T=5000)
    np.testing.assert_array_equal(out[0][2], encode_window(m, tw).reshape(5, 7, -1))


def test_quantized_stream_equals_batch(rng):
    q = quant_model(rng)
    seq = random_seq(rng, 6, 5, 80, 3000)
    t0 = int(seq.t[0])
    (k, _, rep), = run_stream(q, seq, window_us=3000)
    assert rep.dtype.kind == "i"
    tw = tensorize(slice_window(seq, t0, 3000), 10**6, t0=t0, T=3000)
    np.testing.assert_array_equal(rep, q_encode_window(q, tw).reshape(5, 6, -1))
    eng = StreamingEncoder(q, EngineConfig(6, 5, 3000))
    eng.run_stream(seq)
    np.testing.assert_array_equal(eng.emit(dequantize=True), rep * q.state_scale)
    layers = eng.emit(layers=True)
    assert [a.shape[-1] for a in layers] == [4, 3]


def test_reset_policies(rng):
    m = init_encoder("gru", (3,), rng)
    T = 100
    w1 = [(5, 0, 0, 1), (20, 1, 1, -1)]
    w2 = [(150, 0, 0, -1), (160, 2, 2, 1)]
    w1_alt = [(5, 0, 0, -1), (30, 1, 1, 1), (40, 0, 0, 1)]
    a = run_stream(m, make_seq(w1 + w2, 4, 4), window_us=T)
    b = run_stream(m, make_seq(w1_alt + w2, 4, 4), window_us=T)
    assert len(a) == len(b) == 2
    np.testing.assert_array_equal(a[1][2], b[1][2])
    c = run_stream(m, make_seq(w1 + w2, 4, 4), window_us=T, reset="persist")
    d = run_stream(m, make_seq(w1_alt + w2, 4, 4), window_us=T, reset="persist")
    assert not np.array_equal(c[1][2], d[1][2])


def test_windows_partition_from_first_event(rng):
    m = init_encoder("gru", (2,), rng)
    seq = make_seq([(1000, 0, 0, 1), (1099, 1, 0, 1), (1100, 0, 0, 1), (1450, 1, 1, 1)], 4, 4)
    out = run_stream(m, seq, window_us=100)
    assert [(k, t0) for k, t0, _ in out] == [(0, 1000), (1, 1100), (2, 1200), (3, 1300), (4, 1400)]
    assert not out[2][2].any()


def test_on_demand_emission(rng):
    m = init_encoder("gru", (2,), rng)
    seq = make_seq([(1, 0, 0, 1), (2, 1, 0, 1)], 4, 4)
    eng = StreamingEncoder(m, EngineConfig(4, 4, 100, emission="on_demand"))
    assert eng.run_stream(seq) == []
    assert eng.emit().any()


@given(st.integers(0, 2**31 - 1), st.integers(2, 5), st.booleans())
def test_sharded_equals_single(seed, workers, quantized):
    rng = np.random.default_rng(seed)
    m = quant_model(rng, "mgu", (3,)) if quantized else init_encoder("lstm", (3,), rng)
    seq = random_seq(rng, 5, 4, 40, 3000)
    one = StreamingEncoder(m, EngineConfig(5, 4, 1000)).run_stream(seq)
    many = StreamingEncoder(m, EngineConfig(5, 4, 1000, workers=workers)).run_stream(seq)
    assert len(one) == len(many)
    for (k1, t1, r1), (k2, t2, r2) in zip(one, many):
        assert (k1, t1) == (k2, t2)
        np.testing.assert_array_equal(r1, r2)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        EngineConfig(0, 4)
    with pytest.raises(ConfigurationError):
        EngineConfig(4, 4, emission="sometimes")
    with pytest.raises(ConfigurationError):
        EngineConfig(4, 4, reset="never")


# ---------------------------------------------------------------- SSRP + rendering

@given(st.integers(0, 2**31 - 1), st.sampled_from(["f", "i8", "i16"]))
def test_ssrp_round_trip(seed, kind):
    rng = np.random.default_rng(seed)
    shape = tuple(int(v) for v in rng.integers(1, 6, 3))
    if kind == "f":
        rep = rng.uniform(-1, 1, shape).astype(np.float32)
        back, mode, scale = loads_representation(dumps_representation(rep))
        assert mode == 0 and scale == 1.0
    else:
        top = 127 if kind == "i8" else 2000
        rep = rng.integers(-top, top + 1, shape)
        back, mode, scale = loads_representation(dumps_representation(rep, 1 / 127))
        assert mode == (1 if kind == "i8" else 2) and scale == 1 / 127
    np.testing.assert_array_equal(back, rep)


def test_ssrp_errors():
    data = dumps_representation(np.zeros((2, 2, 1), dtype=np.float32))
    with pytest.raises(FormatError):
        loads_representation(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        loads_representation(data[:-1])
    with pytest.raises(ValueError):
        dumps_representation(np.zeros((1, 1, 1), dtype=np.int64))


def test_twelve_channel_emission_renders_twelve_images(rng, tmp_path):
    m = init_encoder("gru", (12,), rng)
    seq = random_seq(rng, 9, 7, 60, 1000)
    eng = StreamingEncoder(m, EngineConfig(9, 7, 1000))
    (_, _, rep), = eng.run_stream(seq)
    assert rep.min() >= -1 and rep.max() <= 1
    rep2, mode, scale = loads_representation(dumps_representation(rep.astype(np.float32)))
    paths = render_channels(to_real(rep2, mode, scale), tmp_path)
    assert [p.rsplit("/", 1)[-1] for p in paths] == [f"ch{c:02d}.pgm" for c in range(12)]
    img = read_pnm(paths[0])
    assert img.shape == (7, 9)
