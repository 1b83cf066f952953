import warnings

import numpy as np
import pytest
from conftest import make_seq
from hypothesis import given
from hypothesis import strategies as st

from sser.event_io import tensorize
from sser.event_io.tensorize import TensorizedWindow
from sser.exceptions import AccumulatorOverflowError, FormatError, ValidationError
from sser.quantize import (
    QuantScheme,
    build_activation_lut,
    dequantize_representation,
    dumps_quantized,
    gate_scale,
    loads_quantized,
    max_abs_scale,
    q_encode_window,
    q_gru_step,
    q_mgu_step,
    quantize_input,
    quantize_model,
    quantize_symmetric,
    round_half_away,
    state_scale,
)
from sser.rnn_core import CellParams, EncoderModel, StateVec, cell_step, encode_window, init_cell, init_encoder


def calib_window(rng, n=30, Z=4):
    vals = np.zeros((Z, n, 2))
    vals[..., 0] = np.sort(rng.uniform(0, 1, (Z, n)), axis=0)
    vals[..., 1] = rng.choice([-1.0, 1.0], (Z, n))
    return TensorizedWindow(vals, np.ones((Z, n)), n, 1)


def zero_model(kind, d=1):
    g = {"gru": 3, "mgu": 2}[kind]
    return EncoderModel((CellParams(kind, np.zeros((g * d, 2)), np.zeros((g * d, d)), np.zeros(g * d)),))


# ---------------------------------------------------------------- grids

def test_round_half_away():
    np.testing.assert_array_equal(round_half_away([2.5, -2.5, 0.5, -0.5, 1.4, -1.6]), [3, -3, 1, -1, 1, -2])


def test_symmetric_weight_example():
    w = np.array([-1.0, 0.5])
    s = max_abs_scale(w, 8)
    assert s == 1 / 127
    assert quantize_symmetric(w, 8, s).tolist() == [-127, 64]


def test_on_grid_weights_exact():
    w = np.array([-3, 0, 1, 2, 3]) * 0.125
    s = max_abs_scale(w, 3)
    assert s == 0.125
    np.testing.assert_array_equal(quantize_symmetric(w, 3, s) * s, w)


def test_all_zero_tensor_scale_one_with_warning():
    with pytest.warns(UserWarning):
        q = quantize_model(zero_model("gru", 2), QuantScheme(), [calib_window(np.random.default_rng(0))])
    assert q.layers[0].w_scale == 1.0
    assert q.warnings


def test_dequantize_examples():
    assert dequantize_representation(np.array([0]), 1 / 127)[0] == 0.0
    assert dequantize_representation(np.array([127]), 1 / 127)[0] == 1.0
    q = np.arange(-127, 128)
    np.testing.assert_array_equal(quantize_symmetric(dequantize_representation(q, 1 / 127), 8, 1 / 127), q)


def test_input_mapping():
    q = quantize_input(np.array([1 / 50000, 0.5, 50000 / 50001]), np.array([1, -1, 1]))
    assert q[:, 0].tolist() == [1, 32768, 65534]
    assert q[:, 1].tolist() == [65535, -65535, 65535]


# ---------------------------------------------------------------- LUTs

@pytest.mark.parametrize("fn", ["sigmoid", "tanh"])
@pytest.mark.parametrize("in_bits", [6, 8, 12])
def test_lut_fidelity_exhaustive(fn, in_bits):
    f = {"sigmoid": lambda x: 1 / (1 + np.exp(-x)), "tanh": np.tanh}[fn]
    slope = {"sigmoid": 0.25, "tanh": 1.0}[fn]
    out_scale = gate_scale(8) if fn == "sigmoid" else state_scale(8)
    in_scale = 8.0 / (2 ** (in_bits - 1) - 1)
    lut = build_activation_lut(fn, in_bits, 8, in_scale, out_scale)
    codes = lut.input_codes()
    assert len(codes) == 2 ** in_bits
    err_grid = np.abs(lut.table * out_scale - f(codes * in_scale))
    assert err_grid.max() <= 0.5 * out_scale + 1e-12
    # anywhere inside a cell (nearest-code addressing) the input spacing adds <= in_scale/2 * max|f'|
    xs = (codes[:-1] + 0.49) * in_scale
    nearest = np.floor(xs / in_scale + 0.5).astype(np.int64)
    err_cell = np.abs(lut(nearest) * out_scale - f(xs))
    assert err_cell.max() <= 0.5 * out_scale + 0.5 * in_scale * slope + 1e-12


def test_lut_shape_properties():
    sig = build_activation_lut("sigmoid", 10, 8, 8 / 511, gate_scale(8))
    tanh = build_activation_lut("tanh", 10, 8, 8 / 511, state_scale(8))
    for lut in (sig, tanh):
        assert (np.diff(lut.table) >= 0).all()
        lo, hi = lut.out_range
        assert lut.table.min() >= lo and lut.table.max() <= hi
    assert sig.table[0] == 0 and sig.table[-1] == 255
    assert sig(np.array([0]))[0] * gate_scale(8) == pytest.approx(0.5, abs=0.5 * gate_scale(8))
    i = np.arange(1, 512)
    np.testing.assert_array_equal(tanh(-i), -tanh(i))
    assert tanh(np.array([0]))[0] == 0
    # clamped addressing saturates
    assert sig(np.array([10**6]))[0] == 255 and tanh(np.array([-10**6]))[0] == -127


def test_sigmoid_half_on_grid():
    # with an even number of gate levels plus zero, 0.5 is exactly representable when out grid is 1/2
    lut = build_activation_lut("sigmoid", 8, 2, 0.05, 0.5)
    assert lut(np.array([0]))[0] == 1


# ---------------------------------------------------------------- kernels

@pytest.mark.parametrize("kind,step", [("gru", q_gru_step), ("mgu", q_mgu_step)])
def test_zero_params_halve_state(kind, step):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        q = quantize_model(zero_model(kind), QuantScheme(8, 8), [calib_window(np.random.default_rng(0))])
    layer = q.layers[0]
    qh = np.array([round_half_away(0.8 / layer.h_scale)], dtype=np.int64)
    qx = quantize_input(np.array(0.3), np.array(1))
    out = step(layer, qx, qh)
    assert abs(out[0] - round_half_away(0.4 / layer.h_scale)) <= 1
    np.testing.assert_array_equal(step(layer, qx, qh), out)  # purity
    assert step(layer, np.zeros(2, dtype=np.int64), np.zeros(1, dtype=np.int64))[0] == 0


def test_gru_block_height_and_split(rng):
    enc = init_encoder("gru", (12,), rng)
    q = quantize_model(enc, QuantScheme(), [calib_window(rng)])
    layer = q.layers[0]
    assert layer.Wq.shape == (36, 2) and layer.gate_height == 36
    assert quantize_model(init_encoder("mgu", (12,), rng), QuantScheme(), [calib_window(rng)]).layers[0].gate_height == 24
    qx = rng.integers(-65535, 65536, (20, 2))
    combined = qx @ layer.Wq.T
    parts = [qx @ layer.Wq[k * 12:(k + 1) * 12].T for k in range(3)]
    np.testing.assert_array_equal(combined, np.concatenate(parts, axis=1))


@pytest.mark.parametrize("kind", ["gru", "mgu"])
@pytest.mark.parametrize("ab", [4, 6, 8])
def test_integer_step_close_to_float_step(kind, ab):
    """Inside the calibrated LUT range one integer step stays within three
    state quanta (gate, candidate, blend roundings) of the float step on the
    dequantised weights and inputs."""
    worst = 0.0
    for seed in range(15):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 4))
        enc = EncoderModel((init_cell(kind, 2, d, rng),))
        qx = quantize_input(rng.uniform(0, 1, 100), rng.choice([-1, 1], 100), QuantScheme(8, ab))
        top = 2 ** (ab - 1) - 1
        qh = rng.integers(-top, top + 1, (100, d))
        vals = (qx / 65535.0)[None]
        q = quantize_model(enc, QuantScheme(8, ab), [TensorizedWindow(vals, np.ones((1, 100)), 100, 1)])
        layer, fl = q.layers[0], q.dequantized_encoder().layers[0]
        pre = (qx * layer.x_scale) @ fl.W.T + (qh * layer.h_scale) @ fl.U.T + fl.b
        n_sig = (fl.n_gates - 1) * d
        lim = 2 ** 11 - 1
        ok = (np.abs(pre[:, :n_sig]) <= 0.98 * layer.sig_lut.in_scale * lim).all(1) & \
             (np.abs(pre[:, n_sig:]) <= 0.5 * layer.tanh_lut.in_scale * lim).all(1)
        got = {"gru": q_gru_step, "mgu": q_mgu_step}[kind](layer, qx, qh) * layer.h_scale
        ref = cell_step(fl, qx * layer.x_scale, StateVec(qh * layer.h_scale)).h
        if ok.any():
            worst = max(worst, np.abs(got - ref)[ok].max() / layer.h_scale)
    assert worst <= 3


def test_tied_gru_mgu_within_two_quanta(rng):
    m = init_cell("mgu", 2, 4, rng)
    Wf, Uf, bf = m.gate("f")
    Wh, Uh, bh = m.gate("h")
    g = CellParams("gru", np.vstack([Wf, Wf, Wh]), np.vstack([Uf, Uf, Uh]), np.concatenate([bf, bf, bh]))
    tw = calib_window(rng)
    qg = quantize_model(EncoderModel((g,)), QuantScheme(), [tw])
    qm = quantize_model(EncoderModel((m,)), QuantScheme(), [tw])
    diff = np.abs(q_encode_window(qg, tw) - q_encode_window(qm, tw))
    assert diff.max() <= 2


def test_accumulator_overflow_is_hard_error(rng):
    q = quantize_model(init_encoder("gru", (3,), rng), QuantScheme(), [calib_window(rng)])
    layer = q.layers[0]
    from dataclasses import replace

    narrow = replace(layer, acc_bits=8)
    with pytest.raises(AccumulatorOverflowError):
        q_gru_step(narrow, np.array([65535, 65535]), np.zeros(3, dtype=np.int64))


def test_lstm_has_no_integer_kernel(rng):
    with pytest.raises(ValidationError):
        quantize_model(init_encoder("lstm", (3,), rng), QuantScheme(), [calib_window(rng)])


def test_scheme_validation():
    with pytest.raises(ValidationError):
        QuantScheme(weight_bits=1)
    with pytest.raises(ValidationError):
        QuantScheme(input_bits=8)


@given(st.integers(0, 2**31 - 1), st.sampled_from(["gru", "mgu"]), st.sampled_from([2, 4, 8]))
def test_integer_states_bounded_and_deterministic(seed, kind, ab):
    rng = np.random.default_rng(seed)
    enc = init_encoder(kind, (3, 2), rng)
    tw = calib_window(rng, n=10)
    q = quantize_model(enc, QuantScheme(8, ab), [tw])
    a = q_encode_window(q, tw, return_states=True)
    top = 2 ** (ab - 1) - 1
    assert all(np.abs(s).max() <= top for s in a)
    b = q_encode_window(q, tw, return_states=True)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_quantized_window_close_to_float(rng):
    enc = init_encoder("gru", (6, 6), rng)
    seq = make_seq([(int(t), int(x), int(y), int(p)) for t, x, y, p in zip(
        rng.permutation(900)[:60], rng.integers(0, 5, 60), rng.integers(0, 4, 60), rng.choice([-1, 1], 60))], 5, 4)
    tw = tensorize(seq, 100, t0=0, T=1000)
    q = quantize_model(enc, QuantScheme(10, 10), [tw])
    E = encode_window(enc, tw)
    Eq = dequantize_representation(q_encode_window(q, tw), q.state_scale)
    assert np.abs(E - Eq).max() < 0.05


# ---------------------------------------------------------------- file

@pytest.mark.parametrize("kind", ["gru", "mgu"])
@pytest.mark.parametrize("gated", [True, False])
def test_quantized_file_round_trip(kind, gated, rng):
    enc = init_encoder(kind, (4, 3), rng, gated)
    q = quantize_model(enc, QuantScheme(6, 7, power_of_two=True), [calib_window(rng)])
    back = loads_quantized(dumps_quantized(q))
    assert back == q
    tw = calib_window(rng, n=7)
    np.testing.assert_array_equal(q_encode_window(back, tw), q_encode_window(q, tw))


def test_quantized_file_errors(rng):
    q = quantize_model(init_encoder("gru", (2,), rng), QuantScheme(), [calib_window(rng)])
    data = dumps_quantized(q)
    with pytest.raises(FormatError):
        loads_quantized(data[:-1])
    with pytest.raises(FormatError):
        loads_quantized(data[:4] + b"\x01" + data[5:])
