"""Integer GRU/MGU kernels and float-to-integer model conversion.

Datapath of one integer step (GRU; MGU is the same with f in place of z, r):

1. ``acc_x = Wq @ qx`` and ``acc_h = Uq @ qh`` on the combined gate blocks
   (heights 3*d_out / 2*d_out), exact in int64 and split per gate.
2. Each gate's accumulators are requantised once onto the LUT input grid,
   the integer bias added, and the code clamped to the LUT address range.
3. Sigmoid/tanh LUTs produce gate codes (unsigned, 1.0 = 2**act_bits - 1)
   and candidate codes on the state grid.
4. ``h' = ((ONE - z) * h + z * h_tilde) / ONE`` with rounded integer
   division, where ``ONE`` is the code of 1.0 on the gate grid.

Requantisation multiplies an integer accumulator by a float64 ratio of
scales and rounds half away from zero; IEEE-754 makes this reproducible.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import AccumulatorOverflowError, ValidationError
from ..rnn_core import CellParams, EncoderModel, affine, cell_step, sigmoid
from ..rnn_core.model import _masked
from .grid import gate_scale, max_abs_scale, quantize_symmetric, round_half_away, state_scale
from .lut import ActivationLUT, build_activation_lut

ROUNDING_MODES = ("half_away",)
SATURATION = 8.0  # |pre-activation| beyond which sigmoid/tanh are flat to < 4e-4


@dataclass(frozen=True)
class QuantScheme:
    weight_bits: int = 8
    act_bits: int = 8
    input_bits: int = 16
    lut_in_bits: int = 12
    power_of_two: bool = False
    rounding: str = "half_away"

    def __post_init__(self):
        if not (2 <= self.weight_bits <= 12 and 2 <= self.act_bits <= 12):
            raise ValidationError(f"weight/activation bits must lie in 2..12, got "
                                  f"{self.weight_bits}/{self.act_bits}")
        if self.input_bits != 16:
            raise ValidationError("input_bits is fixed at 16")
        if not 4 <= self.lut_in_bits <= 16:
            raise ValidationError("lut_in_bits must lie in 4..16")
        if self.rounding not in ROUNDING_MODES:
            raise ValidationError(f"rounding must be one of {ROUNDING_MODES}")

    @property
    def input_scale(self):
        return 1.0 / (2 ** self.input_bits - 1)


@dataclass(frozen=True)
class QuantizedLayer:
    kind: str
    gated_bias: bool
    Wq: np.ndarray      # (G*d_out, d_in) combined input block
    Uq: np.ndarray      # (G*d_out, d_out) combined recurrent block
    bq: np.ndarray      # (G*d_out,) on the LUT input grid of each gate
    x_scale: float
    w_scale: float
    u_scale: float
    h_scale: float
    g_scale: float
    sig_lut: ActivationLUT
    tanh_lut: ActivationLUT
    acc_bits: int

    @property
    def d_in(self):
        return self.Wq.shape[1]

    @property
    def d_out(self):
        return self.Uq.shape[1]

    @property
    def gate_height(self):
        return self.Wq.shape[0]

    @property
    def one(self):
        return int(round(1.0 / self.g_scale))

    def __eq__(self, other):
        if not isinstance(other, QuantizedLayer):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            if isinstance(getattr(self, f), np.ndarray) else getattr(self, f) == getattr(other, f)
            for f in self.__dataclass_fields__
        )

    __hash__ = None


@dataclass(frozen=True)
class QuantizedModel:
    layers: tuple
    scheme: QuantScheme
    warnings: tuple = field(default=(), compare=False)

    @property
    def channels(self):
        return self.layers[-1].d_out

    @property
    def state_scale(self):
        return self.layers[-1].h_scale

    def initial_state(self, batch=()):
        return [np.zeros((*batch, l.d_out), dtype=np.int64) for l in self.layers]

    def dequantized_encoder(self):
        """Float encoder carrying the quantised weights (biases mapped back)."""
        layers = []
        for l in self.layers:
            d = l.d_out
            b = l.bq.astype(np.float64).copy()
            b[: d * (l.gate_height // d - 1)] *= l.sig_lut.in_scale
            b[d * (l.gate_height // d - 1):] *= l.tanh_lut.in_scale
            layers.append(CellParams(l.kind, l.Wq * l.w_scale, l.Uq * l.u_scale, b, l.gated_bias))
        return EncoderModel(tuple(layers))


# ------------------------------------------------------------------ integer ops


def div_round(num, den):
    """Integer division rounding half away from zero (exact, den > 0)."""
    num = np.asarray(num, dtype=np.int64)
    q = (np.abs(num) * 2 + den) // (2 * den)
    return np.sign(num) * q


def requantize(acc, ratio):
    return round_half_away(acc * ratio).astype(np.int64)


def _check_acc(layer, *accs):
    limit = 2 ** (layer.acc_bits - 1)
    for acc in accs:
        if acc.size and np.abs(acc).max() >= limit:
            raise AccumulatorOverflowError(
                f"accumulator exceeds {layer.acc_bits}-bit signed range (max |acc| = {np.abs(acc).max()})"
            )


def _matmuls(layer, qx, qh):
    qx = np.asarray(qx, dtype=np.int64)
    qh = np.asarray(qh, dtype=np.int64)
    if qx.shape[-1] != layer.d_in or qh.shape[-1] != layer.d_out:
        raise ValidationError(f"dimension mismatch: expected [{layer.d_in}] and [{layer.d_out}] inputs")
    acc_x = qx @ layer.Wq.T
    acc_h = qh @ layer.Uq.T
    _check_acc(layer, acc_x, acc_h)
    return qx, qh, acc_x, acc_h


def _gate(layer, acc_x, acc_h, bq):
    lut = layer.sig_lut
    # one requantisation per gate: both accumulators land on the LUT grid together
    pre = round_half_away(
        acc_x * (layer.w_scale * layer.x_scale / lut.in_scale)
        + acc_h * (layer.u_scale * layer.h_scale / lut.in_scale)
    ).astype(np.int64)
    return lut(pre + bq)


def _candidate(layer, acc_x, acc_h, bq, gate):
    lut = layer.tanh_lut
    xs = requantize(acc_x, layer.w_scale * layer.x_scale / lut.in_scale)
    hs = requantize(acc_h, layer.u_scale * layer.h_scale / lut.in_scale)
    if layer.gated_bias:
        pre = xs + div_round(gate * (hs + bq), layer.one)
    else:
        pre = xs + div_round(gate * hs, layer.one) + bq
    return lut(pre)


def _blend(layer, qh, gate, cand):
    one = layer.one
    return div_round((one - gate) * qh + gate * cand, one)


def q_gru_step(layer, qx, qh):
    """Integer GRU update; ``qx``/``qh`` may carry leading batch axes."""
    if layer.kind != "gru":
        raise ValidationError(f"q_gru_step needs a GRU layer, got {layer.kind}")
    qx, qh, acc_x, acc_h = _matmuls(layer, qx, qh)
    d = layer.d_out
    z = _gate(layer, acc_x[..., :d], acc_h[..., :d], layer.bq[:d])
    r = _gate(layer, acc_x[..., d:2 * d], acc_h[..., d:2 * d], layer.bq[d:2 * d])
    cand = _candidate(layer, acc_x[..., 2 * d:], acc_h[..., 2 * d:], layer.bq[2 * d:], r)
    return _blend(layer, qh, z, cand)


def q_mgu_step(layer, qx, qh):
    """Integer MGU update; one forget gate drives both the reset and blend."""
    if layer.kind != "mgu":
        raise ValidationError(f"q_mgu_step needs an MGU layer, got {layer.kind}")
    qx, qh, acc_x, acc_h = _matmuls(layer, qx, qh)
    d = layer.d_out
    f = _gate(layer, acc_x[..., :d], acc_h[..., :d], layer.bq[:d])
    cand = _candidate(layer, acc_x[..., d:], acc_h[..., d:], layer.bq[d:], f)
    return _blend(layer, qh, f, cand)


Q_STEPS = {"gru": q_gru_step, "mgu": q_mgu_step}


def quantize_input(t_norm, p, scheme=QuantScheme()):
    """Integer layer-0 input: ``round(t_norm * (2**16 - 1))`` and ``p * (2**16 - 1)``."""
    top = 2 ** scheme.input_bits - 1
    t_q = round_half_away(np.asarray(t_norm) * top).astype(np.int64)
    return np.stack([t_q, np.asarray(p, dtype=np.int64) * top], axis=-1)


def q_stack_step(qmodel, qu, qstates):
    out, x = [], qu
    for layer, qh in zip(qmodel.layers, qstates):
        qh = Q_STEPS[layer.kind](layer, x, qh)
        out.append(qh)
        x = qh
    return out


def q_encode_window(qmodel, tw, init=None, return_states=False):
    """Integer counterpart of ``rnn_core.encode_window``; returns int codes (W*H, C)."""
    states = qmodel.initial_state((tw.n_pixels,)) if init is None else [s.copy() for s in init]
    cols = tw.active_columns()
    sub = [s[cols] for s in states]
    qv = quantize_input(tw.values[..., 0], tw.values[..., 1], qmodel.scheme)
    for z in range(tw.Z):
        m = tw.mask[z, cols]
        if not m.any():
            continue
        new = q_stack_step(qmodel, qv[z, cols], sub)
        keep = m[:, None] > 0
        sub = [np.where(keep, n, o) for n, o in zip(new, sub)]
    for s, s_sub in zip(states, sub):
        s[cols] = s_sub
    return states if return_states else states[-1]


def dequantize_representation(q, scale):
    """Real-valued representation ``q * scale``."""
    return np.asarray(q, dtype=np.float64) * scale


# ------------------------------------------------------------------ conversion


def _windows(calib):
    out = [getattr(c, "window", c) for c in calib]
    if not out:
        raise ValidationError("calibration set is empty")
    return out


def calibrate(model, calib):
    """Per-layer max |pre-activation| of the sigmoid gates and of the tanh input."""
    stats = [[0.0, 0.0] for _ in model.layers]
    for tw in _windows(calib):
        cols = tw.active_columns()
        states = model.initial_state((len(cols),))
        for z in range(tw.Z):
            m = tw.mask[z, cols] > 0
            if not m.any():
                continue
            x = tw.values[z, cols]
            new_states = []
            for k, (layer, s) in enumerate(zip(model.layers, states)):
                d = layer.d_out
                n_sig = layer.n_gates - 1
                wx, uh = affine(x, layer.W), affine(s.h, layer.U)
                pre = wx + uh + layer.b
                sig_pre = pre[..., : n_sig * d]
                gate = sigmoid(sig_pre[..., -d:])  # r for GRU, f for MGU
                if layer.gated_bias:
                    tanh_pre = wx[..., n_sig * d:] + gate * (uh[..., n_sig * d:] + layer.b[n_sig * d:])
                else:
                    tanh_pre = wx[..., n_sig * d:] + gate * uh[..., n_sig * d:] + layer.b[n_sig * d:]
                stats[k][0] = max(stats[k][0], float(np.abs(sig_pre[m]).max()))
                stats[k][1] = max(stats[k][1], float(np.abs(tanh_pre[m]).max()))
                ns = _masked(m.astype(np.float64), cell_step(layer, x, s), s)
                new_states.append(ns)
                x = ns.h
            states = new_states
    return stats


def _pre_scale(max_abs, lut_bits, notes, where):
    top = 2 ** (lut_bits - 1) - 1
    if max_abs == 0.0:
        notes.append(f"{where}: zero calibration range, scale 1 used")
        return 1.0
    return min(max_abs, SATURATION) / top


def _weight_scale(a, bits, pow2, notes, where):
    if not np.any(a):
        notes.append(f"{where}: all-zero tensor, scale 1 used")
        return 1.0
    return max_abs_scale(a, bits, pow2)


def quantize_model(model, scheme=QuantScheme(), calib=()):
    """Convert a float GRU/MGU encoder into a bit-exact integer model.

    Weights: symmetric per-tensor max-abs scales on the combined blocks.
    Pre-activation (LUT input) scales come from calibration max-abs,
    capped at |8| where both activations are saturated.
    """
    for layer in model.layers:
        if layer.kind not in Q_STEPS:
            raise ValidationError(f"integer kernels exist for GRU and MGU only, not {layer.kind}")
    notes = []
    stats = calibrate(model, calib)
    lut_bits = scheme.lut_in_bits
    layers = []
    x_scale = scheme.input_scale
    x_bits = scheme.input_bits
    h_scale = state_scale(scheme.act_bits)
    g_scale = gate_scale(scheme.act_bits)
    for k, (layer, (sig_max, tanh_max)) in enumerate(zip(model.layers, stats)):
        w_scale = _weight_scale(layer.W, scheme.weight_bits, scheme.power_of_two, notes, f"layer {k} W")
        u_scale = _weight_scale(layer.U, scheme.weight_bits, scheme.power_of_two, notes, f"layer {k} U")
        sig_in = _pre_scale(sig_max, lut_bits, notes, f"layer {k} sigmoid input")
        tanh_in = _pre_scale(tanh_max, lut_bits, notes, f"layer {k} tanh input")
        n_sig = (layer.n_gates - 1) * layer.d_out
        bq = np.concatenate([
            round_half_away(layer.b[:n_sig] / sig_in),
            round_half_away(layer.b[n_sig:] / tanh_in),
        ]).astype(np.int64)
        # covers |x| < 2**x_bits, |w| <= 2**(wb-1), d_in + d_out terms, sign
        acc_bits = x_bits + scheme.weight_bits + math.ceil(math.log2(layer.d_in + layer.d_out)) + 1
        layers.append(QuantizedLayer(
            kind=layer.kind,
            gated_bias=layer.gated_bias,
            Wq=quantize_symmetric(layer.W, scheme.weight_bits, w_scale),
            Uq=quantize_symmetric(layer.U, scheme.weight_bits, u_scale),
            bq=bq,
            x_scale=x_scale,
            w_scale=w_scale,
            u_scale=u_scale,
            h_scale=h_scale,
            g_scale=g_scale,
            sig_lut=build_activation_lut("sigmoid", lut_bits, scheme.act_bits, sig_in, g_scale),
            tanh_lut=build_activation_lut("tanh", lut_bits, scheme.act_bits, tanh_in, h_scale),
            acc_bits=acc_bits,
        ))
        x_scale, x_bits = h_scale, scheme.act_bits
    for note in notes:
        warnings.warn(note, stacklevel=2)
    return QuantizedModel(tuple(layers), scheme, tuple(notes))
