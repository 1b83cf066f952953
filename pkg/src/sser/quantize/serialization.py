"""Quantised model container: the SSER layout at version 2.

::

    b"SSER" | u8 version=2 | u8 flags=0 | u16 n_layers
    scheme:     u8 weight_bits | u8 act_bits | u8 input_bits | u8 lut_in_bits
                u8 rounding (0 = half away from zero) | u8 power_of_two
    per layer:  u8 kind | u8 gated_bias | u16 d_in | u16 d_out | u8 acc_bits
                f64 x_scale | w_scale | u_scale | h_scale | g_scale
                Wq i32[G*d_out, d_in] | Uq i32[G*d_out, d_out] | bq i32[G*d_out]
                sigmoid LUT, tanh LUT
    LUT:        u8 in_bits | u8 out_bits | f64 in_scale | f64 out_scale
                table i32[2**in_bits]

All fields little-endian; matrices row-major.
"""
import io
import struct

import numpy as np

from ..exceptions import FormatError
from ..rnn_core.cells import GATE_NAMES, KINDS
from ..rnn_core.serialization import MAGIC, QUANT_VERSION, Reader
from .lut import ActivationLUT
from .model import ROUNDING_MODES, QuantizedLayer, QuantizedModel, QuantScheme

_HEAD = struct.Struct("<4sBBH")
_SCHEME = struct.Struct("<6B")
_LAYER = struct.Struct("<BBHHB5d")
_LUT = struct.Struct("<BBdd")


def _pack_lut(lut):
    return _LUT.pack(lut.in_bits, lut.out_bits, lut.in_scale, lut.out_scale) + lut.table.astype("<i4").tobytes()


def _unpack_lut(rd, fn):
    in_bits, out_bits, in_scale, out_scale = rd.unpack(_LUT)
    table = rd.array("<i4", (2 ** in_bits,)).astype(np.int64)
    return ActivationLUT(fn, in_bits, out_bits, in_scale, out_scale, table)


def dumps_quantized(qmodel):
    s = qmodel.scheme
    out = io.BytesIO()
    out.write(_HEAD.pack(MAGIC, QUANT_VERSION, 0, len(qmodel.layers)))
    out.write(_SCHEME.pack(s.weight_bits, s.act_bits, s.input_bits, s.lut_in_bits,
                           ROUNDING_MODES.index(s.rounding), int(s.power_of_two)))
    for l in qmodel.layers:
        out.write(_LAYER.pack(KINDS.index(l.kind), int(l.gated_bias), l.d_in, l.d_out, l.acc_bits,
                              l.x_scale, l.w_scale, l.u_scale, l.h_scale, l.g_scale))
        for a in (l.Wq, l.Uq, l.bq):
            out.write(a.astype("<i4").tobytes())
        out.write(_pack_lut(l.sig_lut))
        out.write(_pack_lut(l.tanh_lut))
    return out.getvalue()


def loads_quantized(data):
    rd = Reader(data)
    magic, version, _flags, n = rd.unpack(_HEAD)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != QUANT_VERSION:
        raise FormatError(f"expected quantized model version {QUANT_VERSION}, got {version}", offset=4)
    wb, ab, ib, lb, rounding, pow2 = rd.unpack(_SCHEME)
    if rounding >= len(ROUNDING_MODES):
        raise FormatError(f"unknown rounding mode id {rounding}", offset=rd.pos - 2)
    scheme = QuantScheme(wb, ab, ib, lb, bool(pow2), ROUNDING_MODES[rounding])
    layers = []
    for _ in range(n):
        kind_id, gated, d_in, d_out, acc_bits, xs, ws, us, hs, gs = rd.unpack(_LAYER)
        if kind_id >= len(KINDS):
            raise FormatError(f"unknown cell kind id {kind_id}", offset=rd.pos - _LAYER.size)
        kind = KINDS[kind_id]
        G = len(GATE_NAMES[kind])
        Wq = rd.array("<i4", (G * d_out, d_in)).astype(np.int64)
        Uq = rd.array("<i4", (G * d_out, d_out)).astype(np.int64)
        bq = rd.array("<i4", (G * d_out,)).astype(np.int64)
        sig = _unpack_lut(rd, "sigmoid")
        tanh = _unpack_lut(rd, "tanh")
        layers.append(QuantizedLayer(kind, bool(gated), Wq, Uq, bq, xs, ws, us, hs, gs, sig, tanh, acc_bits))
    rd.done()
    return QuantizedModel(tuple(layers), scheme)


def save_quantized(path, qmodel):
    with open(path, "wb") as fh:
        fh.write(dumps_quantized(qmodel))


def load_quantized(path):
    with open(path, "rb") as fh:
        return loads_quantized(fh.read())
