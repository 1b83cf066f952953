"""SSER model container (little-endian, row-major, float32 weights).

::

    b"SSER" | u8 version=1 | u8 flags (bit0: decoder present) | u16 n_layers
    per layer:  u8 kind | u8 gated_bias | u16 d_in | u16 d_out
                W  f32[G*d_out, d_in] | U  f32[G*d_out, d_out] | b  f32[G*d_out]
    decoder:    u16 n_layers, layers as above,
                out_W f32[2, C] | out_b f32[2] | in_W f32[C, 2] | in_b f32[C]

kind ids: 0 rnn, 1 lstm, 2 gru, 3 mgu. ``G`` is the gate count of the kind.
Version 2 (the quantized container) shares the magic; see ``sser.quantize``.
"""
import io
import os
import struct

import numpy as np

from ..exceptions import FormatError
from .cells import GATE_NAMES, KINDS, CellParams
from .model import DecoderModel, EncoderModel

MAGIC = b"SSER"
FLOAT_VERSION = 1
QUANT_VERSION = 2
_HEAD = struct.Struct("<4sBBH")
_LAYER = struct.Struct("<BBHH")


class Reader:
    """Bounds-checked cursor over a byte buffer; errors carry the byte offset."""

    def __init__(self, data):
        self.data = data
        self.pos = 0

    def unpack(self, st):
        if self.pos + st.size > len(self.data):
            raise FormatError("unexpected end of model file", offset=self.pos)
        vals = st.unpack_from(self.data, self.pos)
        self.pos += st.size
        return vals

    def array(self, dtype, shape):
        dtype = np.dtype(dtype)
        n = int(np.prod(shape)) * dtype.itemsize
        if self.pos + n > len(self.data):
            raise FormatError("unexpected end of model file", offset=self.pos)
        arr = np.frombuffer(self.data, dtype=dtype, count=int(np.prod(shape)), offset=self.pos)
        self.pos += n
        return arr.reshape(shape).copy()

    def done(self):
        if self.pos != len(self.data):
            raise FormatError("trailing bytes in model file", offset=self.pos)


def pack_layer(layer):
    head = _LAYER.pack(KINDS.index(layer.kind), int(layer.gated_bias), layer.d_in, layer.d_out)
    return head + b"".join(a.astype("<f4").tobytes() for a in (layer.W, layer.U, layer.b))


def unpack_layer(rd):
    kind_id, gated, d_in, d_out = rd.unpack(_LAYER)
    if kind_id >= len(KINDS):
        raise FormatError(f"unknown cell kind id {kind_id}", offset=rd.pos - _LAYER.size)
    kind = KINDS[kind_id]
    G = len(GATE_NAMES[kind])
    W = rd.array("<f4", (G * d_out, d_in))
    U = rd.array("<f4", (G * d_out, d_out))
    b = rd.array("<f4", (G * d_out,))
    return CellParams(kind, W, U, b, bool(gated))


def dumps_model(encoder, decoder=None):
    out = io.BytesIO()
    out.write(_HEAD.pack(MAGIC, FLOAT_VERSION, int(decoder is not None), len(encoder.layers)))
    for layer in encoder.layers:
        out.write(pack_layer(layer))
    if decoder is not None:
        out.write(struct.pack("<H", len(decoder.layers)))
        for layer in decoder.layers:
            out.write(pack_layer(layer))
        for a in (decoder.out_W, decoder.out_b, decoder.in_W, decoder.in_b):
            out.write(a.astype("<f4").tobytes())
    return out.getvalue()


def loads_model(data):
    """Return ``(encoder, decoder_or_None)``; weights come back as float64."""
    rd = Reader(data)
    magic, version, flags, n = rd.unpack(_HEAD)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != FLOAT_VERSION:
        raise FormatError(f"expected float model version {FLOAT_VERSION}, got {version}", offset=4)
    encoder = EncoderModel(tuple(unpack_layer(rd) for _ in range(n)))
    decoder = None
    if flags & 1:
        (nd,) = rd.unpack(struct.Struct("<H"))
        layers = tuple(unpack_layer(rd) for _ in range(nd))
        C = encoder.channels
        decoder = DecoderModel(
            layers,
            rd.array("<f4", (2, C)), rd.array("<f4", (2,)),
            rd.array("<f4", (C, 2)), rd.array("<f4", (C,)),
        )
    rd.done()
    return encoder, decoder


def save_model(path, encoder, decoder=None):
    with open(path, "wb") as fh:
        fh.write(dumps_model(encoder, decoder))


def load_model(path):
    with open(path, "rb") as fh:
        return loads_model(fh.read())


def peek_version(data_or_path):
    if isinstance(data_or_path, (str, os.PathLike)):
        with open(data_or_path, "rb") as fh:
            data = fh.read(6)
    else:
        data = data_or_path[:6]
    if len(data) < 5 or data[:4] != MAGIC:
        raise FormatError("not an SSER model file", offset=0)
    return data[4]
