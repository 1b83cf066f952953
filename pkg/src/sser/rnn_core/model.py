from dataclasses import dataclass

import numpy as np

from ..exceptions import ValidationError
from .cells import CellParams, StateVec, affine, cell_step, init_cell


@dataclass(frozen=True)
class EncoderModel:
    """Stack of recurrent cells; layer 0 eats (t_norm, p) pairs."""

    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ValidationError("encoder needs at least one layer")
        if layers[0].d_in != 2:
            raise ValidationError(f"first encoder layer must take 2 inputs, got {layers[0].d_in}")
        for k in range(1, len(layers)):
            if layers[k].d_in != layers[k - 1].d_out:
                raise ValidationError(
                    f"layer {k} d_in={layers[k].d_in} != layer {k - 1} d_out={layers[k - 1].d_out}"
                )

    @property
    def channels(self):
        return self.layers[-1].d_out

    @property
    def kind(self):
        kinds = {layer.kind for layer in self.layers}
        return kinds.pop() if len(kinds) == 1 else "mixed"

    def initial_state(self, batch=()):
        return [StateVec.zeros(layer.kind, layer.d_out, batch) for layer in self.layers]

    def astype(self, dtype):
        return EncoderModel(tuple(layer.astype(dtype) for layer in self.layers))


@dataclass(frozen=True)
class DecoderModel:
    """GRU stack plus the C->2 output head and the 2->C feedback head."""

    layers: tuple
    out_W: np.ndarray
    out_b: np.ndarray
    in_W: np.ndarray
    in_b: np.ndarray

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        for name in ("out_W", "out_b", "in_W", "in_b"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        C = self.channels
        for k, layer in enumerate(layers):
            if layer.kind != "gru" or layer.d_in != C or layer.d_out != C:
                raise ValidationError(f"decoder layer {k} must be a {C}->{C} GRU")
        if self.out_W.shape != (2, C) or self.out_b.shape != (2,):
            raise ValidationError("output head must map C -> 2")
        if self.in_W.shape != (C, 2) or self.in_b.shape != (C,):
            raise ValidationError("feedback head must map 2 -> C")

    @property
    def channels(self):
        return self.in_W.shape[0]

    def astype(self, dtype):
        return DecoderModel(
            tuple(layer.astype(dtype) for layer in self.layers),
            self.out_W.astype(dtype), self.out_b.astype(dtype),
            self.in_W.astype(dtype), self.in_b.astype(dtype),
        )

    def __eq__(self, other):
        if not isinstance(other, DecoderModel):
            return NotImplemented
        return self.layers == other.layers and all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in ("out_W", "out_b", "in_W", "in_b")
        )

    __hash__ = None


def init_encoder(kind, dims, rng=None, gated_bias=True):
    """Encoder with hidden sizes ``dims`` (e.g. (12, 12, 12)) of one cell kind."""
    rng = np.random.default_rng(rng)
    layers, d_in = [], 2
    for d in dims:
        layers.append(init_cell(kind, d_in, d, rng, gated_bias))
        d_in = d
    return EncoderModel(tuple(layers))


def init_decoder(channels, n_layers=3, rng=None):
    rng = np.random.default_rng(rng)
    layers = tuple(init_cell("gru", channels, channels, rng) for _ in range(n_layers))
    k_out, k_in = 1.0 / np.sqrt(channels), 1.0 / np.sqrt(2)
    return DecoderModel(
        layers,
        rng.uniform(-k_out, k_out, (2, channels)),
        rng.uniform(-k_out, k_out, 2),
        rng.uniform(-k_in, k_in, (channels, 2)),
        rng.uniform(-k_in, k_in, channels),
    )


def stack_step(layers, u, states):
    """One input through every layer; returns the new per-layer states."""
    out, x = [], u
    for layer, s in zip(layers, states):
        s = cell_step(layer, x, s)
        out.append(s)
        x = s.h
    return out


def encode_sequence(model, inputs, init=None):
    """Fold time-ordered (t_norm, p) inputs through the stack; final per-layer states."""
    states = model.initial_state() if init is None else list(init)
    for u in np.asarray(inputs, dtype=np.float64).reshape(-1, 2):
        states = stack_step(model.layers, u, states)
    return states


def _masked(mask, new, old):
    m = mask[:, None] > 0
    return StateVec(
        np.where(m, new.h, old.h),
        None if new.c is None else np.where(m, new.c, old.c),
    )


def encode_window(model, tw, init=None, return_states=False):
    """Representation E of shape (W*H, C) for a tensorized window.

    Masked-out steps leave the pixel's state untouched, so empty pixels keep
    the initial state.
    """
    n_pix = tw.n_pixels
    states = model.initial_state((n_pix,)) if init is None else list(init)
    cols = tw.active_columns()
    sub = [StateVec(s.h[cols], None if s.c is None else s.c[cols]) for s in states]
    for z in range(tw.Z):
        m = tw.mask[z, cols]
        if not m.any():
            continue
        new = stack_step(model.layers, tw.values[z, cols], sub)
        sub = [_masked(m, n, o) for n, o in zip(new, sub)]
    out = []
    for s, s_sub in zip(states, sub):
        h = s.h.copy()
        h[cols] = s_sub.h
        c = None
        if s.c is not None:
            c = s.c.copy()
            c[cols] = s_sub.c
        out.append(StateVec(h, c))
    return out if return_states else out[-1].h


def decode(model, E, Z):
    """Roll the decoder ``Z`` steps from representation rows ``E`` (..., C).

    Decoder hidden state starts at zero; ``E`` is the first input; each
    step's reconstruction is fed back through the 2->C head. Returns
    (Z, ..., 2) with index 0 reconstructing the earliest event.
    """
    if Z < 1:
        raise ValidationError(f"Z must be >= 1, got {Z}")
    x = np.asarray(E, dtype=np.float64)
    states = [StateVec(np.zeros_like(x)) for _ in model.layers]
    out = []
    for _ in range(Z):
        states = stack_step(model.layers, x, states)
        d = affine(states[-1].h if states else x, model.out_W, model.out_b)
        out.append(d)
        x = affine(d, model.in_W, model.in_b)
    return np.stack(out)
