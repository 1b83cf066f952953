"""Float64 reference recurrent cells: vanilla RNN, LSTM, GRU and MGU.

Gate weights are stored stacked along the output axis, in the same
combined layout the integer kernels use:

    rnn   [h]            lstm  [f, i, o, c]
    gru   [z, r, h]      mgu   [f, h]

All step functions broadcast over leading batch axes: ``x`` is (..., d_in),
``h`` is (..., d_out).
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..exceptions import ValidationError

GATE_NAMES = {
    "rnn": ("h",),
    "lstm": ("f", "i", "o", "c"),
    "gru": ("z", "r", "h"),
    "mgu": ("f", "h"),
}
KINDS = tuple(GATE_NAMES)


sigmoid = expit  # overflow-safe logistic


def affine(x, W, b=None):
    """``W @ x (+ b)`` over the last axis with a batch-size-independent sum order.

    Row results do not depend on how many rows are stacked together, which
    keeps the batched encoder and the per-event engine bit-identical.
    """
    out = (x[..., None, :] * W).sum(axis=-1)
    return out if b is None else out + b


@dataclass(frozen=True)
class CellParams:
    kind: str
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    # GRU/MGU: True puts b_h inside the gated term, r * (U_h h + b_h);
    # False uses tanh(W_h x + r * (U_h h) + b_h)
    gated_bias: bool = True

    def __post_init__(self):
        if self.kind not in GATE_NAMES:
            raise ValidationError(f"unknown cell kind {self.kind!r}")
        G = len(GATE_NAMES[self.kind])
        W, U, b = (np.asarray(a, dtype=np.float64) for a in (self.W, self.U, self.b))
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "b", b)
        if W.ndim != 2 or U.ndim != 2 or b.ndim != 1:
            raise ValidationError("W, U must be matrices and b a vector")
        d_out = U.shape[1]
        if W.shape[0] != G * d_out or U.shape[0] != G * d_out or b.shape[0] != G * d_out:
            raise ValidationError(
                f"{self.kind} with d_out={d_out} needs {G * d_out} stacked rows; "
                f"got W{W.shape} U{U.shape} b{b.shape}"
            )
        if not (np.isfinite(W).all() and np.isfinite(U).all() and np.isfinite(b).all()):
            raise ValidationError("non-finite cell parameter")

    @property
    def d_in(self):
        return self.W.shape[1]

    @property
    def d_out(self):
        return self.U.shape[1]

    @property
    def n_gates(self):
        return len(GATE_NAMES[self.kind])

    def gate(self, name):
        """(W_g, U_g, b_g) views for one named gate."""
        k = GATE_NAMES[self.kind].index(name)
        d = self.d_out
        return self.W[k * d:(k + 1) * d], self.U[k * d:(k + 1) * d], self.b[k * d:(k + 1) * d]

    def replace(self, W=None, U=None, b=None):
        return CellParams(
            self.kind,
            self.W if W is None else W,
            self.U if U is None else U,
            self.b if b is None else b,
            self.gated_bias,
        )

    def astype(self, dtype):
        return self.replace(*(a.astype(dtype) for a in (self.W, self.U, self.b)))

    def __eq__(self, other):
        if not isinstance(other, CellParams):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.gated_bias == other.gated_bias
            and all(np.array_equal(a, b) for a, b in zip(
                (self.W, self.U, self.b), (other.W, other.U, other.b)))
        )

    __hash__ = None


@dataclass(frozen=True)
class StateVec:
    h: np.ndarray
    c: np.ndarray = field(default=None)

    @classmethod
    def zeros(cls, kind, d_out, batch=()):
        h = np.zeros((*batch, d_out))
        return cls(h, np.zeros_like(h) if kind == "lstm" else None)


def init_cell(kind, d_in, d_out, rng, gated_bias=True):
    """Uniform(-1/sqrt(d_out), 1/sqrt(d_out)) initialisation."""
    G = len(GATE_NAMES[kind])
    k = 1.0 / np.sqrt(d_out)
    return CellParams(
        kind,
        rng.uniform(-k, k, (G * d_out, d_in)),
        rng.uniform(-k, k, (G * d_out, d_out)),
        rng.uniform(-k, k, G * d_out),
        gated_bias,
    )


def _check(params, x, h):
    if x.shape[-1] != params.d_in or h.shape[-1] != params.d_out:
        raise ValidationError(
            f"dimension mismatch: {params.kind} expects x[..., {params.d_in}] and "
            f"h[..., {params.d_out}], got {x.shape} and {h.shape}"
        )


def rnn_step(params, x, s):
    x, h = np.asarray(x, dtype=np.float64), s.h
    _check(params, x, h)
    return StateVec(np.tanh(affine(x, params.W) + affine(h, params.U) + params.b))


def lstm_step(params, x, s):
    x, h, c = np.asarray(x, dtype=np.float64), s.h, s.c
    _check(params, x, h)
    if c is None:
        raise ValidationError("LSTM state needs a cell vector c")
    d = params.d_out
    a = affine(x, params.W) + affine(h, params.U) + params.b
    f = sigmoid(a[..., :d])
    i = sigmoid(a[..., d:2 * d])
    o = sigmoid(a[..., 2 * d:3 * d])
    c_tilde = np.tanh(a[..., 3 * d:])
    c_new = f * c + i * c_tilde
    return StateVec(o * np.tanh(c_new), c_new)


def gru_step(params, x, s):
    x, h = np.asarray(x, dtype=np.float64), s.h
    _check(params, x, h)
    d = params.d_out
    wx = affine(x, params.W)
    uh = affine(h, params.U)
    b = params.b
    z = sigmoid(wx[..., :d] + uh[..., :d] + b[:d])
    r = sigmoid(wx[..., d:2 * d] + uh[..., d:2 * d] + b[d:2 * d])
    if params.gated_bias:
        h_tilde = np.tanh(wx[..., 2 * d:] + r * (uh[..., 2 * d:] + b[2 * d:]))
    else:
        h_tilde = np.tanh(wx[..., 2 * d:] + r * uh[..., 2 * d:] + b[2 * d:])
    return StateVec((1 - z) * h + z * h_tilde)


def mgu_step(params, x, s):
    x, h = np.asarray(x, dtype=np.float64), s.h
    _check(params, x, h)
    d = params.d_out
    wx = affine(x, params.W)
    uh = affine(h, params.U)
    b = params.b
    f = sigmoid(wx[..., :d] + uh[..., :d] + b[:d])
    if params.gated_bias:
        h_tilde = np.tanh(wx[..., d:] + f * (uh[..., d:] + b[d:]))
    else:
        h_tilde = np.tanh(wx[..., d:] + f * uh[..., d:] + b[d:])
    return StateVec((1 - f) * h + f * h_tilde)


STEPS = {"rnn": rnn_step, "lstm": lstm_step, "gru": gru_step, "mgu": mgu_step}


def cell_step(params, x, s):
    return STEPS[params.kind](params, x, s)
