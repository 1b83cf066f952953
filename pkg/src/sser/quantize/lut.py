from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .grid import round_half_away

FUNCTIONS = {"sigmoid": expit, "tanh": np.tanh}


@dataclass(frozen=True)
class ActivationLUT:
    """Quantised activation table addressed by a signed ``in_bits`` code.

    ``table[i]`` holds the output code for input code ``i - 2**(in_bits-1)``.
    Sigmoid outputs are unsigned codes in [0, 2**out_bits - 1]; tanh outputs
    are symmetric signed codes in [-(2**(out_bits-1) - 1), 2**(out_bits-1) - 1].
    """

    fn: str
    in_bits: int
    out_bits: int
    in_scale: float
    out_scale: float
    table: np.ndarray

    @property
    def offset(self):
        return 2 ** (self.in_bits - 1)

    @property
    def in_range(self):
        return -self.offset, self.offset - 1

    @property
    def out_range(self):
        if self.fn == "sigmoid":
            return 0, 2 ** self.out_bits - 1
        top = 2 ** (self.out_bits - 1) - 1
        return -top, top

    def input_codes(self):
        return np.arange(-self.offset, self.offset, dtype=np.int64)

    def __call__(self, codes):
        """Look up integer pre-activation codes (clamped to the addressable range)."""
        lo, hi = self.in_range
        return self.table[np.clip(codes, lo, hi) + self.offset]

    def __eq__(self, other):
        if not isinstance(other, ActivationLUT):
            return NotImplemented
        return (self.fn, self.in_bits, self.out_bits, self.in_scale, self.out_scale) == (
            other.fn, other.in_bits, other.out_bits, other.in_scale, other.out_scale
        ) and np.array_equal(self.table, other.table)

    __hash__ = None


def build_activation_lut(fn, in_bits, out_bits, in_scale, out_scale):
    """Tabulate ``quantize(fn(dequant(i)))`` for every representable input code."""
    if fn not in FUNCTIONS:
        raise ValueError(f"unknown activation {fn!r}")
    if not (2 <= in_bits <= 16 and 2 <= out_bits <= 16):
        raise ValueError("LUT bit widths must lie in 2..16")
    if not (in_scale > 0 and out_scale > 0):
        raise ValueError("LUT scales must be positive")
    lut = ActivationLUT(fn, in_bits, out_bits, float(in_scale), float(out_scale), np.zeros(0))
    x = lut.input_codes() * in_scale
    lo, hi = lut.out_range
    table = np.clip(round_half_away(FUNCTIONS[fn](x) / out_scale), lo, hi).astype(np.int64)
    return ActivationLUT(fn, in_bits, out_bits, float(in_scale), float(out_scale), table)
