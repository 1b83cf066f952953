"""Rounding and symmetric-grid helpers shared by QAT and the integer kernels."""
import math

import numpy as np


def round_half_away(v):
    """Round to nearest integer, ties away from zero (2.5 -> 3, -2.5 -> -3)."""
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def qrange(bits):
    """Signed two's-complement range (lo, hi) for ``bits``."""
    return -(2 ** (bits - 1)), 2 ** (bits - 1) - 1


def quantize_symmetric(v, bits, scale):
    lo, hi = qrange(bits)
    return np.clip(round_half_away(np.asarray(v) / scale), lo, hi).astype(np.int64)


def max_abs_scale(v, bits, power_of_two=False):
    """Per-tensor scale putting max|v| on the top code; 1.0 for an all-zero tensor."""
    m = float(np.max(np.abs(v))) if np.size(v) else 0.0
    if m == 0.0:
        return 1.0
    scale = m / (2 ** (bits - 1) - 1)
    if power_of_two:
        scale = 2.0 ** math.ceil(math.log2(scale))
    return scale


def state_scale(act_bits):
    """Grid of the tanh outputs and hidden states: [-1, 1] on the symmetric codes."""
    return 1.0 / (2 ** (act_bits - 1) - 1)


def gate_scale(act_bits):
    """Grid of sigmoid outputs: [0, 1] with 1.0 on-grid as code 2**bits - 1."""
    return 1.0 / (2 ** act_bits - 1)
