"""Fake quantisation with a straight-through gradient."""
import numpy as np

from ..quantize.grid import max_abs_scale, qrange, round_half_away

__all__ = ["fake_quant", "fake_quant_grad", "max_abs_scale"]


def fake_quant(v, bits, scale):
    """``clamp(round(v / scale), lo, hi) * scale`` on a signed ``bits`` grid."""
    if bits < 2:
        raise ValueError(f"bits must be >= 2, got {bits}")
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    lo, hi = qrange(bits)
    return np.clip(round_half_away(np.asarray(v) / scale), lo, hi) * scale


def fake_quant_grad(v, bits, scale, upstream=1.0):
    """Straight-through estimator: pass ``upstream`` where v is inside the clamp range."""
    lo, hi = qrange(bits)
    q = np.asarray(v) / scale
    return np.where((q >= lo - 0.5) & (q <= hi + 0.5), upstream, 0.0)
