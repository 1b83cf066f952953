from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AdamState:
    m: tuple
    v: tuple
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls(tuple(np.zeros_like(p) for p in params), tuple(np.zeros_like(p) for p in params), 0)


def adam_step(params, grads, state, lr=1e-3, weight_decay=0.0, betas=(0.9, 0.999), eps=1e-8):
    """One bias-corrected Adam update with decoupled weight decay.

    Returns ``(new_params, new_state)``; inputs are not modified.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state must align")
    b1, b2 = betas
    t = state.t + 1
    c1, c2 = 1 - b1 ** t, 1 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape} vs {m.shape}")
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        new_p.append(p - lr * (update + weight_decay * p))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(tuple(new_m), tuple(new_v), t)
