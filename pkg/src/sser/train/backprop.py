"""Masked reconstruction loss and exact reverse-mode gradients.

The forward pass here mirrors ``rnn_core`` but keeps per-step caches and
uses plain matmuls; gradient checks compare against ``rnn_core`` directly.
"""
from dataclasses import dataclass

import numpy as np

from ..exceptions import TrainingError, ValidationError
from ..rnn_core import CellParams, DecoderModel, EncoderModel, sigmoid


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0
    beta: float = 0.1

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ValidationError("need alpha >= 0, beta >= 0 and alpha + beta > 0")


@dataclass(frozen=True)
class GradientSet:
    """Gradients laid out exactly like the (encoder, decoder) pair."""

    encoder: EncoderModel
    decoder: DecoderModel

    def arrays(self):
        return flatten(self.encoder, self.decoder)


def flatten(encoder, decoder):
    arrays = []
    for layer in encoder.layers + decoder.layers:
        arrays += [layer.W, layer.U, layer.b]
    return arrays + [decoder.out_W, decoder.out_b, decoder.in_W, decoder.in_b]


def unflatten(encoder, decoder, arrays):
    it = iter(arrays)

    def layers(src):
        return tuple(
            CellParams(l.kind, next(it), next(it), next(it), l.gated_bias) for l in src
        )

    enc = EncoderModel(layers(encoder.layers))
    dec_layers = layers(decoder.layers)
    dec = DecoderModel(dec_layers, next(it), next(it), next(it), next(it))
    return enc, dec


def masked_mse_loss(V, D, M, cfg=LossConfig(), denom=None):
    """Weighted masked MSE over time and polarity.

    The normaliser is the full ``Z * W*H`` (``denom`` overrides it when
    empty pixels were dropped beforehand), not the number of masked-in terms.
    """
    V, D, M = np.asarray(V), np.asarray(D), np.asarray(M)
    if V.shape != D.shape or V.shape[:2] != M.shape or V.shape[-1] != 2:
        raise ValidationError(f"shape mismatch: V{V.shape} D{D.shape} M{M.shape}")
    n = V.shape[0] * V.shape[1] if denom is None else denom
    err = (V - D) ** 2 * M[..., None]
    return (cfg.alpha * err[..., 0].sum() + cfg.beta * err[..., 1].sum()) / n


def loss_grad(V, D, M, cfg, denom):
    g = -2.0 * (V - D) * M[..., None] / denom
    g[..., 0] *= cfg.alpha
    g[..., 1] *= cfg.beta
    return g


# ---------------------------------------------------------------- cells


def cell_forward(p, x, h, c=None):
    """One batched step; returns (h_new, c_new, cache)."""
    d = p.d_out
    ax = x @ p.W.T
    ah = h @ p.U.T
    b = p.b
    if p.kind == "rnn":
        hn = np.tanh(ax + ah + b)
        return hn, None, (hn,)
    if p.kind == "lstm":
        a = ax + ah + b
        f, i, o = sigmoid(a[:, :d]), sigmoid(a[:, d:2 * d]), sigmoid(a[:, 2 * d:3 * d])
        g = np.tanh(a[:, 3 * d:])
        cn = f * c + i * g
        tc = np.tanh(cn)
        return o * tc, cn, (f, i, o, g, tc)
    if p.kind == "gru":
        z = sigmoid(ax[:, :d] + ah[:, :d] + b[:d])
        r = sigmoid(ax[:, d:2 * d] + ah[:, d:2 * d] + b[d:2 * d])
        if p.gated_bias:
            u = ah[:, 2 * d:] + b[2 * d:]
            ht = np.tanh(ax[:, 2 * d:] + r * u)
        else:
            u = ah[:, 2 * d:]
            ht = np.tanh(ax[:, 2 * d:] + r * u + b[2 * d:])
        return (1 - z) * h + z * ht, None, (z, r, u, ht)
    if p.kind == "mgu":
        f = sigmoid(ax[:, :d] + ah[:, :d] + b[:d])
        if p.gated_bias:
            u = ah[:, d:] + b[d:]
            ht = np.tanh(ax[:, d:] + f * u)
        else:
            u = ah[:, d:]
            ht = np.tanh(ax[:, d:] + f * u + b[d:])
        return (1 - f) * h + f * ht, None, (f, u, ht)
    raise ValidationError(f"unknown cell kind {p.kind!r}")


def cell_backward(p, x, h, c, cache, gh, gc=None):
    """Backprop one step.

    Returns (dx, dh, dc, dA_x, dA_h, dA_b): the last three are gradients of
    the stacked pre-activations feeding ``W @ x``, ``U @ h`` and ``b``.
    """
    if p.kind == "rnn":
        (hn,) = cache
        da = gh * (1 - hn * hn)
        dAx = dAh = dAb = da
        dc = None
    elif p.kind == "lstm":
        f, i, o, g, tc = cache
        do = gh * tc
        dcn = gh * o * (1 - tc * tc) + (0.0 if gc is None else gc)
        da = np.concatenate(
            [dcn * c * f * (1 - f), dcn * g * i * (1 - i), do * o * (1 - o), dcn * i * (1 - g * g)],
            axis=1,
        )
        dAx = dAh = dAb = da
        dc = dcn * f
    elif p.kind == "gru":
        z, r, u, ht = cache
        dht = gh * z
        dz = gh * (ht - h)
        dpre = dht * (1 - ht * ht)
        dr = dpre * u
        du = dpre * r
        daz = dz * z * (1 - z)
        dar = dr * r * (1 - r)
        dAx = np.concatenate([daz, dar, dpre], axis=1)
        dAh = np.concatenate([daz, dar, du], axis=1)
        dAb = dAh if p.gated_bias else dAx
        dc = None
        carry = gh * (1 - z)
    elif p.kind == "mgu":
        f, u, ht = cache
        dht = gh * f
        dpre = dht * (1 - ht * ht)
        df = gh * (ht - h) + dpre * u
        du = dpre * f
        daf = df * f * (1 - f)
        dAx = np.concatenate([daf, dpre], axis=1)
        dAh = np.concatenate([daf, du], axis=1)
        dAb = dAh if p.gated_bias else dAx
        dc = None
        carry = gh * (1 - f)
    else:
        raise ValidationError(f"unknown cell kind {p.kind!r}")
    dx = dAx @ p.W
    dh = dAh @ p.U
    if p.kind in ("gru", "mgu"):
        dh = dh + carry
    return dx, dh, dc, dAx, dAh, dAb


class _Acc:
    """Per-layer gradient accumulators."""

    def __init__(self, layers):
        self.W = [np.zeros_like(l.W) for l in layers]
        self.U = [np.zeros_like(l.U) for l in layers]
        self.b = [np.zeros_like(l.b) for l in layers]

    def add(self, k, x, h, dAx, dAh, dAb):
        self.W[k] += dAx.T @ x
        self.U[k] += dAh.T @ h
        self.b[k] += dAb.sum(axis=0)

    def cells(self, layers):
        return tuple(
            CellParams(l.kind, self.W[k], self.U[k], self.b[k], l.gated_bias)
            for k, l in enumerate(layers)
        )


# ---------------------------------------------------------------- forward/backward


@dataclass
class QATHooks:
    """Fake-quantisation applied in the forward pass (straight-through backward)."""

    weight_bits: int
    act_bits: int
    input_bits: int = 16

    def weights(self, layer):
        from .qat import fake_quant, max_abs_scale

        return layer.replace(*(fake_quant(a, self.weight_bits, max_abs_scale(a, self.weight_bits))
                               for a in (layer.W, layer.U)))

    def state(self, h):
        from .qat import fake_quant

        return fake_quant(h, self.act_bits, 1.0 / (2 ** (self.act_bits - 1) - 1))

    def inputs(self, v):
        out = v.copy()
        top = 2 ** self.input_bits - 1
        out[..., 0] = np.floor(v[..., 0] * top + 0.5) / top
        return out


def _prefix_counts(mask):
    """Per-step number of active columns; requires columns sorted by event count."""
    counts = mask.sum(axis=0)
    n = (mask > 0).sum(axis=1)
    if np.any(np.diff(counts) > 0) or not np.array_equal(
        mask > 0, np.arange(mask.shape[0])[:, None] < counts[None, :]
    ):
        raise ValidationError("mask columns must be prefix-packed and sorted by event count")
    return [int(v) for v in n]


def sort_columns(values, mask):
    """Reorder pixel columns by descending event count (loss is column-order invariant)."""
    order = np.argsort(-mask.sum(axis=0), kind="stable")
    return values[:, order], mask[:, order]


def encoder_forward(encoder, values, mask, qat=None):
    """Masked encoder over count-sorted columns: step z touches rows [:n_z] only."""
    Z, N = mask.shape
    n_active = _prefix_counts(mask)
    layers = encoder.layers if qat is None else tuple(qat.weights(l) for l in encoder.layers)
    if qat is not None:
        values = qat.inputs(values)
    hs = [np.zeros((N, l.d_out)) for l in layers]
    cs = [np.zeros((N, l.d_out)) if l.kind == "lstm" else None for l in layers]
    caches = []
    for z in range(Z):
        n = n_active[z]
        x = values[z, :n]
        step = []
        for k, layer in enumerate(layers):
            h, c = hs[k][:n].copy(), None if cs[k] is None else cs[k][:n].copy()
            hn, cn, cache = cell_forward(layer, x, h, c)
            if qat is not None:
                hn = qat.state(hn)
            step.append((x, h, c, cache))
            hs[k][:n] = hn
            if cn is not None:
                cs[k][:n] = cn
            x = hn
        caches.append((n, step))
    return hs[-1], (layers, caches)


def encoder_backward(tape, dE):
    layers, caches = tape
    acc = _Acc(layers)
    gh = [np.zeros((dE.shape[0], l.d_out)) for l in layers]
    gc = [np.zeros_like(g) if l.kind == "lstm" else None for g, l in zip(gh, layers)]
    gh[-1] = dE.copy()
    for n, step in reversed(caches):
        dx = None
        for k in range(len(layers) - 1, -1, -1):
            x, h, c, cache = step[k]
            g = gh[k][:n]
            if dx is not None:
                g = g + dx
            gck = None if gc[k] is None else gc[k][:n]
            dx, dh, dc, dAx, dAh, dAb = cell_backward(layers[k], x, h, c, cache, g, gck)
            acc.add(k, x, h, dAx, dAh, dAb)
            gh[k][:n] = dh
            if dc is not None:
                gc[k][:n] = dc
    return acc.cells(layers)


def decoder_forward(decoder, E, n_active):
    """Roll the decoder; step z runs rows [:n_active[z]] (later rows are masked out)."""
    Z = len(n_active)
    N, C = E.shape
    hs = [np.zeros((N, C)) for _ in decoder.layers]
    x = E
    D = np.zeros((Z, N, 2))
    steps = []
    for z in range(Z):
        n = n_active[z]
        x = x[:n]
        step = []
        for k, layer in enumerate(decoder.layers):
            h = hs[k][:n]
            hn, _, cache = cell_forward(layer, x, h)
            step.append((x, h, cache))
            hs[k] = hn
            x = hn
        top = x
        d = top @ decoder.out_W.T + decoder.out_b
        x = d @ decoder.in_W.T + decoder.in_b
        D[z, :n] = d
        steps.append((n, step, top, d))
    return D, steps


def decoder_backward(decoder, steps, dD, N):
    layers = decoder.layers
    acc = _Acc(layers)
    d_out_W = np.zeros_like(decoder.out_W)
    d_out_b = np.zeros_like(decoder.out_b)
    d_in_W = np.zeros_like(decoder.in_W)
    d_in_b = np.zeros_like(decoder.in_b)
    gh = [np.zeros((0, l.d_out)) for l in layers]
    dx_next = np.zeros((0, decoder.channels))  # gradient w.r.t. the input fed to step z+1
    for z in range(len(steps) - 1, -1, -1):
        n, step, top, d = steps[z]
        m = dx_next.shape[0]
        dd = dD[z, :n].copy()
        d_in_W += dx_next.T @ d[:m]
        d_in_b += dx_next.sum(axis=0)
        dd[:m] += dx_next @ decoder.in_W
        d_out_W += dd.T @ top
        d_out_b += dd.sum(axis=0)
        g_top = dd @ decoder.out_W
        gh = [_pad(g, n) for g in gh]
        gh[-1] = gh[-1] + g_top
        dx = g_top
        for k in range(len(layers) - 1, -1, -1):
            x, h, cache = step[k]
            dx, dh, _, dAx, dAh, dAb = cell_backward(layers[k], x, h, None, cache, gh[k])
            acc.add(k, x, h, dAx, dAh, dAb)
            gh[k] = dh
            if k > 0:
                gh[k - 1] = gh[k - 1] + dx
        dx_next = dx
    dE = _pad(dx_next, N)
    return DecoderModel(acc.cells(layers), d_out_W, d_out_b, d_in_W, d_in_b), dE


def _pad(g, n):
    if g.shape[0] == n:
        return g
    out = np.zeros((n, g.shape[1]))
    out[: g.shape[0]] = g
    return out


def forward_loss(encoder, decoder, tw, cfg=LossConfig(), denom=None, qat=None):
    V, M = sort_columns(tw.values, tw.mask)
    E, _ = encoder_forward(encoder, V, M, qat)
    D, _ = decoder_forward(decoder, E, _prefix_counts(M))
    return masked_mse_loss(V, D, M, cfg, denom)


def backward(encoder, decoder, tw, cfg=LossConfig(), denom=None, qat=None, step=None):
    """Loss and exact gradients for every encoder and decoder parameter.

    With ``qat`` set the forward pass uses fake-quantised weights and states
    and the gradients pass straight through to the float parameters.
    """
    if denom is None:
        denom = tw.values.shape[0] * tw.values.shape[1]
    V, M = sort_columns(tw.values, tw.mask)
    E, enc_tape = encoder_forward(encoder, V, M, qat)
    D, dec_tape = decoder_forward(decoder, E, _prefix_counts(M))
    loss = masked_mse_loss(V, D, M, cfg, denom)
    if not np.isfinite(loss) or not np.isfinite(D).all():
        raise TrainingError("non-finite forward value", step=step)
    dD = loss_grad(V, D, M, cfg, denom)
    dec_grad, dE = decoder_backward(decoder, dec_tape, dD, V.shape[1])
    enc_layers = encoder_backward(enc_tape, dE)
    grads = GradientSet(EncoderModel(enc_layers), dec_grad)
    if not all(np.isfinite(g).all() for g in grads.arrays()):
        raise TrainingError("non-finite gradient", step=step)
    return float(loss), grads
