import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..event_io import EventSequence, crop, slice_window, tensorize
from ..exceptions import ConfigurationError
from ..rnn_core import init_decoder, init_encoder, save_model
from .backprop import LossConfig, QATHooks, backward, flatten, forward_loss, unflatten
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    cell: str = "gru"
    dims: tuple = (12, 12, 12)
    decoder_layers: int = 3
    epochs: int = 100
    lr: float = 1e-3
    weight_decay: float = 1e-4
    window_us: int = 200_000
    crop: int = 64
    z_cap: int = 100
    samples_per_epoch: int = 16
    seed: int = 0
    quant: tuple = None  # (weight_bits, act_bits) enables QAT
    loss: LossConfig = field(default_factory=LossConfig)
    gated_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.epochs < 0 or self.samples_per_epoch < 1:
            raise ConfigurationError("epochs must be >= 0 and samples_per_epoch >= 1")
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigurationError("lr and weight_decay must be >= 0")
        if self.window_us <= 0 or self.crop <= 0 or self.z_cap < 1:
            raise ConfigurationError("window, crop and z_cap must be positive")
        if not self.dims or min(self.dims) < 1:
            raise ConfigurationError("dims must be a non-empty list of positive sizes")
        if self.quant is not None:
            wb, ab = self.quant
            if not (2 <= wb <= 12 and 2 <= ab <= 12):
                raise ConfigurationError(f"quantisation bits must lie in 2..12, got {self.quant}")

    def qat(self):
        return None if self.quant is None else QATHooks(*self.quant)


@dataclass
class Sample:
    """One cropped, tensorized training window with empty pixels dropped."""

    window: object  # TensorizedWindow restricted to active columns
    denom: int      # Z * crop * crop before the empty columns were dropped


@dataclass
class TrainResult:
    encoder: object
    decoder: object
    losses: list
    optimizer: AdamState

    def save(self, path, loss_csv=None):
        save_model(path, self.encoder, self.decoder)
        np.savez(
            f"{path}.opt.npz",
            t=self.optimizer.t,
            **{f"m{k}": a for k, a in enumerate(self.optimizer.m)},
            **{f"v{k}": a for k, a in enumerate(self.optimizer.v)},
        )
        if loss_csv is not None:
            write_loss_csv(self.losses, loss_csv)


def load_optimizer_state(path):
    with np.load(path) as z:
        n = sum(1 for k in z.files if k.startswith("m"))
        return AdamState(tuple(z[f"m{k}"] for k in range(n)), tuple(z[f"v{k}"] for k in range(n)), int(z["t"]))


def write_loss_csv(losses, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        for k, loss in enumerate(losses):
            w.writerow([k, repr(float(loss))])


def _as_list(dataset):
    if isinstance(dataset, EventSequence):
        return [dataset]
    return list(dataset)


def sample_windows(dataset, n, cfg, rng, max_tries=1000):
    """Draw ``n`` random (window, crop) samples that contain at least one event."""
    seqs = [s for s in _as_list(dataset) if len(s)]
    if not seqs:
        raise ConfigurationError("dataset yields no events")
    for s in seqs:
        if cfg.crop > s.width or cfg.crop > s.height:
            raise ConfigurationError(f"crop {cfg.crop} exceeds sensor {s.width}x{s.height}")
    out = []
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > max_tries * n:
            raise ConfigurationError("could not draw non-empty windows from the dataset")
        seq = seqs[int(rng.integers(len(seqs)))]
        t_lo, t_hi = int(seq.t[0]), int(seq.t[-1])
        t0 = t_lo + int(rng.integers(max(1, t_hi - t_lo - cfg.window_us + 2)))
        x0 = int(rng.integers(seq.width - cfg.crop + 1))
        y0 = int(rng.integers(seq.height - cfg.crop + 1))
        win = crop(slice_window(seq, t0, cfg.window_us), x0, y0, cfg.crop, cfg.crop)
        if not len(win):
            continue
        tw = tensorize(win, cfg.z_cap, t0=t0, T=cfg.window_us)
        out.append(Sample(tw.select(tw.active_columns()), tw.Z * tw.n_pixels))
    return out


def evaluate(encoder, decoder, samples, loss=LossConfig(), qat=None):
    """Mean masked loss over samples (order-independent sum)."""
    return math.fsum(forward_loss(encoder, decoder, s.window, loss, s.denom, qat) for s in samples) / len(samples)


def train_encoder(dataset, cfg=TrainConfig(), init=None, callback=None):
    """Self-supervised autoencoder training.

    The ``samples_per_epoch`` windows are drawn once (seeded) and revisited
    every epoch in a reshuffled order; one window is one Adam step.
    Returns a TrainResult with the per-epoch mean training loss.
    """
    rng = np.random.default_rng(cfg.seed)
    if init is None:
        enc = init_encoder(cfg.cell, cfg.dims, rng, cfg.gated_bias)
        dec = init_decoder(enc.channels, cfg.decoder_layers, rng)
    else:
        enc, dec = init
    samples = sample_windows(dataset, cfg.samples_per_epoch, cfg, rng)
    qat = cfg.qat()
    params = flatten(enc, dec)
    state = AdamState.zeros_like(params)
    losses = []
    step = 0
    for epoch in range(cfg.epochs):
        epoch_losses = []
        for k in rng.permutation(len(samples)):
            s = samples[k]
            loss, grads = backward(enc, dec, s.window, cfg.loss, s.denom, qat, step=step)
            epoch_losses.append(loss)
            params, state = adam_step(params, grads.arrays(), state, cfg.lr, cfg.weight_decay)
            enc, dec = unflatten(enc, dec, params)
            step += 1
        losses.append(math.fsum(epoch_losses) / len(epoch_losses))
        log.debug("epoch %d loss %.6g", epoch, losses[-1])
        if callback is not None:
            callback(epoch, losses[-1])
    return TrainResult(enc, dec, losses, state)
