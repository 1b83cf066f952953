"""scikit-learn style wrapper around training, encoding and quantisation."""
import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .event_io import tensorize
from .quantize import QuantScheme, dequantize_representation, q_encode_window, quantize_model
from .rnn_core import encode_window
from .train import LossConfig, TrainConfig, forward_loss, train_encoder
from .validation import check_bits, check_dataset, check_dims, check_positive_int, check_random_state


class SSEREncoder(TransformerMixin, BaseEstimator):
    """Per-pixel recurrent event encoder.

    ``fit`` trains the encoder and its decoder on event sequences.
    ``transform`` maps each window (an EventSequence whose time span starts at
    its first event) to an (H, W, C) representation; a list of windows gives
    an (n, H, W, C) array. After ``quantize`` the integer encoder is used.
    """

    def __init__(self, cell="gru", dims=(12, 12, 12), decoder_layers=3, epochs=100, lr=1e-3,
                 weight_decay=1e-4, window_us=200_000, crop=64, z_cap=100, samples_per_epoch=16,
                 qat_bits=None, random_state=0):
        self.cell = cell
        self.dims = dims
        self.decoder_layers = decoder_layers
        self.epochs = epochs
        self.lr = lr
        self.weight_decay = weight_decay
        self.window_us = window_us
        self.crop = crop
        self.z_cap = z_cap
        self.samples_per_epoch = samples_per_epoch
        self.qat_bits = qat_bits
        self.random_state = random_state

    def _config(self):
        quant = None
        if self.qat_bits is not None:
            b = check_bits(self.qat_bits, "qat_bits")
            quant = (b, b)
        return TrainConfig(
            cell=self.cell, dims=check_dims(self.dims),
            decoder_layers=check_positive_int(self.decoder_layers, "decoder_layers", 0),
            epochs=check_positive_int(self.epochs, "epochs", 0), lr=float(self.lr),
            weight_decay=float(self.weight_decay), window_us=check_positive_int(self.window_us, "window_us"),
            crop=check_positive_int(self.crop, "crop"), z_cap=check_positive_int(self.z_cap, "z_cap"),
            samples_per_epoch=check_positive_int(self.samples_per_epoch, "samples_per_epoch"),
            seed=check_random_state(self.random_state), quant=quant,
        )

    def fit(self, X, y=None):
        seqs = check_dataset(X)
        cfg = self._config()
        result = train_encoder(seqs, cfg)
        self.encoder_ = result.encoder
        self.decoder_ = result.decoder
        self.loss_curve_ = list(result.losses)
        self.n_channels_ = result.encoder.channels
        self.sensor_size_ = (seqs[0].width, seqs[0].height)
        self.quantized_ = None
        return self

    def _windows(self, X):
        single = not isinstance(X, (list, tuple))
        seqs = check_dataset(X, allow_empty=True)
        out = []
        for s in seqs:
            t0 = int(s.t[0]) if len(s) else 0
            out.append(tensorize(s, self.z_cap, t0=t0, T=self.window_us))
        return out, single

    def transform(self, X):
        check_is_fitted(self, "encoder_")
        windows, single = self._windows(X)
        reps = []
        for tw in windows:
            if self.quantized_ is not None:
                E = dequantize_representation(q_encode_window(self.quantized_, tw), self.quantized_.state_scale)
            else:
                E = encode_window(self.encoder_, tw)
            reps.append(E.reshape(tw.height, tw.width, -1))
        return reps[0] if single else np.stack(reps)

    def score(self, X, y=None):
        """Negative mean reconstruction loss over the given windows (float model)."""
        check_is_fitted(self, "encoder_")
        windows, _ = self._windows(X)
        losses = [forward_loss(self.encoder_, self.decoder_, tw, LossConfig()) for tw in windows]
        return -math.fsum(losses) / len(losses)

    def quantize(self, bits=8, X=None, act_bits=None):
        """Convert the fitted GRU/MGU encoder to integers, calibrated on ``X`` windows."""
        check_is_fitted(self, "encoder_")
        b = check_bits(bits)
        windows, _ = self._windows(X) if X is not None else ([], True)
        self.quantized_ = quantize_model(self.encoder_, QuantScheme(b, check_bits(act_bits or b, "act_bits")), windows)
        return self.quantized_

    def dequantize(self):
        """Switch ``transform`` back to the float encoder."""
        self.quantized_ = None
        return self
