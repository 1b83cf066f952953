"""Ablation sweeps over cell kind, output size and bit width."""
import csv
import logging
import math
from dataclasses import replace

import numpy as np

from ..exceptions import ConfigurationError
from ..quantize import QuantScheme, dequantize_representation, q_encode_window, quantize_model
from ..rnn_core import decode
from .backprop import LossConfig, masked_mse_loss
from .trainer import evaluate, sample_windows, train_encoder

log = logging.getLogger(__name__)

AXES = ("cell", "size", "output_size", "bits")
FIELDS = ("axis", "value", "seed", "train_loss", "eval_loss")


def quantized_loss(qmodel, decoder, tw, cfg=LossConfig(), denom=None):
    """Loss of the integer encoder followed by the float decoder."""
    E = dequantize_representation(q_encode_window(qmodel, tw), qmodel.state_scale)
    D = decode(decoder, E, tw.Z)
    return masked_mse_loss(tw.values, D, tw.mask, cfg, denom)


def evaluate_quantized(qmodel, decoder, samples, loss=LossConfig()):
    return math.fsum(quantized_loss(qmodel, decoder, s.window, loss, s.denom) for s in samples) / len(samples)


def _config_for(axis, value, cfg, seed):
    if axis == "cell":
        return replace(cfg, cell=str(value), seed=seed)
    if axis in ("size", "output_size"):
        return replace(cfg, dims=(int(value),) * len(cfg.dims), seed=seed)
    if value in (None, "float"):
        return replace(cfg, quant=None, seed=seed)
    b = int(value)
    return replace(cfg, quant=(b, b), seed=seed)


def ablation_sweep(axis, values, dataset, cfg, seeds=(0, 1, 2), eval_data=None,
                   eval_samples=16, eval_seed=1234, csv_path=None, callback=None,
                   finetune_epochs=None, finetune_lr=None):
    """Train one model per (value, seed) and report its held-out loss.

    ``axis`` is "cell" (values are kinds), "size" (every layer gets that
    width) or "bits" (QAT at W/A = value bits, then the converted integer
    encoder is evaluated; "float" trains and evaluates a float baseline).
    Evaluation windows are drawn from ``eval_data`` (default: ``dataset``)
    with ``eval_seed`` and shared by every run. Returns a list of row dicts.

    With ``finetune_epochs`` (bits axis only) each seed first trains one
    float model for ``cfg.epochs``; every value then continues from that
    checkpoint for ``finetune_epochs`` at ``finetune_lr``, the "float" value
    included, so per-seed differences isolate the effect of quantisation.
    """
    if axis not in AXES:
        raise ConfigurationError(f"axis must be one of {AXES}, got {axis!r}")
    held = sample_windows(dataset if eval_data is None else eval_data, eval_samples, cfg,
                          np.random.default_rng(eval_seed))
    if finetune_epochs is not None and axis != "bits":
        raise ConfigurationError("finetune_epochs applies to the bits axis only")
    bases = {}
    if finetune_epochs is not None:
        for seed in seeds:
            base = train_encoder(dataset, replace(cfg, quant=None, seed=seed))
            bases[seed] = (base.encoder, base.decoder)
    rows = []
    for value in values:
        for seed in seeds:
            run_cfg = _config_for(axis, value, cfg, seed)
            if seed in bases:
                run_cfg = replace(run_cfg, epochs=finetune_epochs,
                                  lr=run_cfg.lr if finetune_lr is None else finetune_lr)
                result = train_encoder(dataset, run_cfg, init=bases[seed])
            else:
                result = train_encoder(dataset, run_cfg)
            if axis == "bits" and run_cfg.quant is not None:
                b = run_cfg.quant[0]
                calib = sample_windows(dataset, run_cfg.samples_per_epoch, run_cfg,
                                       np.random.default_rng(seed))
                qmodel = quantize_model(result.encoder, QuantScheme(b, b), [s.window for s in calib])
                eval_loss = evaluate_quantized(qmodel, result.decoder, held, run_cfg.loss)
            else:
                eval_loss = evaluate(result.encoder, result.decoder, held, run_cfg.loss)
            row = {"axis": axis, "value": value, "seed": seed,
                   "train_loss": result.losses[-1] if result.losses else float("nan"),
                   "eval_loss": eval_loss}
            log.info("%s=%s seed=%d eval=%.6g", axis, value, seed, eval_loss)
            rows.append(row)
            if callback is not None:
                callback(row)
    if csv_path is not None:
        write_sweep_csv(rows, csv_path)
    return rows


def write_sweep_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in FIELDS})


def summarize(rows):
    """{value: (mean, std)} of eval_loss across seeds, in first-seen order."""
    by = {}
    for r in rows:
        by.setdefault(r["value"], []).append(r["eval_loss"])
    return {k: (float(np.mean(v)), float(np.std(v))) for k, v in by.items()}
