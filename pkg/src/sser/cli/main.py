"""``sser`` command line: gen, train, quantize, encode, simulate, bench, render.

Errors print one line ``error <CODE>: <message>`` on stderr and exit with
status 2 (usage) or 1 (everything else).
"""
import argparse
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from ..engine import EngineConfig, StreamingEncoder, load_representation, save_representation, to_real
from ..event_io import SceneConfig, generate_synthetic, read_events, slice_window, tensorize, write_events
from ..event_io.formats import guess_format
from ..exceptions import ConfigurationError, SSERError, ValidationError
from ..hwsim import PipelineConfig, estimate_resources, schedule
from ..quantize import QuantScheme, load_quantized, quantize_model, save_quantized
from ..rnn_core import init_decoder, init_encoder, load_model
from ..rnn_core.serialization import QUANT_VERSION, peek_version
from ..train import LossConfig, TrainConfig, evaluate, evaluate_quantized, sample_windows, train_encoder
from .config import config_argv, load_config
from .manifest import ManifestRecorder, manifest_path
from .render import render_channels

log = logging.getLogger("sser")

OUT_ENV = "SSER_OUT_DIR"
CONFIG_ENV = "SSER_CONFIG"


class UsageError(SSERError):
    code = "E_USAGE"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ------------------------------------------------------------------ helpers


def _int_list(text):
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _bits_list(text):
    """``8``, ``2,4,8`` or an inclusive range ``2..8`` (step 2 via ``2..8:2``)."""
    text = str(text)
    if ".." in text:
        rng, _, step = text.partition(":")
        lo, hi = (int(v) for v in rng.split(".."))
        vals = list(range(lo, hi + 1, int(step) if step else 1))
    else:
        vals = _int_list(text)
    for b in vals:
        if not 2 <= b <= 12:
            raise argparse.ArgumentTypeError(f"bits must lie in 2..12, got {b}")
    return vals


def _out_path(path):
    """Relative outputs land in $SSER_OUT_DIR when it is set."""
    base = os.environ.get(OUT_ENV)
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def _read(path, width=None, height=None, fmt=None):
    return read_events(path, fmt or guess_format(path), width, height)


def _read_many(paths, width=None, height=None):
    return [_read(p, width, height) for p in paths]


def _load_any_model(path):
    """(kind, model, decoder): kind is "float" or "quant"."""
    if peek_version(path) == QUANT_VERSION:
        return "quant", load_quantized(path), None
    enc, dec = load_model(path)
    return "float", enc, dec


def _digest(arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


# ------------------------------------------------------------------ commands


def cmd_gen(args):
    cfg = SceneConfig(width=args.w, height=args.h, threshold=args.threshold, pattern=args.pattern,
                      duration=int(round(args.dur_ms * 1000)), seed=args.seed)
    seq = generate_synthetic(cfg)
    out = _out_path(args.out)
    write_events(seq, out, args.format or guess_format(out))
    rec = ManifestRecorder("gen", args)
    rec.seed(args.seed)
    rec.output(out)
    rec.write(manifest_path(out))
    print(json.dumps({"out": out, "events": len(seq)}))
    return 0


def cmd_train(args):
    data = _read_many(args.data, args.w, args.h)
    quant = None if args.qat_bits is None else (args.qat_bits, args.qat_bits)
    cfg = TrainConfig(cell=args.cell, dims=tuple(args.dims), decoder_layers=args.decoder_layers,
                      epochs=args.epochs, lr=args.lr, weight_decay=args.wd,
                      window_us=int(round(args.window_ms * 1000)), crop=args.crop, z_cap=args.z_cap,
                      samples_per_epoch=args.samples, seed=args.seed, quant=quant,
                      loss=LossConfig(args.alpha, args.beta), gated_bias=not args.plain_bias)
    result = train_encoder(data, cfg, callback=lambda e, l: log.info("epoch %d loss %.6g", e, l))
    out = _out_path(args.out)
    loss_csv = _out_path(args.loss_csv) if args.loss_csv else f"{out}.loss.csv"
    result.save(out, loss_csv)
    rec = ManifestRecorder("train", args)
    rec.seed(args.seed)
    for p in args.data:
        rec.input(p)
    for p in (out, loss_csv, f"{out}.opt.npz"):
        rec.output(p)
    rec.write(manifest_path(out))
    print(json.dumps({"out": out, "loss_csv": loss_csv, "final_loss": result.losses[-1] if result.losses else None}))
    return 0


def _calibration(data, args, cfg_crop):
    cfg = TrainConfig(window_us=int(round(args.window_ms * 1000)), crop=cfg_crop, z_cap=args.z_cap,
                      samples_per_epoch=args.samples, seed=args.seed)
    return sample_windows(data, args.samples, cfg, np.random.default_rng(args.seed))


def cmd_quantize(args):
    kind, enc, dec = _load_any_model(args.model)
    if kind != "float":
        raise ConfigurationError("quantize expects a float model file")
    data = _read_many(args.data, args.w, args.h)
    crop = min(args.crop, min(min(s.width, s.height) for s in data))
    samples = _calibration(data, args, crop)
    out = _out_path(args.out)
    rec = ManifestRecorder("quantize", args)
    rec.seed(args.seed)
    rec.input(args.model)
    for p in args.data:
        rec.input(p)
    if len(args.bits) == 1:
        b = args.bits[0]
        ab = args.act_bits or b
        q = quantize_model(enc, QuantScheme(b, ab, power_of_two=args.pow2), [s.window for s in samples])
        for w in q.warnings:
            log.warning("%s", w)
        save_quantized(out, q)
        rec.output(out)
        rec.write(manifest_path(out))
        print(json.dumps({"out": out, "weight_bits": b, "act_bits": ab}))
        return 0
    # sweep: post-training quantisation of the same model at every width
    if dec is None:
        raise ConfigurationError("a bit sweep needs a model file with its decoder")
    rows = [("float", evaluate(enc, dec, samples))]
    for b in args.bits:
        q = quantize_model(enc, QuantScheme(b, args.act_bits or b, power_of_two=args.pow2),
                           [s.window for s in samples])
        rows.append((b, evaluate_quantized(q, dec, samples)))
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("bits,loss\n")
        for b, l in rows:
            fh.write(f"{b},{l!r}\n")
    rec.output(out)
    rec.write(manifest_path(out))
    print(json.dumps({"out": out, "sweep": [[b, l] for b, l in rows]}))
    return 0


def _encoder_for(args, data):
    kind, model, _ = _load_any_model(args.model)
    if args.mode == "float":
        return model.dequantized_encoder() if kind == "quant" else model
    if kind == "quant":
        return model
    if args.bits is None:
        raise ConfigurationError("--mode quant with a float model needs --bits")
    T = int(round(args.window_ms * 1000))
    if len(data) == 0:
        calib = [tensorize(data, 1, t0=0, T=T)]
    else:
        t0 = int(data.t[0])
        calib = [tensorize(slice_window(data, t0, T), args.z_cap, t0=t0, T=T)]
    return quantize_model(model, QuantScheme(args.bits, args.bits), calib)


def cmd_encode(args):
    data = _read(args.input, args.w, args.h)
    model = _encoder_for(args, data)
    cfg = EngineConfig(data.width, data.height, int(round(args.window_ms * 1000)),
                       reset=args.reset, workers=args.workers)
    engine = StreamingEncoder(model, cfg)
    emissions = engine.run_stream(data)
    out_dir = _out_path(args.out_dir)
    os.makedirs(out_dir, exist_ok=True)
    rec = ManifestRecorder("encode", args)
    rec.input(args.input)
    rec.input(args.model)
    paths = []
    for k, t0, rep in emissions:
        p = os.path.join(out_dir, f"win{k:05d}.ssrp")
        if engine.quantized:
            save_representation(p, rep, model.state_scale)
        else:
            save_representation(p, rep.astype(np.float32))
        rec.output(p)
        paths.append(p)
    rec.write(manifest_path(out_dir, directory=True))
    print(json.dumps({"out_dir": out_dir, "emissions": len(paths), "events": engine.processed,
                      "rejected": dict(engine.rejected),
                      "state_memory_bits": engine.state.memory_bits()}))
    return 0


def _simulate_trace(args):
    if args.input is None:
        n = args.events
        return np.arange(n, dtype=np.int64), (np.arange(n) if args.event_rate is None else None)
    if guess_format(args.input) == "csv":
        with open(args.input, encoding="ascii") as fh:
            header = fh.readline().strip().split(",")
        if "arrival" in header:
            tab = np.loadtxt(args.input, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
            cols = {name: tab[:, i] for i, name in enumerate(header)}
            W = args.w or int(cols["x"].max()) + 1
            return cols["y"] * W + cols["x"], cols["arrival"]
    seq = _read(args.input, args.w, args.h)
    return seq, None


def cmd_simulate(args):
    cfg = PipelineConfig(clock_hz=int(round(args.clock_mhz * 1_000_000)), pipeline_depth=args.depth,
                         hazard_window=args.hazard, kind=args.kind, dims=tuple(args.dims),
                         policy=args.policy)
    trace, arrivals = _simulate_trace(args)
    report = schedule(trace, cfg, arrivals=arrivals, event_rate=args.event_rate)
    d = report.to_dict(per_event=args.per_event)
    res = estimate_resources(cfg.dims, cfg.kind, args.precision, args.sensor_w, args.sensor_h)
    d["resources"] = res.to_dict(reported=True)
    text = json.dumps(d, indent=2)
    if args.out:
        out = _out_path(args.out)
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        rec = ManifestRecorder("simulate", args)
        if args.input:
            rec.input(args.input)
        rec.output(out)
        rec.write(manifest_path(out))
    print(text)
    log.info("%s", report.summary())
    return 0


def cmd_bench(args):
    seq = generate_synthetic(SceneConfig(width=args.w, height=args.h, pattern=args.pattern,
                                         duration=int(round(args.dur_ms * 1000)), seed=args.seed))
    if args.model:
        kind, enc, _ = _load_any_model(args.model)
        if kind == "quant":
            enc = enc.dequantized_encoder()
    else:
        enc = init_encoder("gru", args.dims, np.random.default_rng(args.seed))
    T = int(round(args.window_ms * 1000))
    t0 = int(seq.t[0]) if len(seq) else 0
    calib = [tensorize(slice_window(seq, t0, T), 100, t0=t0, T=T)]
    models = {"float": enc}
    if enc.kind in ("gru", "mgu"):
        models["quant"] = quantize_model(enc, QuantScheme(args.bits, args.bits), calib)
    results = []
    for mode, model in models.items():
        for workers in sorted({1, args.workers}):
            engine = StreamingEncoder(model, EngineConfig(seq.width, seq.height, T, workers=workers))
            start = time.perf_counter()
            emissions = engine.run_stream(seq)
            dt = time.perf_counter() - start
            n = max(engine.processed, 1)
            results.append({
                "mode": mode, "workers": workers, "events": engine.processed,
                "seconds": dt, "events_per_s": n / dt if dt > 0 else None,
                "ns_per_event": dt * 1e9 / n,
                "digest": _digest(rep for _, _, rep in emissions),
            })
    by_mode = {}
    for r in results:
        by_mode.setdefault(r["mode"], set()).add(r["digest"])
    report = {"events": len(seq), "results": results,
              "workers_agree": all(len(v) == 1 for v in by_mode.values())}
    text = json.dumps(report, indent=2)
    if args.out:
        out = _out_path(args.out)
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        rec = ManifestRecorder("bench", args)
        rec.seed(args.seed)
        rec.output(out)
        rec.write(manifest_path(out))
    print(text)
    return 0 if report["workers_agree"] else 1


def cmd_render(args):
    rep, mode, scale = load_representation(args.input)
    out_dir = _out_path(args.out_dir)
    paths = render_channels(to_real(rep, mode, scale), out_dir, args.palette)
    rec = ManifestRecorder("render", args)
    rec.input(args.input)
    for p in paths:
        rec.output(p)
    rec.write(manifest_path(out_dir, directory=True))
    print(json.dumps({"out_dir": out_dir, "images": len(paths)}))
    return 0


# ------------------------------------------------------------------ parser


def build_parser():
    p = _Parser(prog="sser", description=__doc__.splitlines()[0])
    p.add_argument("--config", help=f"key = value config file (default: ${CONFIG_ENV})")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    p.set_defaults(commands=sub.choices)

    g = sub.add_parser("gen", help="generate a synthetic event file")
    g.add_argument("--pattern", default="bar", choices=("bar", "dot", "mixed", "static"))
    g.add_argument("--w", type=int, default=64)
    g.add_argument("--h", type=int, default=64)
    g.add_argument("--dur-ms", type=float, default=200.0)
    g.add_argument("--threshold", type=float, default=0.2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--format", choices=("evt", "csv"))
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen, required=("out",))

    t = sub.add_parser("train", help="train an encoder/decoder pair")
    t.add_argument("--data", nargs="+")
    t.add_argument("--w", type=int, help="sensor width (CSV input)")
    t.add_argument("--h", type=int, help="sensor height (CSV input)")
    t.add_argument("--cell", default="gru", choices=("rnn", "lstm", "gru", "mgu"))
    t.add_argument("--dims", type=_int_list, default=[12, 12, 12])
    t.add_argument("--decoder-layers", type=int, default=3)
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--wd", type=float, default=1e-4)
    t.add_argument("--crop", type=int, default=64)
    t.add_argument("--z-cap", type=int, default=100)
    t.add_argument("--window-ms", type=float, default=200.0)
    t.add_argument("--samples", type=int, default=16, help="windows per epoch")
    t.add_argument("--alpha", type=float, default=1.0)
    t.add_argument("--beta", type=float, default=0.1)
    t.add_argument("--qat-bits", type=int, help="train with fake quantisation at this width")
    t.add_argument("--plain-bias", action="store_true",
                   help="GRU/MGU candidate bias outside the gated term")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out")
    t.add_argument("--loss-csv")
    t.set_defaults(func=cmd_train, required=("data", "out"))

    q = sub.add_parser("quantize", help="convert a float model to integer form (or sweep widths)")
    q.add_argument("--model")
    q.add_argument("--data", nargs="+", help="event files for calibration / sweep evaluation")
    q.add_argument("--w", type=int)
    q.add_argument("--h", type=int)
    q.add_argument("--bits", type=_bits_list, default=[8], help="8, 2,4,8 or 2..8:2")
    q.add_argument("--act-bits", type=int)
    q.add_argument("--pow2", action="store_true", help="power-of-two weight scales")
    q.add_argument("--window-ms", type=float, default=200.0)
    q.add_argument("--crop", type=int, default=64)
    q.add_argument("--z-cap", type=int, default=100)
    q.add_argument("--samples", type=int, default=16)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out")
    q.set_defaults(func=cmd_quantize, required=("model", "data", "out"))

    e = sub.add_parser("encode", help="stream events through the encoder")
    e.add_argument("--model")
    e.add_argument("--input")
    e.add_argument("--w", type=int)
    e.add_argument("--h", type=int)
    e.add_argument("--mode", default="float", choices=("float", "quant"))
    e.add_argument("--bits", type=int, help="on-the-fly quantisation width for --mode quant")
    e.add_argument("--window-ms", type=float, default=200.0)
    e.add_argument("--reset", default="zero_each_window", choices=("zero_each_window", "persist"))
    e.add_argument("--z-cap", type=int, default=100)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--out-dir")
    e.set_defaults(func=cmd_encode, required=("model", "input", "out_dir"))

    s = sub.add_parser("simulate", help="cycle-level pipeline report")
    s.add_argument("--input", help="EVT-bin trace, or CSV with an 'arrival' cycle column")
    s.add_argument("--w", type=int)
    s.add_argument("--h", type=int)
    s.add_argument("--events", type=int, default=1, help="synthetic distinct-pixel events without --input")
    s.add_argument("--event-rate", type=float, help="arrivals at a constant rate (events/s)")
    s.add_argument("--clock-mhz", type=float, default=100.0)
    s.add_argument("--depth", type=int, default=16)
    s.add_argument("--hazard", type=int)
    s.add_argument("--kind", default="gru", choices=("gru", "mgu"))
    s.add_argument("--dims", type=_int_list, default=[12])
    s.add_argument("--precision", type=int, default=8)
    s.add_argument("--sensor-w", type=int, default=128)
    s.add_argument("--sensor-h", type=int, default=128)
    s.add_argument("--policy", default="stall", choices=("stall", "reject"))
    s.add_argument("--per-event", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate, required=())

    b = sub.add_parser("bench", help="engine throughput on a generated stream")
    b.add_argument("--model")
    b.add_argument("--pattern", default="mixed", choices=("bar", "dot", "mixed"))
    b.add_argument("--w", type=int, default=64)
    b.add_argument("--h", type=int, default=64)
    b.add_argument("--dur-ms", type=float, default=50.0)
    b.add_argument("--window-ms", type=float, default=50.0)
    b.add_argument("--dims", type=_int_list, default=[12, 12, 12])
    b.add_argument("--bits", type=int, default=8)
    b.add_argument("--workers", type=int, default=4)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench, required=())

    r = sub.add_parser("render", help="per-channel images of an SSRP file")
    r.add_argument("--input")
    r.add_argument("--out-dir")
    r.add_argument("--palette", default="gray", choices=("gray", "diverging"))
    r.set_defaults(func=cmd_render, required=("input", "out_dir"))
    return p


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("missing command")
    cfg_path = args.config or os.environ.get(CONFIG_ENV)
    if cfg_path:
        sub = args.commands[args.command]
        extra = config_argv(load_config(cfg_path), args.command, sub)
        if extra:
            i = argv.index(args.command)
            args = parser.parse_args(argv[:i + 1] + extra + argv[i + 1:])
    for name in args.required:
        if getattr(args, name) is None:
            raise UsageError(f"{args.command}: --{name.replace('_', '-')} is required")
    return args


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _parse(parser, argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"error {exc.code}: {exc}", file=sys.stderr)
        return 2
    except SSERError as exc:
        print(f"error {exc.code}: {exc}".replace("\n", " "), file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error E_IO: {exc}".replace("\n", " "), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
