"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 I/O failure, 4 validation or
configuration failure.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import ablation, container, datapipe, swin
from .container import atomic_write
from .errors import RadarcastError, ValidationError
from .upsample import CduWeights
from .verify import Evaluator, ThresholdSet

log = logging.getLogger("radarcast")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INVALID = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--config", help="JSON file of option values; command-line flags take precedence")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--profile", help="dataset profile: kma, kma-6h, sevir, meteonet, toy")


def build_parser():
    parser = _Parser(prog="radarcast", description="Radar nowcasting kernels, preprocessing and verification.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", help="normalize, subsample and crop raw frames into an XT5 stack")
    _common(p)
    p.add_argument("--inputs", nargs="+", help="uint16 frame files (each with a .json sidecar)")
    p.add_argument("--factor", type=int, help="subsampling factor (default from profile)")
    p.add_argument("--crop", type=int, nargs=2, metavar=("ROWS", "COLS"), help="crop size (default from profile)")
    p.add_argument("--out", help="output XT5 stack")

    p = sub.add_parser("windows", help="build the gap-free sequence index")
    _common(p)
    p.add_argument("--inputs", nargs="+", help="frame files or sidecars supplying timestamps")
    p.add_argument("--stack", help="XT5 stack whose metadata lists timestamps")
    p.add_argument("--stride", type=int, help="window advance in frames (default 1)")
    p.add_argument("--out", help="output JSON-lines index")

    p = sub.add_parser("infer", help="run the forecast model")
    _common(p)
    p.add_argument("--preset", help="model preset: " + ", ".join(swin.PRESETS))
    p.add_argument("--weights", help="XT5 weight file (default: seeded initialization)")
    p.add_argument("--input", help="XT5 file holding a (B, T, H, W, 1) tensor")
    p.add_argument("--out", help="output XT5 file")
    p.add_argument("--threads", type=int, help="worker threads over the batch axis (default 1)")
    p.add_argument("--embed-dim", type=int, help="override the preset channel width")
    p.add_argument("--heads", type=int, nargs="+", help="override per-stage head counts")

    p = sub.add_parser("eval", help="score a forecast against observations")
    _common(p)
    p.add_argument("--pred", help="XT5 forecast")
    p.add_argument("--obs", help="XT5 observation")
    p.add_argument("--mask", help="8-bit PGM mask, nonzero = evaluate")
    p.add_argument("--thresholds", type=float, nargs="+", help="override profile thresholds")
    p.add_argument("--pools", type=int, nargs="+", help="pool sizes (default 1 4 16)")
    p.add_argument("--neighbors", type=int, nargs="+", help="FSS neighbourhood sizes (default 15)")
    p.add_argument("--rhd-region", type=int, help="RHD block size (default 15)")
    p.add_argument("--hss-form", choices=("standard", "printed"), help="HSS formula (default standard)")
    p.add_argument("--report", help="report path stem; writes <stem>.json and <stem>.csv")
    p.add_argument("--threads", type=int, help="worker threads over samples (default 1)")

    p = sub.add_parser("ablate-upsample", help="compare upsamplers on a reconstruction task")
    _common(p)
    p.add_argument("--mode", nargs="+", choices=ablation.MODES, help="modes to run (default all)")
    p.add_argument("--target", help="XT5 target volume")
    p.add_argument("--input", help="XT5 reduced input (default: derived from the target)")
    p.add_argument("--scale", type=int, nargs=3, help="scale factor (default 1 2 2)")
    p.add_argument("--cdu-weights", help="XT5 file with cdu.0.* weights")
    p.add_argument("--report", help="report path stem; writes <stem>.json and <stem>.csv")

    p = sub.add_parser("render", help="write one frame as an 8-bit PGM")
    _common(p)
    p.add_argument("--tensor", help="XT5 file")
    p.add_argument("--frame", type=int, help="time index")
    p.add_argument("--batch", type=int, help="batch index (default 0)")
    p.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"), help="value range mapped to 0..255")
    p.add_argument("--out", help="output PGM")

    p = sub.add_parser("info", help="parameter count and FLOP estimate of a preset")
    _common(p)
    p.add_argument("--preset", help="model preset")
    p.add_argument("--batch", type=int, help="batch size for the FLOP estimate (default 1)")
    p.add_argument("--embed-dim", type=int, help="override the preset channel width")
    return parser


DEFAULTS = {
    "seed": 0, "stride": 1, "threads": 1, "pools": [1, 4, 16], "neighbors": [15], "rhd_region": 15,
    "hss_form": "standard", "scale": [1, 2, 2], "batch": 0, "mode": list(ablation.MODES),
}


def resolve(args):
    """Merge command-line flags over the --config file over built-in defaults."""
    opts = {k: v for k, v in vars(args).items() if k not in ("config",)}
    file_opts = {}
    if args.config:
        with open(args.config) as f:
            file_opts = json.load(f)
        unknown = sorted(set(file_opts) - set(opts) - {"model"})
        if unknown:
            raise ValidationError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    for k in list(opts):
        if opts[k] is None:
            opts[k] = file_opts.get(k, DEFAULTS.get(k))
    opts["model"] = file_opts.get("model", {})
    return argparse.Namespace(**opts)


def _need(opts, *names):
    missing = [n for n in names if getattr(opts, n) in (None, [])]
    if missing:
        raise ValidationError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _thresholds(opts, profile):
    if getattr(opts, "thresholds", None):
        return ThresholdSet(tuple(opts.thresholds), profile.thresholds.unit if profile else "pixel")
    if profile is None:
        raise ValidationError("either --profile or --thresholds is required")
    return profile.thresholds


def read_tensor(path, name=None):
    tensors, meta = container.load(path)
    if name and name in tensors:
        return tensors[name], meta
    if len(tensors) != 1:
        raise ValidationError(f"{path}: expected one tensor, found {sorted(tensors)}")
    return next(iter(tensors.values())), meta


def _model_config(opts):
    preset = opts.preset
    if preset is None and opts.profile:
        preset = datapipe.get_profile(opts.profile).preset
    if preset is None:
        raise ValidationError("missing required option: --preset (or --profile)")
    kw = dict(opts.model)
    if getattr(opts, "embed_dim", None):
        kw["embed_dim"] = opts.embed_dim
    if getattr(opts, "heads", None):
        kw["num_heads"] = tuple(opts.heads)
    return swin.preset(preset, **kw)


def _write_report(stem, payload_json, payload_csv):
    stem = stem[:-5] if stem.endswith(".json") else stem
    atomic_write(stem + ".json", payload_json.encode())
    atomic_write(stem + ".csv", payload_csv.encode())


# subcommands --------------------------------------------------------------

def run_preprocess(opts):
    _need(opts, "inputs", "out", "profile")
    profile = datapipe.get_profile(opts.profile)
    grids = sorted((datapipe.read_frame(p) for p in opts.inputs), key=lambda g: g.timestamp)
    out = [datapipe.preprocess_grid(g, profile, opts.factor, opts.crop) for g in grids]
    stack = np.stack([g.data for g in out])[None, ..., None].astype(np.float32)
    meta = {"profile": profile.name, "timestamps": [g.timestamp for g in out], "unit": out[0].unit,
            "resolution_km": out[0].resolution_km}
    container.save(opts.out, {"frames": stack}, meta)
    log.info("wrote %s frames of %s to %s", len(out), out[0].data.shape, opts.out)
    return stack


def run_windows(opts):
    _need(opts, "out", "profile")
    profile = datapipe.get_profile(opts.profile)
    if opts.stack:
        _, meta = container.load(opts.stack)
        stamps = (meta or {}).get("timestamps")
        if stamps is None:
            raise ValidationError(f"{opts.stack}: no timestamps in metadata")
    elif opts.inputs:
        stamps = []
        for p in opts.inputs:
            with open(datapipe.sidecar_path(p)) as f:
                stamps.append(datapipe.parse_time(json.load(f)["timestamp"]))
    else:
        raise ValidationError("windows needs --stack or --inputs")
    stamps = sorted(stamps)
    samples = datapipe.build_windows(stamps, profile, opts.stride)
    datapipe.write_index(opts.out, samples)
    summary = {"windows": len(samples), "frames": len(stamps)}
    if profile.split_years:
        summary.update({k: len(v) for k, v in datapipe.time_split(samples, profile).items()})
    print(json.dumps(summary, sort_keys=True))
    return samples


def forecast(x, cfg, store, threads=1):
    """Model forward, optionally splitting the batch over worker threads."""
    threads = max(1, int(threads))
    if threads == 1 or x.shape[0] == 1:
        return swin.model_forward(x, cfg, store)
    chunks = np.array_split(np.arange(x.shape[0]), min(threads, x.shape[0]))
    with ThreadPoolExecutor(threads) as pool:
        parts = list(pool.map(lambda idx: swin.model_forward(x[idx], cfg, store), chunks))
    return np.concatenate(parts, axis=0)


def run_infer(opts):
    _need(opts, "input", "out")
    cfg = _model_config(opts)
    x, _ = read_tensor(opts.input, "frames")
    if x.ndim != 5 or x.shape[1:] != (cfg.in_frames, cfg.height, cfg.width, cfg.in_chans):
        raise ValidationError(
            f"input shape {x.shape} does not match preset {cfg.name!r}: "
            f"(B, {cfg.in_frames}, {cfg.height}, {cfg.width}, {cfg.in_chans})"
        )
    store = swin.load_weights(opts.weights, cfg) if opts.weights else swin.init_weights(cfg, opts.seed)
    log.info("preset %s: %d parameters, %.3f GFLOPs per sample", cfg.name, swin.count_params(cfg),
             swin.estimate_flops(cfg) / 1e9)
    y = forecast(x, cfg, store, opts.threads)
    meta = {"preset": cfg.name, "weights": store.provenance, "weights_sha256": store.checksum(),
            "params": swin.count_params(cfg), "flops": swin.estimate_flops(cfg, x.shape[0])}
    container.save(opts.out, {"forecast": y}, meta)
    return y


def run_eval(opts):
    _need(opts, "pred", "obs", "report")
    profile = datapipe.get_profile(opts.profile) if opts.profile else None
    thresholds = _thresholds(opts, profile)
    ev = Evaluator(thresholds, opts.pools, opts.neighbors, opts.rhd_region, opts.hss_form)
    pred, _ = read_tensor(opts.pred, "forecast")
    obs, _ = read_tensor(opts.obs, "frames")
    if pred.shape != obs.shape:
        raise ValidationError(f"forecast shape {pred.shape} differs from observation shape {obs.shape}")
    mask = datapipe.read_mask(opts.mask) if opts.mask else None
    if profile is not None:
        pred, obs = profile.to_eval_units(pred), profile.to_eval_units(obs)
    shards = [slice(i, i + 1) for i in range(pred.shape[0])]
    work = lambda sl: Evaluator(thresholds, opts.pools, opts.neighbors, opts.rhd_region,  # noqa: E731
                                opts.hss_form).update(pred[sl], obs[sl], mask)
    if opts.threads > 1:
        with ThreadPoolExecutor(opts.threads) as pool:
            parts = list(pool.map(work, shards))
    else:
        parts = [work(sl) for sl in shards]
    for part in parts:
        ev = ev + part
    report = ev.report({"profile": profile.name if profile else None, "mask": bool(mask is not None)})
    _write_report(opts.report, report.to_json(), report.to_csv())
    return report


def run_ablate(opts):
    _need(opts, "target", "report")
    profile = datapipe.get_profile(opts.profile) if opts.profile else None
    thresholds = _thresholds(opts, profile) if profile else datapipe.PROFILES["toy"].thresholds
    target, _ = read_tensor(opts.target, "frames")
    low = read_tensor(opts.input, "frames")[0] if opts.input else None
    cdu_w = None
    if opts.cdu_weights:
        tensors, _ = container.load(opts.cdu_weights)
        cdu_w = CduWeights.from_dict(tensors, "cdu.0")
    rows = ablation.ablate(target, opts.mode, tuple(opts.scale), tuple(thresholds), opts.seed, cdu_w, low)
    payload = json.dumps({"scale": list(opts.scale), "seed": opts.seed, "rows": rows}, sort_keys=True, indent=2)
    lines = ["mode,mse,mae,csi_m"] + [
        f"{r['mode']},{r['mse']!r},{r['mae']!r},{'' if r['csi_m'] is None else repr(r['csi_m'])}" for r in rows
    ]
    _write_report(opts.report, payload + "\n", "\n".join(lines) + "\n")
    return rows


def render_frame(frame, lo, hi):
    """Linear map of [lo, hi] onto 0..255 with clamping."""
    if hi <= lo:
        raise ValidationError(f"empty render range [{lo}, {hi}]")
    scaled = (np.asarray(frame, dtype=np.float64) - lo) / (hi - lo) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def run_render(opts):
    _need(opts, "tensor", "frame", "out")
    x, _ = read_tensor(opts.tensor)
    if x.ndim != 5:
        raise ValidationError(f"expected a (B, T, H, W, C) tensor, got {x.shape}")
    if not (0 <= opts.batch < x.shape[0]) or not (0 <= opts.frame < x.shape[1]):
        raise ValidationError(f"frame ({opts.batch}, {opts.frame}) out of range for shape {x.shape}")
    if opts.range:
        lo, hi = opts.range
    elif opts.profile:
        lo, hi = datapipe.get_profile(opts.profile).value_range
    else:
        raise ValidationError("render needs --range or --profile")
    img = render_frame(x[opts.batch, opts.frame, :, :, 0], lo, hi)
    datapipe.write_pgm(opts.out, img)
    return img


def run_info(opts):
    cfg = _model_config(opts)
    batch = opts.batch or 1
    info = {"preset": cfg.name, "params": swin.count_params(cfg), "flops": swin.estimate_flops(cfg, batch),
            "batch": batch, "input": [batch, cfg.in_frames, cfg.height, cfg.width, cfg.in_chans],
            "output": [batch, cfg.out_frames, cfg.height, cfg.width, cfg.in_chans], "config": cfg.to_json()}
    print(json.dumps(info, sort_keys=True))
    return info


COMMANDS = {
    "preprocess": run_preprocess, "windows": run_windows, "infer": run_infer, "eval": run_eval,
    "ablate-upsample": run_ablate, "render": run_render, "info": run_info,
}


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        opts = resolve(args)
        if opts.profile:
            datapipe.get_profile(opts.profile)
        COMMANDS[args.command](opts)
    except (OSError, EOFError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (RadarcastError, json.JSONDecodeError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
