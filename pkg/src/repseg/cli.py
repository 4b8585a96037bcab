"""Command-line interface: parse, eval, compare, synth, report.

Exit codes: 0 success, 2 usage error, 3 data or validation error.
Every command writes a JSON run manifest next to its primary output.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path
from typing import Any, Optional

from . import __version__
from .errors import RepsegError, ValidationError
from .evaluation import compare_groups, duration_stats, group_means, mann_whitney_u, match_and_score
from .io import (fmt, load_frame_series, load_parsing, load_signal, sniff_kind, write_frame_series,
                 write_parsing, write_signal)
from .landmark import TASK_CUTOFFS, LOWER_LIP_IDX, UPPER_LIP_IDX, MinimaConfig, parse_landmark, \
    parse_landmark_signal
from .report import write_report
from .synth import synth_generate, synth_landmarks
from .tsm import TsmConfig, stride_search
from .types import RunManifest, SynthSpec

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3

LANDMARK_DEFAULTS = {
    "cutoff_norm": 0.03,
    "order": 3,
    "upper_idx": UPPER_LIP_IDX,
    "lower_idx": LOWER_LIP_IDX,
    **dataclasses.asdict(MinimaConfig()),
}
TSM_DEFAULTS = dataclasses.asdict(TsmConfig())
SYNTH_DEFAULTS = {k: v for k, v in dataclasses.asdict(SynthSpec()).items() if k not in ("seed", "fps")}
SYNTH_DEFAULTS["landmark_scale"] = 30.0
ENGINE_DEFAULTS = {"landmark": LANDMARK_DEFAULTS, "tsm": TSM_DEFAULTS}


class UsageError(Exception):
    pass


# -- number formatting ----------------------------------------------------------

def _num(x):
    """Round floats to 9 significant digits for JSON output."""
    if isinstance(x, bool) or x is None:
        return x
    if isinstance(x, int):
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            return None
        if x.is_integer() and abs(x) < 1e15:
            return x
        return float(f"{x:.9g}")
    if isinstance(x, dict):
        return {k: _num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    return x


def _dump(obj, path: Optional[Path]) -> str:
    text = json.dumps(_num(obj), indent=2) + "\n"
    if path is not None:
        path.write_text(text)
    return text


def p_table(p: float) -> str:
    """p-value in the compact scientific form 1.83e-4."""
    if p >= 0.001:
        return f"{p:.3g}"
    mant, exp = f"{p:.2e}".split("e")
    return f"{mant}e{int(exp)}"


# -- configuration --------------------------------------------------------------

def _parse_value(text: str):
    t = text.strip().strip('"').strip("'")
    if t.lower() in ("none", "null", ""):
        return None
    if t.startswith("[") and t.endswith("]"):
        t = t[1:-1]
    if "," in t:
        return tuple(_parse_value(p) for p in t.split(",") if p.strip())
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def load_config_file(path) -> dict:
    """key = value lines (``#`` comments), or a JSON run manifest's ``config``."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
        cfg = data.get("config", data)
        if not isinstance(cfg, dict):
            raise ValidationError(f"{path}: config must be an object")
        return {k.replace("-", "_"): tuple(v) if isinstance(v, list) else v for k, v in cfg.items()}
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]") and "=" not in line):
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{n}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = _parse_value(value)
    return out


def resolve_config(defaults: dict, file_cfg: dict, overrides: dict, extra_keys=()) -> dict:
    """defaults < config file < command-line flags; unknown keys are errors."""
    allowed = set(defaults) | set(extra_keys)
    unknown = sorted(set(file_cfg) - allowed)
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
    cfg = dict(defaults)
    cfg.update({k: v for k, v in file_cfg.items() if k in defaults})
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if isinstance(cfg.get("strides"), (int, float)):
        cfg["strides"] = (int(cfg["strides"]),)
    if cfg.get("strides") is not None and not isinstance(cfg["strides"], tuple):
        cfg["strides"] = tuple(cfg["strides"])
    return cfg


def _strides(text: str) -> tuple:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"strides must be comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("strides must not be empty")
    return vals


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _write_manifest(path: Path, manifest: RunManifest, extra: Optional[dict] = None) -> None:
    body = dataclasses.asdict(manifest)
    body["inputs"] = list(manifest.inputs)
    if extra:
        body.update(extra)
    _dump(body, path)


# -- argument parser ------------------------------------------------------------

def _flag(p, name: str, **kw):
    """Register --name-with-dashes and --name_with_underscores for one field."""
    dashed = "--" + name.replace("_", "-")
    flags = [dashed] if "_" not in name else [dashed, "--" + name]
    p.add_argument(*flags, dest=name, default=None, **kw)


def _common(p, fps_required=False):
    p.add_argument("--fps", type=float, default=None, help="frame rate in Hz")
    p.add_argument("--seed", type=int, default=None, help="random seed")
    p.add_argument("--config", default=None, help="key=value config file or JSON run manifest")
    p.add_argument("-o", "--out", default=None, help="output path")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="repseg", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"repseg {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="segment a landmark or signal CSV into repetitions")
    _common(p)
    p.add_argument("input", help="landmark CSV (frame,x0,y0,...) or signal CSV (frame,value)")
    p.add_argument("--engine", choices=("landmark", "tsm"), default="landmark")
    p.add_argument("--task", choices=sorted(TASK_CUTOFFS), default=None,
                   help="preset cutoff for the landmark engine")
    p.add_argument("--manifest", default=None, help="manifest path (default: OUT.manifest.json)")
    _flag(p, "cutoff_norm", type=float, help="low-pass cutoff as a fraction of Nyquist")
    p.add_argument("--cutoff", dest="cutoff_norm", type=float, default=None, help=argparse.SUPPRESS)
    _flag(p, "order", type=int)
    _flag(p, "upper_idx", type=int)
    _flag(p, "lower_idx", type=int)
    _flag(p, "min_separation_s", type=float)
    _flag(p, "min_prominence_frac", type=float)
    _flag(p, "strides", type=_strides, help="comma-separated candidate strides")
    _flag(p, "window", type=int)
    _flag(p, "tau_sm", type=float)
    _flag(p, "periodicity_threshold", type=float)
    _flag(p, "partial_rep_min", type=float)
    _flag(p, "context", type=int)
    _flag(p, "min_period", type=float)
    _flag(p, "roi_margin", type=float)
    _flag(p, "max_workers", type=int)

    p = sub.add_parser("eval", help="score a predicted parsing against ground truth")
    _common(p)
    p.add_argument("pred", help="predicted segments CSV")
    p.add_argument("gt", help="ground-truth segments CSV")
    p.add_argument("--frames", type=int, required=True, help="frame count of the prediction")
    p.add_argument("--gt-frames", "--gt_frames", dest="gt_frames", type=int, default=None,
                   help="frame count of the ground truth (default: --frames)")

    p = sub.add_parser("compare", help="Mann-Whitney U test on per-participant mean durations")
    _common(p)
    p.add_argument("groups", nargs="*", help="two group manifests (JSON)")
    p.add_argument("--method", choices=("normal", "exact", "auto"), default=None)

    p = sub.add_parser("synth", help="generate a synthetic signal and its ground truth")
    _common(p)
    _flag(p, "n_reps", type=int)
    p.add_argument("--reps", dest="n_reps", type=int, default=None, help=argparse.SUPPRESS)
    _flag(p, "base_period", type=float)
    _flag(p, "period_jitter", type=float)
    p.add_argument("--jitter", dest="period_jitter", type=float, default=None, help=argparse.SUPPRESS)
    _flag(p, "noise_snr_db", type=float)
    p.add_argument("--snr", dest="noise_snr_db", type=float, default=None, help=argparse.SUPPRESS)
    _flag(p, "lead_in", type=int)
    _flag(p, "lead_out", type=int)
    _flag(p, "alt_amplitude", type=float)
    _flag(p, "landmark_scale", type=float)
    p.add_argument("--truth", default=None, help="ground-truth segments CSV (default: OUT.truth.csv)")
    p.add_argument("--landmarks", default=None, help="also write an animated 68-point landmark CSV")

    p = sub.add_parser("report", help="timeline SVG, per-repetition IoU CSV and figures")
    _common(p)
    p.add_argument("--gt", required=True, help="ground-truth segments CSV")
    p.add_argument("--pred", action="append", required=True,
                   help="predicted segments CSV, optionally NAME=PATH; repeatable")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--no-figures", "--no_figures", dest="no_figures", action="store_true",
                   help="skip the matplotlib PNGs")
    return ap


# -- commands -------------------------------------------------------------------

_ENGINE_KEYS = {k for d in ENGINE_DEFAULTS.values() for k in d}


def cmd_parse(args) -> int:
    file_cfg = load_config_file(args.config) if args.config else {}
    fps = args.fps if args.fps is not None else file_cfg.get("fps")
    if fps is None:
        raise UsageError("parse: --fps is required")
    if args.out is None:
        raise UsageError("parse: -o/--out is required")
    defaults = ENGINE_DEFAULTS[args.engine]
    overrides = {k: getattr(args, k) for k in defaults if hasattr(args, k)}
    if args.task and overrides.get("cutoff_norm") is None:
        overrides["cutoff_norm"] = TASK_CUTOFFS[args.task]
    stray = [k for k in _ENGINE_KEYS - set(defaults) if getattr(args, k, None) is not None]
    if stray:
        raise UsageError(f"parse: flags {', '.join(sorted(stray))} do not apply to --engine {args.engine}")
    # keys of the other engine in a shared config file are ignored
    file_cfg = {k: v for k, v in file_cfg.items() if k not in _ENGINE_KEYS - set(defaults)}
    cfg = resolve_config(defaults, file_cfg, overrides, extra_keys=("fps", "engine"))
    fps = float(fps)

    kind = sniff_kind(args.input)
    data = load_frame_series(args.input, fps) if kind == "landmarks" else load_signal(args.input, fps)
    extra: dict[str, Any] = {"input_kind": kind}
    if args.engine == "landmark":
        minima = MinimaConfig(cfg["min_separation_s"], cfg["min_prominence_frac"])
        if kind == "landmarks":
            parsing = parse_landmark(data, cfg["cutoff_norm"], minima, cfg["order"],
                                     cfg["upper_idx"], cfg["lower_idx"])
        else:
            parsing = parse_landmark_signal(data, cfg["cutoff_norm"], minima, cfg["order"])
    else:
        tcfg = TsmConfig(**cfg)
        stride, parsing, _ = stride_search(data, tcfg)
        extra["stride"] = stride

    out = Path(args.out)
    write_parsing(parsing, out)
    extra["n_segments"] = len(parsing)
    cfg_out = {"fps": fps, **cfg}
    manifest = RunManifest("parse", (args.input,), args.engine, cfg_out, __version__, args.seed,
                           {"segments": str(out)})
    _write_manifest(Path(args.manifest) if args.manifest else _manifest_path(out), manifest, extra)
    return EXIT_OK


def eval_report(pred, gt, fps: Optional[float]) -> dict:
    rep = match_and_score(pred, gt)
    pairs = [{"gt": None if g is None else [g.start, g.end],
              "pred": None if p is None else [p.start, p.end],
              "iou": iou} for g, p, iou in rep.pairs]
    durations = None
    u_test = None
    if fps:
        durations = {}
        for name, parsing in (("pred", pred), ("gt", gt)):
            if len(parsing):
                d = duration_stats(parsing, fps)
                durations[name] = {"mean_s": d.mean_s, "sd_s": d.sd_s, "n": d.n}
            else:
                durations[name] = None
        if len(pred) and len(gt):
            u = mann_whitney_u(pred.durations(fps), gt.durations(fps))
            u_test = {"u": u.u, "p": u.p_two_sided, "method": u.method}
    return {"mean_iou": rep.mean_iou, "ci95": rep.ci95_halfwidth, "n": rep.n, "pairs": pairs,
            "duration_stats": durations, "u_test": u_test}


def cmd_eval(args) -> int:
    gt_frames = args.gt_frames if args.gt_frames is not None else args.frames
    if gt_frames != args.frames:
        raise ValidationError(f"frame counts differ: prediction {args.frames}, ground truth {gt_frames}")
    pred = load_parsing(args.pred, args.frames, "tsm")
    gt = load_parsing(args.gt, gt_frames, "manual")
    report = eval_report(pred, gt, args.fps)
    out = Path(args.out) if args.out else None
    _dump(report, out)
    print(f"IoU ± 95% CI: {100 * report['mean_iou']:.1f} ± {100 * report['ci95']:.2f}")
    if out is not None:
        manifest = RunManifest("eval", (args.pred, args.gt), None,
                               {"frames": args.frames, "gt_frames": gt_frames, "fps": args.fps},
                               __version__, args.seed, {"report": str(out)})
        _write_manifest(_manifest_path(out), manifest)
    return EXIT_OK


def load_group(path) -> list:
    """Read a group manifest: {"participants": [{"path": ..., "fps": ...}, ...]}.

    Relative paths resolve against the manifest's directory; an optional
    ``n_frames`` per participant sizes the parsing.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    people = data.get("participants") if isinstance(data, dict) else None
    if not isinstance(people, list):
        raise ValidationError(f"{path}: expected an object with a 'participants' list")
    group = []
    for k, entry in enumerate(people):
        if not isinstance(entry, dict) or "path" not in entry or "fps" not in entry:
            raise ValidationError(f"{path}: participant {k} needs 'path' and 'fps'")
        seg_path = Path(entry["path"])
        if not seg_path.is_absolute():
            seg_path = path.parent / seg_path
        group.append((load_parsing(seg_path, entry.get("n_frames")), float(entry["fps"])))
    return group


def cmd_compare(args) -> int:
    if len(args.groups) != 2:
        raise ValidationError(f"compare needs exactly two group manifests, got {len(args.groups)}")
    file_cfg = load_config_file(args.config) if args.config else {}
    method = args.method or file_cfg.get("method") or "normal"
    if method not in ("normal", "exact", "auto"):
        raise ValidationError(f"unknown method {method!r}")
    group_a, group_b = (load_group(g) for g in args.groups)
    res = compare_groups(group_a, group_b, method)
    body = {"u": res.u, "p": res.p_two_sided, "method": res.method, "u1": res.u1, "u2": res.u2,
            "n1": res.n1, "n2": res.n2,
            "group_means_s": [group_means(group_a), group_means(group_b)]}
    out = Path(args.out) if args.out else None
    _dump(body, out)
    star = "*" if res.p_two_sided < 0.05 else ""
    print("U-value\tp-value")
    print(f"{fmt(res.u)}\t{p_table(res.p_two_sided)}{star}")
    if out is not None:
        manifest = RunManifest("compare", tuple(args.groups), None, {"method": method},
                               __version__, args.seed, {"result": str(out)})
        _write_manifest(_manifest_path(out), manifest)
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.out is None:
        raise UsageError("synth: -o/--out is required")
    file_cfg = load_config_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in SYNTH_DEFAULTS}
    cfg = resolve_config(SYNTH_DEFAULTS, file_cfg, overrides, extra_keys=("fps", "seed"))
    fps = args.fps if args.fps is not None else file_cfg.get("fps", 50.0)
    seed = args.seed if args.seed is not None else file_cfg.get("seed", 0)
    scale = cfg.pop("landmark_scale")
    spec = SynthSpec(fps=float(fps), seed=int(seed), **cfg)
    signal, truth = synth_generate(spec)
    out = Path(args.out)
    truth_path = Path(args.truth) if args.truth else out.with_name(out.stem + ".truth.csv")
    write_signal(signal, out)
    write_parsing(truth, truth_path)
    outputs = {"signal": str(out), "truth": str(truth_path)}
    if args.landmarks:
        write_frame_series(synth_landmarks(signal, scale, seed=int(seed)), args.landmarks)
        outputs["landmarks"] = args.landmarks
    manifest = RunManifest("synth", (), None, {"fps": float(fps), "landmark_scale": scale, **cfg},
                           __version__, int(seed), outputs)
    _write_manifest(_manifest_path(out), manifest)
    return EXIT_OK


def cmd_report(args) -> int:
    if args.out is None:
        raise UsageError("report: -o/--out directory is required")
    gt = load_parsing(args.gt, args.frames, "manual")
    preds = []
    for k, item in enumerate(args.pred):
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        preds.append((name, load_parsing(path, args.frames, "tsm")))
    out_dir = Path(args.out)
    outputs = write_report(out_dir, gt, preds, args.fps, figures=not args.no_figures)
    manifest = RunManifest("report", (args.gt, *args.pred), None,
                           {"frames": args.frames, "fps": args.fps}, __version__, args.seed, outputs)
    _write_manifest(out_dir / "manifest.json", manifest)
    return EXIT_OK


COMMANDS = {"parse": cmd_parse, "eval": cmd_eval, "compare": cmd_compare,
            "synth": cmd_synth, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"repseg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RepsegError, ValueError, OSError) as exc:
        print(f"repseg: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
