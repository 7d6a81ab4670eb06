"""Command-line entry point: ``fracstab <command> [--config FILE] [flags]``.

Every command resolves its settings from built-in defaults, then an optional
JSON config file, then explicit flags.  Outputs are written with sorted keys
and no timestamps, so the same resolved config reproduces identical bytes.
Each output directory gets a ``manifest.json`` recording the tool version,
the hash of the resolved config and the seed.

Exit codes: 0 success, 2 configuration error, 3 malformed data,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import BaselineKind, apply_baseline
from .errors import (
    FormatError, InsufficientDataError, InvalidHeatmapError, NumericalError, OutOfDomainError, ShapeError,
)
from .heatmap import GridSpec, HeatmapStack, decode_stack, load_stack, render_heatmaps, save_stack
from .metrics import evaluate, write_frame_csv, write_report
from .stabilizer import load_params, save_params, stabilize_many
from .synth import BenchmarkConfig, make_benchmark
from .training import TrainConfig, fit, init_params
from .trajectory import TrajectorySequence, check_aligned, load_trajectory, save_trajectory

log = logging.getLogger("fracstab")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
Z_SUFFIX = ".z.json"
MANIFEST = "manifest.json"


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------- settings

_BENCH = BenchmarkConfig()
_TRAIN = TrainConfig()

DEFAULTS = {
    "simulate": {
        "out": None, "seed": 0,
        "n_train": _BENCH.n_train, "n_test": _BENCH.n_test, "frames": _BENCH.frames, "M": _BENCH.M,
        "norm_distance": _BENCH.norm_distance, "motions": list(_BENCH.motions),
        "noise_levels": list(_BENCH.noise_levels), "outlier_rate": _BENCH.outlier_rate,
        "outlier_std": _BENCH.outlier_std, "detector": _BENCH.detector, "grid_size": _BENCH.grid_size,
        "grid_scale": _BENCH.grid_scale, "sigma": _BENCH.sigma, "heatmap_noise_std": _BENCH.heatmap_noise_std,
    },
    "encode": {
        "input": None, "out": None, "seed": 0, "grid_size": _BENCH.grid_size,
        "grid_scale": _BENCH.grid_scale, "sigma": _BENCH.sigma, "render": "fractional",
    },
    "decode": {"input": None, "out": None, "seed": 0, "mode": "fhr"},
    "train": {
        "data": None, "out": None, "seed": _TRAIN.seed, "K": 2, "mode": "map-candidates",
        "lambda1": _TRAIN.lambda1, "lambda2": _TRAIN.lambda2, "lambda3": _TRAIN.lambda3,
        "max_iters": _TRAIN.max_iters, "xtol": _TRAIN.xtol, "ftol": _TRAIN.ftol,
        "tie_groups": _TRAIN.tie_groups, "step": _TRAIN.step, "min_motion": _TRAIN.min_motion,
        "restart_every": _TRAIN.restart_every,
    },
    "stabilize": {"input": None, "out": None, "seed": 0, "params": None, "baseline": None},
    "evaluate": {
        "data": None, "out": None, "seed": 0, "raw": True, "ground_truth": False,
        "params": [], "baselines": [k + (":5" if k == "moving_average" else ":0.5") for k in
                                    ("moving_average", "first_order", "second_order", "constant_speed")],
    },
}
REQUIRED = {
    "simulate": ("out",), "encode": ("input", "out"), "decode": ("input", "out"),
    "train": ("data", "out"), "stabilize": ("input", "out"), "evaluate": ("data", "out"),
}


def _bool(text):
    low = str(text).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _optional_int(text):
    return None if str(text).lower() in ("none", "0", "") else int(text)


def _build_parser():
    parser = argparse.ArgumentParser(prog="fracstab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fracstab {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file with settings; flags override it")
        p.add_argument("--out", help="output directory (created if missing)")
        p.add_argument("--seed", type=int)
        return p

    p = command("simulate", "write a fixed-seed benchmark suite")
    for flag in ("n-train", "n-test", "frames", "M", "grid-size"):
        p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), type=int)
    for flag in ("norm-distance", "outlier-rate", "outlier-std", "grid-scale", "sigma", "heatmap-noise-std"):
        p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), type=float)
    p.add_argument("--motions", nargs="+")
    p.add_argument("--noise-levels", dest="noise_levels", nargs="+", type=float)
    p.add_argument("--detector", choices=("coords", "fhr", "chr"))

    p = command("encode", "render trajectory files into heatmap-stack binaries")
    p.add_argument("--input", help="trajectory file or directory")
    p.add_argument("--grid-size", dest="grid_size", type=int)
    p.add_argument("--grid-scale", dest="grid_scale", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--render", choices=("fractional", "rounded"))

    p = command("decode", "decode heatmap-stack binaries back to trajectories")
    p.add_argument("--input", help="directory written by 'encode'")
    p.add_argument("--mode", choices=("fhr", "chr"))

    p = command("train", "fit stabilizer parameters on a benchmark's training split")
    p.add_argument("--data", help="directory written by 'simulate'")
    p.add_argument("--K", type=int)
    p.add_argument("--mode", choices=("map-candidates", "posterior-mean"))
    for flag in ("lambda1", "lambda2", "lambda3", "xtol", "ftol", "step", "min-motion"):
        p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--tie-groups", dest="tie_groups", type=_optional_int)
    p.add_argument("--restart-every", dest="restart_every", type=_optional_int)

    p = command("stabilize", "smooth detector trajectories with a params file or a baseline")
    p.add_argument("--input", help="trajectory file or directory")
    p.add_argument("--params", help="params JSON written by 'train'")
    p.add_argument("--baseline", help="kind[:param], used instead of --params")

    p = command("evaluate", "score methods against ground truth")
    p.add_argument("--data", help="directory written by 'simulate'")
    p.add_argument("--params", action="append", help="params JSON; repeatable")
    p.add_argument("--baseline", dest="baselines", action="append", help="kind[:param]; repeatable")
    p.add_argument("--no-baselines", dest="baselines", action="store_const", const=[])
    p.add_argument("--raw", type=_bool)
    p.add_argument("--ground-truth", dest="ground_truth", type=_bool)
    return parser


def resolve_config(command, args):
    """Merge defaults, the optional config file and explicit flags."""
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    if getattr(args, "config", None):
        try:
            with open(args.config) as f:
                doc = json.load(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(doc) - set(cfg))
        if unknown:
            raise ConfigError(f"unknown {command} settings: {', '.join(unknown)}")
        cfg.update(doc)
    cfg.update(flags)
    missing = [k for k in REQUIRED[command] if cfg.get(k) in (None, "")]
    if missing:
        raise ConfigError(f"{command} needs: {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------- file helpers

def _out_dir(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, doc):
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True, indent=1)
        f.write("\n")


def write_manifest(out: Path, command, cfg, extra=None):
    files = sorted(
        str(p.relative_to(out)).replace(os.sep, "/")
        for p in out.rglob("*") if p.is_file() and p.name != MANIFEST
    )
    doc = {
        "tool": "fracstab",
        "version": __version__,
        "command": command,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": cfg.get("seed"),
        "files": {name: hashlib.sha256((out / name).read_bytes()).hexdigest() for name in files},
    }
    if extra:
        doc.update(extra)
    _write_json(out / MANIFEST, doc)


def _require(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"input path {path} does not exist")
    return path


def _trajectory_files(path):
    """Trajectory documents in ``path``: detector files if present, otherwise all of them."""
    path = _require(path)
    if path.is_file():
        return [path]
    files = sorted(p for p in path.glob("*.json") if p.name != MANIFEST)
    z_files = [p for p in files if p.name.endswith(Z_SUFFIX)]
    return z_files or files


def _split_dir(root, split):
    root = _require(root)
    return root / split if (root / split).is_dir() else root


def load_pairs(root, split):
    """Ground-truth and detector trajectories of one benchmark split, matched by file name."""
    folder = _split_dir(root, split)
    pairs = []
    for z_path in sorted(folder.glob("*" + Z_SUFFIX)):
        gt_path = z_path.with_name(z_path.name[: -len(Z_SUFFIX)] + ".json")
        if not gt_path.exists():
            raise FormatError(f"{z_path.name} has no ground-truth partner {gt_path.name}")
        p, z = load_trajectory(gt_path), load_trajectory(z_path)
        check_aligned(p, z)
        pairs.append((p, z))
    if not pairs:
        raise ConfigError(f"no '*{Z_SUFFIX}' detector files in {folder}")
    return pairs


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg):
    bench = BenchmarkConfig(
        n_train=int(cfg["n_train"]), n_test=int(cfg["n_test"]), frames=int(cfg["frames"]), M=int(cfg["M"]),
        norm_distance=float(cfg["norm_distance"]), motions=tuple(cfg["motions"]),
        noise_levels=tuple(float(v) for v in cfg["noise_levels"]), outlier_rate=float(cfg["outlier_rate"]),
        outlier_std=float(cfg["outlier_std"]), detector=cfg["detector"], grid_size=int(cfg["grid_size"]),
        grid_scale=float(cfg["grid_scale"]), sigma=float(cfg["sigma"]),
        heatmap_noise_std=float(cfg["heatmap_noise_std"]),
    )
    train, test = make_benchmark(bench, seed=int(cfg["seed"]))
    out = _out_dir(cfg)
    for split, videos in (("train", train), ("test", test)):
        folder = out / split
        folder.mkdir(exist_ok=True)
        for video in videos:
            save_trajectory(folder / f"{video.p.video_id}.json", video.p)
            save_trajectory(folder / f"{video.p.video_id}{Z_SUFFIX}", video.z)
    write_manifest(out, "simulate", cfg, {"videos": {"train": len(train), "test": len(test)}})
    print(f"wrote {len(train)} training and {len(test)} test videos to {out}")


def cmd_encode(cfg):
    grid = GridSpec(int(cfg["grid_size"]), int(cfg["grid_size"]), float(cfg["grid_scale"]), float(cfg["sigma"]))
    out = _out_dir(cfg)
    sequences = {}
    for path in _trajectory_files(cfg["input"]):
        seq = load_trajectory(path)
        maps = [render_heatmaps(frame, grid, cfg["render"]).values for frame in seq.frames]
        stem = path.name[: -len(".json")]
        save_stack(out / f"{stem}.fhrs", HeatmapStack(np.concatenate(maps), grid))
        sequences[f"{stem}.fhrs"] = {
            "video_id": seq.video_id, "num_frames": seq.num_frames, "num_landmarks": seq.num_landmarks,
            "norm_distance": seq.norm_distance, "frame_box": list(seq.frame_box), "source": path.name,
        }
    write_manifest(out, "encode", cfg, {
        "sequences": sequences,
        "round_trip": "decode --mode fhr recovers noiseless fractional renders to within 1e-6 image px; "
                      "--mode chr returns grid-quantised positions",
    })
    print(f"encoded {len(sequences)} sequences into {out}")


def cmd_decode(cfg):
    src = _require(cfg["input"])
    try:
        with open(src / MANIFEST) as f:
            sequences = json.load(f)["sequences"]
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise FormatError(f"{src} lacks a readable encode manifest: {exc}") from None
    out = _out_dir(cfg)
    for name in sorted(sequences):
        info = sequences[name]
        stack = load_stack(src / name)
        T, M = int(info["num_frames"]), int(info["num_landmarks"])
        if len(stack) != T * M:
            raise FormatError(f"{name}: {len(stack)} maps but manifest expects {T} x {M}")
        coords = decode_stack(stack, cfg["mode"]).reshape(T, M, 2)
        seq = TrajectorySequence(
            coords, norm_distance=float(info["norm_distance"]), video_id=info["video_id"],
            frame_box=tuple(info["frame_box"]),
        )
        save_trajectory(out / info["source"], seq)
    write_manifest(out, "decode", cfg)
    print(f"decoded {len(sequences)} sequences into {out}")


def cmd_train(cfg):
    pairs = load_pairs(cfg["data"], "train")
    p_seqs = [p for p, _ in pairs]
    z_seqs = [z for _, z in pairs]
    tcfg = TrainConfig(
        lambda1=float(cfg["lambda1"]), lambda2=float(cfg["lambda2"]), lambda3=float(cfg["lambda3"]),
        max_iters=int(cfg["max_iters"]), xtol=float(cfg["xtol"]), ftol=float(cfg["ftol"]),
        seed=int(cfg["seed"]), tie_groups=cfg["tie_groups"], step=float(cfg["step"]),
        min_motion=float(cfg["min_motion"]), restart_every=cfg["restart_every"],
    )
    params0 = init_params(z_seqs, p_seqs, K=int(cfg["K"]), mode=cfg["mode"])
    params, history = fit(params0, z_seqs, p_seqs, tcfg)
    final = history[-1]
    if not np.isfinite(final.total):
        raise NumericalError("training produced a non-finite loss")
    out = _out_dir(cfg)
    save_params(out / "params.json", params)
    with open(out / "history.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iter", "euclidean", "time_delay", "tm", "total"])
        for i, bd in enumerate(history):
            w.writerow([i, *(repr(float(v)) for v in bd.row())])
    _write_json(out / "config.json", cfg)
    write_manifest(out, "train", cfg)
    print(
        f"euclidean {final.reg_euclidean:.6g}  time_delay {final.reg_time_delay:.6g} "
        f"(x{tcfg.lambda2:g})  tm {final.tm_smooth:.6g} (x{tcfg.lambda1:g})  total {final.total:.6g}"
    )


def cmd_stabilize(cfg):
    if (cfg["params"] is None) == (cfg["baseline"] is None):
        raise ConfigError("stabilize needs exactly one of --params or --baseline")
    files = _trajectory_files(cfg["input"])
    seqs = [load_trajectory(p) for p in files]
    if cfg["params"] is not None:
        params = load_params(_require(cfg["params"]))
        outputs = stabilize_many(params, seqs)
    else:
        kind = BaselineKind.parse(cfg["baseline"])
        outputs = [apply_baseline(kind, s) for s in seqs]
    out = _out_dir(cfg)
    for path, seq in zip(files, outputs):
        if not np.all(np.isfinite(seq.frames)):
            raise NumericalError(f"non-finite output for {path.name}")
        save_trajectory(out / path.name, seq)
    write_manifest(out, "stabilize", cfg)
    print(f"stabilized {len(files)} sequences into {out}")


def _method_outputs(cfg, pairs):
    p_seqs = [p for p, _ in pairs]
    z_seqs = [z for _, z in pairs]
    if cfg["raw"]:
        yield "raw", z_seqs
    for text in cfg["baselines"]:
        kind = BaselineKind.parse(text)
        yield kind.label(), [apply_baseline(kind, z) for z in z_seqs]
    for path in cfg["params"]:
        yield f"stabilizer:{Path(path).stem}", stabilize_many(load_params(_require(path)), z_seqs)
    if cfg["ground_truth"]:
        yield "ground_truth", p_seqs


def cmd_evaluate(cfg):
    if isinstance(cfg["params"], str):
        cfg["params"] = [cfg["params"]]
    pairs = load_pairs(cfg["data"], "test")
    p_seqs = [p for p, _ in pairs]
    out = _out_dir(cfg)
    summary = []
    for label, x_seqs in _method_outputs(cfg, pairs):
        report, rows = evaluate(x_seqs, p_seqs, method=label)
        values = (report.nrmse_percent, report.stability_nrmse_percent, report.auc_percent,
                  report.failure_rate_percent, report.lag_frames)
        if not np.all(np.isfinite(values)):
            raise NumericalError(f"non-finite metrics for {label}")
        slug = label.replace(":", "_")
        write_report(out / f"report_{slug}.json", report)
        write_frame_csv(out / f"frames_{slug}.csv", rows)
        summary.append((label, *values, report.num_frames))
    if not summary:
        raise ConfigError("no methods selected")
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["method", "nrmse", "stability", "auc", "failure_rate", "lag_frames", "num_frames"])
        w.writerows(summary)
    write_manifest(out, "evaluate", cfg)
    width = max(len(row[0]) for row in summary)
    print(f"{'method':<{width}}  nrmse%  stab%   lag")
    for label, e, s, _, _, lag, _ in summary:
        print(f"{label:<{width}}  {e:6.3f}  {s:6.3f}  {lag:5.2f}")


COMMANDS = {
    "simulate": cmd_simulate, "encode": cmd_encode, "decode": cmd_decode,
    "train": cmd_train, "stabilize": cmd_stabilize, "evaluate": cmd_evaluate,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args.command, args)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"fracstab {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, ShapeError, OutOfDomainError, InvalidHeatmapError, InsufficientDataError) as exc:
        print(f"fracstab {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError, OverflowError) as exc:
        print(f"fracstab {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError) as exc:
        print(f"fracstab {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
