"""Command-line surface: synth-data, preprocess, train, eval, stream-bench.

Exit codes: 0 success, 2 usage/validation error, 3 empty result (no
contractions found), 4 training divergence, 5 invariant breach (streaming
does not match the batch forward pass).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import dataio, synthgen, train as training
from .config import RunConfig, default_run_config, load_run_config
from .errors import DivergenceError, NoActivityError, PipelineError
from .model import (
    StreamState,
    forward,
    forward_streaming,
    init_weights,
    load_weights,
    save_weights,
)
from .tensor import Tensor, no_grad

CONFIG_ENV_VAR = "EMG_FORGE_CONFIG"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_EMPTY = 3
EXIT_DIVERGED = 4
EXIT_BREACH = 5

STREAM_TOLERANCE = 1e-9


def _load_config(path_arg) -> RunConfig:
    path = path_arg or os.environ.get(CONFIG_ENV_VAR)
    if path:
        return load_run_config(path)
    return default_run_config()


def _recording_paths(data_dir: Path) -> list[Path]:
    return sorted(
        p
        for p in data_dir.glob("*.csv")
        if not p.name.endswith("_truth.csv") and not p.name.endswith(".meta.json")
    )


def _load_segments(data_dir: Path, cfg: RunConfig, motion: str | None):
    segments = []
    for path in _recording_paths(data_dir):
        rec = dataio.load_recording(path, fs=cfg.fs)
        segments.extend(dataio.build_segments(rec, cfg.segmentation))
    if motion:
        segments = [s for s in segments if s.meta.motion == motion]
    return segments


def _write_overlay_svg(path, target: np.ndarray, prediction: np.ndarray, title: str) -> None:
    """Static overlay plot of true vs predicted envelope (deterministic bytes)."""
    width, height, margin = 720.0, 240.0, 30.0
    n = target.size
    lo = min(float(target.min()), float(prediction.min()), 0.0)
    hi = max(float(target.max()), float(prediction.max()), 1e-12)
    span = hi - lo or 1.0

    def polyline(y):
        pts = []
        for i in range(n):
            px = margin + (width - 2 * margin) * (i / max(n - 1, 1))
            py = height - margin - (height - 2 * margin) * ((float(y[i]) - lo) / span)
            pts.append(f"{px:.2f},{py:.2f}")
        return " ".join(pts)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        f'<text x="{margin:.0f}" y="18" font-family="monospace" font-size="12">{title}</text>',
        f'<polyline points="{polyline(target)}" fill="none" stroke="#888888" stroke-width="1.5"/>',
        f'<polyline points="{polyline(prediction)}" fill="none" stroke="#cc3311" stroke-width="1.2"/>',
        f'<text x="{width - 170:.0f}" y="18" font-family="monospace" font-size="11" '
        f'fill="#888888">true</text>',
        f'<text x="{width - 120:.0f}" y="18" font-family="monospace" font-size="11" '
        f'fill="#cc3311">predicted</text>',
        "</svg>",
    ]
    Path(path).write_text("\n".join(parts) + "\n")


def cmd_synth_data(args) -> int:
    if args.reps < 1:
        print("error: --reps must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    if args.sessions < 1:
        print("error: --sessions must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_USAGE

    profile = synthgen.MotionProfile(
        motion=args.motion, n_reps=args.reps, noise_std=args.noise
    )
    for day in range(1, args.sessions + 1):
        rec, truth = synthgen.generate_recording(
            profile, seed=args.seed + 7919 * day, day=day
        )
        stem = f"{args.motion}_day{day}"
        try:
            dataio.write_raw_recording(rec, out_dir / f"{stem}.csv")
        except OSError as exc:
            print(f"error: cannot write {stem}.csv: {exc}", file=sys.stderr)
            return EXIT_USAGE
        with open(out_dir / f"{stem}_truth.csv", "w") as fh:
            fh.write("gt_envelope\n")
            fh.writelines(f"{v:.17g}\n" for v in truth)
        print(f"wrote {stem}.csv ({len(rec)} samples, {args.reps} reps)")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = _load_config(args.config)
    rec = dataio.load_recording(args.infile, fs=cfg.fs)
    segments = dataio.build_segments(rec, cfg.segmentation)
    dataio.write_segments(segments, args.out)
    print(f"segments: {len(segments)}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    data_dir = Path(args.data)
    if not data_dir.is_dir():
        print(f"error: data directory not found: {data_dir}", file=sys.stderr)
        return EXIT_USAGE
    segments = _load_segments(data_dir, cfg, args.motion)
    if not segments:
        print("error: no recordings found in data directory", file=sys.stderr)
        return EXIT_USAGE

    split = dataio.split_dataset(segments, cfg.train.train_fraction, cfg.train.seed)
    weights = init_weights(cfg.model, cfg.train.seed)
    weights, history = training.train(weights, split, cfg.train)

    ckpt = Path(args.out)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_weights(weights, ckpt)
    history.to_csv(ckpt.with_suffix(".history.csv"))
    snapshot = cfg.snapshot()
    snapshot["train.motion_filter"] = args.motion or "all"
    snapshot["train.best_epoch"] = history.best_epoch
    snapshot["train.stopped_epoch"] = history.stopped_epoch
    training.write_run_metadata(ckpt.with_suffix(".run.json"), snapshot)
    best_val = min(history.val_losses)
    print(f"best validation loss: {best_val:.6g} (epoch {history.best_epoch})")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    expected = cfg.model if args.config or os.environ.get(CONFIG_ENV_VAR) else None
    weights = load_weights(args.ckpt, expected_config=expected)
    data_dir = Path(args.data)
    if not data_dir.is_dir():
        print(f"error: data directory not found: {data_dir}", file=sys.stderr)
        return EXIT_USAGE
    segments = _load_segments(data_dir, cfg, args.motion)
    if not segments:
        print("error: no recordings found in data directory", file=sys.stderr)
        return EXIT_USAGE

    pairs = training.predictions(weights, segments)
    report = training.evaluate(weights, segments, include_dc=not args.no_dc)

    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(report_path)
    report_path.with_suffix(".meta.json").write_text(
        json.dumps(
            {
                "checkpoint": str(args.ckpt),
                "segments": len(segments),
                "fft_cosine_dc_bin": "excluded" if args.no_dc else "included",
                "prediction_target": "normalized_envelope",
            },
            indent=2,
        )
        + "\n"
    )

    pred_dir = report_path.with_name(report_path.stem + "_predictions")
    pred_dir.mkdir(parents=True, exist_ok=True)
    for seg, pred in pairs:
        with open(pred_dir / f"{seg.segment_id}.csv", "w") as fh:
            fh.write("t,true,predicted\n")
            for i in range(len(seg)):
                fh.write(f"{seg.bounds.start + i},{seg.target[i]:.17g},{pred[i]:.17g}\n")

    if args.plots:
        plots_dir = Path(args.plots)
        plots_dir.mkdir(parents=True, exist_ok=True)
        for seg, pred in pairs:
            _write_overlay_svg(
                plots_dir / f"{seg.segment_id}.svg", seg.target, pred, seg.segment_id
            )

    print(report.format_table())
    return EXIT_OK


def cmd_stream_bench(args) -> int:
    if args.seconds <= 0:
        print("error: --seconds must be positive", file=sys.stderr)
        return EXIT_USAGE
    weights = load_weights(args.ckpt)
    cfg = weights.config

    n_samples = int(args.seconds * 1000)
    reps = max(1, int(np.ceil(args.seconds / 3.0)))
    profile = synthgen.MotionProfile(n_reps=reps)
    rec, _ = synthgen.generate_recording(profile, seed=args.seed)
    imu = rec.imu_matrix()[:, :n_samples]
    n_samples = imu.shape[1]

    state = StreamState(cfg)
    streamed = np.empty(n_samples)
    latencies = np.empty(n_samples)
    for i in range(n_samples):
        t0 = time.perf_counter()
        streamed[i] = forward_streaming(weights, state, imu[:, i])
        latencies[i] = time.perf_counter() - t0

    with no_grad():
        batch = forward(weights, Tensor(imu)).data[0]
    deviation = float(np.max(np.abs(streamed - batch)))

    p50, p90, p99 = (np.percentile(latencies * 1e3, q) for q in (50, 90, 99))
    print(f"samples: {n_samples}")
    print(f"latency ms: p50={p50:.4f} p90={p90:.4f} p99={p99:.4f}")
    print(f"max |streaming - batch| = {deviation:.3e}")
    # `not (<=)` so a NaN deviation (corrupt weights) also counts as a breach
    if not deviation <= STREAM_TOLERANCE:
        print(
            f"error: streaming/batch deviation {deviation:.3e} exceeds {STREAM_TOLERANCE}",
            file=sys.stderr,
        )
        return EXIT_BREACH
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emgforge",
        description="IMU-to-sEMG envelope synthesis pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate synthetic sessions")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--reps", type=int, default=7, help="contractions per session")
    p.add_argument("--sessions", type=int, default=4, help="number of session files")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--motion", default="bicep_curl", choices=dataio.MOTION_LABELS)
    p.add_argument("--noise", type=float, default=0.01, help="IMU noise std per channel")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("preprocess", help="raw recording -> unified segment CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model on a directory of recordings")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--config", default=None)
    p.add_argument("--motion", default=None, choices=dataio.MOTION_LABELS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint against recordings")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--plots", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--motion", default=None, choices=dataio.MOTION_LABELS)
    p.add_argument(
        "--no-dc",
        action="store_true",
        help="drop the DC bin from the FFT cosine similarity",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stream-bench", help="per-sample latency and batch equivalence")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--seconds", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_stream_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NoActivityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (PipelineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
