#!/usr/bin/env python3
"""End-to-end synthetic experiment: generate sessions, train, evaluate.

Runs the whole pipeline in-process and prints the held-out metrics grid
plus the constant-mean-predictor baseline for context. Roughly a minute
on a laptop CPU with the default (reduced) model size.
"""

import argparse
import time

import numpy as np

from emgforge import dataio, synthgen
from emgforge.model import ModelConfig, init_weights
from emgforge.train import TrainConfig, evaluate, train


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sessions", type=int, default=4)
    parser.add_argument("--reps", type=int, default=7)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--noise", type=float, default=0.01)
    parser.add_argument("--max-epochs", type=int, default=60)
    args = parser.parse_args()

    t0 = time.perf_counter()
    segments = []
    for day in range(1, args.sessions + 1):
        rec, _ = synthgen.generate_recording(
            synthgen.MotionProfile(n_reps=args.reps, noise_std=args.noise),
            seed=args.seed + 7919 * day,
            day=day,
        )
        segments.extend(dataio.build_segments(rec))
    print(f"built {len(segments)} segments from {args.sessions} sessions "
          f"({time.perf_counter() - t0:.1f}s)")

    split = dataio.split_dataset(segments, train_fraction=0.85, seed=args.seed)
    model_cfg = ModelConfig(
        kernel_size=3,
        num_blocks=5,
        residual_channels=16,
        skip_channels=16,
        context_window=16,
    )
    train_cfg = TrainConfig(
        learning_rate=2e-3,
        batch_size=8,
        crop_length=512,
        max_epochs=args.max_epochs,
        patience=5,
        seed=args.seed,
    )
    weights = init_weights(model_cfg, seed=args.seed)

    t0 = time.perf_counter()
    weights, history = train(weights, split, train_cfg)
    print(f"trained {history.stopped_epoch} epochs (best {history.best_epoch}) "
          f"in {time.perf_counter() - t0:.1f}s; "
          f"best val loss {min(history.val_losses):.5f}")

    report = evaluate(weights, split.test)
    print()
    print(f"held-out metrics over {len(split.test)} segments:")
    print(report.format_table())
    baseline = float(np.mean([np.var(s.target) for s in split.test]))
    ratio = report.aggregate()["mse"]["average"] / baseline
    print()
    print(f"constant-mean baseline MSE {baseline:.5f}; model/baseline = {ratio:.3f}")


if __name__ == "__main__":
    main()
