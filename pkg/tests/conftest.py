import numpy as np
import pytest

from emgforge import dataio, synthgen
from emgforge.model import ModelConfig, init_weights
from emgforge.train import TrainConfig, train


def synthetic_segments(sessions: int = 4, reps: int = 7, noise_std: float = 0.01):
    segments = []
    for day in range(1, sessions + 1):
        rec, _ = synthgen.generate_recording(
            synthgen.MotionProfile(n_reps=reps, noise_std=noise_std),
            seed=7919 * day,
            day=day,
        )
        segments.extend(dataio.build_segments(rec))
    return segments


@pytest.fixture(scope="session")
def session_segments():
    """4 synthetic sessions x 7 reps, shared across the suite."""
    return synthetic_segments()


@pytest.fixture(scope="session")
def trained_run(session_segments):
    """One full training run on the synthetic dataset (85/15, patience 5)."""
    split = dataio.split_dataset(session_segments, train_fraction=0.85, seed=0)
    config = ModelConfig(
        kernel_size=3,
        num_blocks=5,
        residual_channels=16,
        skip_channels=16,
        context_window=16,
    )
    weights = init_weights(config, seed=0)
    train_cfg = TrainConfig(
        learning_rate=2e-3,
        batch_size=8,
        crop_length=512,
        max_epochs=60,
        patience=5,
        seed=0,
    )
    weights, history = train(weights, split, train_cfg)
    return weights, history, split, train_cfg
