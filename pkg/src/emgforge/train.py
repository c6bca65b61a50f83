"""MSE training loop with patience-based early stopping and evaluation.

One epoch draws random fixed-length crops covering each training segment
once in expectation, accumulates gradients window by window, and takes one
Adam step per batch. Validation is a full-length forward pass over the
held-out segments in fixed order; the weights from the best validation
epoch are restored before returning.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .dataio import DatasetSplit, MergedSegment, make_windows
from .errors import ConfigError, DivergenceError, InsufficientDataError, ShapeError
from .model import ModelWeights, forward, receptive_field
from .tensor import Tensor, adam_step, backward, mean_all, mul, no_grad, sub


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    crop_length: int = 1024
    max_epochs: int = 200
    patience: int = 5
    seed: int = 0
    train_fraction: float = 0.85
    improvement_tolerance: float = 1e-6

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0

    @property
    def train_losses(self) -> list[float]:
        return [e.train_loss for e in self.epochs]

    @property
    def val_losses(self) -> list[float]:
        return [e.val_loss for e in self.epochs]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "seconds"])
            for e in self.epochs:
                writer.writerow(
                    [e.epoch, f"{e.train_loss:.17g}", f"{e.val_loss:.17g}", f"{e.seconds:.6f}"]
                )


class EarlyStopper:
    """Stop after `patience` consecutive epochs without improvement.

    Improvement means the value drops below best - tolerance; the tolerance
    keeps float noise from resetting the counter.
    """

    def __init__(self, patience: int, tolerance: float = 1e-6):
        self.patience = patience
        self.tolerance = tolerance
        self.best_value = None
        self.best_epoch = 0
        self.bad_epochs = 0
        self._epoch = 0

    def update(self, value: float) -> bool:
        """Feed one epoch's validation value; returns True on improvement."""
        self._epoch += 1
        if self.best_value is None or value < self.best_value - self.tolerance:
            self.best_value = value
            self.best_epoch = self._epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean of squared differences over all elements (differentiable)."""
    if pred.data.shape != target.data.shape:
        raise ShapeError(f"loss shape mismatch: {pred.data.shape} vs {target.data.shape}")
    diff = sub(pred, target)
    return mean_all(mul(diff, diff))


def fit_input_normalizer(weights: ModelWeights, segments: list[MergedSegment]) -> None:
    """Set the per-channel affine normalizer from training-set statistics."""
    stacked = np.concatenate([seg.imu for seg in segments], axis=1)
    mean = stacked.mean(axis=1)
    std = stacked.std(axis=1)
    std = np.where(std < 1e-8, 1.0, std)
    weights.input_offset = mean
    weights.input_scale = 1.0 / std


def validation_loss(weights: ModelWeights, segments: list[MergedSegment]) -> float:
    """Mean full-length MSE over segments, reduced in fixed segment order."""
    losses = []
    with no_grad():
        for seg in segments:
            pred = forward(weights, Tensor(seg.imu)).data[0]
            losses.append(float(np.mean((pred - seg.target) ** 2)))
    return float(np.mean(losses))


def train(
    weights: ModelWeights, split: DatasetSplit, cfg: TrainConfig
) -> tuple[ModelWeights, TrainHistory]:
    """Train in place; returns the weights restored to the best epoch.

    The held-out split doubles as the validation set for early stopping,
    so it is never windowed into training batches.
    """
    if not split.train or not split.test:
        raise InsufficientDataError(
            f"split must have train and test segments, got {len(split.train)}/{len(split.test)}"
        )
    rf = receptive_field(weights.config).total
    if cfg.crop_length < rf:
        raise ConfigError(
            f"crop_length {cfg.crop_length} is below the model receptive field {rf}"
        )

    fit_input_normalizer(weights, split.train)

    params = weights.parameter_arrays()
    adam_state = None
    stopper = EarlyStopper(cfg.patience, cfg.improvement_tolerance)
    history = TrainHistory()
    best_arrays = None

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        loss_sum = 0.0
        n_windows = 0
        for batch in make_windows(
            split, cfg.crop_length, cfg.batch_size, cfg.seed, epoch=epoch, min_length=rf
        ):
            weights.zero_grads()
            b = batch.inputs.shape[0]
            inv_b = Tensor(np.array([[1.0 / b]]))
            for i in range(b):
                pred = forward(weights, Tensor(batch.inputs[i]))
                loss = mse_loss(pred, Tensor(batch.targets[i]))
                backward(mul(loss, inv_b))
                loss_sum += float(loss.data[0, 0])
                n_windows += 1
            try:
                adam_state = adam_step(
                    params, weights.gradient_arrays(), adam_state, cfg.learning_rate
                )
            except DivergenceError as exc:
                raise DivergenceError(f"epoch {epoch}: {exc}") from exc

        train_loss = loss_sum / max(n_windows, 1)
        val_loss = validation_loss(weights, split.test)
        if not np.isfinite(train_loss) or not np.isfinite(val_loss):
            raise DivergenceError(f"non-finite loss at epoch {epoch}")

        history.epochs.append(
            EpochStats(epoch, train_loss, val_loss, time.perf_counter() - t0)
        )
        if stopper.update(val_loss):
            best_arrays = {k: v.copy() for k, v in params.items()}
        history.best_epoch = stopper.best_epoch
        history.stopped_epoch = epoch
        if stopper.should_stop:
            break

    if best_arrays is not None:
        for name, arr in params.items():
            arr[:] = best_arrays[name]
    return weights, history


def evaluate(
    weights: ModelWeights, segments: list[MergedSegment], include_dc: bool = True
) -> metrics.MetricsReport:
    """Full-length forward pass per segment, scored with all four metrics.

    `include_dc=False` drops the DC bin from the spectral similarity
    (envelope DC can dominate it).
    """
    if not segments:
        raise InsufficientDataError("no segments to evaluate")
    pairs = []
    with no_grad():
        for seg in segments:
            pred = forward(weights, Tensor(seg.imu)).data[0]
            pairs.append((seg.segment_id, pred, seg.target))
    return metrics.report_from_pairs(pairs, include_dc=include_dc)


def predictions(weights: ModelWeights, segments: list[MergedSegment]):
    """(segment, prediction) pairs with full-length forward passes."""
    out = []
    with no_grad():
        for seg in segments:
            out.append((seg, forward(weights, Tensor(seg.imu)).data[0]))
    return out


def write_run_metadata(path, run_config_snapshot: dict) -> None:
    """Record the configuration and fixed pipeline choices beside a checkpoint."""
    snapshot = dict(run_config_snapshot)
    snapshot.setdefault("prediction_target", "normalized_envelope")
    snapshot.setdefault("filter_passes", "single_causal")
    snapshot.setdefault("normalization", "per_recording_envelope_max")
    snapshot.setdefault("validation_set", "held_out_test_split")
    with open(path, "w") as fh:
        json.dump(snapshot, fh, indent=2, sort_keys=True)
        fh.write("\n")
