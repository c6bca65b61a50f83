"""Recording ingestion, segment assembly, dataset split, and training windows.

Raw recordings are columnar CSV (header row, '#' comment lines ignored),
one EMG column plus six IMU columns. The EMG channel drives segmentation;
IMU channels are sliced with the same index ranges, and the result is a
list of merged segments that can round-trip through a unified segment CSV
with a JSON metadata sidecar.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import signal as dsp
from .errors import (
    ConfigError,
    DegenerateSignalError,
    EmptyFileError,
    EmptyInputError,
    InsufficientDataError,
    NoActivityError,
    SchemaError,
    TooShortError,
)

CHANNELS = ("emg", "accel_x", "accel_y", "accel_z", "gyro_x", "gyro_y", "gyro_z")
IMU_CHANNELS = CHANNELS[1:]

# Canonical channel -> default CSV column name.
DEFAULT_SCHEMA = {
    "emg": "emg",
    "accel_x": "ax",
    "accel_y": "ay",
    "accel_z": "az",
    "gyro_x": "gx",
    "gyro_y": "gy",
    "gyro_z": "gz",
}

MOTION_LABELS = ("bicep_curl", "tricep_extension", "supination", "pronation")


@dataclass(frozen=True)
class RecordingMeta:
    subject: str = "unknown"
    motion: str = "unknown"
    day: int = 0


@dataclass
class RawRecording:
    """Seven aligned channels sharing one sample rate."""

    emg: dsp.SampledSignal
    accel_x: dsp.SampledSignal
    accel_y: dsp.SampledSignal
    accel_z: dsp.SampledSignal
    gyro_x: dsp.SampledSignal
    gyro_y: dsp.SampledSignal
    gyro_z: dsp.SampledSignal

    meta: RecordingMeta = field(default_factory=RecordingMeta)

    def __post_init__(self):
        lengths = {ch: len(getattr(self, ch)) for ch in CHANNELS}
        if len(set(lengths.values())) != 1:
            raise SchemaError(f"channel lengths differ after alignment: {lengths}")
        rates = {getattr(self, ch).fs for ch in CHANNELS}
        if len(rates) != 1:
            raise SchemaError(f"channels carry different sample rates: {rates}")

    @property
    def fs(self) -> float:
        return self.emg.fs

    def __len__(self) -> int:
        return len(self.emg)

    def imu_matrix(self) -> np.ndarray:
        """[6 x T] array in IMU_CHANNELS order."""
        return np.stack([getattr(self, ch).samples for ch in IMU_CHANNELS])


def _read_columns(path, wanted: dict) -> dict:
    """Parse the requested columns; rows with non-finite values are dropped."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for row in reader:
            if not row or (row[0].lstrip().startswith("#")):
                continue
            header = [c.strip() for c in row]
            break
        if header is None:
            raise EmptyFileError(f"{path} contains no header row")

        indices = {}
        for channel, column in wanted.items():
            if isinstance(column, int):
                if not 0 <= column < len(header):
                    raise SchemaError(
                        f"column index {column} for channel {channel!r} out of range in {path}"
                    )
                indices[channel] = column
            else:
                if column not in header:
                    raise SchemaError(
                        f"missing column {column!r} for channel {channel!r} in {path}"
                    )
                indices[channel] = header.index(column)

        values: dict = {ch: [] for ch in wanted}
        for row in reader:
            if not row or row[0].lstrip().startswith("#"):
                continue
            parsed = {}
            ok = True
            for ch, idx in indices.items():
                if idx >= len(row):
                    ok = False
                    break
                try:
                    v = float(row[idx])
                except ValueError:
                    ok = False
                    break
                if not math.isfinite(v):
                    ok = False
                    break
                parsed[ch] = v
            if not ok:
                continue
            for ch, v in parsed.items():
                values[ch].append(v)

    n = len(next(iter(values.values())))
    if n == 0:
        raise EmptyFileError(f"{path} contains no valid data rows")
    return {ch: np.asarray(v, dtype=np.float64) for ch, v in values.items()}


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def load_recording(
    path,
    schema: dict | None = None,
    imu_path=None,
    fs: float = 1000.0,
    meta: RecordingMeta | None = None,
) -> RawRecording:
    """Load a recording from one CSV, or EMG and IMU from two files.

    `schema` maps canonical channel names (see CHANNELS) to column names or
    zero-based positions. Channels are truncated to the shortest length so
    slightly ragged acquisitions still align; no resampling is performed, so
    all channels must already share `fs`.
    """
    path = Path(path)
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    unknown = set(schema) - set(CHANNELS)
    if unknown:
        raise SchemaError(f"schema names unknown channels: {sorted(unknown)}")
    missing = set(CHANNELS) - set(schema)
    if missing:
        raise SchemaError(f"schema missing channels: {sorted(missing)}")

    if imu_path is None:
        columns = _read_columns(path, schema)
    else:
        columns = _read_columns(path, {"emg": schema["emg"]})
        columns.update(
            _read_columns(imu_path, {ch: schema[ch] for ch in IMU_CHANNELS})
        )

    shortest = min(len(v) for v in columns.values())
    columns = {ch: v[:shortest] for ch, v in columns.items()}

    if meta is None:
        sidecar = _sidecar_path(path)
        if sidecar.exists():
            raw = json.loads(sidecar.read_text())
            meta = RecordingMeta(
                subject=raw.get("subject", "unknown"),
                motion=raw.get("motion", "unknown"),
                day=int(raw.get("day", 0)),
            )
            fs = float(raw.get("fs", fs))
        else:
            meta = RecordingMeta()

    return RawRecording(
        **{ch: dsp.SampledSignal(columns[ch], fs) for ch in CHANNELS}, meta=meta
    )


def write_raw_recording(rec: RawRecording, path) -> None:
    """Write the 7-column raw CSV plus the metadata sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([DEFAULT_SCHEMA[ch] for ch in CHANNELS])
        arrays = [getattr(rec, ch).samples for ch in CHANNELS]
        for i in range(len(rec)):
            writer.writerow([f"{a[i]:.17g}" for a in arrays])
    sidecar = _sidecar_path(path)
    sidecar.write_text(
        json.dumps(
            {
                "subject": rec.meta.subject,
                "motion": rec.meta.motion,
                "day": rec.meta.day,
                "fs": rec.fs,
            },
            indent=2,
        )
        + "\n"
    )


@dataclass(frozen=True)
class SegmentMeta:
    subject: str
    motion: str
    day: int
    rep_index: int
    fs: float


@dataclass
class MergedSegment:
    """One repetition: normalized envelope target plus aligned IMU slices."""

    bounds: dsp.SegmentBounds
    target: np.ndarray
    imu: np.ndarray
    meta: SegmentMeta

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=np.float64)
        self.imu = np.asarray(self.imu, dtype=np.float64)
        if self.imu.shape != (6, self.target.size):
            raise SchemaError(
                f"imu shape {self.imu.shape} does not match target length {self.target.size}"
            )
        if self.target.size != len(self.bounds):
            raise SchemaError("target length does not match segment bounds")

    @property
    def segment_id(self) -> str:
        m = self.meta
        return f"{m.subject}_{m.motion}_day{m.day}_rep{m.rep_index:02d}"

    def __len__(self) -> int:
        return self.target.size


@dataclass(frozen=True)
class SegmentationParams:
    min_distance: int = 150
    top_k: int = 7
    envelope_lp_hz: float = 6.0
    chain: dsp.FilterChainConfig = field(default_factory=dsp.FilterChainConfig)


def build_segments(
    rec: RawRecording, params: SegmentationParams | None = None
) -> list[MergedSegment]:
    """Run the EMG pipeline and slice all channels with the peak-based bounds.

    preprocess -> envelope -> normalize -> peak detection -> midpoint cuts;
    raises NoActivityError when the recording holds no usable contractions.
    """
    params = params or SegmentationParams()
    if len(rec) == 0:
        raise EmptyInputError("recording is empty")

    filtered = dsp.preprocess_emg(rec.emg, params.chain)
    envelope = dsp.compute_envelope(filtered, params.envelope_lp_hz)
    try:
        target = dsp.normalize_envelope(envelope)
    except DegenerateSignalError as exc:
        raise NoActivityError(f"recording has a flat envelope: {exc}") from exc
    try:
        peaks = dsp.detect_peaks(target, params.min_distance, params.top_k)
    except TooShortError as exc:
        raise NoActivityError(f"recording too short for peak detection: {exc}") from exc
    if peaks.size == 0:
        raise NoActivityError("no contraction peaks detected")

    bounds = dsp.segment_by_peaks(peaks, len(rec))
    imu = rec.imu_matrix()
    segments = []
    for i, b in enumerate(bounds):
        segments.append(
            MergedSegment(
                bounds=b,
                target=target.samples[b.start : b.end],
                imu=imu[:, b.start : b.end],
                meta=SegmentMeta(
                    subject=rec.meta.subject,
                    motion=rec.meta.motion,
                    day=rec.meta.day,
                    rep_index=i,
                    fs=rec.fs,
                ),
            )
        )
    return segments


@dataclass
class DatasetSplit:
    train: list[MergedSegment]
    test: list[MergedSegment]
    seed: int


def split_dataset(
    segments: list[MergedSegment], train_fraction: float = 0.85, seed: int = 0
) -> DatasetSplit:
    """Deterministic shuffled split; same seed gives identical membership.

    Train size is round(train_fraction * total), clamped so neither side
    is empty.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(segments)
    if n < 2:
        raise InsufficientDataError(f"need at least 2 segments to split, got {n}")
    n_train = int(round(train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    train = [segments[i] for i in perm[:n_train]]
    test = [segments[i] for i in perm[n_train:]]
    return DatasetSplit(train=train, test=test, seed=seed)


@dataclass
class WindowBatch:
    """Fixed-length training crops: inputs [B x 6 x L], targets [B x 1 x L]."""

    inputs: np.ndarray
    targets: np.ndarray
    crop_length: int
    segment_ids: list[str]


def make_windows(
    split: DatasetSplit,
    crop_length: int,
    batch_size: int,
    seed: int,
    epoch: int = 0,
    min_length: int | None = None,
) -> Iterator[WindowBatch]:
    """Yield one epoch of random contiguous crops from the training segments.

    Each segment contributes max(1, round(len/L)) crops so one epoch covers
    each segment once in expectation. Segments shorter than L are left-padded
    with zeros (input and target alike) to preserve causality. Deterministic
    for a given (seed, epoch).
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if min_length is not None and crop_length < min_length:
        raise ConfigError(
            f"crop_length {crop_length} is below the required minimum {min_length}"
        )
    if not split.train:
        raise InsufficientDataError("split has no training segments")
    longest = max(len(s) for s in split.train)
    if crop_length > longest:
        raise ConfigError(
            f"crop_length {crop_length} exceeds the longest training segment ({longest})"
        )

    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(epoch,)))
    crops: list[tuple[int, int]] = []
    for si, seg in enumerate(split.train):
        n = len(seg)
        if n <= crop_length:
            crops.append((si, 0))
            continue
        count = max(1, int(round(n / crop_length)))
        for start in rng.integers(0, n - crop_length + 1, size=count):
            crops.append((si, int(start)))
    order = rng.permutation(len(crops))

    for lo in range(0, len(order), batch_size):
        chunk = [crops[i] for i in order[lo : lo + batch_size]]
        b = len(chunk)
        inputs = np.zeros((b, 6, crop_length))
        targets = np.zeros((b, 1, crop_length))
        ids = []
        for bi, (si, start) in enumerate(chunk):
            seg = split.train[si]
            n = len(seg)
            if n <= crop_length:
                inputs[bi, :, crop_length - n :] = seg.imu
                targets[bi, 0, crop_length - n :] = seg.target
            else:
                inputs[bi] = seg.imu[:, start : start + crop_length]
                targets[bi, 0] = seg.target[start : start + crop_length]
            ids.append(seg.segment_id)
        yield WindowBatch(inputs=inputs, targets=targets, crop_length=crop_length, segment_ids=ids)


# ---------------------------------------------------------------------------
# Unified segment dataset: one CSV of samples plus a JSON metadata sidecar.
# ---------------------------------------------------------------------------

_SEGMENT_HEADER = ("segment_id", "sample_idx", "emg_norm_env", "ax", "ay", "az", "gx", "gy", "gz")


def write_segments(segments: list[MergedSegment], path) -> None:
    """Serialize segments losslessly (17 significant digits per amplitude)."""
    if not segments:
        raise EmptyInputError("no segments to write")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SEGMENT_HEADER)
        for seg in segments:
            for i in range(len(seg)):
                writer.writerow(
                    [seg.segment_id, seg.bounds.start + i, f"{seg.target[i]:.17g}"]
                    + [f"{seg.imu[c, i]:.17g}" for c in range(6)]
                )
    sidecar = _sidecar_path(path)
    sidecar.write_text(
        json.dumps(
            {
                "fs": segments[0].meta.fs,
                "segments": [
                    {
                        "segment_id": seg.segment_id,
                        "subject": seg.meta.subject,
                        "motion": seg.meta.motion,
                        "day": seg.meta.day,
                        "rep_index": seg.meta.rep_index,
                        "start": seg.bounds.start,
                        "end": seg.bounds.end,
                        "peak": seg.bounds.peak,
                    }
                    for seg in segments
                ],
            },
            indent=2,
        )
        + "\n"
    )


def read_segments(path) -> list[MergedSegment]:
    """Inverse of write_segments; reproduces every field bit-exactly."""
    path = Path(path)
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        raise SchemaError(f"segment metadata sidecar not found: {sidecar}")
    info = json.loads(sidecar.read_text())
    fs = float(info["fs"])

    rows: dict[str, list[list[float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != _SEGMENT_HEADER:
            raise SchemaError(f"unexpected segment CSV header: {header}")
        for row in reader:
            rows.setdefault(row[0], []).append([float(v) for v in row[2:]])

    segments = []
    for entry in info["segments"]:
        seg_id = entry["segment_id"]
        if seg_id not in rows:
            raise SchemaError(f"segment {seg_id!r} listed in sidecar but absent from CSV")
        data = np.asarray(rows[seg_id], dtype=np.float64)
        bounds = dsp.SegmentBounds(int(entry["start"]), int(entry["end"]), int(entry["peak"]))
        if data.shape[0] != len(bounds):
            raise SchemaError(f"segment {seg_id!r} row count does not match its bounds")
        segments.append(
            MergedSegment(
                bounds=bounds,
                target=data[:, 0],
                imu=data[:, 1:].T,
                meta=SegmentMeta(
                    subject=entry["subject"],
                    motion=entry["motion"],
                    day=int(entry["day"]),
                    rep_index=int(entry["rep_index"]),
                    fs=fs,
                ),
            )
        )
    return segments
