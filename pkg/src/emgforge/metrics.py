"""Evaluation metrics: MSE, MAE, time-domain cosine, FFT cosine.

The FFT is an in-house iterative radix-2 decimation-in-time transform;
inputs are zero-padded to the next power of two. The spectral similarity
compares magnitude spectra over the non-redundant bins [0, n/2], DC
included by default (envelopes carry a large DC term; pass
include_dc=False to drop it).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, EmptyInputError, ShapeError


def next_pow2(n: int) -> int:
    if n < 1:
        raise EmptyInputError("transform length must be at least 1")
    return 1 << (int(n) - 1).bit_length()


@dataclass(frozen=True)
class Spectrum:
    """Unnormalized forward DFT bins of a zero-padded real sequence."""

    bins: np.ndarray
    n: int


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.intp)
    for i in range(1, n):
        rev[i] = (rev[i >> 1] >> 1) | ((i & 1) << (bits - 1))
    return rev


def _fft_pow2(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 DIT FFT; len(x) must be a power of two."""
    n = x.size
    out = np.asarray(x, dtype=np.complex128)[_bit_reverse_indices(n)]
    m = 2
    while m <= n:
        half = m // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / m)
        for start in range(0, n, m):
            top = out[start : start + half].copy()
            bot = out[start + half : start + m] * tw
            out[start : start + half] = top + bot
            out[start + half : start + m] = top - bot
        m <<= 1
    return out


def fft(x) -> Spectrum:
    """Forward DFT of a real sequence, zero-padded to the next power of two."""
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptyInputError("cannot transform an empty sequence")
    n = next_pow2(arr.size)
    padded = np.zeros(n, dtype=np.complex128)
    padded[: arr.size] = arr
    return Spectrum(_fft_pow2(padded), n)


def ifft(spectrum: Spectrum) -> np.ndarray:
    """Inverse DFT; returns the complex sequence of length spectrum.n."""
    conj = np.conj(spectrum.bins)
    return np.conj(_fft_pow2(conj)) / spectrum.n


def mse(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise EmptyInputError("cannot score empty sequences")
    return float(np.mean((a - b) ** 2))


def mae(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise EmptyInputError("cannot score empty sequences")
    return float(np.mean(np.abs(a - b)))


def cosine_sim(a, b) -> float:
    """Cosine similarity <a,b> / (|a||b|), in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine similarity undefined for zero-norm input")
    return float(np.dot(a, b) / (na * nb))


def fft_cosine_sim(a, b, include_dc: bool = True) -> float:
    """Cosine similarity between magnitude spectra over bins [0, n/2].

    Both sequences are zero-padded to the larger of their power-of-two
    lengths, so equal-length inputs share one transform size.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise EmptyInputError("cannot score empty sequences")
    if not np.any(a) or not np.any(b):
        raise DegenerateInputError("spectral similarity undefined for an all-zero signal")
    n = max(next_pow2(a.size), next_pow2(b.size))
    lo = 0 if include_dc else 1
    mag_a = np.abs(fft(np.pad(a, (0, n - a.size))).bins[lo : n // 2 + 1])
    mag_b = np.abs(fft(np.pad(b, (0, n - b.size))).bins[lo : n // 2 + 1])
    return cosine_sim(mag_a, mag_b)


METRIC_NAMES = ("mse", "mae", "cosine", "fft_cosine")
# Lower is better for the error metrics, higher for the similarities.
_HIGHER_IS_BETTER = {"mse": False, "mae": False, "cosine": True, "fft_cosine": True}


@dataclass(frozen=True)
class SegmentMetrics:
    segment_id: str
    mse: float
    mae: float
    cosine: float
    fft_cosine: float


@dataclass(frozen=True)
class MetricsReport:
    """Per-segment metric rows plus best/worst/average aggregates."""

    rows: tuple[SegmentMetrics, ...]

    def aggregate(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for name in METRIC_NAMES:
            values = [getattr(r, name) for r in self.rows]
            hi = _HIGHER_IS_BETTER[name]
            out[name] = {
                "best": max(values) if hi else min(values),
                "worst": min(values) if hi else max(values),
                "average": float(np.mean(values)),
            }
        return out

    def to_csv(self, path) -> None:
        agg = self.aggregate()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["segment_id", *METRIC_NAMES])
            for r in self.rows:
                writer.writerow(
                    [r.segment_id] + [f"{getattr(r, m):.17g}" for m in METRIC_NAMES]
                )
            for stat in ("best", "worst", "average"):
                writer.writerow([stat] + [f"{agg[m][stat]:.17g}" for m in METRIC_NAMES])

    def format_table(self) -> str:
        """Human-readable best/worst/average grid, metrics as rows."""
        agg = self.aggregate()
        labels = {
            "mse": "MSE",
            "mae": "MAE",
            "cosine": "Cosine Sim",
            "fft_cosine": "FFT Cosine",
        }
        lines = [f"{'Metric':<12}{'Best':>10}{'Worst':>10}{'Average':>10}"]
        for name in METRIC_NAMES:
            a = agg[name]
            lines.append(
                f"{labels[name]:<12}{a['best']:>10.4f}{a['worst']:>10.4f}{a['average']:>10.4f}"
            )
        return "\n".join(lines)


def report_from_pairs(pairs, include_dc: bool = True) -> MetricsReport:
    """Build a report from (segment_id, prediction, target) triples."""
    rows = []
    for seg_id, pred, target in pairs:
        rows.append(
            SegmentMetrics(
                segment_id=str(seg_id),
                mse=mse(pred, target),
                mae=mae(pred, target),
                cosine=cosine_sim(pred, target),
                fft_cosine=fft_cosine_sim(pred, target, include_dc=include_dc),
            )
        )
    if not rows:
        raise EmptyInputError("cannot build a report with no segments")
    return MetricsReport(tuple(rows))
