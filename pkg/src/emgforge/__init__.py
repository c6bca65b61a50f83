"""emgforge: synthesize normalized sEMG envelopes from 6-axis IMU motion.

Pipeline: Butterworth conditioning and peak-based segmentation of paired
EMG/IMU recordings, a dilated causal convolution regressor trained with
MSE and early stopping, four evaluation metrics, a synthetic data
generator for end-to-end verification, and a CLI tying it together.
"""

from . import cli, config, dataio, errors, metrics, model, signal, synthgen, tensor, train

__version__ = "0.1.0"

__all__ = [
    "cli",
    "config",
    "dataio",
    "errors",
    "metrics",
    "model",
    "signal",
    "synthgen",
    "tensor",
    "train",
    "__version__",
]
