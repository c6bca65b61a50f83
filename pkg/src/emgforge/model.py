"""Dilated causal convolution regressor mapping 6-axis IMU to one EMG channel.

Architecture: 1x1 input projection, a stack of dilated causal blocks with
gated activations and residual + skip paths, a skip sum feeding a causal
sliding-window convolution for context aggregation, and a linear 1x1 output
head (no final nonlinearity, so amplitude is unbounded). Dilation doubles
per block. A streaming forward pass with per-layer ring buffers reproduces
the batch output sample by sample.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import CheckpointError, ConfigError, ShapeError, StreamStateError
from .tensor import (
    ConvKernel,
    Tensor,
    as_tensor,
    add,
    conv1d_causal,
    gated_activation,
    he_uniform_init,
    relu,
    scale_channels,
)

ACTIVATIONS = ("gated", "relu")


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of the network; dilation of block i is 2**i."""

    kernel_size: int = 3
    num_blocks: int = 6
    residual_channels: int = 32
    skip_channels: int = 32
    context_window: int = 16
    in_channels: int = 6
    out_channels: int = 1
    activation: str = "gated"

    def __post_init__(self):
        if self.kernel_size < 2:
            raise ConfigError(f"kernel_size must be >= 2, got {self.kernel_size}")
        if self.num_blocks < 1:
            raise ConfigError(f"num_blocks must be >= 1, got {self.num_blocks}")
        if self.context_window < 1:
            raise ConfigError(f"context_window must be >= 1, got {self.context_window}")
        if self.residual_channels < 1 or self.skip_channels < 1:
            raise ConfigError("channel widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    def dilations(self) -> list[int]:
        return [2**i for i in range(self.num_blocks)]


class ReceptiveField(NamedTuple):
    blocks: int
    total: int


def receptive_field(config: ModelConfig) -> ReceptiveField:
    """Past samples influencing one output.

    `blocks` counts the dilated stack alone: 1 + (k-1)(2^N - 1).
    `total` adds the causal context window: blocks + (w - 1).
    """
    blocks = 1 + (config.kernel_size - 1) * (2**config.num_blocks - 1)
    return ReceptiveField(blocks=blocks, total=blocks + config.context_window - 1)


@dataclass
class BlockWeights:
    dilated: ConvKernel
    residual: ConvKernel
    skip: ConvKernel


@dataclass
class ModelWeights:
    """All learnable arrays plus the fixed input normalizer.

    The normalizer (offset/scale per input channel) is set from training
    data and stored in the checkpoint so inference sees the same scaling.
    """

    config: ModelConfig
    input_offset: np.ndarray
    input_scale: np.ndarray
    input_proj: ConvKernel
    blocks: list[BlockWeights]
    context: ConvKernel
    output_proj: ConvKernel

    def named_kernels(self):
        yield "input_proj", self.input_proj
        for i, blk in enumerate(self.blocks):
            yield f"block{i}.dilated", blk.dilated
            yield f"block{i}.residual", blk.residual
            yield f"block{i}.skip", blk.skip
        yield "context", self.context
        yield "output_proj", self.output_proj

    def parameter_arrays(self) -> dict:
        out = {}
        for name, kern in self.named_kernels():
            out[f"{name}.weights"] = kern.weights
            out[f"{name}.bias"] = kern.bias
        return out

    def gradient_arrays(self) -> dict:
        out = {}
        for name, kern in self.named_kernels():
            gw = kern.grad_weights if kern.grad_weights is not None else np.zeros_like(kern.weights)
            gb = kern.grad_bias if kern.grad_bias is not None else np.zeros_like(kern.bias)
            out[f"{name}.weights"] = gw
            out[f"{name}.bias"] = gb
        return out

    def zero_grads(self) -> None:
        for _, kern in self.named_kernels():
            kern.zero_grad()

    def copy(self) -> "ModelWeights":
        return ModelWeights(
            config=self.config,
            input_offset=self.input_offset.copy(),
            input_scale=self.input_scale.copy(),
            input_proj=self.input_proj.copy(),
            blocks=[
                BlockWeights(b.dilated.copy(), b.residual.copy(), b.skip.copy())
                for b in self.blocks
            ],
            context=self.context.copy(),
            output_proj=self.output_proj.copy(),
        )


def init_weights(config: ModelConfig, seed: int = 0) -> ModelWeights:
    """Fan-in scaled uniform init, biases zero, identity input normalizer."""
    rng = np.random.default_rng(seed)
    c_res = config.residual_channels
    c_skip = config.skip_channels

    def kernel(c_out, c_in, k, dilation=1):
        return ConvKernel(he_uniform_init(rng, c_out, c_in, k), np.zeros(c_out), dilation)

    gate_mult = 2 if config.activation == "gated" else 1
    blocks = []
    for d in config.dilations():
        blocks.append(
            BlockWeights(
                dilated=kernel(gate_mult * c_res, c_res, config.kernel_size, d),
                residual=kernel(c_res, c_res, 1),
                skip=kernel(c_skip, c_res, 1),
            )
        )
    return ModelWeights(
        config=config,
        input_offset=np.zeros(config.in_channels),
        input_scale=np.ones(config.in_channels),
        input_proj=kernel(c_res, config.in_channels, 1),
        blocks=blocks,
        context=kernel(c_skip, c_skip, config.context_window),
        output_proj=kernel(config.out_channels, c_skip, 1),
    )


def _activate(pre: Tensor, activation: str) -> Tensor:
    return gated_activation(pre) if activation == "gated" else relu(pre)


def forward_parts(weights: ModelWeights, x) -> tuple[Tensor, Tensor, Tensor]:
    """Forward pass returning (skip_sum, context, output) tensors."""
    cfg = weights.config
    x = as_tensor(x)
    if x.data.shape[0] != cfg.in_channels:
        raise ShapeError(
            f"model expects {cfg.in_channels} input channels, got {x.data.shape[0]}"
        )
    z = conv1d_causal(
        scale_channels(x, weights.input_offset, weights.input_scale), weights.input_proj
    )
    skip_sum = None
    for blk in weights.blocks:
        g = _activate(conv1d_causal(z, blk.dilated), cfg.activation)
        s = conv1d_causal(g, blk.skip)
        skip_sum = s if skip_sum is None else add(skip_sum, s)
        z = add(z, conv1d_causal(g, blk.residual))
    context = conv1d_causal(skip_sum, weights.context)
    return skip_sum, context, conv1d_causal(context, weights.output_proj)


def forward(weights: ModelWeights, x) -> Tensor:
    """Full-sequence forward pass: [in_channels x T] -> [out_channels x T]."""
    return forward_parts(weights, x)[2]


class _RingBuffer:
    """Fixed-size history of channel vectors; reads lag samples into the past.

    Unwritten history reads as zero, matching the batch pass's left padding.
    """

    __slots__ = ("buf", "pos")

    def __init__(self, channels: int, capacity: int):
        self.buf = np.zeros((max(capacity, 1), channels)) if capacity > 0 else None
        self.pos = 0

    def push(self, v: np.ndarray) -> None:
        if self.buf is None:
            return
        self.buf[self.pos] = v
        self.pos = (self.pos + 1) % self.buf.shape[0]

    def read(self, lag: int) -> np.ndarray:
        return self.buf[(self.pos - lag) % self.buf.shape[0]]

    def reset(self) -> None:
        if self.buf is not None:
            self.buf[:] = 0.0
        self.pos = 0


class StreamState:
    """Per-layer ring buffers for sample-by-sample inference."""

    def __init__(self, config: ModelConfig):
        self.config = config
        k = config.kernel_size
        self.block_buffers = [
            _RingBuffer(config.residual_channels, (k - 1) * d) for d in config.dilations()
        ]
        self.context_buffer = _RingBuffer(config.skip_channels, config.context_window - 1)

    def reset(self) -> None:
        for buf in self.block_buffers:
            buf.reset()
        self.context_buffer.reset()


def forward_streaming(weights: ModelWeights, state: StreamState, sample) -> float:
    """One causal step; returns the prediction for the current sample.

    Feeding a sequence one sample at a time reproduces forward() on the
    full history; the state is updated in place.
    """
    cfg = weights.config
    if state.config != cfg:
        raise StreamStateError(
            f"stream state built for {state.config}, model expects {cfg}"
        )
    v = np.asarray(sample, dtype=np.float64).ravel()
    if v.shape != (cfg.in_channels,):
        raise ShapeError(f"expected a {cfg.in_channels}-vector sample, got shape {v.shape}")

    v = (v - weights.input_offset) * weights.input_scale
    z = weights.input_proj.weights[:, :, 0] @ v + weights.input_proj.bias

    k = cfg.kernel_size
    skip_sum = None
    for blk, buf in zip(weights.blocks, state.block_buffers):
        d = blk.dilated.dilation
        pre = blk.dilated.bias.copy()
        w = blk.dilated.weights
        for j in range(k):
            lag = (k - 1 - j) * d
            xj = z if lag == 0 else buf.read(lag)
            pre += w[:, :, j] @ xj
        buf.push(z)
        if cfg.activation == "gated":
            half = pre.shape[0] // 2
            g = np.tanh(pre[:half]) * _stable_sigmoid(pre[half:])
        else:
            g = np.maximum(pre, 0.0)
        s = blk.skip.weights[:, :, 0] @ g + blk.skip.bias
        skip_sum = s if skip_sum is None else skip_sum + s
        z = z + blk.residual.weights[:, :, 0] @ g + blk.residual.bias

    w_ctx = cfg.context_window
    pre = weights.context.bias.copy()
    for j in range(w_ctx):
        lag = w_ctx - 1 - j
        xj = skip_sum if lag == 0 else state.context_buffer.read(lag)
        pre += weights.context.weights[:, :, j] @ xj
    state.context_buffer.push(skip_sum)

    y = weights.output_proj.weights[:, :, 0] @ pre + weights.output_proj.bias
    return float(y[0])


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# Checkpoint format: magic + version, a UTF-8 header describing the config
# and a shape manifest, then the parameter blobs as little-endian float64
# in manifest order.
# ---------------------------------------------------------------------------

_MAGIC = b"EFWNET01"
_FORMAT_VERSION = 1

_CONFIG_FIELDS = (
    "kernel_size",
    "num_blocks",
    "residual_channels",
    "skip_channels",
    "context_window",
    "in_channels",
    "out_channels",
    "activation",
)


def _manifest_entries(weights: ModelWeights):
    yield "input_offset", weights.input_offset
    yield "input_scale", weights.input_scale
    for name, kern in weights.named_kernels():
        yield f"{name}.weights", kern.weights
        yield f"{name}.bias", kern.bias


def save_weights(weights: ModelWeights, path) -> None:
    lines = [f"format_version={_FORMAT_VERSION}"]
    for fname in _CONFIG_FIELDS:
        lines.append(f"config.{fname}={getattr(weights.config, fname)}")
    entries = list(_manifest_entries(weights))
    for name, arr in entries:
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"param {name} {dims}")
    header = ("\n".join(lines) + "\n").encode("utf-8")

    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for _, arr in entries:
            fh.write(arr.astype("<f8").tobytes())


def _parse_header(header: str) -> tuple[ModelConfig, list[tuple[str, tuple[int, ...]]]]:
    fields: dict = {}
    manifest: list[tuple[str, tuple[int, ...]]] = []
    version = None
    for line in header.strip().splitlines():
        if line.startswith("format_version="):
            version = int(line.split("=", 1)[1])
        elif line.startswith("config."):
            key, value = line[len("config.") :].split("=", 1)
            fields[key] = value if key == "activation" else int(value)
        elif line.startswith("param "):
            parts = line.split()
            manifest.append((parts[1], tuple(int(d) for d in parts[2:])))
        else:
            raise CheckpointError(f"unrecognized header line: {line!r}")
    if version != _FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    missing = [f for f in _CONFIG_FIELDS if f not in fields]
    if missing:
        raise CheckpointError(f"checkpoint header missing config fields: {missing}")
    return ModelConfig(**fields), manifest


def load_weights(path, expected_config: ModelConfig | None = None) -> ModelWeights:
    """Load a checkpoint; raises CheckpointError on truncation or mismatch."""
    with open(path, "rb") as fh:
        blob = fh.read()
    view = io.BytesIO(blob)
    magic = view.read(len(_MAGIC))
    if magic != _MAGIC:
        raise CheckpointError(f"not a model checkpoint (bad magic {magic!r})")
    raw_len = view.read(4)
    if len(raw_len) < 4:
        raise CheckpointError("truncated checkpoint: missing header length")
    (header_len,) = struct.unpack("<I", raw_len)
    header = view.read(header_len)
    if len(header) < header_len:
        raise CheckpointError("truncated checkpoint: incomplete header")
    config, manifest = _parse_header(header.decode("utf-8"))

    if expected_config is not None and config != expected_config:
        for fname in _CONFIG_FIELDS:
            have = getattr(config, fname)
            want = getattr(expected_config, fname)
            if have != want:
                raise CheckpointError(
                    f"checkpoint config mismatch on {fname!r}: file has {have}, expected {want}"
                )

    arrays = {}
    for name, shape in manifest:
        count = int(np.prod(shape)) if shape else 1
        raw = view.read(count * 8)
        if len(raw) < count * 8:
            raise CheckpointError(f"truncated checkpoint: blob for {name!r} incomplete")
        arrays[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)

    fresh = init_weights(config, seed=0)
    expected_names = [name for name, _ in _manifest_entries(fresh)]
    if expected_names != [name for name, _ in manifest]:
        raise CheckpointError("checkpoint manifest does not match the model layout")

    fresh.input_offset = arrays["input_offset"]
    fresh.input_scale = arrays["input_scale"]
    for name, kern in fresh.named_kernels():
        w = arrays[f"{name}.weights"]
        b = arrays[f"{name}.bias"]
        if w.shape != kern.weights.shape or b.shape != kern.bias.shape:
            raise CheckpointError(f"checkpoint shape mismatch for {name!r}")
        kern.weights = w
        kern.bias = b
    return fresh
