"""Configurable U-Net with a per-pixel channel-wise softmax head.

Topology: ``depth`` contracting stages (two 3x3 convolutions with ReLU,
then 2x2 max pooling, feature count doubling per stage), a double-conv
bottleneck, and a symmetric expanding path (nearest-neighbor upsample,
3x3 convolution, skip concatenation with the matching encoder stage,
double convolution), finished by a 1x1 convolution to ``num_classes``
channels and a softmax across channels at every pixel. All 3x3
convolutions pad by 1 so spatial dimensions are preserved within each
stage.

Checkpoints use a versioned binary container of named float32 tensors;
see ``save_checkpoint`` for the byte layout.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, DataError, ShapeError
from .fileio import atomic_write_bytes

CHECKPOINT_MAGIC = b"TSCK"
CHECKPOINT_VERSION = 1

# state_dict name prefixes belonging to the contracting path (the part
# load_encoder_weights replaces); everything else is decoder or head.
ENCODER_PREFIXES = ("encoders.", "bottleneck.")


@dataclass(frozen=True)
class UNetConfig:
    height: int
    width: int
    num_classes: int
    depth: int = 4
    base_channels: int = 16
    in_channels: int = 3
    init_seed: int = 0
    batch_norm: bool = False
    dtype: str = "float32"

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        stride = 2**self.depth
        if self.height % stride or self.width % stride:
            raise ConfigError(
                f"input {self.height}x{self.width} not divisible by 2^depth = {stride}"
            )
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32


@dataclass(frozen=True)
class LayerSpec:
    """One convolution in forward order, for parameter accounting."""

    name: str
    kernel: int
    in_channels: int
    out_channels: int

    @property
    def param_count(self) -> int:
        return self.kernel * self.kernel * self.in_channels * self.out_channels + self.out_channels


class _DoubleConv(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, batch_norm: bool) -> None:
        super().__init__()
        layers: list[nn.Module] = [nn.Conv2d(in_ch, out_ch, 3, padding=1)]
        if batch_norm:
            layers.append(nn.BatchNorm2d(out_ch))
        layers.append(nn.ReLU(inplace=True))
        layers.append(nn.Conv2d(out_ch, out_ch, 3, padding=1))
        if batch_norm:
            layers.append(nn.BatchNorm2d(out_ch))
        layers.append(nn.ReLU(inplace=True))
        self.block = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.block(x)
        assert out.shape[-2:] == x.shape[-2:], "double conv must preserve spatial dims"
        return out


class UNet(nn.Module):
    """Encoder-decoder network emitting per-pixel class probabilities."""

    def __init__(self, config: UNetConfig) -> None:
        super().__init__()
        self.config = config
        base, depth = config.base_channels, config.depth

        self.encoders = nn.ModuleList()
        ch = config.in_channels
        for stage in range(depth):
            self.encoders.append(_DoubleConv(ch, base * 2**stage, config.batch_norm))
            ch = base * 2**stage
        self.bottleneck = _DoubleConv(ch, ch * 2, config.batch_norm)

        self.upconvs = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for stage in reversed(range(depth)):
            up_in = base * 2 ** (stage + 1)
            self.upconvs.append(nn.Conv2d(up_in, base * 2**stage, 3, padding=1))
            self.decoders.append(_DoubleConv(base * 2 ** (stage + 1), base * 2**stage, config.batch_norm))
        self.head = nn.Conv2d(base, config.num_classes, 1)
        self.pool = nn.MaxPool2d(2)

        self.to(config.torch_dtype)
        self._init_parameters(config.init_seed)
        # NHWC layout is markedly faster for CPU convolutions and is used
        # consistently so repeated runs stay bit-identical
        self.to(memory_format=torch.channels_last)

    def _init_parameters(self, seed: int) -> None:
        """He fan-in normal for conv weights, zero biases, seeded."""
        gen = torch.Generator().manual_seed(seed)
        for module in self.modules():
            if isinstance(module, nn.Conv2d):
                fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
                std = math.sqrt(2.0 / fan_in)
                with torch.no_grad():
                    module.weight.copy_(
                        torch.randn(module.weight.shape, generator=gen, dtype=torch.float64) * std
                    )
                    module.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(N, in_channels, H, W) -> (N, num_classes, H, W) probabilities."""
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ShapeError(
                f"expected (N, {self.config.in_channels}, H, W) input, got {tuple(x.shape)}"
            )
        if x.shape[2] != self.config.height or x.shape[3] != self.config.width:
            raise ShapeError(
                f"expected {self.config.height}x{self.config.width} input, "
                f"got {x.shape[2]}x{x.shape[3]}"
            )
        x = x.contiguous(memory_format=torch.channels_last)
        skips = []
        for encoder in self.encoders:
            x = encoder(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for upconv, decoder, skip in zip(self.upconvs, self.decoders, reversed(skips)):
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = upconv(x)
            assert x.shape[-2:] == skip.shape[-2:], "upsample must restore the skip resolution"
            x = decoder(torch.cat([x, skip], dim=1))
        return torch.softmax(self.head(x), dim=1)

    @torch.no_grad()
    def predict(self, images: np.ndarray, batch_size: int = 16) -> np.ndarray:
        """(N, H, W, 3) float array in [0, 1] -> (N, H, W, C) probability maps."""
        if images.ndim != 4 or images.shape[3] != self.config.in_channels:
            raise ShapeError(f"expected (N, H, W, {self.config.in_channels}), got {images.shape}")
        self.eval()
        outputs = []
        for start in range(0, len(images), batch_size):
            chunk = images[start : start + batch_size]
            x = torch.from_numpy(np.ascontiguousarray(chunk)).to(self.config.torch_dtype)
            probs = self.forward(x.permute(0, 3, 1, 2))
            outputs.append(probs.permute(0, 2, 3, 1).numpy())
        return np.concatenate(outputs, axis=0)

    def layer_specs(self) -> list[LayerSpec]:
        """Every convolution in forward order, for hand-checking parameter counts."""
        specs = []
        for name, module in self.named_modules():
            if isinstance(module, nn.Conv2d):
                specs.append(
                    LayerSpec(name, module.kernel_size[0], module.in_channels, module.out_channels)
                )
        return specs


def build_unet(config: UNetConfig) -> UNet:
    return UNet(config)


def _state_arrays(model: UNet) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}


# self-description tensor: geometry needed to rebuild the module before
# loading weights (height, width, depth, base, in_channels, classes, bn)
CONFIG_TENSOR = "__config__"


def _config_array(config: UNetConfig) -> np.ndarray:
    return np.array(
        [
            config.height,
            config.width,
            config.depth,
            config.base_channels,
            config.in_channels,
            config.num_classes,
            1.0 if config.batch_norm else 0.0,
        ],
        dtype=np.float32,
    )


def config_from_checkpoint(tensors: Mapping[str, np.ndarray]) -> UNetConfig:
    if CONFIG_TENSOR not in tensors:
        raise DataError(f"checkpoint lacks the {CONFIG_TENSOR} tensor; cannot rebuild the model")
    vals = tensors[CONFIG_TENSOR]
    if vals.shape != (7,):
        raise DataError(f"malformed {CONFIG_TENSOR} tensor of shape {vals.shape}")
    return UNetConfig(
        height=int(vals[0]),
        width=int(vals[1]),
        depth=int(vals[2]),
        base_channels=int(vals[3]),
        in_channels=int(vals[4]),
        num_classes=int(vals[5]),
        batch_norm=bool(vals[6]),
    )


def model_from_checkpoint(path: str | Path) -> UNet:
    """Rebuild a UNet from a self-describing checkpoint and load its weights."""
    tensors = read_checkpoint(path)
    model = UNet(config_from_checkpoint(tensors))
    return load_weights(model, tensors)


def save_checkpoint(model: UNet, path: str | Path) -> None:
    """Write model parameters to a versioned binary container.

    Layout (all integers little-endian): magic ``TSCK``, u32 version,
    u32 tensor count, then per tensor: u16 name length, UTF-8 name,
    u8 ndim, u32 dims, and the row-major float32 data. A reserved
    ``__config__`` tensor records the model geometry so checkpoints can
    be loaded without outside configuration.
    """
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    arrays = {CONFIG_TENSOR: _config_array(model.config)}
    arrays.update(_state_arrays(model))
    chunks.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    atomic_write_bytes(path, b"".join(chunks))


def read_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    """Read a checkpoint container back into named float32 arrays."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    view = memoryview(blob)
    offset = 0

    def take(n: int) -> memoryview:
        nonlocal offset
        if offset + n > len(view):
            raise DataError(f"checkpoint {path} truncated at byte {offset}")
        chunk = view[offset : offset + n]
        offset += n
        return chunk

    if bytes(take(4)) != CHECKPOINT_MAGIC:
        raise DataError(f"{path} is not a toolseg checkpoint (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    (count,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        data = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims)
        tensors[name] = data.copy()
    if offset != len(view):
        raise DataError(f"checkpoint {path} has {len(view) - offset} trailing bytes")
    return tensors


def load_weights(model: UNet, source: str | Path | Mapping[str, np.ndarray]) -> UNet:
    """Replace every model parameter from a checkpoint file or tensor dict."""
    tensors = read_checkpoint(source) if isinstance(source, (str, Path)) else dict(source)
    tensors.pop(CONFIG_TENSOR, None)
    state = model.state_dict()
    for name, current in state.items():
        if name not in tensors:
            raise DataError(f"checkpoint is missing tensor {name!r}")
        if tuple(tensors[name].shape) != tuple(current.shape):
            raise DataError(
                f"shape mismatch for {name!r}: checkpoint {tuple(tensors[name].shape)} "
                f"vs model {tuple(current.shape)}"
            )
    with torch.no_grad():
        for name, current in state.items():
            current.copy_(torch.from_numpy(tensors[name].astype(np.float32)))
    model.load_state_dict(state)
    return model


def load_encoder_weights(model: UNet, source: str | Path | Mapping[str, np.ndarray]) -> UNet:
    """Replace contracting-path parameters only; the decoder and head stay untouched.

    The contracting path is every tensor under the ``encoders.`` and
    ``bottleneck.`` prefixes. Missing tensors or shape mismatches raise
    DataError naming the first offending layer.
    """
    tensors = read_checkpoint(source) if isinstance(source, (str, Path)) else dict(source)
    state = model.state_dict()
    encoder_names = [n for n in state if n.startswith(ENCODER_PREFIXES)]
    for name in encoder_names:
        if name not in tensors:
            raise DataError(f"checkpoint is missing encoder tensor {name!r}")
        if tuple(tensors[name].shape) != tuple(state[name].shape):
            raise DataError(
                f"shape mismatch for {name!r}: checkpoint {tuple(tensors[name].shape)} "
                f"vs model {tuple(state[name].shape)}"
            )
    with torch.no_grad():
        for name in encoder_names:
            state[name].copy_(torch.from_numpy(tensors[name].astype(np.float32)))
    model.load_state_dict(state)
    return model
