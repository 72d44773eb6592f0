"""Training loop: Adam with bias correction, MSE loss on one-hot labels,
and a linear learning-rate decay that starts at ``lr0`` and reaches
exactly zero on the final iteration.

Each step samples ``batch_size`` images uniformly with replacement,
applies the random crop-resize augmentation, and performs one optimizer
update. Given a fixed seed the whole run is a deterministic function of
the data and configuration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .annotations import AnnotatedImage
from .errors import ConfigError, ShapeError, TrainingError
from .fileio import atomic_write_text
from .imaging import augment, load_and_preprocess, one_hot, rasterize_mask
from .model import UNet, save_checkpoint
from .taxonomy import ClassTaxonomy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.001
    total_iters: int = 15000
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    crop_scale: tuple[float, float] = (0.7, 1.0)
    grad_clip: float | None = None

    def __post_init__(self) -> None:
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be > 0, got {self.lr0}")
        if self.total_iters < 1:
            raise ConfigError(f"total_iters must be >= 1, got {self.total_iters}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0 <= self.beta1 < 1) or not (0 <= self.beta2 < 1):
            raise ConfigError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        lo, hi = self.crop_scale
        if not (0.0 < lo <= hi <= 1.0):
            raise ConfigError(f"crop_scale must satisfy 0 < lo <= hi <= 1, got {self.crop_scale}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError(f"grad_clip must be > 0 when set, got {self.grad_clip}")


def lr_at(iteration: int, config: TrainConfig) -> float:
    """Linear decay: lr0 at iteration 0, exactly 0.0 on the last iteration."""
    if not (0 <= iteration < config.total_iters):
        raise ConfigError(
            f"iteration {iteration} outside [0, {config.total_iters})"
        )
    if config.total_iters == 1:
        return config.lr0
    return config.lr0 * (1.0 - iteration / (config.total_iters - 1))


def mse_onehot_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean over every (batch, pixel, channel) entry of (pred - target)^2."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {tuple(pred.shape)} vs target {tuple(target.shape)}")
    return ((pred - target) ** 2).mean()


@dataclass
class AdamState:
    """First/second-moment accumulators, one per parameter, plus the step count."""

    m: list[torch.Tensor]
    v: list[torch.Tensor]
    t: int = 0


def init_adam_state(params: Sequence[torch.Tensor]) -> AdamState:
    return AdamState(
        m=[torch.zeros_like(p) for p in params],
        v=[torch.zeros_like(p) for p in params],
    )


def adam_step(
    params: Sequence[torch.Tensor],
    grads: Sequence[torch.Tensor],
    state: AdamState,
    lr: float,
    config: TrainConfig,
    names: Sequence[str] | None = None,
) -> tuple[Sequence[torch.Tensor], AdamState]:
    """One bias-corrected Adam update, applied to the parameters in place.

        m <- b1*m + (1-b1)*g        m_hat = m / (1 - b1^t)
        v <- b2*v + (1-b2)*g^2      v_hat = v / (1 - b2^t)
        p <- p - lr * m_hat / (sqrt(v_hat) + eps)
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(
            f"got {len(params)} params, {len(grads)} grads, {len(state.m)} state slots"
        )
    state.t += 1
    t = state.t
    b1, b2, eps = config.beta1, config.beta2, config.epsilon
    with torch.no_grad():
        for i, (p, g) in enumerate(zip(params, grads)):
            if g.shape != p.shape:
                raise ShapeError(f"grad shape {tuple(g.shape)} vs param {tuple(p.shape)}")
            if not torch.isfinite(g).all():
                label = names[i] if names is not None else f"parameter[{i}]"
                raise TrainingError(f"non-finite gradient in {label}")
            state.m[i].mul_(b1).add_(g, alpha=1 - b1)
            state.v[i].mul_(b2).addcmul_(g, g, value=1 - b2)
            m_hat = state.m[i] / (1 - b1**t)
            v_hat = state.v[i] / (1 - b2**t)
            p.sub_(lr * m_hat / (v_hat.sqrt() + eps))
    return params, state


@dataclass
class PreparedSample:
    """One training image decoded to the working resolution."""

    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    mask: np.ndarray  # (H, W) int16 class ids


def prepare_samples(
    dataset: Sequence[AnnotatedImage],
    taxonomy: ClassTaxonomy,
    dims: tuple[int, int],
) -> list[PreparedSample]:
    return [
        PreparedSample(
            image=load_and_preprocess(img.path, dims),
            mask=rasterize_mask(img, dims, taxonomy.background_id),
        )
        for img in dataset
    ]


@dataclass
class TrainResult:
    model: UNet
    losses: list[float] = field(default_factory=list)


def train(
    model: UNet,
    dataset: Sequence[AnnotatedImage],
    taxonomy: ClassTaxonomy,
    config: TrainConfig,
    dims: tuple[int, int] | None = None,
    samples: Sequence[PreparedSample] | None = None,
    checkpoint_every: int | None = None,
    checkpoint_dir: str | Path | None = None,
    log_every: int = 50,
) -> TrainResult:
    """Run the full iteration budget and return the model plus loss curve.

    ``samples`` may carry pre-decoded images to skip redundant I/O; when
    absent they are prepared from ``dataset`` at ``dims`` (which defaults
    to the model's input resolution).
    """
    if samples is None:
        if not dataset:
            raise ConfigError("training split is empty")
        dims = dims or (model.config.height, model.config.width)
        samples = prepare_samples(dataset, taxonomy, dims)
    if not samples:
        raise ConfigError("training split is empty")

    num_classes = model.config.num_classes
    rng = np.random.default_rng(config.seed)
    params = [p for p in model.parameters()]
    names = [n for n, _ in model.named_parameters()]
    state = init_adam_state(params)
    losses: list[float] = []

    model.train()
    for iteration in range(config.total_iters):
        indices = rng.integers(0, len(samples), size=config.batch_size)
        batch_imgs = np.empty(
            (config.batch_size, *samples[0].image.shape), dtype=np.float32
        )
        batch_targets = np.empty(
            (config.batch_size, *samples[0].mask.shape, num_classes), dtype=np.float32
        )
        for slot, idx in enumerate(indices):
            sample = samples[idx]
            img, mask = augment(sample.image, sample.mask, rng, config.crop_scale)
            batch_imgs[slot] = img
            batch_targets[slot] = one_hot(mask, num_classes)

        x = torch.from_numpy(batch_imgs).to(model.config.torch_dtype).permute(0, 3, 1, 2)
        target = torch.from_numpy(batch_targets).to(model.config.torch_dtype).permute(0, 3, 1, 2)

        model.zero_grad(set_to_none=True)
        loss = mse_onehot_loss(model(x), target)
        loss_value = float(loss.detach())
        if not np.isfinite(loss_value):
            raise TrainingError(f"non-finite loss {loss_value} at iteration {iteration}")
        loss.backward()
        grads = [p.grad if p.grad is not None else torch.zeros_like(p) for p in params]
        if config.grad_clip is not None:
            total = torch.sqrt(sum((g**2).sum() for g in grads))
            if total > config.grad_clip:
                scale = config.grad_clip / float(total)
                grads = [g * scale for g in grads]
        adam_step(params, grads, state, lr_at(iteration, config), config, names=names)
        losses.append(loss_value)

        if log_every and iteration % log_every == 0:
            logger.info("iter %d/%d loss %.6f", iteration, config.total_iters, loss_value)
        if checkpoint_every and checkpoint_dir and (iteration + 1) % checkpoint_every == 0:
            save_checkpoint(model, Path(checkpoint_dir) / f"iter{iteration + 1:06d}.ckpt")

    return TrainResult(model=model, losses=losses)


def write_loss_curve(losses: Sequence[float], path: str | Path) -> None:
    """Two-column text file: iteration index and loss value."""
    lines = [f"{i}\t{loss:.10e}" for i, loss in enumerate(losses)]
    atomic_write_text(path, "\n".join(lines) + "\n")
