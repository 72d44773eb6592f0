"""Confidence heatmaps: a class-probability channel rendered through a
cool-to-hot colormap and alpha-blended over the source image.

The default colormap interpolates linearly through five control points,
blue at probability 0 through cyan, green, and yellow to red at 1.
Rendering is pure, so identical inputs produce byte-identical PNGs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, ShapeError
from .fileio import atomic_write_bytes


@dataclass(frozen=True)
class Colormap:
    """Piecewise-linear scalar-to-RGB map on [0, 1]."""

    points: tuple[tuple[float, tuple[float, float, float]], ...]

    def __post_init__(self) -> None:
        stops = [p[0] for p in self.points]
        if len(stops) < 2 or stops != sorted(set(stops)):
            raise ConfigError("colormap control points must be strictly increasing")
        if stops[0] != 0.0 or stops[-1] != 1.0:
            raise ConfigError("colormap must anchor 0.0 and 1.0")
        for _, rgb in self.points:
            if len(rgb) != 3 or any(not (0.0 <= c <= 1.0) for c in rgb):
                raise ConfigError(f"colormap colors must be RGB in [0, 1], got {rgb}")

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Scalar array -> float RGB array with one extra trailing axis of 3."""
        vals = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
        stops = np.array([p[0] for p in self.points])
        colors = np.array([p[1] for p in self.points])
        out = np.empty(vals.shape + (3,), dtype=np.float64)
        for ch in range(3):
            out[..., ch] = np.interp(vals, stops, colors[:, ch])
        return out


DEFAULT_COLORMAP = Colormap(
    points=(
        (0.0, (0.0, 0.0, 1.0)),
        (0.25, (0.0, 1.0, 1.0)),
        (0.5, (0.0, 1.0, 0.0)),
        (0.75, (1.0, 1.0, 0.0)),
        (1.0, (1.0, 0.0, 0.0)),
    )
)


def render_heatmap(
    prob_map: np.ndarray,
    class_id: int,
    base_image: np.ndarray,
    alpha: float = 0.6,
    colormap: Colormap = DEFAULT_COLORMAP,
) -> np.ndarray:
    """Blend colormap(probability) over the base image; returns uint8 (H, W, 3).

    ``base_image`` is float RGB in [0, 1] with the same spatial dims as
    the probability map. The blend weight ``alpha`` applies uniformly.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    if prob_map.ndim != 3:
        raise ShapeError(f"expected (H, W, C) probability map, got {prob_map.shape}")
    if not (0 <= class_id < prob_map.shape[2]):
        raise ShapeError(f"class id {class_id} outside [0, {prob_map.shape[2]})")
    if base_image.shape[:2] != prob_map.shape[:2] or base_image.shape[2] != 3:
        raise ShapeError(
            f"base image {base_image.shape} does not match map {prob_map.shape[:2]} + (3,)"
        )
    heat = colormap.apply(prob_map[:, :, class_id])
    blended = alpha * heat + (1.0 - alpha) * base_image.astype(np.float64)
    return np.rint(np.clip(blended, 0.0, 1.0) * 255.0).astype(np.uint8)


def render_value_heatmap(
    values: np.ndarray,
    base_image: np.ndarray,
    alpha: float = 0.6,
    colormap: Colormap = DEFAULT_COLORMAP,
) -> np.ndarray:
    """Same blend for an arbitrary (H, W) scalar field in [0, 1]."""
    return render_heatmap(values[..., None], 0, base_image, alpha, colormap)


def heatmap_filename(image_id: str, class_name: str) -> str:
    stem = Path(image_id).stem
    return f"{stem}_{class_name}.png"


def save_heatmap_png(pixels: np.ndarray, path: str | Path) -> None:
    """Encode and atomically write an RGB uint8 array as PNG."""
    if pixels.dtype != np.uint8 or pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ShapeError(f"expected uint8 (H, W, 3) pixels, got {pixels.dtype} {pixels.shape}")
    import io

    buf = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())
