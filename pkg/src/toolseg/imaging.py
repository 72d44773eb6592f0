"""Image loading, resampling, mask rasterization, and crop augmentation.

All geometry shares one convention: an image is sampled at pixel centers
(col + 0.5, row + 0.5), and resizing maps an output center to the source
coordinate ``(d + 0.5) * src/dst - 0.5``. Preprocessing center-crops the
source to the target aspect ratio before scaling, and mask rasterization
pushes region coordinates through the identical crop-and-scale transform
so images and masks stay aligned at the working resolution.
"""

from __future__ import annotations

import logging

import numpy as np
from PIL import Image, UnidentifiedImageError

from .annotations import AnnotatedImage, PolygonRegion, RectRegion
from .errors import ConfigError, DataError, ShapeError

logger = logging.getLogger(__name__)


def bilinear_resize(arr: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Resize (H, W) or (H, W, C) float data bilinearly to ``size`` = (h, w).

    Center-aligned sampling; when the output size equals the input size
    the result is exactly the input.
    """
    out_h, out_w = size
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"target size must be positive, got {size}")
    src_h, src_w = arr.shape[:2]
    arr = np.asarray(arr, dtype=np.float64 if arr.dtype == np.float64 else np.float32)

    def axis_coords(dst: int, src: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = (np.arange(dst) + 0.5) * (src / dst) - 0.5
        pos = np.clip(pos, 0.0, src - 1.0)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, src - 1)
        frac = (pos - lo).astype(arr.dtype)
        return lo, hi, frac

    y0, y1, fy = axis_coords(out_h, src_h)
    x0, x1, fx = axis_coords(out_w, src_w)

    rows0 = arr[y0]
    rows1 = arr[y1]
    fy = fy.reshape(-1, *([1] * (arr.ndim - 1)))
    rows = rows0 + fy * (rows1 - rows0)
    cols0 = rows[:, x0]
    cols1 = rows[:, x1]
    fx = fx.reshape(1, -1, *([1] * (arr.ndim - 2)))
    return cols0 + fx * (cols1 - cols0)


def nearest_resize(arr: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize for label data; preserves dtype exactly."""
    out_h, out_w = size
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"target size must be positive, got {size}")
    src_h, src_w = arr.shape[:2]
    ys = np.clip(np.floor((np.arange(out_h) + 0.5) * (src_h / out_h)), 0, src_h - 1).astype(np.int64)
    xs = np.clip(np.floor((np.arange(out_w) + 0.5) * (src_w / out_w)), 0, src_w - 1).astype(np.int64)
    return arr[np.ix_(ys, xs)]


def center_crop_box(src_h: int, src_w: int, target_h: int, target_w: int) -> tuple[int, int, int, int]:
    """Largest centered box of the target aspect ratio: (y0, x0, crop_h, crop_w)."""
    if src_w * target_h > src_h * target_w:
        crop_h = src_h
        crop_w = max(1, round(src_h * target_w / target_h))
    else:
        crop_w = src_w
        crop_h = max(1, round(src_w * target_h / target_w))
    y0 = (src_h - crop_h) // 2
    x0 = (src_w - crop_w) // 2
    return y0, x0, crop_h, crop_w


def load_and_preprocess(path, target: tuple[int, int]) -> np.ndarray:
    """Decode an RGB image, center-crop to the target aspect, resize, scale to [0, 1].

    Returns float32 (H, W, 3). Unreadable or undecodable files raise
    DataError carrying the path.
    """
    try:
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as exc:
        raise DataError(f"cannot load image {path}: {exc}") from exc
    return preprocess_array(rgb, target)


def preprocess_array(rgb: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ShapeError(f"expected (H, W, 3) image, got {rgb.shape}")
    th, tw = target
    y0, x0, ch, cw = center_crop_box(rgb.shape[0], rgb.shape[1], th, tw)
    cropped = rgb[y0 : y0 + ch, x0 : x0 + cw].astype(np.float32) / 255.0
    return bilinear_resize(cropped, (th, tw)).astype(np.float32)


def _fill_rect(mask: np.ndarray, x_lo: float, y_lo: float, x_hi: float, y_hi: float, value: int) -> None:
    """Fill pixels whose centers fall in the half-open box [x_lo, x_hi) x [y_lo, y_hi)."""
    h, w = mask.shape
    c0 = max(0, int(np.ceil(x_lo - 0.5)))
    c1 = min(w, int(np.ceil(x_hi - 0.5)))
    r0 = max(0, int(np.ceil(y_lo - 0.5)))
    r1 = min(h, int(np.ceil(y_hi - 0.5)))
    if c1 > c0 and r1 > r0:
        mask[r0:r1, c0:c1] = value


def _fill_polygon(mask: np.ndarray, points: np.ndarray, value: int) -> None:
    """Even-odd polygon fill sampled at pixel centers, vectorized over the bbox."""
    h, w = mask.shape
    xs, ys = points[:, 0], points[:, 1]
    c0 = max(0, int(np.floor(xs.min() - 0.5)))
    c1 = min(w, int(np.ceil(xs.max() + 0.5)))
    r0 = max(0, int(np.floor(ys.min() - 0.5)))
    r1 = min(h, int(np.ceil(ys.max() + 0.5)))
    if c1 <= c0 or r1 <= r0:
        return
    px = np.arange(c0, c1, dtype=np.float64) + 0.5
    py = np.arange(r0, r1, dtype=np.float64) + 0.5
    gx, gy = np.meshgrid(px, py)
    inside = np.zeros(gx.shape, dtype=bool)
    n = len(points)
    for i in range(n):
        x_i, y_i = xs[i], ys[i]
        x_j, y_j = xs[(i + 1) % n], ys[(i + 1) % n]
        if y_i == y_j:
            continue
        crosses = (y_i > gy) != (y_j > gy)
        x_at = (x_j - x_i) * (gy - y_i) / (y_j - y_i) + x_i
        inside ^= crosses & (gx < x_at)
    mask[r0:r1, c0:c1][inside] = value


def rasterize_mask(
    image: AnnotatedImage, dims: tuple[int, int], background_id: int
) -> np.ndarray:
    """Rasterize the image's regions into an int16 label mask at ``dims``.

    Pixels inside a region carry that region's class id, all others the
    background id. Rectangles fill the half-open span [x, x+w) x [y, y+h);
    polygons use the even-odd rule at pixel centers. Region coordinates
    are mapped through the same center-crop-and-scale geometry the image
    preprocessing applies, which reduces to plain proportional scaling
    whenever the aspect ratios already agree. Overlapping regions are
    resolved in favor of the later region, with a warning.
    """
    th, tw = dims
    if th < 1 or tw < 1:
        raise ShapeError(f"mask dims must be positive, got {dims}")
    y_off, x_off, crop_h, crop_w = center_crop_box(image.height, image.width, th, tw)
    sx = tw / crop_w
    sy = th / crop_h

    mask = np.full((th, tw), background_id, dtype=np.int16)
    for idx, region in enumerate(image.regions):
        before = None
        if idx > 0:
            before = mask.copy()
        if isinstance(region, RectRegion):
            x_lo = (region.x - x_off) * sx
            y_lo = (region.y - y_off) * sy
            x_hi = (region.x + region.width - x_off) * sx
            y_hi = (region.y + region.height - y_off) * sy
            _fill_rect(mask, x_lo, y_lo, x_hi, y_hi, region.class_id)
        elif isinstance(region, PolygonRegion):
            pts = np.array(
                [((x - x_off) * sx, (y - y_off) * sy) for x, y in region.points], dtype=np.float64
            )
            _fill_polygon(mask, pts, region.class_id)
        else:
            raise DataError(f"{image.image_id}: unsupported region type {type(region).__name__}")
        if before is not None:
            overwritten = (before != background_id) & (mask != before)
            if overwritten.any():
                logger.warning(
                    "%s: region %d overwrites %d pixels of an earlier region",
                    image.image_id,
                    idx,
                    int(overwritten.sum()),
                )
    return mask


def one_hot(mask: np.ndarray, num_channels: int) -> np.ndarray:
    """Expand an (H, W) label mask into a float32 (H, W, C) one-hot tensor."""
    if mask.min() < 0 or mask.max() >= num_channels:
        raise ShapeError(
            f"mask values span [{mask.min()}, {mask.max()}], outside [0, {num_channels})"
        )
    return (mask[..., None] == np.arange(num_channels, dtype=mask.dtype)).astype(np.float32)


def augment(
    image: np.ndarray,
    mask: np.ndarray,
    rng: np.random.Generator,
    scale_range: tuple[float, float] = (0.7, 1.0),
) -> tuple[np.ndarray, np.ndarray]:
    """Random crop of relative size drawn from ``scale_range``, resized back.

    The identical crop window is applied to image and mask; the image is
    resampled bilinearly and the mask nearest-neighbor. With scale range
    (1.0, 1.0) the output equals the input exactly.
    """
    lo, hi = scale_range
    if not (0.0 < lo <= hi <= 1.0):
        raise ConfigError(f"crop scale range must satisfy 0 < lo <= hi <= 1, got {scale_range}")
    if image.shape[:2] != mask.shape[:2]:
        raise ShapeError(f"image {image.shape[:2]} and mask {mask.shape[:2]} dims differ")
    h, w = image.shape[:2]
    scale = float(rng.uniform(lo, hi))
    crop_h = round(h * scale)
    crop_w = round(w * scale)
    if crop_h < 2 or crop_w < 2:
        raise ConfigError(
            f"degenerate crop {crop_h}x{crop_w} from scale {scale:.4f} of {h}x{w}"
        )
    y0 = int(rng.integers(0, h - crop_h + 1))
    x0 = int(rng.integers(0, w - crop_w + 1))
    img_crop = image[y0 : y0 + crop_h, x0 : x0 + crop_w]
    mask_crop = mask[y0 : y0 + crop_h, x0 : x0 + crop_w]
    return (
        bilinear_resize(img_crop, (h, w)).astype(image.dtype),
        nearest_resize(mask_crop, (h, w)),
    )
