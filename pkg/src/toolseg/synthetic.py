"""Synthetic shape dataset for desk-scale runs of the full pipeline.

Each class is one parametric shape (bar, disk, L-shape, ring, cross,
triangle, diamond, frame) rendered in a metallic gray over a textured
green-noise background that mimics a cloth-covered supply table. Every
image holds a single shape with randomized position, scale, and
rotation; the emitted annotations are VIA-style records whose rectangle
regions are the shapes' tight bounding boxes, so downstream parsing,
rasterization, training, and scoring exercise exactly the same code
paths as a photographic dataset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError
from .fileio import atomic_write_bytes, atomic_write_text
from .imaging import bilinear_resize
from .taxonomy import ClassTaxonomy

SHAPE_CLASSES: tuple[str, ...] = (
    "Bar",
    "Disk",
    "L-Shape",
    "Ring",
    "Cross",
    "Triangle",
    "Diamond",
    "Frame",
)


def _local_frame(
    dims: tuple[int, int], cx: float, cy: float, theta: float
) -> tuple[np.ndarray, np.ndarray]:
    h, w = dims
    ys, xs = np.mgrid[0:h, 0:w]
    dx = xs + 0.5 - cx
    dy = ys + 0.5 - cy
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    u = dx * cos_t + dy * sin_t
    v = -dx * sin_t + dy * cos_t
    return u, v


def _shape_mask(
    kind: str, dims: tuple[int, int], cx: float, cy: float, radius: float, theta: float
) -> np.ndarray:
    """Boolean mask of one shape; every shape fits inside the circumradius."""
    u, v = _local_frame(dims, cx, cy, theta)
    r = radius
    if kind == "Bar":
        length, thick = 1.9 * r, 0.66 * r
        return (np.abs(u) <= length / 2) & (np.abs(v) <= thick / 2)
    if kind == "Disk":
        return u**2 + v**2 <= (0.9 * r) ** 2
    if kind == "L-Shape":
        side = 1.4 * r
        thick = 0.55 * side
        inside = (np.abs(u) <= side / 2) & (np.abs(v) <= side / 2)
        return inside & ((u <= -side / 2 + thick) | (v <= -side / 2 + thick))
    if kind == "Ring":
        outer = 0.9 * r
        inner = 0.5 * outer
        d2 = u**2 + v**2
        return (d2 <= outer**2) & (d2 >= inner**2)
    if kind == "Cross":
        span, thick = 1.6 * r, 0.64 * r
        horiz = (np.abs(u) <= span / 2) & (np.abs(v) <= thick / 2)
        vert = (np.abs(v) <= span / 2) & (np.abs(u) <= thick / 2)
        return horiz | vert
    if kind == "Triangle":
        # isoceles, apex up in the local frame; width tapers linearly to 0
        half_base, height = 0.85 * r, 1.4 * r
        half_width = half_base * (1.0 - (v + height / 2) / height)
        return (v >= -height / 2) & (v <= height / 2) & (np.abs(u) <= half_width)
    if kind == "Diamond":
        return np.abs(u) + np.abs(v) <= 0.95 * r
    if kind == "Frame":
        side = 1.4 * r
        hole = side * 0.4
        inside = (np.abs(u) <= side / 2) & (np.abs(v) <= side / 2)
        return inside & ~((np.abs(u) <= hole / 2) & (np.abs(v) <= hole / 2))
    raise ConfigError(f"unknown shape kind {kind!r}")


# rotation range per shape, radians; kept mild for box-hugging shapes so
# the tight bounding box stays a reasonable proxy for the shape area
_ROTATION = {
    "Bar": 0.26,
    "Disk": 0.0,
    "L-Shape": 0.21,
    "Ring": 0.0,
    "Cross": 0.26,
    "Triangle": 0.35,
    "Diamond": 0.79,
    "Frame": 0.26,
}


def _render_image(
    kind: str, class_index: int, dims: tuple[int, int], rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """One (image_uint8, shape_mask) pair with randomized geometry and texture."""
    h, w = dims
    # textured green background: per-image tint, coarse blotches, fine grain
    tint = np.array([0.15, 0.38, 0.22]) + rng.uniform(-0.03, 0.03, size=3)
    coarse = bilinear_resize(rng.normal(0.0, 1.0, size=(8, 8, 3)), (h, w)) * 0.03
    fine = rng.normal(0.0, 1.0, size=(h, w, 3)) * 0.015
    background = tint.reshape(1, 1, 3) + coarse + fine

    radius = rng.uniform(0.24, 0.34) * min(h, w)
    cx = rng.uniform(0.38, 0.62) * w
    cy = rng.uniform(0.38, 0.62) * h
    max_rot = _ROTATION[kind]
    theta = float(rng.uniform(-max_rot, max_rot)) if max_rot else 0.0
    mask = _shape_mask(kind, dims, cx, cy, radius, theta)

    # per-class tone ladder (instruments differ in albedo as well as
    # outline); jitter keeps tones noisy but class-separable
    gray = 0.36 + 0.11 * class_index + rng.uniform(-0.02, 0.02)
    shade = (np.arange(h, dtype=np.float64) / h - 0.5).reshape(-1, 1, 1) * 0.04
    grain = rng.normal(0.0, 1.0, size=(h, w, 1)) * 0.02
    steel = np.array([gray, gray, min(1.0, gray + 0.04)]).reshape(1, 1, 3) + shade + grain

    img = np.where(mask[..., None], steel, background)
    return (np.rint(np.clip(img, 0.0, 1.0) * 255.0)).astype(np.uint8), mask


def _slug(name: str) -> str:
    return name.lower().replace(" ", "_").replace("-", "_")


@dataclass(frozen=True)
class SyntheticDataset:
    annotations_path: Path
    images_dir: Path
    masks_dir: Path
    taxonomy_path: Path
    class_names: tuple[str, ...]


def generate_synthetic_dataset(
    num_classes: int,
    images_per_class: int,
    dims: tuple[int, int],
    seed: int,
    out_dir: str | Path,
) -> SyntheticDataset:
    """Write images, VIA-style annotations, and a class list under ``out_dir``.

    The same seed reproduces the dataset byte for byte. Regions are the
    tight bounding boxes of the rendered shapes, so every nonbackground
    pixel of a shape lies inside its annotated region. The true shape
    masks land under ``masks/`` for auditing; the pipeline itself only
    consumes the annotation boxes.
    """
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    if num_classes > len(SHAPE_CLASSES):
        raise ConfigError(
            f"shape library holds {len(SHAPE_CLASSES)} classes, requested {num_classes}"
        )
    if images_per_class < 2:
        raise ConfigError(f"images_per_class must be >= 2, got {images_per_class}")
    h, w = dims
    if h < 16 or w < 16:
        raise ConfigError(f"dims too small to place shapes: {dims}")

    out_path = Path(out_dir)
    images_dir = out_path / "images"
    masks_dir = out_path / "masks"
    images_dir.mkdir(parents=True, exist_ok=True)
    masks_dir.mkdir(parents=True, exist_ok=True)
    class_names = SHAPE_CLASSES[:num_classes]
    rng = np.random.default_rng(seed)

    records: dict[str, dict] = {}
    for class_index, class_name in enumerate(class_names):
        for index in range(images_per_class):
            img, mask = _render_image(class_name, class_index, dims, rng)
            rows, cols = np.nonzero(mask)
            assert rows.size > 0, "shape rendering produced an empty mask"
            x0, y0 = int(cols.min()), int(rows.min())
            box_w = int(cols.max()) - x0 + 1
            box_h = int(rows.max()) - y0 + 1

            filename = f"{_slug(class_name)}_{index:03d}.png"
            buf = _encode_png(img)
            atomic_write_bytes(images_dir / filename, buf)
            atomic_write_bytes(
                masks_dir / filename, _encode_gray_png(mask.astype(np.uint8) * 255)
            )
            records[f"{filename}{len(buf)}"] = {
                "filename": filename,
                "size": len(buf),
                "regions": [
                    {
                        "shape_attributes": {
                            "name": "rect",
                            "x": x0,
                            "y": y0,
                            "width": box_w,
                            "height": box_h,
                        },
                        "region_attributes": {"class": class_name},
                    }
                ],
                "file_attributes": {"width": w, "height": h},
            }

    annotations_path = out_path / "annotations.json"
    atomic_write_text(annotations_path, json.dumps(records, indent=2) + "\n")
    taxonomy_path = out_path / "classes.txt"
    atomic_write_text(taxonomy_path, "\n".join(class_names) + "\n")
    return SyntheticDataset(
        annotations_path=annotations_path,
        images_dir=images_dir,
        masks_dir=masks_dir,
        taxonomy_path=taxonomy_path,
        class_names=class_names,
    )


def synthetic_taxonomy(num_classes: int) -> ClassTaxonomy:
    if not (2 <= num_classes <= len(SHAPE_CLASSES)):
        raise ConfigError(f"num_classes must be in [2, {len(SHAPE_CLASSES)}]")
    return ClassTaxonomy(SHAPE_CLASSES[:num_classes])


def _encode_png(img: np.ndarray) -> bytes:
    import io

    buf = io.BytesIO()
    Image.fromarray(img, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def _encode_gray_png(img: np.ndarray) -> bytes:
    import io

    buf = io.BytesIO()
    Image.fromarray(img, mode="L").save(buf, format="PNG")
    return buf.getvalue()
