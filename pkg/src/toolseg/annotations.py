"""Annotation ingestion: VIA-style JSON documents and the dataset manifest.

The parser accepts both layouts the VGG Image Annotator produces: the
project file (regions under a top-level ``_via_img_metadata`` mapping)
and the plain annotation export (the same mapping at the top level).
Each record must carry its regions as ``shape_attributes`` of kind
``rect`` (x, y, width, height) or ``polygon`` (all_points_x,
all_points_y) plus a region attribute naming the instrument class.

Image dimensions are taken from ``file_attributes`` keys ``width`` and
``height`` when present, otherwise from the image file header under
``images_dir``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

from PIL import Image, UnidentifiedImageError

from .errors import DataError
from .fileio import atomic_write_text
from .taxonomy import ClassTaxonomy

logger = logging.getLogger(__name__)

# region_attributes keys probed, in order, for the class label.
CLASS_ATTRIBUTE_KEYS = ("class", "label", "name", "instrument", "tool", "category", "type")

MANIFEST_HEADER = "# toolseg-manifest v1\tid\tpath\tclass\tregion_digest"


@dataclass(frozen=True)
class RectRegion:
    """Axis-aligned box; fills the half-open pixel span [x, x+w) x [y, y+h)."""

    x: float
    y: float
    width: float
    height: float
    class_id: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise DataError(
                f"rectangle must have positive extent, got {self.width}x{self.height}"
            )

    def bbox(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.x + self.width, self.y + self.height)

    def canonical(self) -> str:
        return f"rect:{self.x:.4f}:{self.y:.4f}:{self.width:.4f}:{self.height:.4f}:{self.class_id}"


@dataclass(frozen=True)
class PolygonRegion:
    """Simple polygon filled by the even-odd rule at pixel centers."""

    points: tuple[tuple[float, float], ...]
    class_id: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple((float(x), float(y)) for x, y in self.points))
        if len(self.points) < 3:
            raise DataError(f"polygon needs at least 3 vertices, got {len(self.points)}")

    def bbox(self) -> tuple[float, float, float, float]:
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        return (min(xs), min(ys), max(xs), max(ys))

    def canonical(self) -> str:
        pts = ";".join(f"{x:.4f},{y:.4f}" for x, y in self.points)
        return f"poly:{pts}:{self.class_id}"


Region = Union[RectRegion, PolygonRegion]


@dataclass(frozen=True)
class AnnotatedImage:
    """One labeled photograph: a single instrument plus its region(s)."""

    image_id: str
    path: Path
    width: int
    height: int
    regions: tuple[Region, ...]
    truth_class: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "path", Path(self.path))
        object.__setattr__(self, "regions", tuple(self.regions))
        if self.width <= 0 or self.height <= 0:
            raise DataError(f"{self.image_id}: image dimensions must be positive")
        for region in self.regions:
            if region.class_id != self.truth_class:
                raise DataError(
                    f"{self.image_id}: region class {region.class_id} "
                    f"differs from truth class {self.truth_class}"
                )

    def region_digest(self) -> str:
        blob = "|".join(r.canonical() for r in self.regions)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def _extract_class_name(region_attrs: Mapping[str, object], record_name: str) -> str:
    for key in CLASS_ATTRIBUTE_KEYS:
        if key in region_attrs and str(region_attrs[key]).strip():
            return str(region_attrs[key])
    text_values = [str(v) for v in region_attrs.values() if str(v).strip()]
    if len(text_values) == 1:
        return text_values[0]
    raise DataError(
        f"record {record_name!r}: cannot find a class label in region_attributes "
        f"(tried keys {CLASS_ATTRIBUTE_KEYS})"
    )


def _image_dims(
    record: Mapping[str, object], filename: str, images_dir: Path | None
) -> tuple[int, int]:
    attrs = record.get("file_attributes") or {}
    if isinstance(attrs, Mapping) and "width" in attrs and "height" in attrs:
        try:
            return int(attrs["width"]), int(attrs["height"])
        except (TypeError, ValueError) as exc:
            raise DataError(f"record {filename!r}: non-numeric width/height") from exc
    if images_dir is not None:
        path = images_dir / filename
        try:
            with Image.open(path) as img:
                return img.width, img.height
        except (OSError, UnidentifiedImageError) as exc:
            raise DataError(f"record {filename!r}: cannot read image header at {path}: {exc}") from exc
    raise DataError(
        f"record {filename!r}: no width/height in file_attributes and no images_dir given"
    )


def _clamped_rect(
    shape: Mapping[str, object], class_id: int, width: int, height: int, name: str
) -> RectRegion:
    try:
        x, y = float(shape["x"]), float(shape["y"])
        w, h = float(shape["width"]), float(shape["height"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"record {name!r}: malformed rect shape_attributes") from exc
    if w <= 0 or h <= 0:
        raise DataError(f"record {name!r}: rectangle has non-positive extent {w}x{h}")
    x0, y0 = max(x, 0.0), max(y, 0.0)
    x1, y1 = min(x + w, float(width)), min(y + h, float(height))
    if x1 <= x0 or y1 <= y0:
        raise DataError(f"record {name!r}: region lies fully outside the {width}x{height} image")
    return RectRegion(x0, y0, x1 - x0, y1 - y0, class_id)


def _clamped_polygon(
    shape: Mapping[str, object], class_id: int, width: int, height: int, name: str
) -> PolygonRegion:
    try:
        xs = [float(v) for v in shape["all_points_x"]]
        ys = [float(v) for v in shape["all_points_y"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"record {name!r}: malformed polygon shape_attributes") from exc
    if len(xs) != len(ys) or len(xs) < 3:
        raise DataError(f"record {name!r}: polygon needs matched x/y lists of length >= 3")
    if max(xs) <= 0 or min(xs) >= width or max(ys) <= 0 or min(ys) >= height:
        raise DataError(f"record {name!r}: region lies fully outside the {width}x{height} image")
    points = [
        (min(max(x, 0.0), float(width)), min(max(y, 0.0), float(height)))
        for x, y in zip(xs, ys)
    ]
    return PolygonRegion(tuple(points), class_id)


def parse_via_annotations(
    document: str,
    taxonomy: ClassTaxonomy,
    images_dir: str | Path | None = None,
) -> list[AnnotatedImage]:
    """Parse a VIA-style annotation document into AnnotatedImage records.

    Region coordinates are clamped to the image bounds; a region entirely
    outside its image, an unknown class name, or mixed classes within one
    record raise DataError naming the offending record.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed annotation JSON at byte {exc.pos}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise DataError("annotation document must be a JSON object")
    records = doc.get("_via_img_metadata", doc)
    if not isinstance(records, dict):
        raise DataError("_via_img_metadata must be a JSON object")

    images_dir = Path(images_dir) if images_dir is not None else None
    parsed: list[AnnotatedImage] = []
    seen_ids: set[str] = set()
    for key, record in records.items():
        if key.startswith("_via_"):
            continue
        if not isinstance(record, Mapping):
            raise DataError(f"record {key!r} is not a JSON object")
        filename = str(record.get("filename") or key)
        if filename in seen_ids:
            raise DataError(f"duplicate image record {filename!r}")
        seen_ids.add(filename)
        width, height = _image_dims(record, filename, images_dir)

        raw_regions = record.get("regions") or []
        if not raw_regions:
            raise DataError(f"record {filename!r}: no regions (cannot infer a truth class)")
        regions: list[Region] = []
        for raw in raw_regions:
            shape = raw.get("shape_attributes") or {}
            attrs = raw.get("region_attributes") or {}
            class_name = _extract_class_name(attrs, filename)
            try:
                class_id = taxonomy.resolve(class_name)
            except DataError as exc:
                raise DataError(f"record {filename!r}: {exc}") from exc
            if class_id == taxonomy.background_id:
                raise DataError(f"record {filename!r}: region labeled as background")
            kind = shape.get("name")
            if kind == "rect":
                regions.append(_clamped_rect(shape, class_id, width, height, filename))
            elif kind == "polygon":
                regions.append(_clamped_polygon(shape, class_id, width, height, filename))
            else:
                raise DataError(f"record {filename!r}: unsupported region shape {kind!r}")

        truth = regions[0].class_id
        for region in regions[1:]:
            if region.class_id != truth:
                raise DataError(
                    f"record {filename!r}: mixed classes in one image "
                    f"(dataset is single-instrument per image)"
                )
        path = images_dir / filename if images_dir is not None else Path(filename)
        parsed.append(
            AnnotatedImage(
                image_id=filename,
                path=path,
                width=width,
                height=height,
                regions=tuple(regions),
                truth_class=truth,
            )
        )
    return parsed


def parse_via_file(
    path: str | Path, taxonomy: ClassTaxonomy, images_dir: str | Path | None = None
) -> list[AnnotatedImage]:
    try:
        document = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read annotation file {path}: {exc}") from exc
    return parse_via_annotations(document, taxonomy, images_dir=images_dir)


def write_manifest(
    images: Sequence[AnnotatedImage], taxonomy: ClassTaxonomy, path: str | Path
) -> None:
    """Write the line-oriented dataset manifest used for reproducibility audits.

    One tab-separated record per image: id, path, class name, and a 12-hex
    digest of the canonical region list.
    """
    lines = [MANIFEST_HEADER]
    for img in images:
        lines.append(
            "\t".join(
                (img.image_id, str(img.path), taxonomy.name_of(img.truth_class), img.region_digest())
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_manifest(path: str | Path) -> list[dict[str, str]]:
    """Read a manifest back as dict rows (id, path, class, region_digest)."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if not lines or not lines[0].startswith("# toolseg-manifest v1"):
        raise DataError(f"{path} is not a toolseg manifest")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise DataError(f"{path}:{i}: expected 4 tab-separated fields")
        rows.append(
            {"id": parts[0], "path": parts[1], "class": parts[2], "region_digest": parts[3]}
        )
    return rows


def class_counts(images: Iterable[AnnotatedImage], taxonomy: ClassTaxonomy) -> dict[str, int]:
    counts: dict[str, int] = {}
    for img in images:
        name = taxonomy.name_of(img.truth_class)
        counts[name] = counts.get(name, 0) + 1
    return counts
