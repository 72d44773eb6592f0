"""Image-level classification and pixel-level IoU from probability maps.

Classification: every pixel whose class probability strictly exceeds the
threshold counts as one unit of area for that class; the image is
assigned the instrument class with the largest area. The background
channel is excluded from this argmax (it would otherwise win almost
every image by sheer area). When no instrument pixel clears the
threshold the decision falls back to the largest summed channel
probability, and the record is flagged.

IoU: |A intersect B| / |A union B| between the suprathreshold pixel set
of the ground-truth class and the ground-truth region pixels; defined as
0.0 when both sets are empty. Ties in either argmax break toward the
lowest class index.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import AbstractSet, Sequence

import numpy as np

from .annotations import AnnotatedImage
from .errors import ConfigError, DataError, ShapeError
from .fileio import atomic_write_text
from .imaging import load_and_preprocess, rasterize_mask
from .model import UNet
from .taxonomy import ClassTaxonomy

RECORD_COLUMNS = ("image_id", "fold", "truth", "predicted", "correct", "iou", "tau")


@dataclass(frozen=True)
class Threshold:
    """Probability cut used for area and IoU pixel sets; strictly inside (0, 1)."""

    tau: float

    def __post_init__(self) -> None:
        if not (0.0 < self.tau < 1.0):
            raise ConfigError(f"threshold must lie strictly in (0, 1), got {self.tau}")


def _tau_value(tau: float | Threshold) -> float:
    if isinstance(tau, Threshold):
        return tau.tau
    return Threshold(float(tau)).tau


@dataclass(frozen=True)
class EvalRecord:
    image_id: str
    truth_class: int
    predicted_class: int
    correct: bool
    iou: float
    fold_index: int
    used_fallback: bool = False

    def __post_init__(self) -> None:
        if self.correct != (self.predicted_class == self.truth_class):
            raise ShapeError("correct flag inconsistent with predicted/truth classes")
        if not (0.0 <= self.iou <= 1.0):
            raise ShapeError(f"iou {self.iou} outside [0, 1]")


def _check_prob_map(prob_map: np.ndarray, taxonomy: ClassTaxonomy) -> None:
    if prob_map.ndim != 3 or prob_map.shape[2] != taxonomy.num_channels:
        raise ShapeError(
            f"expected (H, W, {taxonomy.num_channels}) probability map, got {prob_map.shape}"
        )


def positive_pixels(
    prob_map: np.ndarray, class_id: int, tau: float | Threshold
) -> set[tuple[int, int]]:
    """Pixels (row, col) whose probability for ``class_id`` strictly exceeds tau."""
    cut = _tau_value(tau)
    if not (0 <= class_id < prob_map.shape[2]):
        raise ShapeError(f"class id {class_id} outside map channels [0, {prob_map.shape[2]})")
    rows, cols = np.nonzero(prob_map[:, :, class_id] > cut)
    return {(int(r), int(c)) for r, c in zip(rows, cols)}


def class_areas(prob_map: np.ndarray, taxonomy: ClassTaxonomy, tau: float | Threshold) -> np.ndarray:
    """Suprathreshold pixel count per channel (background included for inspection)."""
    cut = _tau_value(tau)
    _check_prob_map(prob_map, taxonomy)
    return (prob_map > cut).sum(axis=(0, 1))


def _classify(
    prob_map: np.ndarray, taxonomy: ClassTaxonomy, tau: float | Threshold
) -> tuple[int, bool]:
    areas = class_areas(prob_map, taxonomy, tau)
    instrument_ids = np.fromiter(taxonomy.instrument_ids, dtype=np.int64)
    instrument_areas = areas[instrument_ids]
    if instrument_areas.max() > 0:
        return int(instrument_ids[int(np.argmax(instrument_areas))]), False
    mass = prob_map.sum(axis=(0, 1))[instrument_ids]
    return int(instrument_ids[int(np.argmax(mass))]), True


def classify_image(prob_map: np.ndarray, taxonomy: ClassTaxonomy, tau: float | Threshold) -> int:
    """Assign the image to the instrument class with the largest suprathreshold area."""
    return _classify(prob_map, taxonomy, tau)[0]


def iou(pred_pixels: AbstractSet, truth_pixels: AbstractSet) -> float:
    """Cardinality of the intersection over cardinality of the union; 0.0 for two empty sets."""
    union = len(pred_pixels | truth_pixels)
    if union == 0:
        return 0.0
    return len(pred_pixels & truth_pixels) / union


def mask_pixels(mask: np.ndarray, class_id: int) -> set[tuple[int, int]]:
    """Pixel set of one class in a label mask."""
    rows, cols = np.nonzero(mask == class_id)
    return {(int(r), int(c)) for r, c in zip(rows, cols)}


def evaluate_prediction(
    image_id: str,
    prob_map: np.ndarray,
    truth_mask: np.ndarray,
    truth_class: int,
    taxonomy: ClassTaxonomy,
    tau: float | Threshold,
    fold_index: int = 0,
) -> EvalRecord:
    """Score one probability map against its ground-truth label mask."""
    _check_prob_map(prob_map, taxonomy)
    if prob_map.shape[:2] != truth_mask.shape[:2]:
        raise ShapeError(
            f"{image_id}: probability map {prob_map.shape[:2]} vs mask {truth_mask.shape[:2]}"
        )
    predicted, used_fallback = _classify(prob_map, taxonomy, tau)
    pred_pixels = positive_pixels(prob_map, truth_class, tau)
    truth_pixels = mask_pixels(truth_mask, truth_class)
    return EvalRecord(
        image_id=image_id,
        truth_class=truth_class,
        predicted_class=predicted,
        correct=predicted == truth_class,
        iou=iou(pred_pixels, truth_pixels),
        fold_index=fold_index,
        used_fallback=used_fallback,
    )


def evaluate_image(
    model: UNet,
    image: AnnotatedImage,
    taxonomy: ClassTaxonomy,
    tau: float | Threshold,
    dims: tuple[int, int] | None = None,
    fold_index: int = 0,
) -> EvalRecord:
    """Preprocess, predict, and score a single annotated image."""
    dims = dims or (model.config.height, model.config.width)
    pixels = load_and_preprocess(image.path, dims)
    prob_map = model.predict(pixels[None])[0]
    truth_mask = rasterize_mask(image, dims, taxonomy.background_id)
    return evaluate_prediction(
        image.image_id, prob_map, truth_mask, image.truth_class, taxonomy, tau, fold_index
    )


def records_to_csv(
    records: Sequence[EvalRecord], taxonomy: ClassTaxonomy, tau: float | Threshold
) -> str:
    """Render per-image records as delimited text (one row per test image)."""
    cut = _tau_value(tau)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_COLUMNS)
    for rec in records:
        writer.writerow(
            (
                rec.image_id,
                rec.fold_index,
                taxonomy.name_of(rec.truth_class),
                taxonomy.name_of(rec.predicted_class),
                "true" if rec.correct else "false",
                f"{rec.iou:.6f}",
                f"{cut:g}",
            )
        )
    return buf.getvalue()


def write_records(
    records: Sequence[EvalRecord],
    taxonomy: ClassTaxonomy,
    tau: float | Threshold,
    path: str | Path,
) -> None:
    atomic_write_text(path, records_to_csv(records, taxonomy, tau))


def read_records(path: str | Path, taxonomy: ClassTaxonomy) -> list[EvalRecord]:
    """Load a records file back; the tau column is ignored beyond validation."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read records file {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != RECORD_COLUMNS:
        raise DataError(f"{path} is not a toolseg records file")
    records = []
    for row in reader:
        if not row:
            continue
        if len(row) != len(RECORD_COLUMNS):
            raise DataError(f"{path}: bad row {row!r}")
        image_id, fold, truth, predicted, correct, iou_text, _tau = row
        records.append(
            EvalRecord(
                image_id=image_id,
                truth_class=taxonomy.resolve(truth),
                predicted_class=taxonomy.resolve(predicted),
                correct=correct == "true",
                iou=float(iou_text),
                fold_index=int(fold),
            )
        )
    return records


def pooled_accuracy(records: Sequence[EvalRecord]) -> float:
    """Fraction of correct image-level classifications over all records."""
    if not records:
        raise DataError("no evaluation records")
    return sum(r.correct for r in records) / len(records)
