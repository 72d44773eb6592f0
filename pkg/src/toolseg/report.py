"""Per-class report: sample size, accuracy mean +/- SD, IoU mean +/- SD.

Accuracy cells are percentages with two decimals, IoU cells carry four
decimals, and rows sort by class name. The SD is the population standard
deviation across the per-fold values.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

from .errors import ConfigError, DataError

REPORT_COLUMNS = ("Instrument", "Sample Size", "Accuracy (mean ± SD)", "IoU (mean ± SD)")


@dataclass(frozen=True)
class ClassReport:
    """Aggregate for one instrument class; accuracy fields are percentages."""

    class_name: str
    sample_size: int
    accuracy_mean: float
    accuracy_sd: float
    iou_mean: float
    iou_sd: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.accuracy_mean <= 100.0):
            raise ConfigError(f"accuracy mean {self.accuracy_mean} outside [0, 100]")
        if not (0.0 <= self.iou_mean <= 1.0):
            raise ConfigError(f"IoU mean {self.iou_mean} outside [0, 1]")
        if self.accuracy_sd < 0 or self.iou_sd < 0:
            raise ConfigError("standard deviations must be nonnegative")

    def accuracy_cell(self) -> str:
        return f"{self.accuracy_mean:.2f}% ± {self.accuracy_sd:.2f}%"

    def iou_cell(self) -> str:
        return f"{self.iou_mean:.4f} ± {self.iou_sd:.4f}"


def emit_report(reports: Sequence[ClassReport], format: str = "csv") -> str:
    """Render class reports as ``csv`` or ``markdown`` text, sorted by class name."""
    if not reports:
        raise DataError("no class reports to emit")
    rows = sorted(reports, key=lambda r: r.class_name)
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for rep in rows:
            writer.writerow((rep.class_name, rep.sample_size, rep.accuracy_cell(), rep.iou_cell()))
        return buf.getvalue()
    if format == "markdown":
        lines = [
            "| " + " | ".join(REPORT_COLUMNS) + " |",
            "|" + "|".join(" --- " for _ in REPORT_COLUMNS) + "|",
        ]
        for rep in rows:
            lines.append(
                f"| {rep.class_name} | {rep.sample_size} | {rep.accuracy_cell()} | {rep.iou_cell()} |"
            )
        return "\n".join(lines) + "\n"
    raise ConfigError(f"unknown report format {format!r} (expected csv or markdown)")
