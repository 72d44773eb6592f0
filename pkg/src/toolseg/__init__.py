"""Pixel-wise surgical instrument recognition.

Pipeline pieces: annotation ingestion and mask rasterization, a
configurable U-Net with a channel-wise softmax head, the Adam / MSE /
linear-decay training recipe, threshold-area-argmax image classification
with set-cardinality IoU, k-fold cross-validation with per-class
reporting, and confidence-heatmap rendering.
"""

from .annotations import (
    AnnotatedImage,
    PolygonRegion,
    RectRegion,
    parse_via_annotations,
    parse_via_file,
)
from .config import RunConfig, build_run_config
from .crossval import FoldSplit, aggregate_records, make_folds, run_crossval
from .errors import ConfigError, DataError, ShapeError, ToolsegError, TrainingError
from .evaluate import (
    EvalRecord,
    Threshold,
    classify_image,
    evaluate_image,
    iou,
    positive_pixels,
)
from .heatmap import Colormap, DEFAULT_COLORMAP, render_heatmap
from .imaging import augment, load_and_preprocess, one_hot, rasterize_mask
from .model import UNet, UNetConfig, build_unet, load_encoder_weights, save_checkpoint
from .report import ClassReport, emit_report
from .synthetic import generate_synthetic_dataset
from .taxonomy import ClassTaxonomy, default_taxonomy
from .train import AdamState, TrainConfig, adam_step, lr_at, mse_onehot_loss, train

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AnnotatedImage",
    "ClassReport",
    "ClassTaxonomy",
    "Colormap",
    "ConfigError",
    "DEFAULT_COLORMAP",
    "DataError",
    "EvalRecord",
    "FoldSplit",
    "PolygonRegion",
    "RectRegion",
    "RunConfig",
    "ShapeError",
    "Threshold",
    "ToolsegError",
    "TrainConfig",
    "TrainingError",
    "UNet",
    "UNetConfig",
    "adam_step",
    "aggregate_records",
    "augment",
    "build_run_config",
    "build_unet",
    "classify_image",
    "default_taxonomy",
    "emit_report",
    "evaluate_image",
    "generate_synthetic_dataset",
    "iou",
    "load_and_preprocess",
    "load_encoder_weights",
    "lr_at",
    "make_folds",
    "mse_onehot_loss",
    "one_hot",
    "parse_via_annotations",
    "parse_via_file",
    "positive_pixels",
    "rasterize_mask",
    "run_crossval",
    "save_checkpoint",
    "train",
]
