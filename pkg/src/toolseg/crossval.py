"""K-fold cross-validation: split construction, per-fold training and
evaluation, and per-class aggregation across folds.

Folds partition the dataset into k mutually exclusive test sets whose
union covers everything; each fold trains a fresh model on the remaining
80% and evaluates the held-out 20%. Per-class accuracy and mean IoU are
computed per fold, then summarized as mean and population SD across the
folds in which the class appears.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .annotations import AnnotatedImage
from .errors import ConfigError, DataError
from .evaluate import (
    EvalRecord,
    Threshold,
    evaluate_prediction,
    write_records,
)
from .fileio import atomic_write_text
from .model import UNet, UNetConfig, build_unet, save_checkpoint
from .report import ClassReport, emit_report
from .taxonomy import ClassTaxonomy
from .train import TrainConfig, prepare_samples, train, write_loss_curve

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_ids: frozenset[str]
    test_ids: frozenset[str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "train_ids", frozenset(self.train_ids))
        object.__setattr__(self, "test_ids", frozenset(self.test_ids))
        if self.train_ids & self.test_ids:
            raise ConfigError(f"fold {self.fold_index}: train and test sets overlap")


class Predictor(Protocol):
    def predict(self, images: np.ndarray) -> np.ndarray: ...


ModelFn = Callable[[int, list[AnnotatedImage]], Predictor]


def _stratified_assignment(
    dataset: Sequence[AnnotatedImage], k: int, rng: np.random.Generator
) -> list[list[str]]:
    """Assign ids to k folds, spreading each class as evenly as counts allow.

    Extras (class count mod k) go to the currently lightest folds, which
    keeps every fold within one image of N/k overall.
    """
    by_class: dict[int, list[str]] = {}
    for img in dataset:
        by_class.setdefault(img.truth_class, []).append(img.image_id)
    folds: list[list[str]] = [[] for _ in range(k)]
    loads = [0] * k
    for class_id in sorted(by_class):
        ids = by_class[class_id]
        order = rng.permutation(len(ids))
        shuffled = [ids[i] for i in order]
        base, extra = divmod(len(shuffled), k)
        counts = [base] * k
        for fold_idx in sorted(range(k), key=lambda f: (loads[f], f))[:extra]:
            counts[fold_idx] += 1
        cursor = 0
        for fold_idx in range(k):
            folds[fold_idx].extend(shuffled[cursor : cursor + counts[fold_idx]])
            loads[fold_idx] += counts[fold_idx]
            cursor += counts[fold_idx]
    return folds


def _plain_assignment(
    dataset: Sequence[AnnotatedImage], k: int, rng: np.random.Generator
) -> list[list[str]]:
    """Seeded permutation cut into k contiguous blocks."""
    ids = [img.image_id for img in dataset]
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    base, extra = divmod(len(ids), k)
    folds = []
    cursor = 0
    for fold_idx in range(k):
        size = base + (1 if fold_idx < extra else 0)
        folds.append(shuffled[cursor : cursor + size])
        cursor += size
    return folds


def make_folds(
    dataset: Sequence[AnnotatedImage],
    k: int = 5,
    seed: int = 0,
    stratified: bool = True,
) -> list[FoldSplit]:
    """Partition the dataset into k folds with mutually exclusive test sets."""
    n = len(dataset)
    if n < k:
        raise ConfigError(f"need at least k={k} images, got {n}")
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    all_ids = [img.image_id for img in dataset]
    if len(set(all_ids)) != n:
        raise DataError("dataset contains duplicate image ids")
    rng = np.random.default_rng(seed)
    assignment = (
        _stratified_assignment(dataset, k, rng)
        if stratified
        else _plain_assignment(dataset, k, rng)
    )
    id_set = set(all_ids)
    return [
        FoldSplit(
            fold_index=fold_idx,
            train_ids=frozenset(id_set - set(test_ids)),
            test_ids=frozenset(test_ids),
        )
        for fold_idx, test_ids in enumerate(assignment)
    ]


def select_images(
    dataset: Sequence[AnnotatedImage], ids: frozenset[str] | set[str]
) -> list[AnnotatedImage]:
    """Materialize a split in dataset order (keeps runs deterministic)."""
    return [img for img in dataset if img.image_id in ids]


def aggregate_records(
    records: Sequence[EvalRecord], taxonomy: ClassTaxonomy
) -> list[ClassReport]:
    """Fold-wise per-class accuracy and mean IoU, summarized as mean +/- population SD.

    A fold whose test set holds no image of a class contributes nothing
    to that class's statistics (logged as a warning); the class row still
    reports its total test appearances across all folds.
    """
    if not records:
        raise DataError("no evaluation records to aggregate")
    folds = sorted({r.fold_index for r in records})
    by_class: dict[int, list[EvalRecord]] = {}
    for rec in records:
        by_class.setdefault(rec.truth_class, []).append(rec)

    reports = []
    for class_id in sorted(by_class):
        class_records = by_class[class_id]
        acc_values, iou_values = [], []
        for fold in folds:
            fold_records = [r for r in class_records if r.fold_index == fold]
            if not fold_records:
                logger.warning(
                    "class %r has no test images in fold %d; fold skipped for its statistics",
                    taxonomy.name_of(class_id),
                    fold,
                )
                continue
            acc_values.append(sum(r.correct for r in fold_records) / len(fold_records))
            iou_values.append(float(np.mean([r.iou for r in fold_records])))
        reports.append(
            ClassReport(
                class_name=taxonomy.name_of(class_id),
                sample_size=len(class_records),
                accuracy_mean=100.0 * float(np.mean(acc_values)),
                accuracy_sd=100.0 * float(np.std(acc_values)),
                iou_mean=float(np.mean(iou_values)),
                iou_sd=float(np.std(iou_values)),
            )
        )
    return reports


def _fold_seed(seed: int, fold_index: int, stream: int) -> int:
    return int(np.random.SeedSequence((seed, fold_index, stream)).generate_state(1)[0])


@dataclass
class CrossvalRun:
    records: list[EvalRecord]
    reports: list[ClassReport]
    folds: list[FoldSplit]
    loss_curves: dict[int, list[float]] = field(default_factory=dict)


def run_crossval(
    dataset: Sequence[AnnotatedImage],
    taxonomy: ClassTaxonomy,
    train_config: TrainConfig,
    tau: float | Threshold,
    seed: int = 0,
    dims: tuple[int, int] = (256, 256),
    k: int = 5,
    stratified: bool = True,
    model_config: UNetConfig | None = None,
    model_fn: ModelFn | None = None,
    out_dir: str | Path | None = None,
    config_snapshot: str | None = None,
) -> CrossvalRun:
    """Train and evaluate one model per fold; return records and class reports.

    ``model_fn`` swaps the trained network for any object with a
    ``predict`` method (used to inject oracle or baseline predictors);
    otherwise a fresh U-Net is built per fold from ``model_config`` with
    fold-derived init and sampling seeds. With ``out_dir`` set, the run
    directory receives the config snapshot, per-image records, both
    report formats, and per-fold checkpoints plus loss curves.
    """
    if model_fn is None and model_config is None:
        raise ConfigError("run_crossval needs either model_config or model_fn")
    if model_config is not None and model_config.num_classes != taxonomy.num_channels:
        raise ConfigError(
            f"model has {model_config.num_classes} classes but taxonomy "
            f"needs {taxonomy.num_channels}"
        )
    tau = Threshold(_coerce_tau(tau))
    out_path = Path(out_dir) if out_dir is not None else None

    folds = make_folds(dataset, k=k, seed=seed, stratified=stratified)
    records: list[EvalRecord] = []
    loss_curves: dict[int, list[float]] = {}

    for split in folds:
        train_images = select_images(dataset, split.train_ids)
        test_images = select_images(dataset, split.test_ids)
        logger.info(
            "fold %d: %d train / %d test images",
            split.fold_index,
            len(train_images),
            len(test_images),
        )

        if model_fn is not None:
            predictor: Predictor = model_fn(split.fold_index, train_images)
        else:
            fold_model_config = UNetConfig(
                height=dims[0],
                width=dims[1],
                num_classes=model_config.num_classes,
                depth=model_config.depth,
                base_channels=model_config.base_channels,
                in_channels=model_config.in_channels,
                init_seed=_fold_seed(seed, split.fold_index, 0),
                batch_norm=model_config.batch_norm,
                dtype=model_config.dtype,
            )
            fold_train_config = TrainConfig(
                lr0=train_config.lr0,
                total_iters=train_config.total_iters,
                batch_size=train_config.batch_size,
                beta1=train_config.beta1,
                beta2=train_config.beta2,
                epsilon=train_config.epsilon,
                seed=_fold_seed(seed, split.fold_index, 1),
                crop_scale=train_config.crop_scale,
                grad_clip=train_config.grad_clip,
            )
            model = build_unet(fold_model_config)
            result = train(model, train_images, taxonomy, fold_train_config, dims=dims)
            predictor = model
            loss_curves[split.fold_index] = result.losses
            if out_path is not None:
                fold_dir = out_path / f"fold{split.fold_index}"
                save_checkpoint(model, fold_dir / "checkpoint.ckpt")
                write_loss_curve(result.losses, fold_dir / "loss.txt")

        test_samples = prepare_samples(test_images, taxonomy, dims)
        images_array = np.stack([s.image for s in test_samples])
        prob_maps = predictor.predict(images_array)
        for img, sample, prob_map in zip(test_images, test_samples, prob_maps):
            records.append(
                evaluate_prediction(
                    img.image_id,
                    prob_map,
                    sample.mask,
                    img.truth_class,
                    taxonomy,
                    tau,
                    fold_index=split.fold_index,
                )
            )

    reports = aggregate_records(records, taxonomy)
    if out_path is not None:
        if config_snapshot is not None:
            atomic_write_text(out_path / "config.yaml", config_snapshot)
        write_records(records, taxonomy, tau, out_path / "records.csv")
        atomic_write_text(out_path / "report.csv", emit_report(reports, "csv"))
        atomic_write_text(out_path / "report.md", emit_report(reports, "markdown"))
    return CrossvalRun(records=records, reports=reports, folds=folds, loss_curves=loss_curves)


def _coerce_tau(tau: float | Threshold) -> float:
    return tau.tau if isinstance(tau, Threshold) else float(tau)
