"""Command-line entry point for the whole pipeline.

Subcommands: generate-synthetic, ingest, train, eval, crossval, heatmap,
report. Every numeric knob comes from defaults, an optional preset, an
optional config file, and CLI flags, in increasing precedence. Exit
codes: 0 success, 1 usage or config error, 2 data error, 3 runtime or
training error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .annotations import class_counts, parse_via_file, write_manifest
from .config import RunConfig, build_run_config, load_config_file, validate_run_config
from .crossval import aggregate_records, run_crossval
from .errors import ConfigError, DataError, ToolsegError
from .evaluate import (
    Threshold,
    classify_image,
    evaluate_prediction,
    pooled_accuracy,
    read_records,
    write_records,
)
from .fileio import atomic_write_text
from .heatmap import heatmap_filename, render_heatmap, render_value_heatmap, save_heatmap_png
from .imaging import load_and_preprocess
from .model import build_unet, model_from_checkpoint, save_checkpoint
from .report import emit_report
from .synthetic import generate_synthetic_dataset
from .train import prepare_samples, train, write_loss_curve

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ConfigError (exit code 1)."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(message)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file (flat key: value mapping)")
    parser.add_argument("--preset", choices=("desk", "paper"), help="named defaults bundle")
    parser.add_argument("--annotations", help="VIA-style annotation JSON")
    parser.add_argument("--images-dir", dest="images_dir", help="directory holding the images")
    parser.add_argument("--taxonomy", help="class list file, one name per line")
    parser.add_argument("--out-dir", dest="out_dir", help="run output directory")
    parser.add_argument("--height", type=int)
    parser.add_argument("--width", type=int)
    parser.add_argument("--depth", type=int)
    parser.add_argument("--base-channels", dest="base_channels", type=int)
    parser.add_argument("--lr0", type=float)
    parser.add_argument("--total-iters", dest="total_iters", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--beta1", type=float)
    parser.add_argument("--beta2", type=float)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--crop-scale-min", dest="crop_scale_min", type=float)
    parser.add_argument("--crop-scale-max", dest="crop_scale_max", type=float)
    parser.add_argument("--grad-clip", dest="grad_clip", type=float)
    parser.add_argument("--tau", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--k-folds", dest="k_folds", type=int)
    parser.add_argument(
        "--no-stratify",
        dest="stratified",
        action="store_const",
        const=False,
        default=None,
        help="plain random folds instead of per-class stratification",
    )
    parser.add_argument(
        "--alias",
        action="append",
        default=None,
        metavar="FROM=TO",
        help="map an annotation label onto a taxonomy class (repeatable)",
    )


_CONFIG_KEYS = (
    "annotations",
    "images_dir",
    "taxonomy",
    "out_dir",
    "height",
    "width",
    "depth",
    "base_channels",
    "lr0",
    "total_iters",
    "batch_size",
    "beta1",
    "beta2",
    "epsilon",
    "crop_scale_min",
    "crop_scale_max",
    "grad_clip",
    "tau",
    "seed",
    "k_folds",
    "stratified",
)


def _run_config(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {key: getattr(args, key, None) for key in _CONFIG_KEYS}
    if getattr(args, "alias", None):
        aliases = {}
        for item in args.alias:
            if "=" not in item:
                raise ConfigError(f"--alias expects FROM=TO, got {item!r}")
            src, dst = item.split("=", 1)
            aliases[src] = dst
        overrides["aliases"] = aliases
    return build_run_config(file_values, overrides, preset=args.preset)


def _load_dataset(config: RunConfig):
    validate_run_config(config, require_dataset=True)
    taxonomy = config.load_taxonomy()
    dataset = parse_via_file(config.annotations, taxonomy, images_dir=config.images_dir)
    if not dataset:
        raise DataError(f"annotation file {config.annotations} holds no records")
    return dataset, taxonomy


def cmd_generate_synthetic(args: argparse.Namespace) -> int:
    dims = (args.height or 128, args.width or 128)
    result = generate_synthetic_dataset(
        num_classes=args.num_classes,
        images_per_class=args.images_per_class,
        dims=dims,
        seed=args.seed or 0,
        out_dir=args.out,
    )
    total = args.num_classes * args.images_per_class
    print(f"wrote {total} images under {result.images_dir}")
    print(f"annotations: {result.annotations_path}")
    print(f"classes:     {result.taxonomy_path}")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    config = _run_config(args)
    dataset, taxonomy = _load_dataset(config)
    write_manifest(dataset, taxonomy, args.out)
    counts = class_counts(dataset, taxonomy)
    print(f"ingested {len(dataset)} images into {args.out}")
    for name in sorted(counts):
        print(f"  {name}: {counts[name]}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = _run_config(args)
    if config.out_dir is None:
        raise ConfigError("train needs --out-dir")
    dataset, taxonomy = _load_dataset(config)
    out = Path(config.out_dir)
    model = build_unet(config.model_config(taxonomy.num_channels))
    result = train(model, dataset, taxonomy, config.train_config(), dims=config.dims())
    atomic_write_text(out / "config.yaml", config.snapshot())
    save_checkpoint(model, out / "checkpoint.ckpt")
    write_loss_curve(result.losses, out / "loss.txt")
    print(f"trained {config.total_iters} iterations on {len(dataset)} images")
    print(f"final loss {result.losses[-1]:.6f}; checkpoint at {out / 'checkpoint.ckpt'}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = _run_config(args)
    dataset, taxonomy = _load_dataset(config)
    model = model_from_checkpoint(args.checkpoint)
    if model.config.num_classes != taxonomy.num_channels:
        raise DataError(
            f"checkpoint has {model.config.num_classes} channels but taxonomy "
            f"needs {taxonomy.num_channels}"
        )
    dims = (model.config.height, model.config.width)
    samples = prepare_samples(dataset, taxonomy, dims)
    prob_maps = model.predict(np.stack([s.image for s in samples]))
    records = [
        evaluate_prediction(
            img.image_id, prob, sample.mask, img.truth_class, taxonomy, config.tau
        )
        for img, sample, prob in zip(dataset, samples, prob_maps)
    ]
    write_records(records, taxonomy, config.tau, args.out)
    mean_iou = float(np.mean([r.iou for r in records]))
    print(f"evaluated {len(records)} images (tau={config.tau:g})")
    print(f"pooled accuracy {100.0 * pooled_accuracy(records):.2f}%, mean IoU {mean_iou:.4f}")
    print(f"records: {args.out}")
    return 0


def cmd_crossval(args: argparse.Namespace) -> int:
    config = _run_config(args)
    if config.out_dir is None:
        raise ConfigError("crossval needs --out-dir")
    dataset, taxonomy = _load_dataset(config)
    run = run_crossval(
        dataset,
        taxonomy,
        config.train_config(),
        Threshold(config.tau),
        seed=config.seed,
        dims=config.dims(),
        k=config.k_folds,
        stratified=config.stratified,
        model_config=config.model_config(taxonomy.num_channels),
        out_dir=config.out_dir,
        config_snapshot=config.snapshot(),
    )
    print(emit_report(run.reports, "markdown"))
    print(f"pooled accuracy {100.0 * pooled_accuracy(run.records):.2f}%")
    print(f"run directory: {config.out_dir}")
    return 0


def cmd_heatmap(args: argparse.Namespace) -> int:
    config = _run_config(args)
    taxonomy = config.load_taxonomy()
    model = model_from_checkpoint(args.checkpoint)
    dims = (model.config.height, model.config.width)
    pixels = load_and_preprocess(args.image, dims)
    prob_map = model.predict(pixels[None])[0]

    selector = args.class_selector
    if selector == "max":
        instrument_ids = list(taxonomy.instrument_ids)
        values = prob_map[:, :, instrument_ids].max(axis=2)
        rendered = render_value_heatmap(values, pixels, alpha=args.alpha)
        label = "max"
    else:
        if selector == "predicted":
            class_id = classify_image(prob_map, taxonomy, config.tau)
        else:
            class_id = taxonomy.resolve(selector)
        rendered = render_heatmap(prob_map, class_id, pixels, alpha=args.alpha)
        label = taxonomy.name_of(class_id)

    out = args.out or heatmap_filename(Path(args.image).name, label)
    save_heatmap_png(rendered, out)
    print(f"heatmap for {label!r} written to {out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    config = _run_config(args)
    taxonomy = config.load_taxonomy()
    records = read_records(args.records, taxonomy)
    reports = aggregate_records(records, taxonomy)
    if args.out_dir:
        out = Path(args.out_dir)
        atomic_write_text(out / "report.csv", emit_report(reports, "csv"))
        atomic_write_text(out / "report.md", emit_report(reports, "markdown"))
        print(f"reports written under {out}")
    print(emit_report(reports, args.format))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="toolseg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-synthetic", help="write a synthetic shape dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--num-classes", dest="num_classes", type=int, default=5)
    p.add_argument("--images-per-class", dest="images_per_class", type=int, default=30)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate_synthetic)

    p = sub.add_parser("ingest", help="parse annotations and write the dataset manifest")
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="manifest output path")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train one model on the full dataset")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint against an annotated dataset")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="per-image records CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("crossval", help="k-fold cross-validation with per-class report")
    _add_config_flags(p)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("heatmap", help="render a class-confidence heatmap PNG")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument(
        "--class",
        dest="class_selector",
        default="predicted",
        help="class name, 'predicted' (area-argmax winner), or 'max' (per-pixel best)",
    )
    p.add_argument("--alpha", type=float, default=0.6)
    p.add_argument("--out", help="output PNG path (default <image>_<class>.png)")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("report", help="aggregate a records file into class reports")
    _add_config_flags(p)
    p.add_argument("--records", required=True)
    p.add_argument("--format", choices=("csv", "markdown"), default="markdown")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ToolsegError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
