"""Command-line entry point wiring all pipeline stages.

Subcommands: ``gen-data``, ``mask-debug``, ``train``, ``eval``, ``analyze``
(``retention`` / ``ablation``), and ``sweep``. Exit codes: 0 success, 2 usage,
3 validation failure, 4 runtime failure. When ``--out`` is omitted, artifacts
land in a timestamped directory under ``$MASKEDREID_OUTPUT_ROOT`` (default
``./runs``).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from .analyzer import ablation_report, retention, write_retention_csv
from .attributes import default_vocabulary, load_vocabulary
from .config import RunConfig, default_config, load_config, write_resolved_config
from .errors import CheckpointError, ConfigError, RuntimeFailure, ValidationError
from .masking import FileAttributeSource, build_description, changed_positions
from .pipeline import evaluate_checkpoint, write_metrics_csv
from .seeds import stream
from .synthdata import (
    DatasetManifest,
    generate,
    load_manifest,
    load_split,
    manifest_attribute_source,
)
from .trainer import train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4

NOISE_GRID = (0.0, 0.05, 0.10, 0.15, 0.20)
MASK_GRID = (0.3, 0.6, 0.9, 1.0)


def _default_out(command: str) -> Path:
    root = Path(os.environ.get("MASKEDREID_OUTPUT_ROOT", "runs"))
    stamp = time.strftime("%Y%m%d-%H%M%S")
    out = root / f"{command}-{stamp}"
    suffix = 1
    while out.exists():
        out = root / f"{command}-{stamp}-{suffix}"
        suffix += 1
    return out


def _load_run_config(path: str | None) -> RunConfig:
    return load_config(path) if path else default_config()


def _manifest_for_training(path: Path) -> tuple[list, DatasetManifest | None]:
    """A --manifest argument may be a dataset directory or a single train TSV."""
    if path.is_dir():
        manifest = load_manifest(path)
        return list(manifest.train), manifest
    vocab = default_vocabulary()
    return list(load_split(path, vocab)), None


def cmd_gen_data(args: argparse.Namespace) -> int:
    config = _load_run_config(args.config)
    out_dir = Path(args.out) if args.out else _default_out("gen-data")
    manifest = generate(config.gen_config(), out_dir)
    write_resolved_config(config, out_dir)
    print(f"wrote {len(manifest.all_records)} samples to {out_dir}")
    print(
        f"splits: train={len(manifest.train)} query={len(manifest.query)} "
        f"gallery={len(manifest.gallery)}"
    )
    return EXIT_OK


def cmd_mask_debug(args: argparse.Namespace) -> int:
    vocab = load_vocabulary(args.vocab) if args.vocab else default_vocabulary()
    source = FileAttributeSource(args.attrs, vocab)
    sample_id = args.sample or (source.sample_ids[0] if source.sample_ids else None)
    if sample_id is None:
        raise ValidationError(f"{args.attrs}: no samples in attribute file")
    before = source.lookup(sample_id)
    rng = stream(args.seed, "noise")
    desc = build_description(sample_id, source, vocab, args.mask_ratio, args.noise_ratio, rng)
    after_bits = desc.bits
    changed = changed_positions(before, type(before)(after_bits, vocab))
    print(f"sample:  {sample_id}")
    print(f"before:  {before.to_bitstring()}")
    print(f"after:   {''.join(str(int(b)) for b in after_bits)}")
    print(f"changed: {list(map(int, changed))}")
    for idx in changed:
        print(f"  [{idx:3d}] {vocab.labels[idx]} ({vocab.categories[idx]}): "
              f"{before.bits[idx]} -> {after_bits[idx]}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = _load_run_config(args.config)
    out_dir = Path(args.out) if args.out else _default_out("train")
    train_records, manifest = _manifest_for_training(Path(args.manifest))
    vocab = manifest.vocab if manifest is not None else default_vocabulary()
    num_classes = len({r.identity_id for r in train_records})
    model_config = config.model_config(num_classes=num_classes, vocab_size=len(vocab))
    result = train(
        train_records,
        model_config,
        config.train_config(),
        config.loss_config(),
        out_dir,
        vocab,
    )
    write_resolved_config(config, out_dir)
    print(f"final checkpoint: {result.checkpoint_path}")
    print(f"training log:     {result.log_path}")
    print(
        "final losses: "
        + " ".join(f"{k}={v:.6f}" for k, v in sorted(result.final_losses.items()))
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    checkpoint = Path(args.checkpoint)
    if not checkpoint.is_file():
        raise CheckpointError(f"checkpoint not found: {checkpoint}")
    manifest = load_manifest(args.manifest)
    metrics, extras = evaluate_checkpoint(checkpoint, manifest, args.setting)
    out_csv = Path(args.out) if args.out else _default_out("eval") / "metrics.csv"
    train_echo = extras.get("train_config", {})
    write_metrics_csv(
        [metrics],
        out_csv,
        run_label=args.run_label,
        mask_ratio=train_echo.get("mask_ratio"),
        noise_ratio=train_echo.get("noise_ratio"),
    )
    print(
        f"{metrics.setting}: rank-1={metrics.cmc[1]:.4f} rank-5={metrics.cmc[5]:.4f} "
        f"rank-10={metrics.cmc[10]:.4f} mAP={metrics.mean_ap:.4f} "
        f"({metrics.evaluated} evaluated, {metrics.skipped} skipped)"
    )
    print(f"wrote {out_csv}")
    return EXIT_OK


def cmd_analyze_retention(args: argparse.Namespace) -> int:
    path = Path(args.manifest)
    if path.is_dir():
        manifest = load_manifest(path)
        records, vocab = list(manifest.split(args.split)), manifest.vocab
    else:
        vocab = default_vocabulary()
        records = list(load_split(path, vocab))
    source = (
        FileAttributeSource(args.attrs, vocab)
        if args.attrs
        else manifest_attribute_source(records)
    )
    report = retention(records, source, vocab, split_name=args.split)
    out_csv = Path(args.out) if args.out else _default_out("retention") / "retention.csv"
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    write_retention_csv(report, out_csv)
    for category, ratio in report.ratios.items():
        print(f"{category}: {ratio:.4f}")
    if report.skipped_single_image:
        print(f"warning: skipped {report.skipped_single_image} single-image identities")
    print(f"wrote {out_csv}")
    return EXIT_OK


def cmd_analyze_ablation(args: argparse.Namespace) -> int:
    out_dir = Path(args.out) if args.out else _default_out("ablation")
    combined, plots = ablation_report(args.inputs, out_dir)
    print(f"wrote {combined}")
    for plot in plots:
        print(f"wrote {plot}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_run_config(args.config)
    out_dir = Path(args.out) if args.out else _default_out("sweep")
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.manifest:
        manifest = load_manifest(args.manifest)
    else:
        manifest = generate(config.gen_config(), out_dir / "dataset")
    train_records = list(manifest.train)
    vocab = manifest.vocab
    num_classes = len({r.identity_id for r in train_records})

    grid = NOISE_GRID if args.axis == "noise" else MASK_GRID
    csvs = []
    for value in grid:
        if args.axis == "noise":
            run_config = config.override(dem__noise_ratio=value)
        else:
            run_config = config.override(dem__mask_ratio=value)
        label = f"{args.axis}-{value:g}"
        run_dir = out_dir / label
        result = train(
            train_records,
            run_config.model_config(num_classes=num_classes, vocab_size=len(vocab)),
            run_config.train_config(),
            run_config.loss_config(),
            run_dir,
            vocab,
        )
        write_resolved_config(run_config, run_dir)
        metrics, _ = evaluate_checkpoint(result.checkpoint_path, manifest, args.setting)
        csv_path = write_metrics_csv(
            [metrics],
            run_dir / "metrics.csv",
            run_label=label,
            mask_ratio=run_config["dem.mask_ratio"],
            noise_ratio=run_config["dem.noise_ratio"],
        )
        csvs.append(csv_path)
        print(f"{label}: rank-1={metrics.cmc[1]:.4f} mAP={metrics.mean_ap:.4f}")

    combined, plots = ablation_report(csvs, out_dir / "report")
    print(f"wrote {combined}")
    for plot in plots:
        print(f"wrote {plot}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskedreid",
        description="Masked-attribute person re-identification pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic benchmark")
    p.add_argument("--config", help="run config file (key = value)")
    p.add_argument("--out", help="output dataset directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("mask-debug", help="show a description vector before/after mask+noise")
    p.add_argument("--attrs", required=True, help="sample_id<TAB>bitstring attribute file")
    p.add_argument("--sample", help="sample id (default: first in file)")
    p.add_argument("--vocab", help="vocabulary file (default: bundled)")
    p.add_argument("--mask-ratio", type=float, default=1.0)
    p.add_argument("--noise-ratio", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_mask_debug)

    p = sub.add_parser("train", help="train a model on a manifest")
    p.add_argument("--manifest", required=True, help="dataset directory or train split TSV")
    p.add_argument("--config", help="run config file")
    p.add_argument("--out", help="output run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint under a protocol setting")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True, help="dataset directory with query/gallery")
    p.add_argument("--setting", choices=("general", "cc", "sc"), default="cc")
    p.add_argument("--out", help="output metrics CSV path")
    p.add_argument("--run-label", default="run")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="retention statistics and ablation reports")
    analyze_sub = p.add_subparsers(dest="analyze_command", required=True)

    pr = analyze_sub.add_parser("retention", help="per-category attribute retention")
    pr.add_argument("--manifest", required=True, help="dataset directory or split TSV")
    pr.add_argument("--split", choices=("train", "query", "gallery"), default="train")
    pr.add_argument("--attrs", help="optional detector-prediction file (default: ground truth)")
    pr.add_argument("--out", help="output CSV path")
    pr.set_defaults(func=cmd_analyze_retention)

    pa = analyze_sub.add_parser("ablation", help="merge eval CSVs and plot trends")
    pa.add_argument("--in", dest="inputs", nargs="+", required=True, help="eval CSV files")
    pa.add_argument("--out", help="output directory")
    pa.set_defaults(func=cmd_analyze_ablation)

    p = sub.add_parser("sweep", help="run the noise or mask ablation grid end to end")
    p.add_argument("--axis", choices=("noise", "mask"), required=True)
    p.add_argument("--config", help="run config file")
    p.add_argument("--manifest", help="reuse an existing dataset directory")
    p.add_argument("--setting", choices=("general", "cc", "sc"), default="cc")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RuntimeFailure, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
