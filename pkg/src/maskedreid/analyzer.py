"""Attribute-retention statistics and ablation report generation.

A cloth-irrelevant label counts as retained for an identity when its bit is
identical across every image of that identity (the strict reading; identities
with a single image are excluded and counted). Ablation reports merge several
evaluation CSVs into one table keyed by run label and setting, with static
plots of rank-1/mAP against the noise and mask ratios.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .attributes import AttributeVocabulary
from .errors import ValidationError
from .masking import AttributeSource
from .synthdata import SampleRecord


@dataclass
class RetentionReport:
    split_name: str
    ratios: dict[str, float]  # cloth-irrelevant category -> retention ratio
    per_identity: dict[int, dict[str, float]]
    skipped_single_image: int


def retention(
    records: Sequence[SampleRecord],
    source: AttributeSource,
    vocab: AttributeVocabulary,
    split_name: str = "train",
) -> RetentionReport:
    """Strict per-category retention over (identity, label) pairs."""
    by_identity: dict[int, list[SampleRecord]] = {}
    for rec in records:
        by_identity.setdefault(rec.identity_id, []).append(rec)

    categories = vocab.cloth_irrelevant_categories
    cat_indices = {c: np.asarray(vocab.category_indices[c]) for c in categories}
    sums = {c: 0.0 for c in categories}
    counts = {c: 0 for c in categories}
    per_identity: dict[int, dict[str, float]] = {}
    skipped = 0

    for identity, recs in sorted(by_identity.items()):
        if len(recs) < 2:
            skipped += 1
            continue
        bits = np.stack([source.lookup(r.sample_id).bits for r in recs])
        retained = (bits == bits[0]).all(axis=0)  # per-label: identical across all images
        breakdown = {}
        for category in categories:
            idx = cat_indices[category]
            ratio = float(retained[idx].mean())
            breakdown[category] = ratio
            sums[category] += retained[idx].sum()
            counts[category] += len(idx)
        per_identity[identity] = breakdown

    if not per_identity:
        raise ValidationError("retention needs at least one identity with >= 2 images")
    return RetentionReport(
        split_name=split_name,
        ratios={c: sums[c] / counts[c] for c in categories},
        per_identity=per_identity,
        skipped_single_image=skipped,
    )


def write_retention_csv(report: RetentionReport, path: str | Path) -> None:
    lines = ["split,category,retention"]
    for category, ratio in report.ratios.items():
        lines.append(f"{report.split_name},{category},{ratio:.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_REQUIRED_COLUMNS = ("setting", "rank1", "rank5", "rank10", "mAP", "evaluated", "skipped")
_OPTIONAL_COLUMNS = ("run", "mask_ratio", "noise_ratio")


def _read_eval_csv(path: Path) -> list[dict[str, str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise ValidationError(f"{path}: empty evaluation CSV")
            missing = set(_REQUIRED_COLUMNS) - set(reader.fieldnames)
            if missing:
                raise ValidationError(f"{path}: missing columns {sorted(missing)}")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if any(row.get(c) in (None, "") for c in _REQUIRED_COLUMNS):
                    raise ValidationError(f"{path}:{lineno}: incomplete row")
                try:
                    float(row["rank1"]), float(row["mAP"])
                except ValueError as exc:
                    raise ValidationError(f"{path}:{lineno}: non-numeric metric: {exc}") from None
                rows.append(row)
            if not rows:
                raise ValidationError(f"{path}: no data rows")
            return rows
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc


def ablation_report(
    csv_paths: Sequence[str | Path], out_dir: str | Path
) -> tuple[Path, list[Path]]:
    """Merge evaluation CSVs into one table and emit trend plots.

    Returns the combined CSV path and the list of plot paths. Run labels come
    from a ``run`` column when present and otherwise from the file stem;
    duplicate (run, setting) keys are an error.
    """
    if not csv_paths:
        raise ValidationError("ablation report needs at least one input CSV")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    merged: list[dict[str, str]] = []
    seen: dict[tuple[str, str], Path] = {}
    for raw_path in csv_paths:
        path = Path(raw_path)
        for row in _read_eval_csv(path):
            run = row.get("run") or path.stem
            key = (run, row["setting"])
            if key in seen:
                raise ValidationError(
                    f"duplicate run label {run!r} for setting {row['setting']!r} "
                    f"in {path} (already seen in {seen[key]})"
                )
            seen[key] = path
            merged.append({"run": run, **{c: row.get(c, "") for c in _REQUIRED_COLUMNS},
                           "mask_ratio": row.get("mask_ratio", ""),
                           "noise_ratio": row.get("noise_ratio", "")})

    combined = out_dir / "combined.csv"
    columns = ["run", *_REQUIRED_COLUMNS, "mask_ratio", "noise_ratio"]
    with open(combined, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(merged)

    plots = []
    for axis in ("noise_ratio", "mask_ratio"):
        plot_path = _plot_axis(merged, axis, out_dir)
        if plot_path is not None:
            plots.append(plot_path)
    return combined, plots


def _plot_axis(rows: list[dict[str, str]], axis: str, out_dir: Path) -> Path | None:
    usable = [r for r in rows if r.get(axis)]
    if not usable:
        return None
    settings = sorted({r["setting"] for r in usable})
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for metric, ax in zip(("rank1", "mAP"), axes):
        for setting in settings:
            pts = sorted(
                ((float(r[axis]), float(r[metric])) for r in usable if r["setting"] == setting)
            )
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=setting)
        ax.set_xlabel(axis.replace("_", " "))
        ax.set_ylabel(metric)
        ax.grid(True, alpha=0.3)
        ax.legend()
    fig.tight_layout()
    path = out_dir / f"ablation_{axis}.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
