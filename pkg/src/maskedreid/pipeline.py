"""Glue between trained models and the evaluation protocol."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .evalproto import EvalEntry, MetricsRecord, cmc_and_map
from .images import load_image, to_model_tensor
from .model import DescriptionFusionModel, load_checkpoint
from .synthdata import DatasetManifest, SampleRecord

EVAL_CSV_COLUMNS = (
    "setting", "rank1", "rank5", "rank10", "mAP", "evaluated", "skipped",
    "run", "mask_ratio", "noise_ratio",
)


def embed_records(
    model: DescriptionFusionModel,
    records: Sequence[SampleRecord],
    batch_size: int = 64,
) -> np.ndarray:
    """L2-normalized inference embeddings for a list of samples."""
    chunks = []
    with torch.no_grad():
        for start in range(0, len(records), batch_size):
            batch = records[start : start + batch_size]
            images = np.stack([load_image(r.image_path) for r in batch])
            chunks.append(model.embed_inference(to_model_tensor(images)).numpy())
    return np.concatenate(chunks) if chunks else np.zeros((0, model.config.embed_dim))


def eval_entries(
    model: DescriptionFusionModel, records: Sequence[SampleRecord]
) -> list[EvalEntry]:
    features = embed_records(model, records)
    return [
        EvalEntry(
            feature=feat,
            identity_id=rec.identity_id,
            camera_id=rec.camera_id,
            clothes_id=rec.clothes_id,
        )
        for feat, rec in zip(features, records)
    ]


def evaluate_model(
    model: DescriptionFusionModel, manifest: DatasetManifest, setting: str
) -> MetricsRecord:
    queries = eval_entries(model, manifest.query)
    gallery = eval_entries(model, manifest.gallery)
    return cmc_and_map(queries, gallery, setting)


def evaluate_checkpoint(
    checkpoint_path: str | Path, manifest: DatasetManifest, setting: str
) -> tuple[MetricsRecord, dict]:
    model, _, extras = load_checkpoint(checkpoint_path)
    return evaluate_model(model, manifest, setting), extras


def write_metrics_csv(
    records: Sequence[MetricsRecord],
    path: str | Path,
    run_label: str = "",
    mask_ratio: float | None = None,
    noise_ratio: float | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=EVAL_CSV_COLUMNS)
        writer.writeheader()
        for rec in records:
            writer.writerow(
                {
                    "setting": rec.setting,
                    "rank1": f"{rec.cmc[1]:.6f}",
                    "rank5": f"{rec.cmc[5]:.6f}",
                    "rank10": f"{rec.cmc[10]:.6f}",
                    "mAP": f"{rec.mean_ap:.6f}",
                    "evaluated": rec.evaluated,
                    "skipped": rec.skipped,
                    "run": run_label,
                    "mask_ratio": "" if mask_ratio is None else f"{mask_ratio:g}",
                    "noise_ratio": "" if noise_ratio is None else f"{noise_ratio:g}",
                }
            )
    return path
