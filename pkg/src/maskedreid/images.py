"""Image loading and tensor conversion shared by training and evaluation."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .errors import ManifestError


def load_image(path: str | Path) -> np.ndarray:
    """Read an RGB image as an (H, W, 3) uint8 array."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"image file missing: {path}")
    with Image.open(path) as img:
        return np.array(img.convert("RGB"), dtype=np.uint8)


def to_model_tensor(images: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """(B, H, W, 3) or (H, W, 3) uint8 -> (B, 3, H, W) float in [-1, 1]."""
    arr = np.asarray(images)
    if arr.ndim == 3:
        arr = arr[None]
    tensor = torch.from_numpy(np.ascontiguousarray(arr)).to(dtype)
    tensor = tensor.permute(0, 3, 1, 2) / 255.0
    return (tensor - 0.5) / 0.5
