"""Flat ``key = value`` run configuration with a strict schema.

One file drives data generation, the model, training, and the description
ratios. Unknown keys are rejected, every value is type-checked, and a resolved
copy (defaults applied, keys sorted) is written next to run outputs so any run
can be reproduced from its artifacts.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError
from .losses import LossConfig
from .model import ModelConfig
from .synthdata import GenConfig
from .trainer import TrainConfig


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in text.split(",") if part.strip())


_PARSERS: dict[str, Callable[[str], Any]] = {
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "str": str,
    "int_tuple": _parse_int_tuple,
}

# key -> (type tag, default)
SCHEMA: dict[str, tuple[str, Any]] = {
    "seed": ("int", 0),
    "run_label": ("str", "run"),
    "data.num_identities": ("int", 20),
    "data.outfits_per_identity": ("int", 3),
    "data.images_per_outfit": ("int", 4),
    "data.num_cameras": ("int", 2),
    "data.height": ("int", 32),
    "data.width": ("int", 32),
    "data.retention_prob": ("float", 0.9),
    "model.patch_size": ("int", 8),
    "model.embed_dim": ("int", 48),
    "model.num_heads": ("int", 4),
    "model.stage_layers": ("int_tuple", (2, 2, 1)),
    "model.description_tokens": ("int", 1),
    "model.null_description": ("str", "zeros"),
    "model.mlp_ratio": ("float", 2.0),
    "model.margin": ("float", 0.3),
    "model.lambda_id": ("float", 1.0),
    "model.lambda_tri": ("float", 1.0),
    "train.epochs": ("int", 60),
    "train.batch_p": ("int", 2),
    "train.batch_k": ("int", 4),
    "train.base_lr": ("float", 2e-5),
    "train.warmup_start_lr": ("float", 7.8125e-7),
    "train.warmup_epochs": ("int", 5),
    "train.decay_epochs": ("int_tuple", (40, 60)),
    "train.decay_factor": ("float", 100.0),
    "train.momentum": ("float", 0.9),
    "train.weight_decay": ("float", 5e-2),
    "train.random_crop": ("bool", True),
    "train.random_erasing": ("bool", True),
    "train.crop_scale_min": ("float", 0.8),
    "train.erase_prob": ("float", 0.5),
    "train.freeze_noise": ("bool", False),
    "train.checkpoint_every": ("int", 20),
    "dem.mask_ratio": ("float", 1.0),
    "dem.noise_ratio": ("float", 0.0),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def override(self, **pairs: Any) -> "RunConfig":
        """Return a copy with dotted keys replaced (underscores map to dots)."""
        updated = dict(self.values)
        for key, value in pairs.items():
            dotted = key.replace("__", ".")
            if dotted not in SCHEMA:
                raise ConfigError(f"unknown config key {dotted!r}")
            updated[dotted] = value
        return RunConfig(updated)

    def gen_config(self) -> GenConfig:
        v = self.values
        return GenConfig(
            num_identities=v["data.num_identities"],
            outfits_per_identity=v["data.outfits_per_identity"],
            images_per_outfit=v["data.images_per_outfit"],
            num_cameras=v["data.num_cameras"],
            height=v["data.height"],
            width=v["data.width"],
            retention_prob=v["data.retention_prob"],
            patch_size=v["model.patch_size"],
            seed=v["seed"],
        )

    def model_config(self, num_classes: int, vocab_size: int) -> ModelConfig:
        v = self.values
        return ModelConfig(
            height=v["data.height"],
            width=v["data.width"],
            patch_size=v["model.patch_size"],
            embed_dim=v["model.embed_dim"],
            num_heads=v["model.num_heads"],
            stage_layers=v["model.stage_layers"],
            description_tokens=v["model.description_tokens"],
            vocab_size=vocab_size,
            num_classes=num_classes,
            mlp_ratio=v["model.mlp_ratio"],
            margin=v["model.margin"],
            lambda_id=v["model.lambda_id"],
            lambda_tri=v["model.lambda_tri"],
            null_description=v["model.null_description"],
        )

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(
            batch_p=v["train.batch_p"],
            batch_k=v["train.batch_k"],
            epochs=v["train.epochs"],
            base_lr=v["train.base_lr"],
            warmup_start_lr=v["train.warmup_start_lr"],
            warmup_epochs=v["train.warmup_epochs"],
            decay_epochs=v["train.decay_epochs"],
            decay_factor=v["train.decay_factor"],
            momentum=v["train.momentum"],
            weight_decay=v["train.weight_decay"],
            random_crop=v["train.random_crop"],
            random_erasing=v["train.random_erasing"],
            crop_scale_min=v["train.crop_scale_min"],
            erase_prob=v["train.erase_prob"],
            mask_ratio=v["dem.mask_ratio"],
            noise_ratio=v["dem.noise_ratio"],
            freeze_noise=v["train.freeze_noise"],
            checkpoint_every=v["train.checkpoint_every"],
            seed=v["seed"],
        )

    def loss_config(self) -> LossConfig:
        v = self.values
        return LossConfig(
            lambda_id=v["model.lambda_id"],
            lambda_tri=v["model.lambda_tri"],
            margin=v["model.margin"],
        )


def default_config() -> RunConfig:
    return RunConfig({key: default for key, (_, default) in SCHEMA.items()})


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    values = {key: default for key, (_, default) in SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        tag, _ = SCHEMA[key]
        try:
            values[key] = _PARSERS[tag](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return RunConfig(values)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))


def format_config(config: RunConfig) -> str:
    lines = []
    for key in sorted(config.values):
        value = config.values[key]
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def write_resolved_config(config: RunConfig, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "config_resolved.txt"
    path.write_text(format_config(config), encoding="utf-8")
    return path
