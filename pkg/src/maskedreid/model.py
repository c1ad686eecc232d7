"""Staged vision transformer with masked-description token fusion.

Stage 1 encodes image patch tokens plus a class token. The masked description
vector is linearly projected into K embedding-dim tokens, prepended together
with a learned [DES] token to the stage-1 patch tokens (the stage-1 class
token is not carried forward), and the combined sequence runs through stages
2 and 3. The [DES] outputs of stages 2 and 3 and the stage-1 class token are
aggregated channel-wise by a width-1 Conv1d into the final person feature.

Blocks are standard pre-norm multi-head self-attention plus a GELU MLP with
residual connections; no dropout, so evaluation is deterministic. At inference
the description is replaced by a fixed null (all-zeros vector by default, or a
learned null token), so embeddings never depend on detected attributes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np
import torch
from torch import nn

from .errors import CheckpointError, ConfigError, RuntimeFailure

CHECKPOINT_MAGIC = "maskedreid-checkpoint"
CHECKPOINT_VERSION = 1


class NumericError(RuntimeFailure):
    """Non-finite activations were produced."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``description_tokens=0`` disables the description branch entirely (the
    image-only baseline); the fusion sequence is then just [DES] plus patch
    tokens.
    """

    height: int = 32
    width: int = 32
    patch_size: int = 8
    embed_dim: int = 16
    num_heads: int = 2
    stage_layers: tuple[int, int, int] = (2, 2, 1)
    description_tokens: int = 1  # K
    vocab_size: int = 105
    num_classes: int = 2
    mlp_ratio: float = 4.0
    margin: float = 0.3
    lambda_id: float = 1.0
    lambda_tri: float = 1.0
    null_description: str = "zeros"  # or "learned"

    def __post_init__(self) -> None:
        if self.height % self.patch_size or self.width % self.patch_size:
            raise ConfigError(
                f"patch size {self.patch_size} must divide image size "
                f"{self.height}x{self.width}"
            )
        if self.embed_dim % self.num_heads:
            raise ConfigError(
                f"embed dim {self.embed_dim} must be divisible by {self.num_heads} heads"
            )
        if len(self.stage_layers) != 3 or any(l < 1 for l in self.stage_layers):
            raise ConfigError(f"stage_layers must be three counts >= 1, got {self.stage_layers}")
        if self.description_tokens < 0:
            raise ConfigError("description_tokens must be >= 0")
        if self.num_classes < 1 or self.vocab_size < 1:
            raise ConfigError("num_classes and vocab_size must be >= 1")
        if self.null_description not in ("zeros", "learned"):
            raise ConfigError(f"unknown null_description mode {self.null_description!r}")

    @property
    def num_patches(self) -> int:
        return (self.height // self.patch_size) * (self.width // self.patch_size)

    @property
    def fusion_length(self) -> int:
        return 1 + self.description_tokens + self.num_patches

    @classmethod
    def toy(cls, num_classes: int, vocab_size: int = 105, **kw) -> "ModelConfig":
        """32x32 images, 8px patches, 16-dim embeddings, stage split (2, 2, 1)."""
        return cls(
            height=32, width=32, patch_size=8, embed_dim=16, num_heads=2,
            stage_layers=(2, 2, 1), num_classes=num_classes, vocab_size=vocab_size, **kw,
        )

    @classmethod
    def paper_scale(cls, num_classes: int, vocab_size: int = 105, **kw) -> "ModelConfig":
        """224x224 images, 16px patches, 24 layers split (10, 10, 4)."""
        return cls(
            height=224, width=224, patch_size=16, embed_dim=1024, num_heads=16,
            stage_layers=(10, 10, 4), num_classes=num_classes, vocab_size=vocab_size, **kw,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage_layers"] = list(self.stage_layers)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        d = dict(d)
        d["stage_layers"] = tuple(d["stage_layers"])
        return cls(**d)


@dataclass
class ForwardOutput:
    """Per-stage features, their aggregation, and classifier logits."""

    f_cls_v: torch.Tensor  # (B, D) stage-1 class token
    f_des_2: torch.Tensor  # (B, D) stage-2 [DES] token
    f_des_3: torch.Tensor  # (B, D) stage-3 [DES] token
    fused: torch.Tensor    # (B, D) aggregated feature
    logits: torch.Tensor   # (B, C)


class SelfAttention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.num_heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(self.head_dim), dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, d)
        return self.proj(out)


class Block(nn.Module):
    """Pre-norm transformer block. Zeroing ``attn.proj`` and ``mlp[2]`` makes it the identity."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: float):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        x = x + self.mlp(self.norm2(x))
        return x


class DescriptionFusionModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c = config
        patch_dim = 3 * c.patch_size * c.patch_size
        self.patch_proj = nn.Linear(patch_dim, c.embed_dim)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, c.embed_dim))
        self.pos_stage1 = nn.Parameter(torch.zeros(1, c.num_patches + 1, c.embed_dim))
        self.des_token = nn.Parameter(torch.zeros(1, 1, c.embed_dim))
        # Fusion sequence gets its own positional table: its layout differs from stage 1.
        self.pos_fusion = nn.Parameter(torch.zeros(1, c.fusion_length, c.embed_dim))
        if c.description_tokens > 0:
            self.desc_proj = nn.Linear(c.vocab_size, c.description_tokens * c.embed_dim)
            if c.null_description == "learned":
                self.null_desc = nn.Parameter(torch.zeros(1, c.description_tokens, c.embed_dim))
        self.stage1_blocks = nn.ModuleList(
            Block(c.embed_dim, c.num_heads, c.mlp_ratio) for _ in range(c.stage_layers[0])
        )
        self.stage2_blocks = nn.ModuleList(
            Block(c.embed_dim, c.num_heads, c.mlp_ratio) for _ in range(c.stage_layers[1])
        )
        self.stage3_blocks = nn.ModuleList(
            Block(c.embed_dim, c.num_heads, c.mlp_ratio) for _ in range(c.stage_layers[2])
        )
        self.agg_conv = nn.Conv1d(3, 1, kernel_size=1)
        self.agg_norm = nn.LayerNorm(c.embed_dim)
        self.classifier = nn.Linear(c.embed_dim, c.num_classes)

    # --- pipeline pieces -------------------------------------------------

    def patchify(self, images: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) -> (B, N+1, D): row-major patches, class token, positions."""
        c = self.config
        b, ch, h, w = images.shape
        if (ch, h, w) != (3, c.height, c.width):
            raise ConfigError(
                f"expected images of shape (B, 3, {c.height}, {c.width}), got {tuple(images.shape)}"
            )
        p = c.patch_size
        x = images.reshape(b, 3, h // p, p, w // p, p)
        x = x.permute(0, 2, 4, 3, 5, 1).reshape(b, c.num_patches, 3 * p * p)
        tokens = self.patch_proj(x)
        cls = self.cls_token.expand(b, -1, -1).to(tokens.dtype)
        return torch.cat([cls, tokens], dim=1) + self.pos_stage1

    def stage1(self, tokens: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Run the first stage; returns the full sequence and the class-token feature."""
        x = tokens
        for block in self.stage1_blocks:
            x = block(x)
        return x, x[:, 0]

    def project_description(self, descriptions: torch.Tensor) -> torch.Tensor:
        """(B, V) -> (B, K, D) description feature tokens."""
        c = self.config
        if c.description_tokens == 0:
            return descriptions.new_zeros((descriptions.shape[0], 0, c.embed_dim))
        if descriptions.shape[-1] != c.vocab_size:
            raise ConfigError(
                f"description length {descriptions.shape[-1]} != vocab size {c.vocab_size}"
            )
        out = self.desc_proj(descriptions)
        return out.reshape(descriptions.shape[0], c.description_tokens, c.embed_dim)

    def fuse_stages(
        self, patch_tokens: torch.Tensor, desc_tokens: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Stages 2-3 over [DES] + description tokens + stage-1 patch tokens."""
        b = patch_tokens.shape[0]
        des = self.des_token.expand(b, -1, -1).to(patch_tokens.dtype)
        x = torch.cat([des, desc_tokens, patch_tokens], dim=1) + self.pos_fusion
        for block in self.stage2_blocks:
            x = block(x)
        f_des_2 = x[:, 0]
        for block in self.stage3_blocks:
            x = block(x)
        return f_des_2, x[:, 0]

    def aggregate(
        self, f_cls_v: torch.Tensor, f_des_2: torch.Tensor, f_des_3: torch.Tensor
    ) -> torch.Tensor:
        """Width-1 Conv1d over the three stage features as channels, then LayerNorm."""
        stacked = torch.stack([f_cls_v, f_des_2, f_des_3], dim=1)  # (B, 3, D)
        return self.agg_norm(self.agg_conv(stacked).squeeze(1))

    def forward(self, images: torch.Tensor, descriptions: torch.Tensor | None) -> ForwardOutput:
        c = self.config
        tokens = self.patchify(images)
        seq1, f_cls_v = self.stage1(tokens)
        if c.description_tokens > 0:
            if descriptions is None:
                descriptions = images.new_zeros((images.shape[0], c.vocab_size))
            desc_tokens = self.project_description(descriptions.to(tokens.dtype))
        else:
            desc_tokens = tokens.new_zeros((images.shape[0], 0, c.embed_dim))
        f_des_2, f_des_3 = self.fuse_stages(seq1[:, 1:], desc_tokens)
        fused = self.aggregate(f_cls_v, f_des_2, f_des_3)
        logits = self.classifier(fused)
        if not bool(torch.isfinite(logits).all()) or not bool(torch.isfinite(fused).all()):
            raise NumericError("non-finite activations in forward pass")
        return ForwardOutput(f_cls_v, f_des_2, f_des_3, fused, logits)

    @torch.no_grad()
    def embed_inference(self, images: torch.Tensor) -> torch.Tensor:
        """L2-normalized fused feature with the null description; ignores detected attributes."""
        c = self.config
        was_training = self.training
        self.eval()
        try:
            if c.description_tokens > 0 and c.null_description == "learned":
                tokens = self.patchify(images)
                seq1, f_cls_v = self.stage1(tokens)
                desc_tokens = self.null_desc.expand(images.shape[0], -1, -1).to(tokens.dtype)
                f_des_2, f_des_3 = self.fuse_stages(seq1[:, 1:], desc_tokens)
                fused = self.aggregate(f_cls_v, f_des_2, f_des_3)
            else:
                fused = self.forward(
                    images, images.new_zeros((images.shape[0], c.vocab_size))
                ).fused
        finally:
            self.train(was_training)
        return fused / fused.norm(dim=-1, keepdim=True).clamp_min(1e-12)


def init_parameters(model: DescriptionFusionModel, rng: np.random.Generator) -> None:
    """Deterministic initialization driven by a numpy generator.

    Weights and token/position tables are N(0, 0.02); biases zero; LayerNorm
    affine is identity; the aggregation kernel starts as the mean of the three
    stage features.
    """
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name == "agg_conv.weight":
                param.fill_(1.0 / 3.0)
            elif name.endswith(".bias"):
                param.zero_()
            elif "norm" in name and name.endswith(".weight"):
                param.fill_(1.0)
            else:
                values = rng.normal(0.0, 0.02, size=tuple(param.shape))
                param.copy_(torch.from_numpy(values).to(param.dtype))


def build_model(config: ModelConfig, init_rng: np.random.Generator | None = None) -> DescriptionFusionModel:
    model = DescriptionFusionModel(config)
    if init_rng is not None:
        init_parameters(model, init_rng)
    return model


def save_checkpoint(
    path: str | Path,
    model: DescriptionFusionModel,
    extras: Mapping | None = None,
) -> None:
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "model_config": model.config.to_dict(),
        "extras": dict(extras or {}),
        "state_dict": {k: v.detach().cpu() for k, v in model.state_dict().items()},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[DescriptionFusionModel, ModelConfig, dict]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a model checkpoint (bad magic header)")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {payload.get('version')}"
        )
    config = ModelConfig.from_dict(payload["model_config"])
    model = DescriptionFusionModel(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, config, dict(payload.get("extras", {}))
