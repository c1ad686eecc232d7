"""Identity cross-entropy, triplet loss, and their weighted combination.

The triplet distance is the squared Euclidean distance on the raw fused
features (no L2 normalization). Mining is batch-hard within the identity-
balanced batch: per anchor, the farthest same-identity sample and the nearest
different-identity sample. Cross-entropy uses no label smoothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import MiningError, ValidationError


@dataclass(frozen=True)
class LossConfig:
    lambda_id: float = 1.0
    lambda_tri: float = 1.0
    margin: float = 0.3

    def __post_init__(self) -> None:
        if self.lambda_id < 0 or self.lambda_tri < 0 or self.margin < 0:
            raise ValidationError("loss weights and margin must be non-negative")


def id_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    if logits.ndim != 2 or labels.ndim != 1 or logits.shape[0] != labels.shape[0]:
        raise ValidationError(
            f"expected (B, C) logits and (B,) labels, got {tuple(logits.shape)} / {tuple(labels.shape)}"
        )
    if logits.shape[0] == 0:
        raise ValidationError("empty batch")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValidationError(
            f"labels must lie in [0, {logits.shape[1]}), got range "
            f"[{int(labels.min())}, {int(labels.max())}]"
        )
    return F.cross_entropy(logits, labels)


def _sq_dist(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return ((a - b) ** 2).sum(dim=-1)


def triplet_loss(
    anchor: torch.Tensor, positive: torch.Tensor, negative: torch.Tensor, margin: float
) -> torch.Tensor:
    """max{0, margin + d(a,p) - d(a,n)} with squared Euclidean distance."""
    hinge = margin + _sq_dist(anchor, positive) - _sq_dist(anchor, negative)
    return torch.clamp(hinge, min=0.0)


def pairwise_sq_dists(features: torch.Tensor) -> torch.Tensor:
    diff = features.unsqueeze(1) - features.unsqueeze(0)
    return (diff**2).sum(dim=-1)


def batch_hard_triplet(
    features: torch.Tensor, labels: torch.Tensor, margin: float
) -> torch.Tensor:
    """Mean per-anchor hinge with batch-hard positive/negative mining.

    Every identity in the batch must contribute at least two samples, and at
    least two identities must be present.
    """
    if features.ndim != 2 or features.shape[0] != labels.shape[0]:
        raise ValidationError("features must be (B, D) aligned with (B,) labels")
    uniq, counts = torch.unique(labels, return_counts=True)
    for ident, count in zip(uniq.tolist(), counts.tolist()):
        if count < 2:
            raise MiningError(f"identity {ident} has a single sample in the batch")
    if len(uniq) < 2:
        raise MiningError("batch-hard mining needs at least two identities")

    dists = pairwise_sq_dists(features)
    same = labels.unsqueeze(0) == labels.unsqueeze(1)
    pos_dists = dists.masked_fill(~same, float("-inf"))
    neg_dists = dists.masked_fill(same, float("inf"))
    hardest_pos = pos_dists.max(dim=1).values
    hardest_neg = neg_dists.min(dim=1).values
    return torch.clamp(margin + hardest_pos - hardest_neg, min=0.0).mean()


def total_loss(
    logits: torch.Tensor,
    features: torch.Tensor,
    labels: torch.Tensor,
    config: LossConfig,
) -> tuple[torch.Tensor, dict[str, float]]:
    """lambda_id * id_loss + lambda_tri * batch_hard_triplet, plus a breakdown for logging."""
    l_id = id_loss(logits, labels)
    l_tri = batch_hard_triplet(features, labels, config.margin)
    total = config.lambda_id * l_id + config.lambda_tri * l_tri
    breakdown = {
        "id": float(l_id.detach()),
        "tri": float(l_tri.detach()),
        "total": float(total.detach()),
    }
    return total, breakdown
