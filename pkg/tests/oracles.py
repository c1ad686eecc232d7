"""Independent brute-force oracles used to cross-check the implementations.

Everything here is written from the definitions alone (plain loops, no shared
code paths with the package) so oracle and implementation can only agree by
both being right.
"""

from __future__ import annotations

import math

import numpy as np
import torch


def softmax_ce_oracle(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean of -log softmax(logits)[label], computed by direct summation."""
    total = 0.0
    for row, label in zip(logits, labels):
        shifted = row - row.max()
        denom = sum(math.exp(v) for v in shifted)
        total += -(shifted[label] - math.log(denom))
    return total / len(labels)


def triplet_oracle(a: np.ndarray, p: np.ndarray, n: np.ndarray, margin: float) -> float:
    d_ap = float(((a - p) ** 2).sum())
    d_an = float(((a - n) ** 2).sum())
    return max(0.0, margin + d_ap - d_an)


def batch_hard_oracle(features: np.ndarray, labels: np.ndarray, margin: float) -> float:
    """Exhaustive hardest-positive / hardest-negative selection per anchor."""
    total = 0.0
    for i in range(len(features)):
        hardest_pos = max(
            float(((features[i] - features[j]) ** 2).sum())
            for j in range(len(features))
            if labels[j] == labels[i]
        )
        hardest_neg = min(
            float(((features[i] - features[j]) ** 2).sum())
            for j in range(len(features))
            if labels[j] != labels[i]
        )
        total += max(0.0, margin + hardest_pos - hardest_neg)
    return total / len(features)


def valid_gallery_oracle(query, gallery, setting: str) -> list[int]:
    """Rule-by-rule reimplementation of the three protocol filters."""
    keep = []
    for i, g in enumerate(gallery):
        same_id = g.identity_id == query.identity_id
        same_cam = g.camera_id == query.camera_id
        same_clothes = g.clothes_id == query.clothes_id
        if not same_id:
            keep.append(i)
        elif setting == "general":
            if not same_cam:
                keep.append(i)
        elif setting == "cc":
            if not same_cam and not same_clothes:
                keep.append(i)
        elif setting == "sc":
            if not same_cam and same_clothes:
                keep.append(i)
        else:
            raise ValueError(setting)
    return keep


def rank_list_oracle(query, gallery, valid: list[int]) -> list[int]:
    scored = [(1.0 - float(np.dot(gallery[i].feature, query.feature)), i) for i in valid]
    scored.sort()
    return [i for _, i in scored]


def cmc_map_oracle(queries, gallery, setting: str, ks=(1, 5, 10)):
    """CMC/mAP from the bare definitions, one query at a time."""
    cmc_hits = {k: 0 for k in ks}
    aps = []
    skipped = 0
    for q in queries:
        valid = valid_gallery_oracle(q, gallery, setting)
        order = rank_list_oracle(q, gallery, valid)
        correct_ranks = [
            rank for rank, i in enumerate(order, start=1)
            if gallery[i].identity_id == q.identity_id
        ]
        if not correct_ranks:
            skipped += 1
            continue
        for k in ks:
            if correct_ranks[0] <= k:
                cmc_hits[k] += 1
        ap = sum(i / r for i, r in enumerate(correct_ranks, start=1)) / len(correct_ranks)
        aps.append(ap)
    n = len(aps)
    return (
        {k: cmc_hits[k] / n for k in ks},
        sum(aps) / n,
        n,
        skipped,
    )


def finite_difference_grads(
    loss_fn, params: list[torch.Tensor], h: float = 1e-6
) -> list[torch.Tensor]:
    """Central finite differences of a scalar loss w.r.t. each parameter tensor."""
    grads = []
    for param in params:
        grad = torch.zeros_like(param)
        flat = param.data.view(-1)
        gflat = grad.view(-1)
        for j in range(flat.numel()):
            orig = flat[j].item()
            step = h * max(1.0, abs(orig))
            flat[j] = orig + step
            up = loss_fn().item()
            flat[j] = orig - step
            down = loss_fn().item()
            flat[j] = orig
            gflat[j] = (up - down) / (2.0 * step)
        grads.append(grad)
    return grads
