import math

import numpy as np
import pytest
import torch

from maskedreid.errors import MiningError, ValidationError
from maskedreid.losses import (
    LossConfig,
    batch_hard_triplet,
    id_loss,
    total_loss,
    triplet_loss,
)
from oracles import batch_hard_oracle, finite_difference_grads, softmax_ce_oracle, triplet_oracle


def test_uniform_logits_give_log_c():
    logits = torch.zeros(3, 5, dtype=torch.float64)
    labels = torch.tensor([0, 2, 4])
    assert abs(float(id_loss(logits, labels)) - math.log(5)) < 1e-10


def test_confident_logits_drive_loss_to_zero():
    logits = torch.zeros(1, 4, dtype=torch.float64)
    logits[0, 1] = 50.0
    assert float(id_loss(logits, torch.tensor([1]))) < 1e-10


def test_id_loss_matches_direct_summation(rng):
    logits = rng.normal(size=(8, 6))
    labels = rng.integers(0, 6, size=8)
    ours = float(id_loss(torch.from_numpy(logits), torch.from_numpy(labels)))
    assert abs(ours - softmax_ce_oracle(logits, labels)) < 1e-10


def test_id_loss_label_out_of_range():
    with pytest.raises(ValidationError):
        id_loss(torch.zeros(2, 3), torch.tensor([0, 3]))


def test_id_loss_shift_invariance(rng):
    logits = torch.from_numpy(rng.normal(size=(4, 5)))
    labels = torch.tensor([0, 1, 2, 3])
    shifted = logits + torch.from_numpy(rng.normal(size=(4, 1)))
    assert abs(float(id_loss(logits, labels)) - float(id_loss(shifted, labels))) < 1e-10


def test_triplet_zero_when_margin_satisfied():
    a = torch.zeros(4, dtype=torch.float64)
    p = torch.zeros(4, dtype=torch.float64)
    n = torch.full((4,), 10.0, dtype=torch.float64)
    assert float(triplet_loss(a, p, n, margin=0.3)) == 0.0


def test_degenerate_triplet_returns_margin():
    a = torch.ones(6)
    assert float(triplet_loss(a, a, a, margin=0.7)) == pytest.approx(0.7)


def test_triplet_matches_scalar_formula(rng):
    for _ in range(100):
        a, p, n = (torch.from_numpy(rng.normal(size=16)) for _ in range(3))
        ours = float(triplet_loss(a, p, n, margin=0.3))
        assert ours == pytest.approx(triplet_oracle(a.numpy(), p.numpy(), n.numpy(), 0.3), abs=1e-12)


def test_triplet_rotation_invariance(rng):
    a, p, n = (torch.from_numpy(rng.normal(size=8)) for _ in range(3))
    q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
    rot = torch.from_numpy(q)
    before = float(triplet_loss(a, p, n, 0.5))
    after = float(triplet_loss(rot @ a, rot @ p, rot @ n, 0.5))
    assert before == pytest.approx(after, abs=1e-9)


def test_batch_hard_identical_features():
    features = torch.ones(6, 4)
    labels = torch.tensor([0, 0, 0, 1, 1, 1])
    assert float(batch_hard_triplet(features, labels, margin=0.3)) == pytest.approx(0.3)


def test_batch_hard_separated_clusters_zero():
    features = torch.zeros(4, 3)
    features[2:] = 100.0
    labels = torch.tensor([0, 0, 1, 1])
    assert float(batch_hard_triplet(features, labels, margin=0.3)) == 0.0


def test_batch_hard_matches_exhaustive_oracle(rng):
    for _ in range(50):
        features = rng.normal(size=(8, 5))
        labels = np.repeat(rng.choice(10, size=2, replace=False), 4)
        ours = float(batch_hard_triplet(torch.from_numpy(features), torch.from_numpy(labels), 0.4))
        assert ours == pytest.approx(batch_hard_oracle(features, labels, 0.4), abs=1e-12)


def test_batch_hard_single_sample_identity():
    features = torch.zeros(3, 2)
    labels = torch.tensor([0, 0, 7])
    with pytest.raises(MiningError, match="7"):
        batch_hard_triplet(features, labels, 0.3)


def test_total_loss_weighting(rng):
    logits = torch.from_numpy(rng.normal(size=(8, 4)))
    features = torch.from_numpy(rng.normal(size=(8, 6)))
    labels = torch.from_numpy(np.repeat([0, 1], 4))
    l_id = float(id_loss(logits, labels))
    l_tri = float(batch_hard_triplet(features, labels, 0.3))

    only_id, _ = total_loss(logits, features, labels, LossConfig(1.0, 0.0, 0.3))
    assert float(only_id) == pytest.approx(l_id, abs=1e-12)

    both, breakdown = total_loss(logits, features, labels, LossConfig(1.0, 1.0, 0.3))
    assert float(both) == pytest.approx(l_id + l_tri, abs=1e-12)
    assert breakdown["id"] == pytest.approx(l_id, rel=1e-6)
    assert breakdown["tri"] == pytest.approx(l_tri, rel=1e-6)

    zero, _ = total_loss(logits, features, labels, LossConfig(0.0, 0.0, 0.3))
    assert float(zero) == 0.0


def test_total_loss_nonnegative(rng):
    for _ in range(20):
        logits = torch.from_numpy(rng.normal(size=(8, 3)))
        features = torch.from_numpy(rng.normal(size=(8, 4)))
        labels = torch.from_numpy(np.repeat(rng.choice(3, 2, replace=False), 4))
        value, _ = total_loss(logits, features, labels, LossConfig())
        assert float(value) >= 0.0


def test_loss_gradients_match_finite_differences(rng):
    logits = torch.from_numpy(rng.normal(size=(4, 3))).requires_grad_(True)
    features = torch.from_numpy(rng.normal(size=(4, 5))).requires_grad_(True)
    labels = torch.tensor([0, 0, 1, 1])
    config = LossConfig(1.0, 1.0, 0.3)

    value, _ = total_loss(logits, features, labels, config)
    value.backward()
    analytic = [logits.grad.clone(), features.grad.clone()]

    def loss_fn():
        v, _ = total_loss(logits, features, labels, config)
        return v.detach()

    numeric = finite_difference_grads(loss_fn, [logits, features])
    for g_a, g_n in zip(analytic, numeric):
        rel = (g_a - g_n).norm() / max(float(g_a.norm() + g_n.norm()), 1e-12)
        assert rel < 1e-4
