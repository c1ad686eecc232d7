import math

import numpy as np
import pytest

from maskedreid.attributes import AttributeVector, cloth_indices, encode
from maskedreid.errors import SchemaError, ValidationError
from maskedreid.masking import (
    DictAttributeSource,
    FileAttributeSource,
    build_description,
    inject_noise,
    mask_cloth,
)
from maskedreid.seeds import stream


def random_vector(vocab, rng):
    return AttributeVector(rng.integers(0, 2, size=len(vocab)).astype(np.uint8), vocab)


def test_full_mask_zeroes_cloth_only(vocab, rng):
    cloth = np.array(cloth_indices(vocab))
    noncloth = np.setdiff1d(np.arange(len(vocab)), cloth)
    vec = random_vector(vocab, rng)
    out = mask_cloth(vec, vocab, 1.0, rng)
    assert out.bits[cloth].sum() == 0
    assert np.array_equal(out.bits[noncloth], vec.bits[noncloth])


def test_full_mask_needs_no_rng_draws(vocab, rng):
    vec = random_vector(vocab, rng)
    rng_a = stream(7, "noise")
    rng_b = stream(7, "noise")
    mask_cloth(vec, vocab, 1.0, rng_a)
    # identical downstream draws prove ratio=1 consumed nothing
    assert rng_a.integers(0, 1 << 30) == rng_b.integers(0, 1 << 30)


def test_zero_mask_is_identity(vocab, rng):
    vec = random_vector(vocab, rng)
    out = mask_cloth(vec, vocab, 0.0, rng)
    assert np.array_equal(out.bits, vec.bits)


def test_partial_mask_counts_and_positions(vocab):
    cloth = set(cloth_indices(vocab))
    expected = math.ceil(0.6 * len(cloth))
    ones = AttributeVector(np.ones(len(vocab), dtype=np.uint8), vocab)
    for seed in (0, 1, 2):
        out = mask_cloth(ones, vocab, 0.6, stream(seed, "noise"))
        changed = set(np.flatnonzero(out.bits != ones.bits).tolist())
        assert changed <= cloth
        assert len(changed) == expected  # all-ones input makes every zeroed position visible


def test_mask_never_touches_noncloth_positions(vocab, rng):
    noncloth = np.setdiff1d(np.arange(len(vocab)), np.array(cloth_indices(vocab)))
    for _ in range(100):
        vec = random_vector(vocab, rng)
        ratio = float(rng.uniform(0, 1))
        out = mask_cloth(vec, vocab, ratio, rng)
        assert np.array_equal(out.bits[noncloth], vec.bits[noncloth])


def test_full_mask_idempotent(vocab, rng):
    vec = random_vector(vocab, rng)
    once = mask_cloth(vec, vocab, 1.0, rng)
    twice = mask_cloth(once, vocab, 1.0, rng)
    assert np.array_equal(once.bits, twice.bits)


def test_mask_ratio_out_of_range(vocab, rng):
    vec = random_vector(vocab, rng)
    for bad in (-0.1, 1.5):
        with pytest.raises(ValidationError):
            mask_cloth(vec, vocab, bad, rng)


def test_zero_noise_is_identity(vocab, rng):
    vec = random_vector(vocab, rng)
    out = inject_noise(vec, 0.0, rng)
    assert np.array_equal(out.bits, vec.bits)


def test_full_noise_sets_half_the_bits_on_average(vocab):
    # binomial statistics oracle: V positions redrawn as fair bits
    zeros = AttributeVector(np.zeros(len(vocab), dtype=np.uint8), vocab)
    rng = stream(3, "noise")
    trials = 10_000
    fractions = np.empty(trials)
    for i in range(trials):
        fractions[i] = inject_noise(zeros, 1.0, rng).bits.mean()
    se = math.sqrt(0.25 / len(vocab)) / math.sqrt(trials)
    assert abs(fractions.mean() - 0.5) < 3 * se


def test_noise_draw_count(vocab):
    assert math.ceil(0.1 * len(vocab)) == 11
    zeros = AttributeVector(np.zeros(len(vocab), dtype=np.uint8), vocab)
    ones = AttributeVector(np.ones(len(vocab), dtype=np.uint8), vocab)
    rng = stream(11, "noise")
    changed = []
    for _ in range(400):
        changed.append(int((inject_noise(zeros, 0.1, rng).bits != zeros.bits).sum()))
        changed.append(int((inject_noise(ones, 0.1, rng).bits != ones.bits).sum()))
    changed = np.array(changed)
    # 11 positions drawn per call; each changes with probability 1/2
    assert changed.max() <= 11
    assert abs(changed.mean() - 5.5) < 3 * math.sqrt(11 * 0.25 / len(changed))


def test_noise_ratio_out_of_range(vocab, rng):
    vec = random_vector(vocab, rng)
    with pytest.raises(ValidationError):
        inject_noise(vec, 1.01, rng)


def test_build_description_mask_only(vocab, rng):
    raw = random_vector(vocab, rng)
    source = DictAttributeSource({"s0": raw})
    desc = build_description("s0", source, vocab, 1.0, 0.0, rng)
    cloth = np.array(cloth_indices(vocab))
    noncloth = np.setdiff1d(np.arange(len(vocab)), cloth)
    assert desc.bits[cloth].sum() == 0
    assert np.array_equal(desc.bits[noncloth], raw.bits[noncloth])
    assert desc.mask_ratio == 1.0 and desc.noise_ratio == 0.0
    assert desc.sample_id == "s0"


def test_build_description_deterministic_under_seed(vocab, rng):
    source = DictAttributeSource({"s0": random_vector(vocab, rng)})
    a = build_description("s0", source, vocab, 1.0, 0.1, stream(5, "noise"))
    b = build_description("s0", source, vocab, 1.0, 0.1, stream(5, "noise"))
    assert np.array_equal(a.bits, b.bits)


def test_build_description_noise_after_mask(vocab):
    # with full mask and full noise, some cloth bits come back on: noise runs last
    ones = AttributeVector(np.ones(len(vocab), dtype=np.uint8), vocab)
    source = DictAttributeSource({"s0": ones})
    rng = stream(9, "noise")
    cloth = np.array(cloth_indices(vocab))
    hits = sum(
        build_description("s0", source, vocab, 1.0, 1.0, rng).bits[cloth].sum()
        for _ in range(20)
    )
    assert hits > 0


def test_build_description_unknown_sample(vocab, rng):
    source = DictAttributeSource({})
    with pytest.raises(ValidationError, match="nope"):
        build_description("nope", source, vocab, 1.0, 0.0, rng)


def test_file_attribute_source_round_trip(tmp_path, vocab, rng):
    vec = random_vector(vocab, rng)
    path = tmp_path / "attrs.tsv"
    path.write_text(f"s1\t{vec.to_bitstring()}\n", encoding="utf-8")
    source = FileAttributeSource(path, vocab)
    assert np.array_equal(source.lookup("s1").bits, vec.bits)
    assert source.sample_ids == ("s1",)


def test_file_attribute_source_length_mismatch(tmp_path, vocab):
    path = tmp_path / "attrs.tsv"
    path.write_text("s1\t0101\n", encoding="utf-8")
    with pytest.raises(SchemaError, match="length"):
        FileAttributeSource(path, vocab)


def test_file_attribute_source_duplicate_sample(tmp_path, vocab):
    bits = "0" * len(vocab)
    path = tmp_path / "attrs.tsv"
    path.write_text(f"s1\t{bits}\ns1\t{bits}\n", encoding="utf-8")
    with pytest.raises(SchemaError, match="duplicate"):
        FileAttributeSource(path, vocab)
