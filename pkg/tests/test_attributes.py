import numpy as np
import pytest

from maskedreid.attributes import (
    AttributeVector,
    AttributeVocabulary,
    CLOTH_CATEGORIES,
    cloth_indices,
    decode,
    encode,
    load_vocabulary,
)
from maskedreid.errors import AlignmentError, EncodingError, SchemaError


def write_vocab(tmp_path, lines, name="vocab.tsv"):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_default_vocabulary_has_105_labels(vocab):
    assert len(vocab) == 105
    assert len(set(vocab.labels)) == 105


def test_default_cloth_categories(vocab):
    for label in vocab.labels:
        expected = vocab.category_of(label) in CLOTH_CATEGORIES
        assert vocab.cloth_related(label) == expected


def test_small_vocabulary_counts(tmp_path):
    path = write_vocab(
        tmp_path,
        [
            "male\tgender",
            "hat\tcarried-items",
            "red-top\tupper-body-color",
            "old\tage",
            "blue-top\tupper-body-color",
            "boots\tshoe-type",
        ],
    )
    vocab = load_vocabulary(path)
    assert len(vocab) == 6
    assert cloth_indices(vocab) == (2, 4)


def test_load_preserves_file_order(tmp_path):
    path = write_vocab(tmp_path, ["b\tgender", "a\tage", "c\tshoe-type"])
    vocab = load_vocabulary(path)
    assert vocab.labels == ("b", "a", "c")


def test_comments_and_blank_lines_ignored(tmp_path):
    path = write_vocab(tmp_path, ["# header", "", "male\tgender", "  ", "# tail"])
    assert load_vocabulary(path).labels == ("male",)


def test_duplicate_label_rejected(tmp_path):
    path = write_vocab(tmp_path, ["male\tgender", "male\tgender"])
    with pytest.raises(SchemaError, match="duplicate"):
        load_vocabulary(path)


def test_unknown_category_rejected(tmp_path):
    path = write_vocab(tmp_path, ["male\tnot-a-category"])
    with pytest.raises(SchemaError, match="unknown category"):
        load_vocabulary(path)


def test_empty_file_rejected(tmp_path):
    path = write_vocab(tmp_path, ["# only a comment"])
    with pytest.raises(SchemaError, match="no labels"):
        load_vocabulary(path)


def test_malformed_line_rejected(tmp_path):
    path = write_vocab(tmp_path, ["male gender"])
    with pytest.raises(SchemaError):
        load_vocabulary(path)


def test_encode_empty_is_all_zeros(vocab):
    vec = encode([], vocab)
    assert vec.bits.sum() == 0
    assert len(vec) == len(vocab)


def test_encode_sets_expected_positions(vocab):
    vec = encode(["male", "age-18-30"], vocab)
    assert vec.bits[vocab.index_of["male"]] == 1
    assert vec.bits[vocab.index_of["age-18-30"]] == 1
    assert vec.bits.sum() == 2


def test_encode_unknown_label(vocab):
    with pytest.raises(EncodingError, match="mystery"):
        encode(["mystery"], vocab)


def test_encode_order_independent_and_deterministic(vocab):
    a = encode(["male", "jeans", "sneakers"], vocab)
    b = encode(["sneakers", "male", "jeans"], vocab)
    assert np.array_equal(a.bits, b.bits)
    assert np.array_equal(a.bits, encode(["male", "jeans", "sneakers"], vocab).bits)


def test_decode_all_zeros_and_all_ones(vocab):
    zeros = AttributeVector(np.zeros(len(vocab), dtype=np.uint8), vocab)
    ones = AttributeVector(np.ones(len(vocab), dtype=np.uint8), vocab)
    assert decode(zeros, vocab) == []
    assert decode(ones, vocab) == list(vocab.labels)


def test_decode_matches_index_scan(vocab, rng):
    for _ in range(50):
        bits = rng.integers(0, 2, size=len(vocab)).astype(np.uint8)
        vec = AttributeVector(bits, vocab)
        # brute-force index scan oracle
        expected = [vocab.labels[i] for i in range(len(vocab)) if bits[i] == 1]
        assert decode(vec, vocab) == expected


def test_encode_decode_round_trip(vocab, rng):
    labels = np.array(vocab.labels)
    for _ in range(500):
        size = int(rng.integers(0, len(vocab) + 1))
        subset = set(rng.choice(labels, size=size, replace=False).tolist())
        assert set(decode(encode(subset, vocab), vocab)) == subset


def test_cloth_indices_matches_direct_scan(vocab):
    expected = tuple(
        i for i, label in enumerate(vocab.labels)
        if vocab.category_of(label) in CLOTH_CATEGORIES
    )
    assert cloth_indices(vocab) == expected
    assert len(expected) == 54


def test_cloth_indices_empty_without_cloth_categories(tmp_path):
    path = write_vocab(tmp_path, ["male\tgender", "old\tage"])
    assert cloth_indices(load_vocabulary(path)) == ()


def test_vector_length_mismatch(vocab):
    with pytest.raises(AlignmentError):
        AttributeVector(np.zeros(3, dtype=np.uint8), vocab)


def test_vector_must_be_binary(vocab):
    bits = np.zeros(len(vocab), dtype=np.uint8)
    bits[0] = 2
    with pytest.raises(AlignmentError):
        AttributeVector(bits, vocab)


def test_bitstring_round_trip(vocab, rng):
    bits = rng.integers(0, 2, size=len(vocab)).astype(np.uint8)
    vec = AttributeVector(bits, vocab)
    text = vec.to_bitstring()
    assert len(text) == len(vocab)
    assert np.array_equal(AttributeVector.from_bitstring(text, vocab).bits, bits)


def test_vector_is_immutable(vocab):
    vec = encode(["male"], vocab)
    with pytest.raises(ValueError):
        vec.bits[0] = 0
