"""Attribute label space: ordered vocabulary, categories, and binary vectors.

A vocabulary is an ordered list of labels, each belonging to one of ten fixed
categories. The four garment categories (upper/lower body color and type) are
the cloth-related set; masking operates on exactly those positions. Attribute
lists are represented as 0/1 vectors aligned to the vocabulary order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import AlignmentError, EncodingError, SchemaError

CATEGORIES = (
    "gender",
    "age",
    "orientation",
    "carried-items",
    "upper-body-color",
    "upper-body-type",
    "lower-body-color",
    "lower-body-type",
    "shoe-color",
    "shoe-type",
)

CLOTH_CATEGORIES = frozenset(
    {"upper-body-color", "upper-body-type", "lower-body-color", "lower-body-type"}
)

DEFAULT_VOCABULARY_SIZE = 105


@dataclass(frozen=True)
class AttributeVocabulary:
    """Ordered attribute labels with their categories.

    Immutable after construction; derived index structures are cached and the
    object is safe to share between threads.
    """

    labels: tuple[str, ...]
    categories: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.labels) == 0:
            raise SchemaError("vocabulary must contain at least one label")
        if len(self.labels) != len(self.categories):
            raise SchemaError("labels and categories must have equal length")
        seen: set[str] = set()
        for label, category in zip(self.labels, self.categories):
            if label in seen:
                raise SchemaError(f"duplicate label {label!r}")
            seen.add(label)
            if category not in CATEGORIES:
                raise SchemaError(f"unknown category {category!r} for label {label!r}")

    def __len__(self) -> int:
        return len(self.labels)

    @cached_property
    def index_of(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.labels)}

    def category_of(self, label: str) -> str:
        try:
            return self.categories[self.index_of[label]]
        except KeyError:
            raise EncodingError(f"unknown label {label!r}") from None

    def cloth_related(self, label: str) -> bool:
        return self.category_of(label) in CLOTH_CATEGORIES

    @cached_property
    def category_indices(self) -> dict[str, tuple[int, ...]]:
        """Label positions grouped by category, in vocabulary order."""
        out: dict[str, list[int]] = {}
        for i, category in enumerate(self.categories):
            out.setdefault(category, []).append(i)
        return {c: tuple(v) for c, v in out.items()}

    @cached_property
    def cloth_irrelevant_categories(self) -> tuple[str, ...]:
        return tuple(
            c for c in CATEGORIES if c not in CLOTH_CATEGORIES and c in self.category_indices
        )


@dataclass(frozen=True)
class AttributeVector:
    """A 0/1 vector aligned to a vocabulary."""

    bits: np.ndarray = field(repr=False)
    vocab: AttributeVocabulary

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or bits.shape[0] != len(self.vocab):
            raise AlignmentError(
                f"vector length {bits.shape} does not match vocabulary size {len(self.vocab)}"
            )
        if not np.isin(bits, (0, 1)).all():
            raise AlignmentError("vector elements must be 0 or 1")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return len(self.bits)

    def to_bitstring(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    @classmethod
    def from_bitstring(cls, text: str, vocab: AttributeVocabulary) -> "AttributeVector":
        if set(text) - {"0", "1"}:
            raise AlignmentError(f"bitstring contains characters other than 0/1: {text!r}")
        return cls(np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0"), vocab)


def load_vocabulary(path: str | Path) -> AttributeVocabulary:
    """Load a vocabulary from a ``label<TAB>category`` text file.

    Lines starting with ``#`` and blank lines are ignored. Raises
    :class:`SchemaError` on duplicate labels, unknown categories, malformed
    lines, or an empty file.
    """
    path = Path(path)
    labels: list[str] = []
    categories: list[str] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise SchemaError(f"{path}:{lineno}: expected 'label<TAB>category', got {raw!r}")
        labels.append(parts[0])
        categories.append(parts[1])
    if not labels:
        raise SchemaError(f"{path}: vocabulary file contains no labels")
    return AttributeVocabulary(tuple(labels), tuple(categories))


def default_vocabulary() -> AttributeVocabulary:
    """The bundled 105-label vocabulary."""
    ref = resources.files("maskedreid").joinpath("data/vocabulary.tsv")
    with resources.as_file(ref) as path:
        return load_vocabulary(path)


def encode(names: Iterable[str], vocab: AttributeVocabulary) -> AttributeVector:
    """Set the bit of every named label; all other bits are zero.

    Order-independent in ``names``; unknown labels raise :class:`EncodingError`.
    """
    bits = np.zeros(len(vocab), dtype=np.uint8)
    for name in names:
        idx = vocab.index_of.get(name)
        if idx is None:
            raise EncodingError(f"unknown label {name!r}")
        bits[idx] = 1
    return AttributeVector(bits, vocab)


def decode(vector: AttributeVector, vocab: AttributeVocabulary) -> list[str]:
    """Labels at set positions, in vocabulary order."""
    if len(vector) != len(vocab):
        raise AlignmentError(
            f"vector of length {len(vector)} is not aligned to vocabulary of size {len(vocab)}"
        )
    return [vocab.labels[i] for i in np.flatnonzero(vector.bits)]


def cloth_indices(vocab: AttributeVocabulary) -> tuple[int, ...]:
    """Positions of all cloth-related labels, ascending."""
    return tuple(
        i for i, category in enumerate(vocab.categories) if category in CLOTH_CATEGORIES
    )
