"""Description extraction and masking.

Turns per-sample attribute vectors into masked description vectors: garment
positions are zeroed (fully or a random fraction), then a calibrated 0-1 noise
is injected to emulate an imperfect attribute detector. The attribute detector
itself is out of scope; any object with a ``lookup(sample_id)`` method can act
as the source, including plain prediction files.

Noise convention: ``inject_noise`` draws ``ceil(ratio * V)`` positions without
replacement and overwrites each with an independent uniform random bit, so in
expectation half of the drawn positions actually change value. The named noise
percentages therefore count positions drawn, not bits flipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .attributes import AttributeVector, AttributeVocabulary, cloth_indices
from .errors import SchemaError, ValidationError


@dataclass(frozen=True)
class MaskedDescription:
    """A masked, possibly noised attribute vector for one sample."""

    bits: np.ndarray = field(repr=False)
    mask_ratio: float
    noise_ratio: float
    sample_id: str

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=np.uint8)
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return len(self.bits)


class AttributeSource(Protocol):
    """Maps a sample id to its attribute vector."""

    def lookup(self, sample_id: str) -> AttributeVector: ...


class DictAttributeSource:
    """In-memory attribute source."""

    def __init__(self, table: dict[str, AttributeVector]):
        self._table = dict(table)

    def lookup(self, sample_id: str) -> AttributeVector:
        try:
            return self._table[sample_id]
        except KeyError:
            raise ValidationError(f"unknown sample id {sample_id!r}") from None


class FileAttributeSource:
    """Attribute predictions loaded from a ``sample_id<TAB>bitstring`` file."""

    def __init__(self, path: str | Path, vocab: AttributeVocabulary):
        table: dict[str, AttributeVector] = {}
        path = Path(path)
        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise SchemaError(f"{path}:{lineno}: expected 'sample_id<TAB>bitstring'")
            sample_id, bitstring = parts
            if sample_id in table:
                raise SchemaError(f"{path}:{lineno}: duplicate sample id {sample_id!r}")
            if len(bitstring) != len(vocab):
                raise SchemaError(
                    f"{path}:{lineno}: bitstring length {len(bitstring)} != vocabulary size {len(vocab)}"
                )
            table[sample_id] = AttributeVector.from_bitstring(bitstring, vocab)
        self._source = DictAttributeSource(table)
        self.sample_ids = tuple(table)

    def lookup(self, sample_id: str) -> AttributeVector:
        return self._source.lookup(sample_id)


def _check_ratio(name: str, value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must be in [0, 1], got {value}")
    return float(value)


def mask_cloth(
    vec: AttributeVector,
    vocab: AttributeVocabulary,
    mask_ratio: float,
    rng: np.random.Generator,
) -> AttributeVector:
    """Zero a random fraction of the cloth-related positions.

    Exactly ``ceil(mask_ratio * n_cloth)`` cloth indices, drawn uniformly
    without replacement, are set to 0; every non-cloth position is returned
    bit-identical. ``mask_ratio=1`` zeroes the whole cloth set without
    consuming any randomness, so full masking is deterministic.
    """
    _check_ratio("mask_ratio", mask_ratio)
    cloth = np.asarray(cloth_indices(vocab), dtype=np.intp)
    bits = vec.bits.copy()
    if mask_ratio == 1.0:
        bits[cloth] = 0
        return AttributeVector(bits, vocab)
    count = math.ceil(mask_ratio * len(cloth))
    if count == 0:
        return AttributeVector(bits, vocab)
    chosen = rng.choice(cloth, size=count, replace=False)
    bits[chosen] = 0
    return AttributeVector(bits, vocab)


def inject_noise(
    vec: AttributeVector, noise_ratio: float, rng: np.random.Generator
) -> AttributeVector:
    """Overwrite a random fraction of positions with uniform random bits.

    ``ceil(noise_ratio * V)`` positions are drawn without replacement; each is
    replaced (not flipped) by an independent fair bit. ``noise_ratio=0`` is the
    identity and consumes no randomness.
    """
    _check_ratio("noise_ratio", noise_ratio)
    bits = vec.bits.copy()
    count = math.ceil(noise_ratio * len(bits))
    if count == 0:
        return AttributeVector(bits, vec.vocab)
    chosen = rng.choice(len(bits), size=count, replace=False)
    bits[chosen] = rng.integers(0, 2, size=count, dtype=np.uint8)
    return AttributeVector(bits, vec.vocab)


def build_description(
    sample_id: str,
    source: AttributeSource,
    vocab: AttributeVocabulary,
    mask_ratio: float,
    noise_ratio: float,
    rng: np.random.Generator,
) -> MaskedDescription:
    """Look up a sample's attributes, mask garment positions, then add noise.

    The order is fixed as mask-then-noise, so noise may re-set masked cloth
    bits. Pure function of (sample attributes, ratios, rng state).
    """
    raw = source.lookup(sample_id)
    masked = mask_cloth(raw, vocab, mask_ratio, rng)
    noised = inject_noise(masked, noise_ratio, rng)
    return MaskedDescription(
        bits=noised.bits, mask_ratio=float(mask_ratio), noise_ratio=float(noise_ratio),
        sample_id=sample_id,
    )


def changed_positions(before: AttributeVector, after: AttributeVector) -> np.ndarray:
    """Indices where the two vectors differ (debugging aid for mask-debug)."""
    return np.flatnonzero(before.bits != after.bits)
