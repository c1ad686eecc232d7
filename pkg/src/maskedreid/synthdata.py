"""Deterministic synthetic person-image benchmark with controllable factors.

Each image is a rendered attribute encoding, not a realistic person: fixed
horizontal bands encode the head (gender/age/orientation), an identity-specific
texture plus carried items, the torso and legs (garment color/type), and the
feet (shoe color/type). Garment bands are vivid and large; stable bands are
deliberately low-contrast, so a model that latches onto clothing color has an
easy ride on the training set and fails on cross-outfit retrieval.

Outfits are drawn from a shared pool and reused across identities, so clothing
color alone provably cannot separate identities. Cross-outfit discrimination
is still possible by construction through the identity texture and the stable
bands.

Ground-truth attribute vectors emulate an imperfect detector: cloth-irrelevant
categories are resampled per image with probability ``1 - retention_prob``.
Rendered pixels always reflect the identity's true appearance; only the
recorded attributes wobble.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .attributes import (
    AttributeVector,
    AttributeVocabulary,
    CLOTH_CATEGORIES,
    default_vocabulary,
    encode,
    load_vocabulary,
)
from .errors import ConfigError, ManifestError
from .seeds import stream, stream_seed

# Band layout as fractions of image height.
REGION_FRACTIONS = {
    "head": (0.00, 0.15),
    "identity": (0.15, 0.30),
    "torso": (0.30, 0.55),
    "legs": (0.55, 0.80),
    "feet": (0.80, 1.00),
}

PALETTE = {
    "black": (20, 20, 20),
    "blue": (30, 60, 200),
    "brown": (120, 75, 35),
    "green": (40, 150, 60),
    "grey": (128, 128, 128),
    "orange": (240, 140, 30),
    "pink": (240, 120, 180),
    "purple": (140, 60, 180),
    "red": (210, 40, 40),
    "white": (235, 235, 235),
    "yellow": (235, 220, 50),
}
_PALETTE_ORDER = tuple(PALETTE.values())

_BACKGROUND = 128
_IDENTITY_TEXTURE_AMPLITUDE = 25
_STABLE_MIX = 0.6  # stable bands are mixed toward grey to stay low-contrast
_CAMERA_GAIN_STEP = 0.10
_CAMERA_BIAS_STEP = 9
_JITTER_AMPLITUDE = 4

MANIFEST_SPLITS = ("train", "query", "gallery")
VOCAB_FILENAME = "vocabulary.tsv"


@dataclass(frozen=True)
class GenConfig:
    """Knobs of the synthetic benchmark generator."""

    num_identities: int
    outfits_per_identity: int
    images_per_outfit: int  # per (identity, outfit, camera)
    num_cameras: int
    height: int = 32
    width: int = 32
    retention_prob: float | Mapping[str, float] = 1.0
    patch_size: int = 8  # downstream tokenizer patch size; H and W must divide by it
    seed: int = 0

    def validate(self) -> None:
        for name in ("num_identities", "outfits_per_identity", "images_per_outfit", "num_cameras"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.height % self.patch_size or self.width % self.patch_size:
            raise ConfigError(
                f"image size {self.height}x{self.width} not divisible by patch size {self.patch_size}"
            )
        for category, prob in self.retention_table(None).items():
            if not 0.0 <= prob <= 1.0:
                raise ConfigError(f"retention_prob[{category}] must be in [0,1], got {prob}")

    def retention_table(self, vocab: AttributeVocabulary | None) -> dict[str, float]:
        """Per-category retention probabilities, expanded from a scalar if needed."""
        categories = (
            vocab.cloth_irrelevant_categories
            if vocab is not None
            else tuple(sorted(set(dict(self.retention_prob)) if isinstance(self.retention_prob, Mapping) else ()))
        )
        if isinstance(self.retention_prob, Mapping):
            table = dict(self.retention_prob)
            if vocab is not None:
                unknown = set(table) - set(vocab.cloth_irrelevant_categories)
                if unknown:
                    raise ConfigError(f"retention_prob names unknown categories: {sorted(unknown)}")
                return {c: float(table.get(c, 1.0)) for c in categories}
            return {c: float(v) for c, v in table.items()}
        return {c: float(self.retention_prob) for c in categories}


@dataclass(frozen=True)
class SampleRecord:
    """One image with its identity, camera, outfit, and ground-truth attributes."""

    sample_id: str
    image_path: str  # absolute at runtime; stored relative to the manifest root on disk
    identity_id: int
    camera_id: int
    clothes_id: int
    attrs: AttributeVector


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    train: tuple[SampleRecord, ...]
    query: tuple[SampleRecord, ...]
    gallery: tuple[SampleRecord, ...]
    vocab: AttributeVocabulary

    def split(self, name: str) -> tuple[SampleRecord, ...]:
        if name not in MANIFEST_SPLITS:
            raise ManifestError(f"unknown split {name!r}")
        return getattr(self, name)

    @property
    def all_records(self) -> tuple[SampleRecord, ...]:
        return self.train + self.query + self.gallery


@dataclass(frozen=True)
class IdentitySpec:
    identity_id: int
    stable_labels: dict[str, str]  # category -> label, cloth-irrelevant only
    texture_seed: int


@dataclass(frozen=True)
class OutfitSpec:
    labels: tuple[str, str, str, str]  # upper color, upper type, lower color, lower type


def region_rows(height: int) -> dict[str, slice]:
    """Row slices of each band for a given image height."""
    out = {}
    for name, (lo, hi) in REGION_FRACTIONS.items():
        out[name] = slice(round(lo * height), round(hi * height))
    return out


def _color_for(label: str) -> tuple[int, int, int]:
    return PALETTE[label.rsplit("-", 1)[-1]]


def _cycled_color(index: int) -> tuple[int, int, int]:
    return _PALETTE_ORDER[index % len(_PALETTE_ORDER)]


def _mix_grey(color: Sequence[int], weight: float) -> np.ndarray:
    c = np.asarray(color, dtype=np.float64)
    return weight * c + (1.0 - weight) * _BACKGROUND


def _apply_pattern(band: np.ndarray, type_index: int) -> None:
    """Overlay one of four deterministic garment patterns in place."""
    kind = type_index % 4
    if kind == 0:
        return
    if kind == 1:
        band[::3, :] = band[::3, :] * 0.55
    elif kind == 2:
        band[:, ::3] = band[:, ::3] * 0.55
    else:
        h, w = band.shape[:2]
        rr, cc = np.meshgrid(np.arange(h) // 2, np.arange(w) // 2, indexing="ij")
        band[(rr + cc) % 2 == 0] = band[(rr + cc) % 2 == 0] * 0.7


def render(
    identity: IdentitySpec,
    outfit: OutfitSpec,
    camera_id: int,
    jitter_seed: int,
    height: int = 32,
    width: int = 32,
    vocab: AttributeVocabulary | None = None,
) -> np.ndarray:
    """Render one sample as an ``(H, W, 3)`` uint8 array; bit-deterministic."""
    vocab = vocab or default_vocabulary()
    rows = region_rows(height)
    img = np.full((height, width, 3), float(_BACKGROUND))

    cat_idx = vocab.category_indices

    def label_pos(category: str, label: str) -> int:
        return cat_idx[category].index(vocab.index_of[label])

    # Head: gender hue, age brightness, orientation marker. Low contrast.
    gender = identity.stable_labels["gender"]
    age_pos = label_pos("age", identity.stable_labels["age"])
    base = (100, 118, 160) if gender == "male" else (160, 118, 100)
    factor = 0.75 + 0.05 * age_pos
    img[rows["head"]] = _mix_grey(np.asarray(base) * factor, _STABLE_MIX)
    ori_pos = label_pos("orientation", identity.stable_labels["orientation"])
    if ori_pos > 0:
        quarter = width // 4
        img[rows["head"], (ori_pos - 1) * quarter : ori_pos * quarter] *= 0.8

    # Identity band: per-column texture unique to the identity, plus a carried-items chip.
    texture_rng = np.random.Generator(np.random.PCG64(identity.texture_seed))
    offsets = texture_rng.integers(
        -_IDENTITY_TEXTURE_AMPLITUDE, _IDENTITY_TEXTURE_AMPLITUDE + 1, size=(width, 3)
    )
    img[rows["identity"]] = _BACKGROUND + offsets[None, :, :]
    carried_pos = label_pos("carried-items", identity.stable_labels["carried-items"])
    chip = _mix_grey(_cycled_color(carried_pos), _STABLE_MIX)
    img[rows["identity"], : max(1, width // 5)] = chip

    # Torso and legs: vivid garment colors with a type pattern. High contrast.
    upper_color, upper_type, lower_color, lower_type = outfit.labels
    torso = img[rows["torso"]]
    torso[:] = _color_for(upper_color)
    _apply_pattern(torso, label_pos("upper-body-type", upper_type))
    legs = img[rows["legs"]]
    legs[:] = _color_for(lower_color)
    _apply_pattern(legs, label_pos("lower-body-type", lower_type))

    # Feet: shoe color/type, stable but subdued.
    feet = img[rows["feet"]]
    feet[:] = _mix_grey(_color_for(identity.stable_labels["shoe-color"]), _STABLE_MIX)
    _apply_pattern(feet, label_pos("shoe-type", identity.stable_labels["shoe-type"]))

    # Camera shift then per-image jitter.
    gain = 1.0 - _CAMERA_GAIN_STEP * (camera_id % 3)
    bias = _CAMERA_BIAS_STEP * camera_id
    img = gain * img + bias
    jitter_rng = np.random.Generator(np.random.PCG64(jitter_seed))
    img = img + jitter_rng.integers(
        -_JITTER_AMPLITUDE, _JITTER_AMPLITUDE + 1, size=img.shape
    )
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _build_outfit_pool(
    vocab: AttributeVocabulary, pool_size: int, rng: np.random.Generator
) -> list[OutfitSpec]:
    """Distinct outfit specs shared by all identities (the color confound)."""
    cats = vocab.category_indices
    pool: list[OutfitSpec] = []
    seen: set[tuple[str, str, str, str]] = set()
    while len(pool) < pool_size:
        labels = tuple(
            vocab.labels[cats[c][rng.integers(len(cats[c]))]]
            for c in ("upper-body-color", "upper-body-type", "lower-body-color", "lower-body-type")
        )
        if labels in seen:
            continue
        seen.add(labels)
        pool.append(OutfitSpec(labels))
    return pool


def _draw_identity(
    vocab: AttributeVocabulary, identity_id: int, seed: int
) -> IdentitySpec:
    rng = stream(seed, "identity", identity_id)
    cats = vocab.category_indices
    stable = {
        c: vocab.labels[cats[c][rng.integers(len(cats[c]))]]
        for c in vocab.cloth_irrelevant_categories
    }
    return IdentitySpec(
        identity_id=identity_id,
        stable_labels=stable,
        texture_seed=stream_seed(seed, "identity", identity_id, 1),
    )


def _image_attrs(
    identity: IdentitySpec,
    outfit: OutfitSpec,
    vocab: AttributeVocabulary,
    retention: Mapping[str, float],
    rng: np.random.Generator,
) -> AttributeVector:
    """Ground-truth attributes for one image, with detector-style instability."""
    cats = vocab.category_indices
    names = list(outfit.labels)
    for category in vocab.cloth_irrelevant_categories:
        label = identity.stable_labels[category]
        if rng.random() >= retention[category]:
            label = vocab.labels[cats[category][rng.integers(len(cats[category]))]]
        names.append(label)
    return encode(names, vocab)


def analytic_retention(
    retention_prob: float, category_size: int, images_per_identity: int
) -> float:
    """Expected strict per-label retention under the generator's resampling model.

    Per image, a category keeps the identity's base label with probability
    ``r`` and otherwise redraws uniformly from its ``n`` labels (possibly
    landing on the base again). A label counts as retained when its bit is
    identical across all ``m`` images of the identity.
    """
    r, n, m = retention_prob, category_size, images_per_identity
    q_base = r + (1.0 - r) / n
    q_other = (1.0 - r) / n
    at_base = q_base**m + (1.0 - q_base) ** m
    elsewhere = q_other**m + (1.0 - q_other) ** m
    return at_base / n + elsewhere * (n - 1) / n


def generate(
    config: GenConfig, out_dir: str | Path, vocab: AttributeVocabulary | None = None
) -> DatasetManifest:
    """Generate images plus train/query/gallery manifests under ``out_dir``.

    Split rule: within each (identity, outfit, camera) group, even image
    indices train and odd ones test; test images from camera 0 become queries
    and the rest gallery. This guarantees every identity has same-outfit and
    cross-outfit matches across cameras, which requires at least 2 cameras,
    2 outfits, and 2 images per outfit.
    """
    config.validate()
    vocab = vocab or default_vocabulary()
    if config.num_cameras < 2 or config.images_per_outfit < 2 or config.outfits_per_identity < 2:
        raise ConfigError(
            "query/gallery construction needs >= 2 cameras, >= 2 outfits per identity, "
            "and >= 2 images per outfit"
        )
    retention = config.retention_table(vocab)

    out_dir = Path(out_dir).resolve()
    images_dir = out_dir / "images"
    try:
        images_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out_dir}: {exc}") from exc

    pool = _build_outfit_pool(
        vocab, config.outfits_per_identity + 1, stream(config.seed, "outfit")
    )
    identities = [
        _draw_identity(vocab, i, config.seed) for i in range(config.num_identities)
    ]

    splits: dict[str, list[SampleRecord]] = {name: [] for name in MANIFEST_SPLITS}
    sample_index = 0
    for identity in identities:
        for k in range(config.outfits_per_identity):
            outfit = pool[(identity.identity_id + k) % len(pool)]
            for camera in range(config.num_cameras):
                for j in range(config.images_per_outfit):
                    sample_id = f"id{identity.identity_id:04d}_o{k}_c{camera}_s{j}"
                    jitter_seed = stream_seed(config.seed, "jitter", sample_index)
                    img = render(
                        identity, outfit, camera, jitter_seed,
                        config.height, config.width, vocab,
                    )
                    path = images_dir / f"{sample_id}.png"
                    Image.fromarray(img).save(path)
                    attrs = _image_attrs(
                        identity, outfit, vocab, retention,
                        stream(config.seed, "attrs", sample_index),
                    )
                    record = SampleRecord(
                        sample_id=sample_id,
                        image_path=str(path),
                        identity_id=identity.identity_id,
                        camera_id=camera,
                        clothes_id=k,
                        attrs=attrs,
                    )
                    if j % 2 == 0:
                        splits["train"].append(record)
                    elif camera == 0:
                        splits["query"].append(record)
                    else:
                        splits["gallery"].append(record)
                    sample_index += 1

    manifest = DatasetManifest(
        root=out_dir,
        train=tuple(splits["train"]),
        query=tuple(splits["query"]),
        gallery=tuple(splits["gallery"]),
        vocab=vocab,
    )
    write_manifest(manifest, out_dir)
    return manifest


def write_manifest(manifest: DatasetManifest, out_dir: str | Path) -> None:
    """Write one TSV per split plus a copy of the vocabulary."""
    out_dir = Path(out_dir).resolve()
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in MANIFEST_SPLITS:
        lines = []
        for rec in manifest.split(name):
            rel = Path(rec.image_path).resolve()
            rel = rel.relative_to(out_dir) if rel.is_relative_to(out_dir) else rel
            lines.append(
                "\t".join(
                    (
                        rec.sample_id,
                        rel.as_posix(),
                        str(rec.identity_id),
                        str(rec.camera_id),
                        str(rec.clothes_id),
                        rec.attrs.to_bitstring(),
                    )
                )
            )
        (out_dir / f"{name}.tsv").write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    vocab_lines = [f"{l}\t{c}" for l, c in zip(manifest.vocab.labels, manifest.vocab.categories)]
    (out_dir / VOCAB_FILENAME).write_text("\n".join(vocab_lines) + "\n", encoding="utf-8")


def load_split(
    path: str | Path, vocab: AttributeVocabulary, root: str | Path | None = None
) -> tuple[SampleRecord, ...]:
    """Load one split TSV; image paths resolve relative to ``root`` (file's directory by default)."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest split not found: {path}")
    root = Path(root) if root is not None else path.parent
    records = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 6:
            raise ManifestError(f"{path}:{lineno}: expected 6 tab-separated fields, got {len(parts)}")
        sample_id, rel_path, identity_s, camera_s, clothes_s, bitstring = parts
        try:
            identity_id, camera_id, clothes_id = int(identity_s), int(camera_s), int(clothes_s)
        except ValueError as exc:
            raise ManifestError(f"{path}:{lineno}: non-integer id field: {exc}") from None
        image_path = root / rel_path
        if not image_path.is_file():
            raise ManifestError(f"{path}:{lineno}: image file missing: {image_path}")
        try:
            attrs = AttributeVector.from_bitstring(bitstring, vocab)
        except Exception as exc:
            raise ManifestError(f"{path}:{lineno}: bad attribute bitstring: {exc}") from None
        records.append(
            SampleRecord(sample_id, str(image_path), identity_id, camera_id, clothes_id, attrs)
        )
    return tuple(records)


def load_manifest(path: str | Path, vocab: AttributeVocabulary | None = None) -> DatasetManifest:
    """Load a dataset directory (train/query/gallery TSVs plus vocabulary copy)."""
    root = Path(path)
    if not root.is_dir():
        raise ManifestError(f"manifest directory not found: {root}")
    if vocab is None:
        vocab_path = root / VOCAB_FILENAME
        vocab = load_vocabulary(vocab_path) if vocab_path.is_file() else default_vocabulary()
    loaded = {}
    for name in MANIFEST_SPLITS:
        split_path = root / f"{name}.tsv"
        loaded[name] = load_split(split_path, vocab, root) if split_path.is_file() else ()
    if all(len(v) == 0 for v in loaded.values()):
        raise ManifestError(f"{root}: no manifest splits found")
    return DatasetManifest(root=root, vocab=vocab, **loaded)


def manifest_attribute_source(records: Sequence[SampleRecord]):
    """Attribute source backed by the records' ground-truth bits."""
    from .masking import DictAttributeSource

    return DictAttributeSource({r.sample_id: r.attrs for r in records})
