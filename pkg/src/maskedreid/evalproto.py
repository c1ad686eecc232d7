"""Protocol-correct retrieval evaluation: gallery filtering, CMC, and mAP.

Three settings control which gallery items a query may match:

- ``general``: drop gallery items sharing both identity and camera with the
  query (the standard same-camera exclusion).
- ``cc`` (cloth-changing): additionally drop same-identity items with the same
  clothes id, forcing cross-outfit matches.
- ``sc`` (same-clothes): same-camera exclusion, and same-identity items are
  kept only when they share the query's clothes id.

Different-identity items are always kept. Distances are cosine on the
L2-normalized features; ties break by ascending gallery index so results are
independent of gallery iteration order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ProtocolError, ValidationError

SETTINGS = ("general", "cc", "sc")
_ALIASES = {"cloth-changing": "cc", "same-clothes": "sc"}

DEFAULT_RANKS = (1, 5, 10)


def normalize_setting(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in SETTINGS:
        raise ValidationError(f"unknown evaluation setting {name!r}; choose from {SETTINGS}")
    return name


@dataclass(frozen=True)
class EvalEntry:
    """One query or gallery item: an L2-normalized feature plus protocol labels."""

    feature: np.ndarray = field(repr=False)
    identity_id: int
    camera_id: int
    clothes_id: int

    def __post_init__(self) -> None:
        feature = np.asarray(self.feature, dtype=np.float64)
        norm = float(np.linalg.norm(feature))
        if abs(norm - 1.0) > 1e-6:
            raise ValidationError(f"feature must be L2-normalized, got norm {norm:.8f}")
        feature.flags.writeable = False
        object.__setattr__(self, "feature", feature)


@dataclass
class MetricsRecord:
    setting: str
    cmc: dict[int, float]
    mean_ap: float
    per_query_ap: list[float]
    evaluated: int
    skipped: int

    @property
    def rank1(self) -> float:
        return self.cmc[1]


def valid_gallery(
    query: EvalEntry, gallery: list[EvalEntry] | tuple[EvalEntry, ...], setting: str
) -> np.ndarray:
    """Indices of gallery items the query is allowed to match, ascending."""
    setting = normalize_setting(setting)
    if len(gallery) == 0:
        raise ProtocolError("gallery is empty")
    keep = []
    for i, item in enumerate(gallery):
        if item.identity_id != query.identity_id:
            keep.append(i)
            continue
        if item.camera_id == query.camera_id:
            continue
        if setting == "cc" and item.clothes_id == query.clothes_id:
            continue
        if setting == "sc" and item.clothes_id != query.clothes_id:
            continue
        keep.append(i)
    if not keep:
        raise ProtocolError(
            f"no valid gallery items for query (identity {query.identity_id}, "
            f"camera {query.camera_id}, clothes {query.clothes_id}) under {setting!r}"
        )
    return np.asarray(keep, dtype=np.intp)


def rank_list(
    query: EvalEntry, gallery: list[EvalEntry] | tuple[EvalEntry, ...], valid: np.ndarray
) -> np.ndarray:
    """Valid gallery indices sorted by ascending cosine distance, ties by index."""
    if len(valid) == 0:
        raise ProtocolError("valid set is empty")
    feats = np.stack([gallery[i].feature for i in valid])
    dists = 1.0 - feats @ query.feature
    order = np.argsort(dists, kind="stable")  # valid is ascending, so stable sort = index ties
    return valid[order]


def cmc_and_map(
    queries: list[EvalEntry] | tuple[EvalEntry, ...],
    gallery: list[EvalEntry] | tuple[EvalEntry, ...],
    setting: str,
    ranks: tuple[int, ...] = DEFAULT_RANKS,
) -> MetricsRecord:
    """CMC at the requested ranks plus mAP over all evaluable queries.

    A query with no valid same-identity gallery item is skipped and counted.
    AP for one query is the mean over its correct items (the i-th correct item
    sitting at 1-indexed rank r_i) of i / r_i.
    """
    setting = normalize_setting(setting)
    if len(queries) == 0:
        raise ProtocolError("no queries given")
    hits_at = {k: 0 for k in ranks}
    aps: list[float] = []
    skipped = 0
    for query in queries:
        valid = valid_gallery(query, gallery, setting)
        ordered = rank_list(query, gallery, valid)
        correct = np.asarray(
            [gallery[i].identity_id == query.identity_id for i in ordered], dtype=bool
        )
        if not correct.any():
            skipped += 1
            continue
        first = int(np.flatnonzero(correct)[0]) + 1  # 1-indexed rank of first correct
        for k in ranks:
            if first <= k:
                hits_at[k] += 1
        correct_ranks = np.flatnonzero(correct) + 1
        precisions = np.arange(1, len(correct_ranks) + 1) / correct_ranks
        aps.append(float(precisions.mean()))
    evaluated = len(aps)
    if evaluated == 0:
        raise ProtocolError("no evaluable queries: every query lacked a valid correct match")
    return MetricsRecord(
        setting=setting,
        cmc={k: hits_at[k] / evaluated for k in ranks},
        mean_ap=float(np.mean(aps)),
        per_query_ap=aps,
        evaluated=evaluated,
        skipped=skipped,
    )


METRICS_CSV_HEADER = "setting,rank1,rank5,rank10,mAP,evaluated,skipped"


def metrics_csv_row(record: MetricsRecord) -> str:
    return (
        f"{record.setting},{record.cmc[1]:.6f},{record.cmc[5]:.6f},{record.cmc[10]:.6f},"
        f"{record.mean_ap:.6f},{record.evaluated},{record.skipped}"
    )
