"""Pixel-level segmentation scoring: precision and Jaccard similarity against
ground-truth masks, averaged per class and then across classes.

Masks are 2-d arrays where nonzero means foreground.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


def _as_mask(m: np.ndarray, name: str) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"{name} must be a 2-d mask, got shape {m.shape}")
    return m != 0


def _check_same_shape(seg: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    seg = _as_mask(seg, "seg")
    gt = _as_mask(gt, "gt")
    if seg.shape != gt.shape:
        raise ValueError(f"mask shapes differ: seg {seg.shape} vs gt {gt.shape}")
    return seg, gt


def precision(seg: np.ndarray, gt: np.ndarray) -> float:
    """Fraction of segmented pixels that are ground-truth foreground.

    An empty segmentation scores 0; evaluate() flags those items.
    """
    seg, gt = _check_same_shape(seg, gt)
    seg_count = int(seg.sum())
    if seg_count == 0:
        return 0.0
    return int((seg & gt).sum()) / seg_count


def jaccard(seg: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union of foreground pixels; 1 when both are empty."""
    seg, gt = _check_same_shape(seg, gt)
    union = int((seg | gt).sum())
    if union == 0:
        return 1.0
    return int((seg & gt).sum()) / union


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    jaccard: float
    count: int


@dataclass(frozen=True)
class MetricsReport:
    """Per-class scores plus unweighted cross-class averages.

    skipped lists (item_id, reason) for items that could not be scored;
    empty_segmentations lists scored items whose segmentation had no
    foreground pixels (their precision is 0 by convention).
    """

    per_class: dict[str, ClassMetrics] = field(default_factory=dict)
    avg_precision: float = 0.0
    avg_jaccard: float = 0.0
    skipped: tuple[tuple[str, str], ...] = ()
    empty_segmentations: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "per_class": {
                cls: {"precision": m.precision, "jaccard": m.jaccard, "count": m.count}
                for cls, m in sorted(self.per_class.items())
            },
            "avg_precision": self.avg_precision,
            "avg_jaccard": self.avg_jaccard,
            "skipped": [{"id": i, "reason": r} for i, r in self.skipped],
            "empty_segmentations": list(self.empty_segmentations),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def _group_item_ids(groups) -> list[str]:
    """Distinct item ids referenced by the groups (anchors and members),
    first-appearance order."""
    seen: dict[str, None] = {}
    for g in groups:
        seen.setdefault(g.anchor, None)
        for member_id, _ in g.members.neighbors:
            seen.setdefault(member_id, None)
    return list(seen)


def evaluate(
    groups,
    masks: dict[str, np.ndarray],
    gt_masks: dict[str, np.ndarray],
    class_map: dict[str, str],
) -> MetricsReport:
    """Score every item referenced by the groups.

    Each item needs a segmentation mask, a ground-truth mask, and a class.
    Items missing any of those are excluded and recorded in the report.
    Scores average per class over items, then the report averages are the
    unweighted means over the classes present.
    """
    per_item: dict[str, tuple[str, float, float]] = {}
    skipped: list[tuple[str, str]] = []
    empty_seg: list[str] = []
    for item_id in _group_item_ids(groups):
        seg = masks.get(item_id)
        gt = gt_masks.get(item_id)
        cls = class_map.get(item_id)
        if seg is None:
            skipped.append((item_id, "no segmentation mask"))
            continue
        if gt is None:
            skipped.append((item_id, "no ground-truth mask"))
            continue
        if cls is None:
            skipped.append((item_id, "no class label"))
            continue
        p = precision(seg, gt)
        j = jaccard(seg, gt)
        if int(np.count_nonzero(seg)) == 0:
            empty_seg.append(item_id)
        per_item[item_id] = (cls, p, j)

    by_class: dict[str, list[tuple[float, float]]] = {}
    for cls, p, j in per_item.values():
        by_class.setdefault(cls, []).append((p, j))
    per_class = {
        cls: ClassMetrics(
            precision=float(np.mean([p for p, _ in scores])),
            jaccard=float(np.mean([j for _, j in scores])),
            count=len(scores),
        )
        for cls, scores in by_class.items()
    }
    if per_class:
        avg_p = float(np.mean([m.precision for m in per_class.values()]))
        avg_j = float(np.mean([m.jaccard for m in per_class.values()]))
    else:
        avg_p = avg_j = 0.0
    return MetricsReport(
        per_class=per_class,
        avg_precision=avg_p,
        avg_jaccard=avg_j,
        skipped=tuple(skipped),
        empty_segmentations=tuple(empty_seg),
    )


def save_report_file(report: MetricsReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
        fh.write("\n")
