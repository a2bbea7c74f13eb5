"""Bounding-box arithmetic, overlap suppression, and proposal selection."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box covering columns [x, x+w) and rows [y, y+h)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box sides must be >= 1, got w={self.w} h={self.h}")

    @property
    def area(self) -> int:
        return self.w * self.h


@dataclass(frozen=True)
class Proposal:
    """A scored candidate object region anchored to one image."""

    image_id: str
    box: BoundingBox
    score: float
    source: str = ""

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union on pixel counts (area = w*h). 0.0 for disjoint boxes."""
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _check_threshold(t: float) -> None:
    if not 0.0 < t <= 1.0:
        raise ValueError(f"iou threshold must be in (0, 1], got {t}")


def _check_single_image(props) -> None:
    ids = {p.image_id for p in props}
    if len(ids) > 1:
        raise ValueError(f"proposals span multiple images: {sorted(ids)}")


def _by_score(props) -> list[int]:
    # Stable sort: equal scores keep input order.
    return sorted(range(len(props)), key=lambda i: -props[i].score)


def nms(props: list[Proposal], iou_threshold: float) -> list[Proposal]:
    """Greedy non-maximum suppression over one image's proposals.

    Walks proposals in descending score order (ties by input order) and keeps
    each one only if it overlaps every kept proposal below the threshold.
    The result is score-descending and no surviving pair reaches the threshold.
    """
    _check_threshold(iou_threshold)
    _check_single_image(props)
    kept: list[int] = []
    for i in _by_score(props):
        if all(iou(props[i].box, props[j].box) < iou_threshold for j in kept):
            kept.append(i)
    return [props[i] for i in kept]


def dedup_near(props: list[Proposal], iou_threshold: float) -> list[Proposal]:
    """Drop the later of any two proposals overlapping at or above the threshold.

    Order-stable and score-agnostic: the first occurrence always survives.
    """
    _check_threshold(iou_threshold)
    _check_single_image(props)
    kept: list[Proposal] = []
    for p in props:
        if all(iou(p.box, q.box) < iou_threshold for q in kept):
            kept.append(p)
    return kept


def top_k(props: list[Proposal], k: int) -> list[Proposal]:
    """The k highest-scored proposals in descending score order (ties by input order)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return [props[i] for i in _by_score(props)[:k]]


def load_proposals(path) -> list[Proposal]:
    """Read proposals from `image_id,x,y,w,h,score,source` lines (UTF-8, LF)."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise ValueError(f"{path}:{lineno}: expected 7 comma-separated fields, got {len(parts)}")
        image_id, x, y, w, h, score, source = parts
        try:
            prop = Proposal(image_id, BoundingBox(int(x), int(y), int(w), int(h)), float(score), source)
        except ValueError as e:
            raise ValueError(f"{path}:{lineno}: {e}") from None
        out.append(prop)
    return out


def save_proposals(path, props) -> None:
    """Write proposals as `image_id,x,y,w,h,score,source` lines (UTF-8, LF)."""
    lines = []
    for p in props:
        if "," in p.image_id or "," in p.source:
            raise ValueError(f"image_id/source may not contain commas: {p.image_id!r}, {p.source!r}")
        lines.append(f"{p.image_id},{p.box.x},{p.box.y},{p.box.w},{p.box.h},{p.score!r},{p.source}")
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8", newline="\n")
