"""Summary collage: up to ten retrieved objects placed into a fixed tiling of
a 512x512 canvas, the closest match getting the single large slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .descriptors import resize_nearest
from .geometry import BoundingBox

CANVAS_SIDE = 512
SKY_BLUE = (135, 206, 235)


def default_slots() -> tuple[BoundingBox, ...]:
    """The fixed ten-slot tiling: one 256x256 block top-left, four 128x128
    blocks filling the top-right quadrant, and five tall cells across the
    bottom half (widths 103,103,102,102,102)."""
    slots = [
        BoundingBox(0, 0, 256, 256),
        BoundingBox(256, 0, 128, 128),
        BoundingBox(384, 0, 128, 128),
        BoundingBox(256, 128, 128, 128),
        BoundingBox(384, 128, 128, 128),
    ]
    x = 0
    for w in (103, 103, 102, 102, 102):
        slots.append(BoundingBox(x, 256, w, 256))
        x += w
    return tuple(slots)


@dataclass(frozen=True)
class CollageSpec:
    """Canvas geometry: ten disjoint slots inside a 512x512 canvas, slot 0
    strictly the largest, plus the background fill color."""

    slots: tuple[BoundingBox, ...] = field(default_factory=default_slots)
    background: tuple[int, int, int] = SKY_BLUE

    def __post_init__(self) -> None:
        if len(self.slots) != 10:
            raise ValueError(f"spec needs exactly 10 slots, got {len(self.slots)}")
        for i, s in enumerate(self.slots):
            if s.x < 0 or s.y < 0 or s.x + s.w > CANVAS_SIDE or s.y + s.h > CANVAS_SIDE:
                raise ValueError(f"slot {i} {s} exceeds the {CANVAS_SIDE}x{CANVAS_SIDE} canvas")
        for i in range(10):
            for j in range(i + 1, 10):
                a, b = self.slots[i], self.slots[j]
                if (min(a.x + a.w, b.x + b.w) > max(a.x, b.x)
                        and min(a.y + a.h, b.y + b.h) > max(a.y, b.y)):
                    raise ValueError(f"slots {i} and {j} overlap")
        largest = self.slots[0].area
        if any(s.area >= largest for s in self.slots[1:]):
            raise ValueError("slot 0 must be strictly largest by area")
        bg = tuple(int(c) for c in self.background)
        if len(bg) != 3 or any(not 0 <= c <= 255 for c in bg):
            raise ValueError(f"background must be three bytes, got {self.background}")
        object.__setattr__(self, "background", bg)


@dataclass(frozen=True)
class CollageItem:
    """An object cutout: RGB pixels, a same-size foreground mask, and the
    retrieval distance that ranks it."""

    region: np.ndarray
    mask: np.ndarray
    distance: float

    def __post_init__(self) -> None:
        region = np.asarray(self.region, dtype=np.uint8)
        mask = np.asarray(self.mask)
        if region.ndim != 3 or region.shape[2] != 3:
            raise ValueError(f"region must be (h, w, 3), got shape {region.shape}")
        if mask.shape != region.shape[:2]:
            raise ValueError(
                f"mask shape {mask.shape} does not match region {region.shape[:2]}"
            )
        if not (self.distance >= 0 and np.isfinite(self.distance)):
            raise ValueError(f"distance must be finite and >= 0, got {self.distance}")
        object.__setattr__(self, "region", region)
        object.__setattr__(self, "mask", mask != 0)


def layout(items: list[CollageItem], spec: CollageSpec) -> list[tuple[int, CollageItem]]:
    """Assign items to slots: ascending distance, closest to slot 0 (the
    largest), the rest filling slots in order. Ties keep input order."""
    if len(items) > len(spec.slots):
        raise ValueError(f"at most {len(spec.slots)} items fit, got {len(items)}")
    order = sorted(range(len(items)), key=lambda i: (items[i].distance, i))
    return [(slot, items[i]) for slot, i in enumerate(order)]


def compose(assignment: list[tuple[int, CollageItem]], spec: CollageSpec) -> np.ndarray:
    """Render the canvas: background fill, then each item scaled into its slot
    by nearest neighbor, writing only mask-foreground pixels."""
    canvas = np.empty((CANVAS_SIDE, CANVAS_SIDE, 3), dtype=np.uint8)
    canvas[:, :] = spec.background
    seen = set()
    for slot_idx, item in assignment:
        if not 0 <= slot_idx < len(spec.slots):
            raise ValueError(f"slot index {slot_idx} out of range")
        if slot_idx in seen:
            raise ValueError(f"slot {slot_idx} assigned twice")
        seen.add(slot_idx)
        s = spec.slots[slot_idx]
        region = resize_nearest(item.region, s.h, s.w)
        mask = resize_nearest(item.mask, s.h, s.w)
        target = canvas[s.y : s.y + s.h, s.x : s.x + s.w]
        target[mask] = region[mask]
    return canvas


def make_collage(items: list[CollageItem], spec: CollageSpec | None = None) -> np.ndarray:
    """layout + compose in one call."""
    spec = spec or CollageSpec()
    return compose(layout(items, spec), spec)
