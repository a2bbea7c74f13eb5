"""Similarity retrieval: embed descriptors, query the index for each item's
nearest neighbors, and filter candidate groups by box overlap with ground
truth. Groups serialize to JSON Lines for downstream stages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .annindex import AnnIndex, RetrievalResult, query
from .embedder import EncoderParams, forward_batch
from .geometry import BoundingBox, Proposal, iou


@dataclass(frozen=True)
class SimilarityGroup:
    """One anchor item and its nearest neighbors with exact distances."""

    anchor: str
    members: RetrievalResult
    class_hint: str | None = None

    def __post_init__(self) -> None:
        ids = [m[0] for m in self.members.neighbors]
        if self.anchor in ids:
            raise ValueError(f"anchor {self.anchor!r} listed among its own members")
        dists = [m[1] for m in self.members.neighbors]
        if any(b < a for a, b in zip(dists, dists[1:])):
            raise ValueError("member distances must be non-decreasing")


def embed_all(params: EncoderParams, descriptors: np.ndarray) -> np.ndarray:
    """Embed descriptor rows in order; (n, d_in) -> (n, d_out)."""
    descriptors = np.asarray(descriptors, dtype=np.float64)
    if descriptors.size == 0:
        return np.empty((0, params.output_dim))
    if descriptors.ndim == 1:
        descriptors = descriptors[None, :]
    return forward_batch(params, descriptors)


def retrieve_similar(
    index: AnnIndex,
    embeddings: np.ndarray,
    k: int = 10,
    search_k: int | None = None,
    ids: list[str] | None = None,
    class_hints: dict[str, str] | None = None,
) -> list[SimilarityGroup]:
    """One SimilarityGroup per indexed item, the item itself excluded.

    The queries must be the indexed embeddings in index order; ids gives the
    item name for each index position (defaults to the position as a string).
    Each query asks for k+1 neighbors so that dropping the anchor's own entry
    still leaves k.
    """
    embeddings = np.asarray(embeddings)
    if embeddings.ndim == 1:
        embeddings = embeddings[None, :]
    n_items = index.items.shape[0]
    if embeddings.shape[0] != n_items:
        raise ValueError(
            f"{embeddings.shape[0]} queries but index holds {n_items} items; "
            "queries must be the indexed items in order"
        )
    if ids is None:
        ids = [str(i) for i in range(n_items)]
    elif len(ids) != n_items:
        raise ValueError(f"{len(ids)} ids for {n_items} indexed items")
    if search_k is None:
        search_k = index.config.search_k

    groups: list[SimilarityGroup] = []
    for pos, vec in enumerate(embeddings):
        res = query(index, vec, k=k + 1, search_k=search_k)
        kept = [(ids[i], d) for i, d in res.neighbors if i != pos][:k]
        anchor = ids[pos]
        hint = class_hints.get(anchor) if class_hints else None
        groups.append(
            SimilarityGroup(anchor=anchor, members=RetrievalResult(neighbors=tuple(kept)), class_hint=hint)
        )
    return groups


def filter_candidates(
    group: SimilarityGroup,
    proposals: dict[str, Proposal],
    gt_boxes: dict[str, BoundingBox],
    threshold: float = 0.5,
) -> SimilarityGroup:
    """Keep members whose proposal box overlaps its image's ground-truth box
    with IoU >= threshold. Members whose image has no ground truth pass
    through. Member order and distances are preserved."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    kept = []
    for member_id, dist in group.members.neighbors:
        prop = proposals.get(member_id)
        if prop is None:
            raise ValueError(f"member {member_id!r} has no proposal record")
        gt = gt_boxes.get(prop.image_id)
        if gt is None or iou(prop.box, gt) >= threshold:
            kept.append((member_id, dist))
    return SimilarityGroup(
        anchor=group.anchor,
        members=RetrievalResult(neighbors=tuple(kept)),
        class_hint=group.class_hint,
    )


def save_groups(groups: list[SimilarityGroup], path) -> None:
    """One JSON object per line: {anchor, members: [{id, distance}], class_hint}."""
    with open(path, "w", encoding="utf-8") as fh:
        for g in groups:
            fh.write(
                json.dumps(
                    {
                        "anchor": g.anchor,
                        "members": [
                            {"id": i, "distance": d} for i, d in g.members.neighbors
                        ],
                        "class_hint": g.class_hint,
                    },
                    ensure_ascii=False,
                )
            )
            fh.write("\n")


def load_groups(path) -> list[SimilarityGroup]:
    groups: list[SimilarityGroup] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                members = tuple((m["id"], float(m["distance"])) for m in obj["members"])
                groups.append(
                    SimilarityGroup(
                        anchor=obj["anchor"],
                        members=RetrievalResult(neighbors=members),
                        class_hint=obj.get("class_hint"),
                    )
                )
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise ValueError(f"line {line_no}: malformed group record ({exc})") from exc
    return groups
