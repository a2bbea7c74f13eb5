"""
Box geometry: overlap, duplicate removal, suppression, top-k
=============================================================

A detector hands us many overlapping box proposals per image. This walk
shows the cleanup chain applied before any learning happens: drop
near-duplicates, suppress overlapping lower-scored boxes, keep the best few.
"""

from coseg.geometry import BoundingBox, Proposal, dedup_near, iou, nms, top_k

# 1. Two boxes and their intersection-over-union. The second box covers the
#    right three quarters of the first plus some fresh area.
a = BoundingBox(x=0, y=0, w=40, h=40)
b = BoundingBox(x=10, y=0, w=40, h=40)
print(f"iou({a}, {b}) = {iou(a, b):.4f}")

# 2. A proposal set on one image: the true object around (8, 8), two jittered
#    copies of it, one almost exact duplicate, and an unrelated background box.
props = [
    Proposal("img0", BoundingBox(8, 8, 30, 30), 0.95, "demo"),
    Proposal("img0", BoundingBox(9, 8, 30, 30), 0.94, "demo"),   # near-duplicate
    Proposal("img0", BoundingBox(12, 10, 28, 30), 0.70, "demo"),  # jittered hit
    Proposal("img0", BoundingBox(5, 6, 32, 33), 0.60, "demo"),    # jittered hit
    Proposal("img0", BoundingBox(48, 50, 12, 12), 0.20, "demo"),  # background
]
print(f"\nstart with {len(props)} proposals")

# 3. Deduplication keeps the first of any pair above the overlap threshold,
#    regardless of score. The 0.94 copy of the leading box disappears.
deduped = dedup_near(props, iou_threshold=0.9)
print(f"after dedup_near(0.9): {len(deduped)} left")

# 4. Non-maximum suppression walks boxes in score order and drops anything
#    overlapping an already-kept box. The two jittered hits go.
kept = nms(deduped, iou_threshold=0.5)
print(f"after nms(0.5):        {len(kept)} left")
for p in kept:
    print(f"  score {p.score:.2f}  box {p.box}")

# 5. Finally keep only the best k by score.
best = top_k(kept, k=1)
print(f"\ntop_k(1) keeps the {best[0].score:.2f} proposal at {best[0].box}")
