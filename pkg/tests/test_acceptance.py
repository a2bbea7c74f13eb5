"""Acceptance gate: one test per release criterion, each printing a PASS line
with the measured value, its tolerance, and the runtime budget.

Run with `pytest -v tests/test_acceptance.py` (add -s to see the PASS lines).
"""

import time

import numpy as np

import synthdata
from coseg.annindex import IndexConfig, build, query
from coseg.collage import CANVAS_SIDE, CollageItem, CollageSpec, layout, make_collage
from coseg.embedder import (
    LabeledDescriptors,
    PairSample,
    TrainConfig,
    contrastive_loss,
    forward,
    forward_batch,
    init_params,
    loss_gradient,
    train,
)
from coseg.geometry import BoundingBox, Proposal, dedup_near, nms
from coseg.metrics import jaccard, precision
from coseg.pipeline import merge_config, run_pipeline
from coseg.retrieval import retrieve_similar


def _report(line: str, elapsed: float, budget: float | None = None) -> None:
    if budget is not None:
        assert elapsed < budget, f"runtime {elapsed:.2f}s exceeds {budget:.0f}s budget"
        print(f"PASS {line} ({elapsed:.2f}s < {budget:.0f}s)")
    else:
        print(f"PASS {line} ({elapsed:.2f}s)")


def test_criterion_1_gradient_check():
    """Analytic gradients match central finite differences on 20 seeded nets."""
    start = time.perf_counter()
    rng = np.random.default_rng(100)
    step = 1e-5
    worst = 0.0
    for case in range(20):
        depth = int(rng.integers(1, 4))
        sizes = tuple(int(rng.integers(2, 9)) for _ in range(depth))
        input_dim = int(rng.integers(3, 9))
        params = init_params(input_dim, sizes, seed=case)
        margin = float(rng.uniform(0.5, 2.0))
        label = case % 2
        while True:
            a = rng.normal(size=input_dim)
            b = rng.normal(size=input_dim)
            d2 = float(np.sum((forward(params, a) - forward(params, b)) ** 2))
            if abs(margin - d2) >= 1e-3:  # stay away from the hinge kink
                break
        pair = PairSample(a=a, b=b, label=label)
        analytic = loss_gradient(params, pair, margin)

        def loss_at(p):
            return contrastive_loss(forward(p, a), forward(p, b), label, margin)

        for li in range(len(params.weights)):
            for idx in np.ndindex(params.weights[li].shape):
                plus = params.copy()
                plus.weights[li][idx] += step
                minus = params.copy()
                minus.weights[li][idx] -= step
                numeric = (loss_at(plus) - loss_at(minus)) / (2 * step)
                got = analytic.weights[li][idx]
                err = abs(got - numeric) / max(abs(got), abs(numeric), 1.0)
                worst = max(worst, err)
            for bi in range(params.biases[li].shape[0]):
                plus = params.copy()
                plus.biases[li][bi] += step
                minus = params.copy()
                minus.biases[li][bi] -= step
                numeric = (loss_at(plus) - loss_at(minus)) / (2 * step)
                got = analytic.biases[li][bi]
                err = abs(got - numeric) / max(abs(got), abs(numeric), 1.0)
                worst = max(worst, err)
    assert worst <= 1e-4, f"worst relative error {worst:.3e} exceeds 1e-4"
    _report(
        f"criterion 1 gradient check: worst relative error {worst:.2e} <= 1e-4 over 20 configs",
        time.perf_counter() - start,
        budget=10.0,
    )


def test_criterion_2_loss_table():
    """The four documented loss examples reproduce (0, 0.5, 0, 0.5) to 1e-12."""
    start = time.perf_counter()
    f0 = np.array([0.0, 0.0])
    cases = [
        (np.array([1.0, 2.0]), np.array([1.0, 2.0]), 1, 0.0),  # similar, D=0
        (f0, f0, 0, 0.5),  # dissimilar at zero distance, m=1
        (np.array([2.0, 0.0]), f0, 0, 0.0),  # hinge saturated, D2=4
        (np.array([1.0, 0.0]), f0, 1, 0.5),  # similar, D2=1
    ]
    values = []
    for fa, fb, label, want in cases:
        got = contrastive_loss(fa, fb, label, margin=1.0)
        values.append(got)
        assert abs(got - want) <= 1e-12, f"loss({label=}) = {got}, want {want}"
    _report(
        f"criterion 2 loss table: {tuple(values)} == (0.0, 0.5, 0.0, 0.5) to 1e-12",
        time.perf_counter() - start,
        budget=1.0,
    )


def test_criterion_3_ann_exactness():
    """Full-budget queries reproduce brute force on 500 random 16-d vectors."""
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    items = rng.normal(size=(500, 16)).astype(np.float32)
    index = build(items, IndexConfig(n_trees=20, search_k=500, leaf_capacity=16, seed=3))
    for _ in range(50):
        q = rng.normal(size=16)
        got = query(index, q, k=10, search_k=500)
        dists = np.linalg.norm(index.items.astype(np.float64) - q, axis=1)
        order = np.argsort(dists, kind="stable")[:10]
        assert set(got.ids) == set(int(i) for i in order)
        for (_, gd), wi in zip(got.neighbors, order):
            assert abs(gd - float(dists[wi])) <= 1e-9
    _report(
        "criterion 3 ANN exactness: 50/50 queries equal brute force (distances to 1e-9)",
        time.perf_counter() - start,
        budget=5.0,
    )


def test_criterion_4_ann_recall():
    """Recall@10 >= 0.90 on 2000 Gaussian vectors with n_trees=50, search_k=400.

    Vectors are drawn from a 20-component Gaussian mixture in 256-d so that
    nearest neighbors are meaningful at this budget; queries come from the
    same mixture.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(42)
    n_clusters, per_cluster, dim = 20, 100, 256
    means = rng.normal(size=(n_clusters, dim)) * 0.75
    items = np.concatenate(
        [means[c] + rng.normal(size=(per_cluster, dim)) for c in range(n_clusters)]
    ).astype(np.float32)
    index = build(items, IndexConfig(n_trees=50, search_k=400, leaf_capacity=16, seed=7))
    hits = 0
    n_queries = 100
    for _ in range(n_queries):
        q = means[int(rng.integers(n_clusters))] + rng.normal(size=dim)
        dists = np.linalg.norm(index.items.astype(np.float64) - q, axis=1)
        want = set(int(i) for i in np.argsort(dists, kind="stable")[:10])
        got = set(query(index, q, k=10).ids)
        hits += len(want & got)
    recall = hits / (10 * n_queries)
    assert recall >= 0.90, f"recall@10 = {recall:.3f} below 0.90"
    _report(
        f"criterion 4 ANN recall: recall@10 = {recall:.3f} >= 0.90 over {n_queries} queries",
        time.perf_counter() - start,
        budget=30.0,
    )


def test_criterion_5_synthetic_cosegmentation():
    """Trained embeddings group the synthetic classes; mining beats random."""
    start = time.perf_counter()
    train_vec, train_lab, test_vec, test_lab = synthdata.make_cluster_descriptors(
        n_classes=4, train_per_class=40, test_per_class=10, dim=64,
        separation=24.0, seed=10,
    )
    dataset = LabeledDescriptors(vectors=train_vec, labels=train_lab)
    results = {}
    for mining in ("aggressive", "random"):
        cfg = TrainConfig(
            iterations=5000, batch_size=128, layer_sizes=(32, 16), seed=11, mining=mining
        )
        results[mining] = train(dataset, cfg).params

    def mean_positive_d2(params):
        emb = forward_batch(params, test_vec)
        total = count = 0
        for i in range(len(test_lab)):
            for j in range(i + 1, len(test_lab)):
                if test_lab[i] == test_lab[j]:
                    total += float(np.sum((emb[i] - emb[j]) ** 2))
                    count += 1
        return total / count

    emb_test = forward_batch(results["aggressive"], test_vec)
    index = build(emb_test, IndexConfig(n_trees=10, search_k=400, leaf_capacity=16, seed=0))
    groups = retrieve_similar(index, emb_test, k=10, search_k=400)
    good = 0
    for pos, group in enumerate(groups):
        same = sum(
            1 for member, _ in group.members.neighbors
            if test_lab[int(member)] == test_lab[pos]
        )
        if same >= 9:
            good += 1
    frac = good / len(groups)
    assert frac >= 0.90, f"only {good}/{len(groups)} anchors reached 9/10 same-class"

    d2_aggr = mean_positive_d2(results["aggressive"])
    d2_rand = mean_positive_d2(results["random"])
    assert d2_aggr < d2_rand, (
        f"aggressive mining positive D2 {d2_aggr:.4f} not below random {d2_rand:.4f}"
    )
    _report(
        f"criterion 5 synthetic cosegmentation: {good}/{len(groups)} anchors >= 9/10 "
        f"same-class (need 90%); positive D2 {d2_aggr:.4f} (mined) < {d2_rand:.4f} (random)",
        time.perf_counter() - start,
        budget=120.0,
    )


def test_criterion_6_metric_oracles():
    """precision/jaccard equal a pixel-counting oracle on 200 random mask pairs."""
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    for _ in range(200):
        a = rng.random((32, 32)) > rng.uniform(0.2, 0.9)
        b = rng.random((32, 32)) > rng.uniform(0.2, 0.9)
        inter = sum(1 for x, y in zip(a.ravel(), b.ravel()) if x and y)
        na = int(np.count_nonzero(a))
        nb = int(np.count_nonzero(b))
        union = na + nb - inter
        want_p = inter / na if na else 0.0
        want_j = inter / union if union else 1.0
        assert precision(a, b) == want_p
        assert jaccard(a, b) == want_j
        if na > 0:
            assert jaccard(a, b) <= inter / na
    _report(
        "criterion 6 metric oracles: 200/200 random mask pairs match the pixel counts exactly",
        time.perf_counter() - start,
        budget=1.0,
    )


def test_criterion_7_nms_dedup_oracle():
    """nms and dedup_near equal quadratic reference implementations."""
    start = time.perf_counter()
    rng = np.random.default_rng(7)

    def ref_iou(a, b):
        ix = max(0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
        iy = max(0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
        inter = ix * iy
        return inter / (a.w * a.h + b.w * b.h - inter) if inter else 0.0

    def ref_nms(props, t):
        order = sorted(range(len(props)), key=lambda i: (-props[i].score, i))
        kept = []
        for i in order:
            if all(ref_iou(props[i].box, props[j].box) < t for j in kept):
                kept.append(i)
        return [props[i] for i in kept]

    def ref_dedup(props, t):
        kept = []
        for p in props:
            if all(ref_iou(p.box, q.box) < t for q in kept):
                kept.append(p)
        return kept

    for _ in range(200):
        n = int(rng.integers(1, 31))
        props = [
            Proposal(
                "img",
                BoundingBox(
                    int(rng.integers(0, 40)), int(rng.integers(0, 40)),
                    int(rng.integers(1, 25)), int(rng.integers(1, 25)),
                ),
                float(rng.random()),
                "gen",
            )
            for _ in range(n)
        ]
        t = float(rng.uniform(0.2, 0.95))
        assert nms(props, t) == ref_nms(props, t)
        assert dedup_near(props, t) == ref_dedup(props, t)
    _report(
        "criterion 7 NMS/dedup oracle: 200/200 random proposal sets match the quadratic reference",
        time.perf_counter() - start,
        budget=1.0,
    )


def test_criterion_8_collage_invariants():
    """Closest item takes the largest slot; untouched pixels stay background."""
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    spec = CollageSpec()
    bg = np.array(spec.background, dtype=np.uint8)
    for round_no in range(100):
        n = int(rng.integers(1, 11))
        items = []
        distances = rng.permutation(n).astype(float)  # unique, so the min is unique
        for i in range(n):
            color = (i + 1, 100, 200)
            h, w = int(rng.integers(2, 40)), int(rng.integers(2, 40))
            region = np.zeros((h, w, 3), dtype=np.uint8)
            region[:, :] = color
            mask = np.ones((h, w), dtype=bool)
            if i == 0 and h >= 2:
                mask[h // 2 :] = False  # this cutout shows background below
            items.append(CollageItem(region=region, mask=mask, distance=float(distances[i])))
        canvas = make_collage(items, spec)
        assert canvas.shape == (CANVAS_SIDE, CANVAS_SIDE, 3)
        assert np.array_equal(canvas, make_collage(items, spec))  # byte-stable

        placed = layout(items, spec)
        assert placed[0][1].distance == min(distances)  # min distance -> slot 0
        largest = spec.slots[0]
        min_color = None
        for i, item in enumerate(items):
            if item.distance == min(distances):
                min_color = (i + 1, 100, 200)
        assert tuple(canvas[largest.y, largest.x]) == min_color

        used = {slot for slot, _ in placed}
        for idx, s in enumerate(spec.slots):
            tile = canvas[s.y : s.y + s.h, s.x : s.x + s.w]
            if idx not in used:
                assert np.all(tile == bg)  # unused slot is pure background
        # the masked-off lower half of item 0's cutout shows background
        slot0_item = placed[0][1]
        if slot0_item is items[0]:
            assert np.all(canvas[largest.y + largest.h - 1, largest.x] == bg)
    _report(
        "criterion 8 collage invariants: 100/100 random sets place the closest item in the "
        "largest slot with background preserved, byte-stable",
        time.perf_counter() - start,
        budget=5.0,
    )


def test_criterion_9_pipeline_determinism(tmp_path):
    """Two full pipeline runs with one seed produce byte-identical artifacts."""
    start = time.perf_counter()
    manifest, proposals = synthdata.make_image_dataset(tmp_path, seed=0)
    outputs = []
    for run in ("run_a", "run_b"):
        out = tmp_path / run
        cfg = merge_config(
            {
                "data.manifest": str(manifest),
                "data.proposals": str(proposals),
                "data.out_dir": str(out),
                "seed": "7",
                "train.iterations": "200",
                "train.batch_size": "32",
                "train.layers": "64,32",
                "train.mining": "aggressive",
                "index.n_trees": "10",
                "index.search_k": "200",
                "retrieve.k": "5",
                "retrieve.search_k": "200",
                "collage.limit": "3",
            }
        )
        run_pipeline(cfg)
        outputs.append(out)
    a, b = outputs
    compared = []
    for name in ("model.csgm", "index.csgi", "groups.jsonl", "report.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), f"{name} differs"
        compared.append(name)
    collages_a = sorted(p.name for p in (a / "collages").glob("*.ppm"))
    collages_b = sorted(p.name for p in (b / "collages").glob("*.ppm"))
    assert collages_a == collages_b and collages_a, "collage sets differ"
    for name in collages_a:
        assert (a / "collages" / name).read_bytes() == (b / "collages" / name).read_bytes()
        compared.append(f"collages/{name}")
    _report(
        f"criterion 9 determinism: {len(compared)} artifacts byte-identical across two seeded runs",
        time.perf_counter() - start,
    )
