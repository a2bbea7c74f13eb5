"""Twin-encoder embedding model: forward pass, contrastive loss, analytic
gradients, SGD-with-momentum training, pair sampling, and hard-pair mining.

The encoder is a fully connected network with rectifier hidden layers and an
identity output layer. Both inputs of a pair run through the same weights, so
every gradient is the sum of the two branch contributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, TrainingDiverged
from ._binio import Reader, pack_u32, pack_f64

MODEL_MAGIC = b"CSGM"
MODEL_VERSION = 1

_MINING_MODES = ("random", "aggressive")


@dataclass(frozen=True)
class EncoderParams:
    """Weights and biases of the encoder, one (out x in) matrix per layer."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.weights) == 0:
            raise ValueError("encoder needs at least one layer")
        if len(self.weights) != len(self.biases):
            raise ValueError(
                f"{len(self.weights)} weight matrices but {len(self.biases)} biases"
            )
        object.__setattr__(self, "weights", tuple(np.asarray(w, dtype=np.float64) for w in self.weights))
        object.__setattr__(self, "biases", tuple(np.asarray(b, dtype=np.float64) for b in self.biases))
        prev_out = None
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2:
                raise ValueError(f"layer {i}: weight must be 2-d, got shape {w.shape}")
            if b.shape != (w.shape[0],):
                raise ValueError(
                    f"layer {i}: bias shape {b.shape} does not match {w.shape[0]} output rows"
                )
            if prev_out is not None and w.shape[1] != prev_out:
                raise ValueError(
                    f"layer {i}: expects {w.shape[1]} inputs but layer {i - 1} outputs {prev_out}"
                )
            prev_out = w.shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights)

    def copy(self) -> EncoderParams:
        return EncoderParams(
            weights=tuple(w.copy() for w in self.weights),
            biases=tuple(b.copy() for b in self.biases),
        )


@dataclass(frozen=True)
class PairSample:
    """Two descriptors plus a similarity label (1 = same class, 0 = different)."""

    a: np.ndarray
    b: np.ndarray
    label: int

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        object.__setattr__(self, "a", np.asarray(self.a, dtype=np.float64))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=np.float64))
        if self.a.shape != self.b.shape or self.a.ndim != 1:
            raise ValueError(
                f"pair descriptors must be equal-length vectors, got {self.a.shape} and {self.b.shape}"
            )


@dataclass(frozen=True)
class LabeledDescriptors:
    """Descriptor matrix with one integer class label per row."""

    vectors: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "vectors", np.asarray(self.vectors, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        if self.vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-d, got shape {self.vectors.shape}")
        if self.labels.shape != (self.vectors.shape[0],):
            raise ValueError(
                f"{self.vectors.shape[0]} vectors but label shape {self.labels.shape}"
            )

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and sampling settings for train().

    classical_hinge selects the variant whose dissimilar-pair term hinges on
    the distance itself, 0.5 * max(0, m - D)**2, instead of the default
    squared-distance hinge 0.5 * max(0, m - D**2).
    """

    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 128
    margin: float = 1.0
    iterations: int = 1000
    seed: int = 0
    mining: str = "random"
    layer_sizes: tuple[int, ...] = (128, 256)
    pool_factor: int = 10
    classical_hinge: bool = False

    def __post_init__(self) -> None:
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (self.margin > 0 and math.isfinite(self.margin)):
            raise ConfigError(f"margin must be positive, got {self.margin}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.mining not in _MINING_MODES:
            raise ConfigError(f"mining must be one of {_MINING_MODES}, got {self.mining!r}")
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) == 0 or any(s < 1 for s in self.layer_sizes):
            raise ConfigError(f"layer_sizes must be positive integers, got {self.layer_sizes}")
        if self.pool_factor < 1:
            raise ConfigError(f"pool_factor must be >= 1, got {self.pool_factor}")


@dataclass(frozen=True)
class TrainResult:
    """Final parameters plus the mean batch loss recorded at every iteration."""

    params: EncoderParams
    loss_trace: tuple[float, ...]


def init_params(input_dim: int, layer_sizes: Sequence[int], seed: int) -> EncoderParams:
    """Seeded uniform init in +-sqrt(6/(fan_in+fan_out)); biases start at zero."""
    if input_dim < 1:
        raise ValueError(f"input_dim must be >= 1, got {input_dim}")
    sizes = [int(input_dim), *[int(s) for s in layer_sizes]]
    if len(sizes) < 2 or any(s < 1 for s in sizes[1:]):
        raise ValueError(f"layer_sizes must be non-empty positive integers, got {layer_sizes}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return EncoderParams(weights=tuple(weights), biases=tuple(biases))


def zeros_like_params(params: EncoderParams) -> EncoderParams:
    return EncoderParams(
        weights=tuple(np.zeros_like(w) for w in params.weights),
        biases=tuple(np.zeros_like(b) for b in params.biases),
    )


def _forward_activations(params: EncoderParams, batch: np.ndarray) -> list[np.ndarray]:
    """All layer outputs for a (n, input_dim) batch, input included."""
    acts = [batch]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = acts[-1] @ w.T + b
        acts.append(z if i == last else np.maximum(z, 0.0))
    return acts


def forward_batch(params: EncoderParams, batch: np.ndarray) -> np.ndarray:
    """Embed every row of a (n, input_dim) array; returns (n, output_dim)."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != params.input_dim:
        raise ValueError(
            f"batch shape {batch.shape} does not match input dimension {params.input_dim}"
        )
    return _forward_activations(params, batch)[-1]


def forward(params: EncoderParams, x: np.ndarray) -> np.ndarray:
    """Embed one descriptor vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != params.input_dim:
        raise ValueError(
            f"descriptor shape {x.shape} does not match input dimension {params.input_dim}"
        )
    return forward_batch(params, x[None, :])[0]


def contrastive_loss(
    fa: np.ndarray,
    fb: np.ndarray,
    label: int,
    margin: float,
    classical_hinge: bool = False,
) -> float:
    """0.5 * (Y * D**2 + (1 - Y) * max(0, m - D**2)) with D the Euclidean distance.

    With classical_hinge the dissimilar term becomes 0.5 * max(0, m - D)**2.
    """
    fa = np.asarray(fa, dtype=np.float64)
    fb = np.asarray(fb, dtype=np.float64)
    if fa.shape != fb.shape:
        raise ValueError(f"embedding shapes differ: {fa.shape} vs {fb.shape}")
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label!r}")
    if not margin > 0:
        raise ValueError(f"margin must be positive, got {margin}")
    d2 = float(np.sum((fa - fb) ** 2))
    if label == 1:
        return 0.5 * d2
    if classical_hinge:
        return 0.5 * max(0.0, margin - math.sqrt(d2)) ** 2
    return 0.5 * max(0.0, margin - d2)


def _pair_grad_coeff(
    d2: np.ndarray, labels: np.ndarray, margin: float, classical_hinge: bool
) -> np.ndarray:
    """Per-pair scale c such that d(loss)/d(fa) = c * (fa - fb).

    The hinge kink and the zero-distance point of the classical variant use
    subgradient 0.
    """
    pos = labels == 1
    coeff = np.where(pos, 1.0, 0.0)
    if classical_hinge:
        d = np.sqrt(d2)
        active = (~pos) & (d < margin) & (d > 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            neg_coeff = np.where(active, -(margin - d) / np.where(d > 0, d, 1.0), 0.0)
        coeff = coeff + neg_coeff
    else:
        coeff = coeff + np.where((~pos) & (d2 < margin), -1.0, 0.0)
    return coeff


def _batch_gradient(
    params: EncoderParams,
    xa: np.ndarray,
    xb: np.ndarray,
    labels: np.ndarray,
    margin: float,
    classical_hinge: bool,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean loss and mean-loss gradients over a batch of pairs."""
    acts_a = _forward_activations(params, xa)
    acts_b = _forward_activations(params, xb)
    diff = acts_a[-1] - acts_b[-1]
    d2 = np.sum(diff * diff, axis=1)
    labels = np.asarray(labels)
    if classical_hinge:
        d = np.sqrt(d2)
        per_pair = np.where(labels == 1, 0.5 * d2, 0.5 * np.maximum(0.0, margin - d) ** 2)
    else:
        per_pair = np.where(labels == 1, 0.5 * d2, 0.5 * np.maximum(0.0, margin - d2))
    n = xa.shape[0]
    loss = float(np.mean(per_pair))

    coeff = _pair_grad_coeff(d2, labels, margin, classical_hinge) / n
    grad_w = [np.zeros_like(w) for w in params.weights]
    grad_b = [np.zeros_like(b) for b in params.biases]
    # shared weights: accumulate both branches; d(loss)/d(fb) = -d(loss)/d(fa)
    for acts, sign in ((acts_a, 1.0), (acts_b, -1.0)):
        delta = (sign * coeff)[:, None] * diff
        for layer in range(len(params.weights) - 1, -1, -1):
            grad_w[layer] += delta.T @ acts[layer]
            grad_b[layer] += delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ params.weights[layer]) * (acts[layer] > 0)
    return loss, grad_w, grad_b


def loss_gradient(
    params: EncoderParams,
    pair: PairSample,
    margin: float,
    classical_hinge: bool = False,
) -> EncoderParams:
    """Analytic gradient of contrastive_loss(forward(a), forward(b)) wrt params."""
    if not margin > 0:
        raise ValueError(f"margin must be positive, got {margin}")
    if pair.a.shape[0] != params.input_dim:
        raise ValueError(
            f"pair dimension {pair.a.shape[0]} does not match input dimension {params.input_dim}"
        )
    _, grad_w, grad_b = _batch_gradient(
        params,
        pair.a[None, :],
        pair.b[None, :],
        np.array([pair.label]),
        margin,
        classical_hinge,
    )
    return EncoderParams(weights=tuple(grad_w), biases=tuple(grad_b))


def sgd_step(
    params: EncoderParams,
    velocity: EncoderParams,
    grad: EncoderParams,
    cfg: TrainConfig,
) -> tuple[EncoderParams, EncoderParams]:
    """One momentum update: v <- momentum*v - lr*g; params <- params + v."""
    for name, other in (("velocity", velocity), ("grad", grad)):
        if other.layer_sizes != params.layer_sizes or other.input_dim != params.input_dim:
            raise ValueError(f"{name} shape does not match params")
    new_v = tuple(
        cfg.momentum * v - cfg.learning_rate * g
        for v, g in zip(velocity.weights, grad.weights)
    )
    new_vb = tuple(
        cfg.momentum * v - cfg.learning_rate * g
        for v, g in zip(velocity.biases, grad.biases)
    )
    new_w = tuple(w + v for w, v in zip(params.weights, new_v))
    new_b = tuple(b + v for b, v in zip(params.biases, new_vb))
    return (
        EncoderParams(weights=new_w, biases=new_b),
        EncoderParams(weights=new_v, biases=new_vb),
    )


def _class_members(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Padded (class, rank) -> dataset index table plus per-class counts."""
    classes, inverse = np.unique(labels, return_inverse=True)
    counts = np.bincount(inverse, minlength=len(classes))
    table = np.zeros((len(classes), counts.max()), dtype=np.int64)
    order = np.argsort(inverse, kind="stable")
    start = 0
    for c, cnt in enumerate(counts):
        table[c, :cnt] = order[start : start + cnt]
        start += cnt
    return classes, table, counts


def _sample_pair_indices(
    labels: np.ndarray, count: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Balanced random pair indices: ceil(count/2) positives then the negatives."""
    classes, table, counts = _class_members(labels)
    if len(classes) < 2:
        raise ValueError(f"pair sampling needs at least 2 classes, got {len(classes)}")
    eligible = np.flatnonzero(counts >= 2)
    if len(eligible) == 0:
        raise ValueError("pair sampling needs at least one class with 2 or more items")
    n_pos = (count + 1) // 2
    n_neg = count // 2

    pc = eligible[rng.integers(0, len(eligible), size=n_pos)]
    pn = counts[pc]
    i = (rng.random(n_pos) * pn).astype(np.int64)
    j = (rng.random(n_pos) * (pn - 1)).astype(np.int64)
    j += j >= i
    pos_a = table[pc, i]
    pos_b = table[pc, j]

    ca = rng.integers(0, len(classes), size=n_neg)
    cb = rng.integers(0, len(classes) - 1, size=n_neg)
    cb += cb >= ca
    neg_a = table[ca, (rng.random(n_neg) * counts[ca]).astype(np.int64)]
    neg_b = table[cb, (rng.random(n_neg) * counts[cb]).astype(np.int64)]

    ia = np.concatenate([pos_a, neg_a])
    ib = np.concatenate([pos_b, neg_b])
    y = np.concatenate([np.ones(n_pos, dtype=np.int64), np.zeros(n_neg, dtype=np.int64)])
    return ia, ib, y


def _pairs_from_indices(
    dataset: LabeledDescriptors, ia: np.ndarray, ib: np.ndarray, y: np.ndarray
) -> list[PairSample]:
    return [
        PairSample(a=dataset.vectors[a], b=dataset.vectors[b], label=int(lbl))
        for a, b, lbl in zip(ia, ib, y)
    ]


def sample_pairs(dataset: LabeledDescriptors, count: int, rng_seed: int) -> list[PairSample]:
    """Balanced random pairs: ceil(count/2) same-class (label 1) followed by
    floor(count/2) cross-class (label 0). Deterministic for a given seed."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(rng_seed)
    ia, ib, y = _sample_pair_indices(dataset.labels, count, rng)
    return _pairs_from_indices(dataset, ia, ib, y)


def _mine_hard_indices(
    params: EncoderParams,
    dataset: LabeledDescriptors,
    count: int,
    margin: float,
    rng: np.random.Generator,
    pool_factor: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pick the hardest pairs out of a random pool of pool_factor*count."""
    ia, ib, y = _sample_pair_indices(dataset.labels, pool_factor * count, rng)
    emb = forward_batch(params, dataset.vectors)
    d2 = np.sum((emb[ia] - emb[ib]) ** 2, axis=1)

    n_pos = (count + 1) // 2
    n_neg = count // 2
    pos_idx = np.flatnonzero(y == 1)
    neg_idx = np.flatnonzero(y == 0)
    # hardest positives have the largest distance; ties keep pool order
    pos_pick = pos_idx[np.argsort(-d2[pos_idx], kind="stable")[:n_pos]]
    neg_pick = neg_idx[np.argsort(d2[neg_idx], kind="stable")[:n_neg]]
    sel = np.concatenate([pos_pick, neg_pick])
    return ia[sel], ib[sel], y[sel]


def mine_hard_pairs(
    params: EncoderParams,
    dataset: LabeledDescriptors,
    count: int,
    margin: float,
    rng_seed: int,
    pool_factor: int = 10,
) -> list[PairSample]:
    """Hardest pairs from a random pool: the ceil(count/2) positives with the
    largest embedding distance, then the floor(count/2) negatives with the
    smallest. Deterministic for a given seed."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not margin > 0:
        raise ValueError(f"margin must be positive, got {margin}")
    rng = np.random.default_rng(rng_seed)
    ia, ib, y = _mine_hard_indices(params, dataset, count, margin, rng, pool_factor)
    return _pairs_from_indices(dataset, ia, ib, y)


def train(dataset: LabeledDescriptors, cfg: TrainConfig) -> TrainResult:
    """Run cfg.iterations mini-batch updates and return params plus loss trace.

    Batch gradients average the per-pair losses. The pair stream draws from a
    generator seeded with cfg.seed + 1 so it is independent of the cfg.seed
    weight init. Aborts with TrainingDiverged if a batch loss goes non-finite.
    """
    if len(dataset) < 2:
        raise ValueError("training needs at least 2 descriptors")
    _sample_pair_indices(dataset.labels, 2, np.random.default_rng(0))  # validate classes
    params = init_params(dataset.dim, cfg.layer_sizes, cfg.seed)
    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    rng = np.random.default_rng(cfg.seed + 1)
    trace: list[float] = []
    for it in range(cfg.iterations):
        cur = EncoderParams(weights=tuple(weights), biases=tuple(biases))
        if cfg.mining == "aggressive":
            ia, ib, y = _mine_hard_indices(
                cur, dataset, cfg.batch_size, cfg.margin, rng, cfg.pool_factor
            )
        else:
            ia, ib, y = _sample_pair_indices(dataset.labels, cfg.batch_size, rng)
        loss, grad_w, grad_b = _batch_gradient(
            cur,
            dataset.vectors[ia],
            dataset.vectors[ib],
            y,
            cfg.margin,
            cfg.classical_hinge,
        )
        if not math.isfinite(loss):
            raise TrainingDiverged(iteration=it, value=loss)
        for l in range(len(weights)):
            vel_w[l] = cfg.momentum * vel_w[l] - cfg.learning_rate * grad_w[l]
            vel_b[l] = cfg.momentum * vel_b[l] - cfg.learning_rate * grad_b[l]
            weights[l] = weights[l] + vel_w[l]
            biases[l] = biases[l] + vel_b[l]
        trace.append(loss)
    return TrainResult(
        params=EncoderParams(weights=tuple(weights), biases=tuple(biases)),
        loss_trace=tuple(trace),
    )


def save_model(params: EncoderParams) -> bytes:
    """Serialize params: magic, version, layer count, then per layer the
    row/col sizes, row-major weights, and bias, all little-endian float64."""
    out = bytearray()
    out += MODEL_MAGIC
    out += pack_u32(MODEL_VERSION)
    out += pack_u32(len(params.weights))
    for w, b in zip(params.weights, params.biases):
        out += pack_u32(w.shape[0])
        out += pack_u32(w.shape[1])
        out += np.ascontiguousarray(w, dtype="<f8").tobytes()
        out += np.ascontiguousarray(b, dtype="<f8").tobytes()
    return bytes(out)


def load_model(data: bytes) -> EncoderParams:
    r = Reader(data)
    r.expect_magic(MODEL_MAGIC)
    r.expect_version(MODEL_VERSION)
    n_layers = r.u32()
    if n_layers == 0:
        raise ValueError("model file declares zero layers")
    weights = []
    biases = []
    for _ in range(n_layers):
        rows = r.u32()
        cols = r.u32()
        if rows == 0 or cols == 0:
            raise ValueError(f"model layer has empty shape {rows}x{cols}")
        weights.append(r.f64_array(rows * cols).reshape(rows, cols))
        biases.append(r.f64_array(rows))
    r.expect_eof()
    return EncoderParams(weights=tuple(weights), biases=tuple(biases))


def save_model_file(params: EncoderParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_model(params))


def load_model_file(path) -> EncoderParams:
    with open(path, "rb") as fh:
        return load_model(fh.read())
