"""Patch descriptors: fixed-size grayscale crops of proposal boxes, plus the
binary descriptor file format used to exchange them between pipeline stages.
"""

from __future__ import annotations

import numpy as np

from ._binio import Reader, pack_u16, pack_u32, pack_u64
from .geometry import BoundingBox

DESCRIPTOR_MAGIC = b"CSGD"
DESCRIPTOR_VERSION = 1

PATCH_SIDE = 32
DESCRIPTOR_DIM = PATCH_SIDE * PATCH_SIDE

# Rec. 601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


def to_gray(image: np.ndarray) -> np.ndarray:
    """Collapse an RGB (h, w, 3) image to grayscale; pass (h, w) through."""
    image = np.asarray(image)
    if image.ndim == 2:
        return image.astype(np.float64)
    if image.ndim == 3 and image.shape[2] == 3:
        return image.astype(np.float64) @ _LUMA
    raise ValueError(f"expected (h, w) or (h, w, 3) image, got shape {image.shape}")


def _nearest_axis(src: int, dst: int) -> np.ndarray:
    # pixel-center sampling: source index of each destination pixel
    return np.minimum((np.arange(dst) + 0.5) * (src / dst), src - 1).astype(np.int64)


def resize_nearest(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbor resample of a 2-d or 3-d (h, w[, c]) array."""
    if height < 1 or width < 1:
        raise ValueError(f"target size must be positive, got {height}x{width}")
    rows = _nearest_axis(image.shape[0], height)
    cols = _nearest_axis(image.shape[1], width)
    return image[np.ix_(rows, cols)] if image.ndim == 2 else image[rows][:, cols]


def patch_descriptor(image: np.ndarray, box: BoundingBox) -> np.ndarray:
    """Descriptor for one proposal: crop the box, convert to grayscale,
    resample to 32x32 by nearest neighbor, flatten row-major, scale to [0, 1].

    The box is clipped to the image; a box entirely outside it is an error.
    Returns a float32 vector of length 1024.
    """
    gray = to_gray(image)
    h, w = gray.shape
    x0 = max(box.x, 0)
    y0 = max(box.y, 0)
    x1 = min(box.x + box.w, w)
    y1 = min(box.y + box.h, h)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"box {box} lies outside a {w}x{h} image")
    patch = gray[y0:y1, x0:x1]
    small = resize_nearest(patch, PATCH_SIDE, PATCH_SIDE)
    return (small.reshape(-1) / 255.0).astype(np.float32)


def save_descriptors(ids: list[str], vectors: np.ndarray) -> bytes:
    """Serialize id/vector records: magic, version, dim, count, then per
    record a u16 length-prefixed UTF-8 id followed by dim float32 values."""
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise ValueError(f"vectors must be 2-d, got shape {vectors.shape}")
    if len(ids) != vectors.shape[0]:
        raise ValueError(f"{len(ids)} ids but {vectors.shape[0]} vectors")
    out = bytearray()
    out += DESCRIPTOR_MAGIC
    out += pack_u32(DESCRIPTOR_VERSION)
    out += pack_u32(vectors.shape[1])
    out += pack_u64(vectors.shape[0])
    for item_id, vec in zip(ids, vectors):
        raw = item_id.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"item id too long to encode: {item_id[:32]!r}...")
        out += pack_u16(len(raw))
        out += raw
        out += np.ascontiguousarray(vec, dtype="<f4").tobytes()
    return bytes(out)


def load_descriptors(data: bytes) -> tuple[list[str], np.ndarray]:
    r = Reader(data)
    r.expect_magic(DESCRIPTOR_MAGIC)
    r.expect_version(DESCRIPTOR_VERSION)
    dim = r.u32()
    count = r.u64()
    if dim == 0:
        raise ValueError("descriptor file declares zero dimension")
    ids: list[str] = []
    vectors = np.empty((count, dim), dtype=np.float32)
    for i in range(count):
        n = r.u16()
        ids.append(r.take(n).decode("utf-8"))
        vectors[i] = r.f32_array(dim)
    r.expect_eof()
    return ids, vectors


def save_descriptors_file(ids: list[str], vectors: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_descriptors(ids, vectors))


def load_descriptors_file(path) -> tuple[list[str], np.ndarray]:
    with open(path, "rb") as fh:
        return load_descriptors(fh.read())
