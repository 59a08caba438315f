"""Binary mask algebra, per-instance occlusion bookkeeping, and an RLE codec.

A mask is a 2D numpy bool array of shape (height, width). All operations
are pure and treat their inputs as immutable; instances built here must
not be mutated after construction so they can be shared freely across
threads.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

Mask = np.ndarray


def _require_same_shape(a: Mask, b: Mask) -> None:
    if a.shape != b.shape:
        raise ValueError(f"mask shape mismatch: {a.shape} vs {b.shape}")


def as_mask(bits) -> Mask:
    """Coerce array-like input to a 2D bool mask."""
    m = np.asarray(bits, dtype=bool)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"mask must be 2D and non-empty, got shape {m.shape}")
    return m


def area(m: Mask) -> int:
    return int(np.count_nonzero(m))


def union(a: Mask, b: Mask) -> Mask:
    _require_same_shape(a, b)
    return a | b


def intersect(a: Mask, b: Mask) -> Mask:
    _require_same_shape(a, b)
    return a & b


def subtract(a: Mask, b: Mask) -> Mask:
    """Pixels of ``a`` not covered by ``b``."""
    _require_same_shape(a, b)
    return a & ~b


def iou(a: Mask, b: Mask) -> float:
    """Intersection over union; two empty masks compare as identical (1.0)."""
    _require_same_shape(a, b)
    inter = int(np.count_nonzero(a & b))
    un = int(np.count_nonzero(a | b))
    if un == 0:
        return 1.0
    return inter / un


@dataclass(frozen=True)
class InstanceRecord:
    """One object's category, its three ground-truth masks, and its depth.

    The visible and occluded masks partition the amodal mask exactly;
    this is checked at construction time. ``depth`` is generator-assigned,
    larger means nearer to the camera.
    """

    category: int
    amodal: Mask
    visible: Mask
    occluded: Mask
    depth: float

    def __post_init__(self):
        if self.category < 0:
            raise ValueError(f"category must be non-negative, got {self.category}")
        if not np.isfinite(self.depth):
            raise ValueError("depth must be finite")
        _require_same_shape(self.amodal, self.visible)
        _require_same_shape(self.amodal, self.occluded)
        if area(self.amodal) < 1:
            raise ValueError("amodal mask must cover at least one pixel")
        if np.any(self.visible & self.occluded):
            raise ValueError("visible and occluded masks must be disjoint")
        if not np.array_equal(self.visible | self.occluded, self.amodal):
            raise ValueError("visible and occluded masks must union to the amodal mask")


def occlusion_rate(r: InstanceRecord) -> float:
    """Occluded area over amodal area: 0 for fully visible, 1 for invisible."""
    return area(r.occluded) / area(r.amodal)


@dataclass(frozen=True)
class RleMask:
    """Uncompressed run-length encoding of a binary mask.

    Runs follow column-major pixel order and alternate background then
    foreground; the leading background run may be 0. Serializes inside
    JSON manifests as ``{"size": [height, width], "counts": [...]}``.
    """

    height: int
    width: int
    counts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("RleMask dimensions must be >= 1")
        if any(c < 0 for c in self.counts):
            raise ValueError("run lengths must be non-negative")
        total = sum(self.counts)
        if total != self.height * self.width:
            raise ValueError(
                f"run lengths sum to {total}, expected {self.height * self.width}"
            )

    def to_json(self) -> dict:
        return {"size": [self.height, self.width], "counts": list(self.counts)}

    @classmethod
    def from_json(cls, obj: dict) -> "RleMask":
        h, w = obj["size"]
        return cls(height=int(h), width=int(w), counts=tuple(int(c) for c in obj["counts"]))


def rle_encode(m: Mask) -> RleMask:
    h, w = m.shape
    flat = np.asarray(m, dtype=np.uint8).flatten(order="F")
    counts = _kernels.rle_encode(flat)
    return RleMask(height=h, width=w, counts=tuple(int(c) for c in counts))


def rle_decode(r: RleMask) -> Mask:
    flat = _kernels.rle_decode(np.asarray(r.counts, dtype=np.int64), r.height * r.width)
    return flat.reshape((r.height, r.width), order="F").astype(bool)


def write_pgm(path, gray: np.ndarray) -> None:
    """Write a 2D uint8 array as a binary (P5) PGM image."""
    gray = np.asarray(gray, dtype=np.uint8)
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(gray.tobytes())


def mask_to_pgm(path, m: Mask) -> None:
    write_pgm(path, np.where(m, 255, 0).astype(np.uint8))
