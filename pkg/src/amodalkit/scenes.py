"""Seeded generator of layered synthetic scenes with known occlusion context.

Each category carries a depth tendency score; instance depth is that score
plus uniform noise, so which category ends up in front of which is a known,
tunable distribution. Scenes expose exact amodal/visible/occluded ground
truth per instance.
"""

from dataclasses import dataclass

import numpy as np

from .masks import InstanceRecord, Mask, RleMask, rle_decode, rle_encode
from .util import derive_rng, round9

SHAPES = ("rectangle", "disk", "triangle")

_PLACEMENT_RETRIES = 100


class GenerationError(RuntimeError):
    """Raised when a scene cannot be generated under the given config."""


@dataclass(frozen=True)
class CategorySpec:
    id: int
    name: str
    shape: str
    size_range: tuple
    depth_score: float

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}, expected one of {SHAPES}")
        lo, hi = self.size_range
        if not (1 <= lo <= hi):
            raise ValueError(f"size_range must satisfy 1 <= min <= max, got {self.size_range}")
        if not np.isfinite(self.depth_score):
            raise ValueError("depth_score must be finite")


@dataclass(frozen=True)
class OcclusionPriorSpec:
    """The generator-side occlusion-context ground truth.

    ``depth_noise`` is the half-width of the uniform noise added to each
    instance's category depth score.
    """

    categories: tuple
    depth_noise: float

    def __post_init__(self):
        n = len(self.categories)
        if n < 2:
            raise ValueError("need at least two categories")
        if sorted(c.id for c in self.categories) != list(range(n)):
            raise ValueError("category ids must be exactly 0..n-1")
        if not (np.isfinite(self.depth_noise) and self.depth_noise >= 0):
            raise ValueError("depth_noise must be finite and >= 0")

    @property
    def n(self) -> int:
        return len(self.categories)

    def by_id(self, cid: int) -> CategorySpec:
        return next(c for c in self.categories if c.id == cid)


@dataclass(frozen=True)
class SceneConfig:
    width: int
    height: int
    instances_per_scene: tuple
    seed: int

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValueError("canvas must be at least 8x8")
        lo, hi = self.instances_per_scene
        if not (2 <= lo <= hi):
            raise ValueError(
                f"instances_per_scene must satisfy 2 <= min <= max, got {self.instances_per_scene}"
            )


@dataclass(frozen=True)
class Scene:
    config: SceneConfig
    index: int
    instances: tuple  # InstanceRecord, sorted front first (depth descending)


def _raster_rectangle(h, w, rng, size_lo, size_hi):
    rh = int(rng.integers(size_lo, size_hi + 1))
    rw = int(rng.integers(size_lo, size_hi + 1))
    if rh > h or rw > w:
        return None
    y0 = int(rng.integers(0, h - rh + 1))
    x0 = int(rng.integers(0, w - rw + 1))
    m = np.zeros((h, w), dtype=bool)
    m[y0 : y0 + rh, x0 : x0 + rw] = True
    return m


def _raster_disk(h, w, rng, size_lo, size_hi):
    d = int(rng.integers(size_lo, size_hi + 1))
    if d > h or d > w:
        return None
    y0 = int(rng.integers(0, h - d + 1))
    x0 = int(rng.integers(0, w - d + 1))
    cy = y0 + (d - 1) / 2.0
    cx = x0 + (d - 1) / 2.0
    yy, xx = np.ogrid[:h, :w]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= (d / 2.0) ** 2


def _raster_triangle(h, w, rng, size_lo, size_hi):
    s = int(rng.integers(size_lo, size_hi + 1))
    if s > h or s > w:
        return None
    y0 = int(rng.integers(0, h - s + 1))
    x0 = int(rng.integers(0, w - s + 1))
    # isoceles wedge, apex at the top-center of its s x s box
    rows = np.arange(s)[:, None]
    cols = np.arange(s)[None, :]
    wedge = np.abs(cols - (s - 1) / 2.0) <= rows / 2.0
    m = np.zeros((h, w), dtype=bool)
    m[y0 : y0 + s, x0 : x0 + s] = wedge
    return m


_RASTERIZERS = {
    "rectangle": _raster_rectangle,
    "disk": _raster_disk,
    "triangle": _raster_triangle,
}


def layer_instances(amodals, depths):
    """Split each amodal mask into visible/occluded given depth order.

    ``depths`` break ties by position: among equal depths the later entry
    is treated as nearer. Returns (visible, occluded, order) where order
    lists input indices front to back.
    """
    k = len(amodals)
    order = sorted(range(k), key=lambda i: (-depths[i], -i))
    blocked = np.zeros_like(amodals[0]) if k else None
    visible = [None] * k
    occluded = [None] * k
    for i in order:
        visible[i] = amodals[i] & ~blocked
        occluded[i] = amodals[i] & blocked
        blocked = blocked | amodals[i]
    return visible, occluded, order


def sample_scene(prior: OcclusionPriorSpec, cfg: SceneConfig, scene_index: int) -> Scene:
    """Deterministically generate one scene from (cfg.seed, scene_index)."""
    rng = derive_rng(cfg.seed, scene_index)
    lo, hi = cfg.instances_per_scene
    count = int(rng.integers(lo, hi + 1))

    cats, amodals, depths = [], [], []
    for _ in range(count):
        cid = int(rng.integers(0, prior.n))
        spec = prior.by_id(cid)
        raster = _RASTERIZERS[spec.shape]
        m = None
        for _ in range(_PLACEMENT_RETRIES):
            m = raster(cfg.height, cfg.width, rng, *spec.size_range)
            if m is not None:
                break
        if m is None:
            raise GenerationError(
                f"cannot place category {cid} ({spec.name}): size_range "
                f"{spec.size_range} does not fit the {cfg.width}x{cfg.height} canvas"
            )
        depth = spec.depth_score + rng.uniform(-prior.depth_noise, prior.depth_noise)
        cats.append(cid)
        amodals.append(m)
        depths.append(depth)

    visible, occluded, order = layer_instances(amodals, depths)
    instances = tuple(
        InstanceRecord(
            category=cats[i],
            amodal=amodals[i],
            visible=visible[i],
            occluded=occluded[i],
            depth=depths[i],
        )
        for i in order
    )
    return Scene(config=cfg, index=scene_index, instances=instances)


def sample_scenes(prior, cfg, start: int, count: int):
    return [sample_scene(prior, cfg, start + k) for k in range(count)]


def pairwise_occlusion_probability(prior: OcclusionPriorSpec, i: int, j: int) -> float:
    """P(category i lands in front of category j) under the depth model.

    Computed by trapezoidal integration over the two uniform noise terms;
    with zero noise this degenerates to a step function (0.5 at ties).
    """
    if i == j:
        raise ValueError("pairwise probability needs two distinct categories")
    di = prior.by_id(i).depth_score
    dj = prior.by_id(j).depth_score
    sigma = prior.depth_noise
    if sigma == 0:
        if di > dj:
            return 1.0
        if di < dj:
            return 0.0
        return 0.5
    # P(di + U1 > dj + U2) = E_U2[ 1 - F_U1(dj - di + U2) ]
    u = np.linspace(-sigma, sigma, 10_001)
    tail = 1.0 - np.clip((dj - di + u + sigma) / (2 * sigma), 0.0, 1.0)
    density = 1.0 / (2 * sigma)
    return float(np.trapezoid(tail * density, u))


def occlusion_pair_outcomes(scene: Scene):
    """(front_category, back_category) for every overlapping instance pair."""
    out = []
    inst = scene.instances  # front first
    for a in range(len(inst)):
        for b in range(a + 1, len(inst)):
            if np.any(inst[a].amodal & inst[b].amodal):
                out.append((inst[a].category, inst[b].category))
    return out


# --- manifest serialization -------------------------------------------------

def _mask_json(m: Mask) -> dict:
    return rle_encode(m).to_json()


def _mask_from_json(obj) -> Mask:
    return rle_decode(RleMask.from_json(obj))


def manifest_to_json(prior: OcclusionPriorSpec, cfg: SceneConfig, scenes) -> dict:
    return {
        "config": {
            "width": cfg.width,
            "height": cfg.height,
            "instances_per_scene": list(cfg.instances_per_scene),
            "seed": cfg.seed,
            "depth_noise": round9(prior.depth_noise),
        },
        "categories": [
            {
                "id": c.id,
                "name": c.name,
                "shape": c.shape,
                "size_range": list(c.size_range),
                "depth_score": round9(c.depth_score),
            }
            for c in prior.categories
        ],
        "scenes": [
            {
                "index": s.index,
                "instances": [
                    {
                        "category": r.category,
                        "depth": round9(r.depth),
                        "amodal": _mask_json(r.amodal),
                        "visible": _mask_json(r.visible),
                        "occluded": _mask_json(r.occluded),
                    }
                    for r in s.instances
                ],
            }
            for s in scenes
        ],
    }


def manifest_from_json(obj):
    c = obj["config"]
    cfg = SceneConfig(
        width=int(c["width"]),
        height=int(c["height"]),
        instances_per_scene=tuple(c["instances_per_scene"]),
        seed=int(c["seed"]),
    )
    prior = OcclusionPriorSpec(
        categories=tuple(
            CategorySpec(
                id=int(k["id"]),
                name=str(k["name"]),
                shape=str(k["shape"]),
                size_range=tuple(k["size_range"]),
                depth_score=float(k["depth_score"]),
            )
            for k in obj["categories"]
        ),
        depth_noise=float(c["depth_noise"]),
    )
    scenes = []
    for s in obj["scenes"]:
        instances = tuple(
            InstanceRecord(
                category=int(r["category"]),
                amodal=_mask_from_json(r["amodal"]),
                visible=_mask_from_json(r["visible"]),
                occluded=_mask_from_json(r["occluded"]),
                depth=float(r["depth"]),
            )
            for r in s["instances"]
        )
        scenes.append(Scene(config=cfg, index=int(s["index"]), instances=instances))
    return prior, cfg, scenes
