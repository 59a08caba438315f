import numpy as np
import pytest

from amodalkit.masks import InstanceRecord
from amodalkit.scenes import CategorySpec, OcclusionPriorSpec, Scene, SceneConfig


def random_mask(rng, h, w, p=0.3):
    return rng.random((h, w)) < p


def make_record(visible, occluded, category=0, depth=0.0):
    return InstanceRecord(
        category=category,
        amodal=visible | occluded,
        visible=visible,
        occluded=occluded,
        depth=depth,
    )


def random_record(rng, h, w, category=0, p_vis=0.3, p_occ=0.15):
    """Valid random instance: disjoint visible/occluded, non-empty amodal."""
    visible = random_mask(rng, h, w, p_vis)
    occluded = random_mask(rng, h, w, p_occ) & ~visible
    if not (visible.any() or occluded.any()):
        visible = visible.copy()
        visible[h // 2, w // 2] = True
    return make_record(visible, occluded, category=category)


def single_instance_scene(record, width=None, height=None, index=0, seed=0):
    h, w = record.amodal.shape
    cfg = SceneConfig(
        width=width or w, height=height or h, instances_per_scene=(2, 2), seed=seed
    )
    return Scene(config=cfg, index=index, instances=(record,))


def scene_of(records, index=0, seed=0):
    h, w = records[0].amodal.shape
    cfg = SceneConfig(width=w, height=h, instances_per_scene=(2, 2), seed=seed)
    return Scene(config=cfg, index=index, instances=tuple(records))


def benchmark_prior(sizes=(24, 44), depth_noise=1.0):
    """The 4-category prior used by the acceptance benchmark.

    Adjacent categories occlude each other ~91/9, others deterministically.
    """
    return OcclusionPriorSpec(
        categories=(
            CategorySpec(0, "slab", "rectangle", sizes, 3.45),
            CategorySpec(1, "puck", "disk", sizes, 2.30),
            CategorySpec(2, "wedge", "triangle", sizes, 1.15),
            CategorySpec(3, "tile", "rectangle", sizes, 0.0),
        ),
        depth_noise=depth_noise,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
