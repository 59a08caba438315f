"""Noisy stand-ins for the visible- and occluded-mask branches.

Real mask branches are imperfect; these oracles turn ground-truth masks
into per-category logit stacks with controllable corruption: per-pixel
label flips, morphological boundary jitter, and Gaussian logit noise.
A stack is an (n, height, width) float64 array, one channel per category.

``corrupt`` treats a single instance in isolation: every channel except
the instance's own category behaves as if its ground truth were empty.
``corrupt_in_scene`` additionally fills the other channels with the
scene-level masks of their categories, which is what the composition
head consumes in the pipeline: occlusion context can only be learned
when the occluders are actually present in the input channels.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage
from scipy.special import expit

from .masks import InstanceRecord, Mask
from .scenes import Scene
from .util import derive_rng

MaskStack = np.ndarray

_JITTER_STRUCTURE = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class NoiseModel:
    """Corruption knobs for the oracle branches.

    flip_prob: per-pixel chance of flipping the label before logits.
    boundary_jitter: max erode/dilate radius, drawn per instance per branch
        from {-j..j} (negative erodes, positive dilates).
    logit_scale: true pixels map to +s, false to -s; additive Gaussian
        noise has std s/4 unless ``exact_logits`` disables it.
    """

    flip_prob: float
    boundary_jitter: int
    logit_scale: float
    seed: int
    exact_logits: bool = False

    def __post_init__(self):
        if not (0.0 <= self.flip_prob < 1.0):
            raise ValueError("flip_prob must lie in [0, 1)")
        if self.boundary_jitter < 0:
            raise ValueError("boundary_jitter must be >= 0")
        if not (np.isfinite(self.logit_scale) and self.logit_scale > 0):
            raise ValueError("logit_scale must be positive and finite")

    @classmethod
    def exact(cls, seed: int = 0, logit_scale: float = 4.0) -> "NoiseModel":
        """Lossless mode: thresholding the stack reproduces ground truth."""
        return cls(
            flip_prob=0.0,
            boundary_jitter=0,
            logit_scale=logit_scale,
            seed=seed,
            exact_logits=True,
        )

    def with_seed(self, seed: int) -> "NoiseModel":
        return replace(self, seed=seed)


def _jitter(mask: Mask, radius: int) -> Mask:
    if radius > 0:
        return ndimage.binary_dilation(mask, structure=_JITTER_STRUCTURE, iterations=radius)
    if radius < 0:
        return ndimage.binary_erosion(mask, structure=_JITTER_STRUCTURE, iterations=-radius)
    return mask


def _noisy_logits(bits: np.ndarray, noise: NoiseModel, rng) -> np.ndarray:
    if noise.flip_prob > 0.0:
        bits = bits ^ (rng.random(bits.shape) < noise.flip_prob)
    s = noise.logit_scale
    logits = np.where(bits, s, -s)
    if not noise.exact_logits:
        logits = logits + rng.normal(0.0, s / 4.0, size=bits.shape)
    return np.ascontiguousarray(logits, dtype=np.float64)


def _corrupt_stacks(gt_visible, gt_occluded, category, noise, draw_index):
    rng = derive_rng(noise.seed, draw_index)
    if noise.boundary_jitter > 0:
        j = noise.boundary_jitter
        rv = int(rng.integers(-j, j + 1))
        ro = int(rng.integers(-j, j + 1))
        gt_visible = gt_visible.copy()
        gt_occluded = gt_occluded.copy()
        gt_visible[category] = _jitter(gt_visible[category], rv)
        gt_occluded[category] = _jitter(gt_occluded[category], ro)
    vm = _noisy_logits(gt_visible, noise, rng)
    om = _noisy_logits(gt_occluded, noise, rng)
    return vm, om


def corrupt(record: InstanceRecord, noise: NoiseModel, n: int, draw_index: int):
    """Branch outputs for one isolated instance.

    Channel ``record.category`` carries the noisy logits of the visible
    (resp. occluded) mask; every other channel is drawn as if its ground
    truth were empty. Deterministic in (noise.seed, draw_index).
    """
    if record.category >= n:
        raise ValueError(f"category {record.category} out of range for {n} channels")
    h, w = record.amodal.shape
    gv = np.zeros((n, h, w), dtype=bool)
    go = np.zeros((n, h, w), dtype=bool)
    gv[record.category] = record.visible
    go[record.category] = record.occluded
    return _corrupt_stacks(gv, go, record.category, noise, draw_index)


def corrupt_in_scene(scene: Scene, instance_index: int, noise: NoiseModel, n: int, draw_index: int):
    """Branch outputs for one instance with its scene as context.

    Like ``corrupt``, but channels of other categories carry the noisy
    logits of those categories' scene-level visible/occluded masks (other
    instances of the target's own category are left out, emulating a head
    that isolates its target). Reduces to ``corrupt`` when the scene holds
    no other-category instances.
    """
    record = scene.instances[instance_index]
    if record.category >= n:
        raise ValueError(f"category {record.category} out of range for {n} channels")
    h, w = record.amodal.shape
    gv = np.zeros((n, h, w), dtype=bool)
    go = np.zeros((n, h, w), dtype=bool)
    gv[record.category] = record.visible
    go[record.category] = record.occluded
    for k, other in enumerate(scene.instances):
        if k == instance_index or other.category == record.category:
            continue
        gv[other.category] |= other.visible
        go[other.category] |= other.occluded
    return _corrupt_stacks(gv, go, record.category, noise, draw_index)


def binarize(logit_map: np.ndarray, threshold: float = 0.5) -> Mask:
    """Sigmoid probabilities thresholded with >= at the boundary."""
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must lie in (0, 1)")
    return expit(logit_map) >= threshold


def stack_to_pgm(directory, stack: MaskStack, prefix: str) -> None:
    """Dump each channel's sigmoid probabilities as an 8-bit PGM."""
    from .masks import write_pgm

    for c in range(stack.shape[0]):
        gray = np.clip(expit(stack[c]) * 255.0, 0, 255).astype(np.uint8)
        write_pgm(f"{directory}/{prefix}_ch{c}.pgm", gray)
