"""Occlusion-aware composition head: per-pixel linear mixing of the visible
and occluded channel stacks into amodal logits, with loss primitives,
analytic gradients, SGD training, and the two reference baselines.

The head has 2*n*n + n parameters: an n x n matrix over the visible stack,
an n x n matrix over the occluded stack, and a per-output-channel bias.
Mixing happens in logit space; sigmoid is applied afterwards for loss and
thresholding, so identity weights with zero bias reproduce the plain
add-the-two-branches baseline bit for bit.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .heads import MaskStack, binarize, corrupt_in_scene
from .masks import Mask, subtract
from .util import derive_rng, round9

INIT_MODES = ("identity", "zero", "random")


class TrainingError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class CompositionWeights:
    """Mixing weights; ``vw[t, i]`` scales visible channel i into output t."""

    vw: np.ndarray
    ow: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.vw = np.asarray(self.vw, dtype=np.float64)
        self.ow = np.asarray(self.ow, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        n = self.vw.shape[0]
        if self.vw.shape != (n, n) or self.ow.shape != (n, n) or self.bias.shape != (n,):
            raise ValueError(
                f"inconsistent weight shapes: vw {self.vw.shape}, "
                f"ow {self.ow.shape}, bias {self.bias.shape}"
            )
        if not (
            np.all(np.isfinite(self.vw))
            and np.all(np.isfinite(self.ow))
            and np.all(np.isfinite(self.bias))
        ):
            raise ValueError("weights must be finite")

    @property
    def n(self) -> int:
        return self.vw.shape[0]

    def copy(self) -> "CompositionWeights":
        return CompositionWeights(self.vw.copy(), self.ow.copy(), self.bias.copy())

    @classmethod
    def identity(cls, n: int) -> "CompositionWeights":
        return cls(np.eye(n), np.eye(n), np.zeros(n))

    @classmethod
    def zeros(cls, n: int) -> "CompositionWeights":
        return cls(np.zeros((n, n)), np.zeros((n, n)), np.zeros(n))

    @classmethod
    def small_random(cls, n: int, std: float, rng) -> "CompositionWeights":
        return cls(
            rng.normal(0.0, std, size=(n, n)),
            rng.normal(0.0, std, size=(n, n)),
            np.zeros(n),
        )


def forward(w: CompositionWeights, vm: MaskStack, om: MaskStack) -> MaskStack:
    """Mixed amodal logits, one output channel per category (no squashing)."""
    if vm.shape != om.shape:
        raise ValueError(f"stack shape mismatch: {vm.shape} vs {om.shape}")
    if vm.ndim != 3 or vm.shape[0] != w.n:
        raise ValueError(f"expected ({w.n}, H, W) stacks, got {vm.shape}")
    return _kernels.mix_forward(w.vw, w.ow, w.bias, vm, om)


def predict_amodal(
    w: CompositionWeights, vm: MaskStack, om: MaskStack, category: int, threshold: float = 0.5
) -> Mask:
    """Binarized amodal mask of the given category."""
    if not (0 <= category < w.n):
        raise ValueError(f"category {category} out of range")
    return binarize(forward(w, vm, om)[category], threshold)


def add_baseline(vm: MaskStack, om: MaskStack, category: int, threshold: float = 0.5) -> Mask:
    """Amodal mask from directly adding the two branch outputs.

    Identical to ``predict_amodal`` with identity weights and zero bias.
    """
    if vm.shape != om.shape:
        raise ValueError(f"stack shape mismatch: {vm.shape} vs {om.shape}")
    if not (0 <= category < vm.shape[0]):
        raise ValueError(f"category {category} out of range")
    return binarize(vm[category] + om[category], threshold)


def orcnn_occluded_baseline(amodal_pred: Mask, visible_pred: Mask) -> Mask:
    """Occluded mask derived by subtracting visible from amodal."""
    return subtract(amodal_pred, visible_pred)


# --- loss primitives ---------------------------------------------------------

def bce_loss(logits: np.ndarray, target) -> float:
    """Mean binary cross entropy between logits and a 0/1 target.

    Uses the log-sum-exp form, never log of sigmoid, so saturated logits
    stay finite.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    t = np.asarray(target, dtype=np.float64)
    if t.shape != logits.shape:
        raise ValueError(f"shape mismatch: {logits.shape} vs {t.shape}")
    per_pixel = np.maximum(logits, 0.0) - logits * t + np.log1p(np.exp(-np.abs(logits)))
    return float(np.mean(per_pixel))


def bce_loss_grad(logits: np.ndarray, target) -> np.ndarray:
    """Gradient of ``bce_loss`` with respect to the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    return (_kernels._sigmoid_np(logits) - t) / logits.size


def smooth_l1(pred, target) -> float:
    """Mean smooth-L1: 0.5*d^2 below |d|=1, |d|-0.5 above."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    d = np.abs(pred - target)
    return float(np.mean(np.where(d < 1.0, 0.5 * d * d, d - 0.5)))


def cross_entropy(logits, class_index: int) -> float:
    """Negative log softmax probability of the given class."""
    logits = np.asarray(logits, dtype=np.float64)
    if not (0 <= class_index < logits.size):
        raise ValueError(f"class index {class_index} out of range")
    m = np.max(logits)
    return float(m + np.log(np.sum(np.exp(logits - m))) - logits[class_index])


@dataclass(frozen=True)
class LossTerms:
    l_am: float
    l_vm: float
    l_om: float
    l_box: float
    l_cls: float

    def __post_init__(self):
        for name in ("l_am", "l_vm", "l_om", "l_box", "l_cls"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0")


def total_loss(t: LossTerms) -> float:
    """Equal-weighted sum of the five loss parts."""
    return t.l_box + t.l_cls + t.l_am + t.l_vm + t.l_om


# --- head training -----------------------------------------------------------

def _batch_arrays(batch):
    vm_b = np.ascontiguousarray(np.stack([vm for vm, _, _ in batch]))
    om_b = np.ascontiguousarray(np.stack([om for _, om, _ in batch]))
    targets = np.ascontiguousarray(
        np.stack([r.amodal for _, _, r in batch]).astype(np.float64)
    )
    cats = np.ascontiguousarray(np.array([r.category for _, _, r in batch], dtype=np.int64))
    return vm_b, om_b, targets, cats


def batch_loss(w: CompositionWeights, batch) -> float:
    """Mean BCE of the true-category output channel against the amodal mask.

    Computed through the plain forward/bce path, independent of the fused
    gradient kernel, so it doubles as the finite-difference oracle target.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    total = 0.0
    for vm, om, record in batch:
        logits = forward(w, vm, om)[record.category]
        total += bce_loss(logits, record.amodal)
    return total / len(batch)


def batch_grad(w: CompositionWeights, batch):
    """Analytic gradient of ``batch_loss`` w.r.t. (vw, ow, bias)."""
    if not batch:
        raise ValueError("batch must be non-empty")
    vm_b, om_b, targets, cats = _batch_arrays(batch)
    _, gvw, gow, gbias = _kernels.head_loss_grad(w.vw, w.ow, w.bias, vm_b, om_b, targets, cats)
    return gvw, gow, gbias


def init_weights(n: int, cfg: "TrainConfig", rng) -> CompositionWeights:
    if cfg.init == "identity":
        return CompositionWeights.identity(n)
    if cfg.init == "zero":
        return CompositionWeights.zeros(n)
    return CompositionWeights.small_random(n, cfg.init_std, rng)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    iterations: int = 2000
    batch_size: int = 16
    seed: int = 0
    init: str = "identity"
    init_std: float = 0.01

    def __post_init__(self):
        # 0 is allowed so a no-op run can be used as a determinism probe
        if not (np.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ValueError("learning_rate must be finite and >= 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}")
        if not (np.isfinite(self.init_std) and self.init_std >= 0):
            raise ValueError("init_std must be finite and >= 0")


def train(scenes, n: int, noise, cfg: TrainConfig):
    """Mini-batch SGD on the composition head over generated scenes.

    Batches are drawn uniformly (with replacement) from all instances;
    each draw corrupts its instance freshly with scene context, using
    even draw indices so evaluation (odd indices) sees an independent
    noise stream. Returns the final weights and the per-iteration mean
    loss trace. Deterministic given (cfg.seed, noise.seed).
    """
    pool = [(scene, k) for scene in scenes for k in range(len(scene.instances))]
    if not pool:
        raise ValueError("training set contains no instances")
    rng = derive_rng(cfg.seed)
    w = init_weights(n, cfg, rng)
    trace = np.empty(cfg.iterations, dtype=np.float64)
    for it in range(cfg.iterations):
        picks = rng.integers(0, len(pool), size=cfg.batch_size)
        batch = []
        for slot, p in enumerate(picks):
            scene, k = pool[p]
            draw = 2 * (it * cfg.batch_size + slot)
            vm, om = corrupt_in_scene(scene, k, noise, n, draw)
            batch.append((vm, om, scene.instances[k]))
        vm_b, om_b, targets, cats = _batch_arrays(batch)
        loss, gvw, gow, gbias = _kernels.head_loss_grad(
            w.vw, w.ow, w.bias, vm_b, om_b, targets, cats
        )
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at iteration {it}")
        trace[it] = loss
        w.vw -= cfg.learning_rate * gvw
        w.ow -= cfg.learning_rate * gow
        w.bias -= cfg.learning_rate * gbias
    return w, trace


# --- weights serialization ---------------------------------------------------

def weights_to_json(w: CompositionWeights, category_names) -> dict:
    return {
        "n": w.n,
        "categories": list(category_names),
        "VW": [[round9(v) for v in row] for row in w.vw],
        "OW": [[round9(v) for v in row] for row in w.ow],
        "bias": [round9(v) for v in w.bias],
    }


def weights_from_json(obj: dict) -> CompositionWeights:
    w = CompositionWeights(
        np.array(obj["VW"], dtype=np.float64),
        np.array(obj["OW"], dtype=np.float64),
        np.array(obj["bias"], dtype=np.float64),
    )
    if w.n != int(obj["n"]):
        raise ValueError(f"weights file claims n={obj['n']} but matrices are {w.n}x{w.n}")
    return w


def write_loss_trace(path, trace) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write("iteration,loss\n")
        for i, v in enumerate(trace):
            f.write(f"{i},{round9(v):.9g}\n")
