"""Desk-scale amodal segmentation lab.

Generates layered synthetic occlusion scenes with exact ground truth,
simulates noisy visible/occluded mask branches, trains a per-pixel
channel-mixing head that composes the two into amodal masks, evaluates
with COCO-style AP/AR, and reads learned occlusion order back out of
the trained weights.
"""

from .composition import (
    CompositionWeights,
    LossTerms,
    TrainConfig,
    TrainingError,
    add_baseline,
    bce_loss,
    cross_entropy,
    forward,
    orcnn_occluded_baseline,
    predict_amodal,
    smooth_l1,
    total_loss,
    train,
)
from .evaluation import Detection, EvalReport, evaluate, score_of
from .heads import MaskStack, NoiseModel, binarize, corrupt, corrupt_in_scene
from .masks import (
    InstanceRecord,
    Mask,
    RleMask,
    area,
    intersect,
    iou,
    occlusion_rate,
    rle_decode,
    rle_encode,
    subtract,
    union,
)
from .relations import RelationFinding, analyze, analyze_all, prior_agreement
from .scenes import (
    CategorySpec,
    GenerationError,
    OcclusionPriorSpec,
    Scene,
    SceneConfig,
    pairwise_occlusion_probability,
    sample_scene,
    sample_scenes,
)

__version__ = "0.1.0"
