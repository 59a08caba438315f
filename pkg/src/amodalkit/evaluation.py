"""COCO-style AP/AR for amodal, visible, and occluded masks.

Matching follows the usual conventions: detections sorted by score
(ties by insertion order), greedy assignment to the unmatched ground
truth with the highest IoU at or above each threshold in 0.50:0.05:0.95,
101-point interpolated precision, and at most 100 detections per scene
and category.

An occlusion filter marks lightly occluded ground truth as ignored.
Matching itself is filter-blind: ignored ground truth participates in
matching exactly like the rest, and detections matched to it are dropped
from both the TP and FP counts. This keeps the match set of the remaining
ground truth independent of the filter.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .masks import Mask, occlusion_rate
from .util import round9

IOU_THRESHOLDS = np.linspace(0.5, 0.95, 10)
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
MAX_DETECTIONS_PER_SCENE = 100

TARGETS = ("amodal", "visible", "occluded")


@dataclass(frozen=True)
class Detection:
    scene_index: int
    category: int
    mask: Mask
    score: float


@dataclass(frozen=True)
class EvalReport:
    """Means over categories and IoU thresholds; -1 marks "no ground truth"."""

    ap: float
    ar: float
    per_category: tuple
    occluded_ap: float

    def to_json(self) -> dict:
        return {
            "ap": round9(self.ap),
            "ar": round9(self.ar),
            "occluded_ap": round9(self.occluded_ap),
            "per_category": [[int(c), round9(v)] for c, v in self.per_category],
        }


def _pixel_iou(a: Mask, b: Mask) -> float:
    un = int(np.count_nonzero(a | b))
    if un == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / un


def _match_scene(iou_mat: np.ndarray, thresholds) -> np.ndarray:
    """Greedy matches per threshold; entry [t, d] is the gt index or -1.

    Detections must already be in score order. A detection takes the
    not-yet-matched gt with the highest IoU >= threshold; equal IoUs keep
    the earliest gt.
    """
    n_det, n_gt = iou_mat.shape
    matches = np.full((len(thresholds), n_det), -1, dtype=np.int64)
    for ti, t in enumerate(thresholds):
        teff = min(t, 1.0 - 1e-10)
        taken = np.zeros(n_gt, dtype=bool)
        for d in range(n_det):
            best = -1
            best_v = 0.0
            for g in range(n_gt):
                if taken[g]:
                    continue
                v = iou_mat[d, g]
                if v < teff:
                    continue
                if best < 0 or v > best_v:
                    best = g
                    best_v = v
            if best >= 0:
                matches[ti, d] = best
                taken[best] = True
    return matches


def _ap_from_curve(tp_flags: np.ndarray, n_positive: int) -> tuple:
    """(AP, max recall) from per-detection TP flags in score order."""
    if tp_flags.size == 0:
        return 0.0, 0.0
    tp = np.cumsum(tp_flags)
    fp = np.cumsum(~tp_flags)
    rc = tp / n_positive
    pr = tp / (tp + fp)
    # monotone envelope from the right, then sample the 101 recall points
    for i in range(pr.size - 1, 0, -1):
        if pr[i] > pr[i - 1]:
            pr[i - 1] = pr[i]
    idx = np.searchsorted(rc, RECALL_POINTS, side="left")
    q = np.where(idx < pr.size, pr[np.minimum(idx, pr.size - 1)], 0.0)
    return float(np.mean(q)), float(rc[-1])


def _category_metrics(groups, n_positive: int) -> tuple:
    """(ap, ar) for one category; -1 sentinels when it has no ground truth.

    ``groups`` holds per-scene tuples (scores, insertion_ids, tp_flags,
    ignore_flags), the last two with one row per IoU threshold.
    """
    if n_positive == 0:
        return -1.0, -1.0
    if groups:
        scores = np.concatenate([g[0] for g in groups])
        order_ids = np.concatenate([g[1] for g in groups])
        tp = np.concatenate([g[2] for g in groups], axis=1)
        ign = np.concatenate([g[3] for g in groups], axis=1)
        order = np.lexsort((order_ids, -scores))
        tp = tp[:, order]
        ign = ign[:, order]
    else:
        tp = ign = np.zeros((len(IOU_THRESHOLDS), 0), dtype=bool)
    ap_sum = 0.0
    ar_sum = 0.0
    for ti in range(len(IOU_THRESHOLDS)):
        keep = ~ign[ti]
        ap_t, rec_t = _ap_from_curve(tp[ti][keep], n_positive)
        ap_sum += ap_t
        ar_sum += rec_t
    k = len(IOU_THRESHOLDS)
    return ap_sum / k, ar_sum / k


def _evaluate_target(detections, scene_map, target: str, occlusion_filter, n: int):
    """Per-category (ap, ar) lists under an optional occlusion filter."""
    # ground truth per (scene, category): masks plus ignore flags
    gt_masks = {}
    n_positive = np.zeros(n, dtype=np.int64)
    for s in scene_map.values():
        for r in s.instances:
            ignored = occlusion_filter is not None and occlusion_rate(r) <= occlusion_filter
            gt_masks.setdefault((s.index, r.category), []).append(
                (getattr(r, target), ignored)
            )
            if not ignored:
                n_positive[r.category] += 1

    # detections per (scene, category), score-sorted and capped per scene
    per_group = {}
    for orig, d in enumerate(detections):
        per_group.setdefault((d.scene_index, d.category), []).append((orig, d))

    results = {c: [] for c in range(n)}
    for (scene_index, cat), items in per_group.items():
        items.sort(key=lambda od: (-od[1].score, od[0]))
        items = items[:MAX_DETECTIONS_PER_SCENE]
        gts = gt_masks.get((scene_index, cat), [])
        iou_mat = np.array(
            [[_pixel_iou(d.mask, gm) for gm, _ in gts] for _, d in items], dtype=np.float64
        ).reshape(len(items), len(gts))
        matches = _match_scene(iou_mat, IOU_THRESHOLDS)
        ignored_gt = np.array([ig for _, ig in gts], dtype=bool)
        matched = matches >= 0
        ign = np.zeros_like(matched)
        if len(gts):
            ign[matched] = ignored_gt[matches[matched]]
        tp = matched & ~ign
        results[cat].append(
            (
                np.array([d.score for _, d in items], dtype=np.float64),
                np.array([orig for orig, _ in items], dtype=np.int64),
                tp,
                ign,
            )
        )

    per_cat = []
    for c in range(n):
        ap_c, ar_c = _category_metrics(results[c], int(n_positive[c]))
        per_cat.append((c, ap_c, ar_c))
    return per_cat


def _mean_valid(values) -> float:
    vals = [v for v in values if v >= 0.0]
    if not vals:
        return -1.0
    return sum(vals) / len(vals)


def evaluate(
    detections,
    scenes,
    target: str,
    occlusion_filter: float = None,
    n_categories: int = None,
) -> EvalReport:
    """Score detections against scene ground truth for one mask target.

    ``ap``/``ar``/``per_category`` are computed over all ground truth.
    When ``occlusion_filter`` is given and the target is amodal,
    ``occluded_ap`` restricts the amodal AP to instances whose occlusion
    rate strictly exceeds the filter; otherwise it is -1.
    """
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}, got {target!r}")
    scene_map = {s.index: s for s in scenes}
    if len(scene_map) != len(scenes):
        raise ValueError("duplicate scene indices in ground truth")
    if n_categories is None:
        cats = [r.category for s in scenes for r in s.instances]
        n_categories = max(cats) + 1 if cats else 0
    for d in detections:
        if d.scene_index not in scene_map:
            raise ValueError(f"detection references unknown scene {d.scene_index}")
        if not (0 <= d.category < n_categories):
            raise ValueError(f"detection references unknown category {d.category}")
        if not np.isfinite(d.score):
            raise ValueError("detection scores must be finite")
        cfg = scene_map[d.scene_index].config
        if d.mask.shape != (cfg.height, cfg.width):
            raise ValueError(
                f"detection mask shape {d.mask.shape} does not match the "
                f"{cfg.height}x{cfg.width} canvas"
            )

    plain = _evaluate_target(detections, scene_map, target, None, n_categories)
    ap = _mean_valid([a for _, a, _ in plain])
    ar = _mean_valid([r for _, _, r in plain])
    per_category = tuple((c, a) for c, a, _ in plain)

    occluded_ap = -1.0
    if occlusion_filter is not None and target == "amodal":
        filtered = _evaluate_target(
            detections, scene_map, target, occlusion_filter, n_categories
        )
        occluded_ap = _mean_valid([a for _, a, _ in filtered])
    return EvalReport(ap=ap, ar=ar, per_category=per_category, occluded_ap=occluded_ap)


def score_of(logit_map: np.ndarray, mask: Mask) -> float:
    """Mean sigmoid probability over the mask's pixels; 0 when empty."""
    if logit_map.shape != mask.shape:
        raise ValueError(f"shape mismatch: {logit_map.shape} vs {mask.shape}")
    if not np.any(mask):
        return 0.0
    return float(np.mean(expit(logit_map[mask])))
