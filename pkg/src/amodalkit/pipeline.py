"""End-to-end wiring: one JSON config drives generate, train, evaluate,
and report, reproducibly.

The config carries three explicit seeds (generator, noise, training).
Scene indices are global: the train split uses [0, train_count) and the
val split the following range, so both come from one generator stream.
Corruption draw indices are even during training and odd during
evaluation, keeping the two noise streams disjoint.
"""

import os
from dataclasses import dataclass

from . import composition, evaluation, heads, masks, relations, scenes, svg
from .util import dump_json, load_json, round9


class ConfigError(ValueError):
    """Invalid run config; the message names the offending key."""


@dataclass(frozen=True)
class RunConfig:
    prior: scenes.OcclusionPriorSpec
    scene_cfg: scenes.SceneConfig
    train_scenes: int
    val_scenes: int
    noise: heads.NoiseModel
    train_cfg: composition.TrainConfig
    threshold: float
    occlusion_filter: float
    out_dir: str

    @property
    def n(self) -> int:
        return self.prior.n


def _get(obj, key, path):
    if key not in obj:
        raise ConfigError(f"{path}{key}: missing")
    return obj[key]


def _build(cls, kwargs, path):
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{path}: {e}") from e


def parse_config(obj: dict) -> RunConfig:
    cats = []
    for k, c in enumerate(_get(obj, "categories", "")):
        cats.append(
            _build(
                scenes.CategorySpec,
                dict(
                    id=int(_get(c, "id", f"categories[{k}].")),
                    name=str(_get(c, "name", f"categories[{k}].")),
                    shape=str(_get(c, "shape", f"categories[{k}].")),
                    size_range=tuple(_get(c, "size_range", f"categories[{k}].")),
                    depth_score=float(_get(c, "depth_score", f"categories[{k}].")),
                ),
                f"categories[{k}]",
            )
        )
    prior = _build(
        scenes.OcclusionPriorSpec,
        dict(categories=tuple(cats), depth_noise=float(_get(obj, "depth_noise", ""))),
        "categories/depth_noise",
    )
    canvas = _get(obj, "canvas", "")
    scene_cfg = _build(
        scenes.SceneConfig,
        dict(
            width=int(_get(canvas, "width", "canvas.")),
            height=int(_get(canvas, "height", "canvas.")),
            instances_per_scene=tuple(_get(obj, "instances_per_scene", "")),
            seed=int(_get(obj, "generator_seed", "")),
        ),
        "canvas/instances_per_scene",
    )
    for c in cats:
        if c.size_range[1] > min(scene_cfg.width, scene_cfg.height):
            raise ConfigError(
                f"categories[{c.id}].size_range: max size {c.size_range[1]} exceeds "
                f"the {scene_cfg.width}x{scene_cfg.height} canvas"
            )
    splits = _get(obj, "splits", "")
    train_scenes = int(_get(splits, "train", "splits."))
    val_scenes = int(_get(splits, "val", "splits."))
    if train_scenes < 1 or val_scenes < 1:
        raise ConfigError("splits: scene counts must be >= 1")
    nz = _get(obj, "noise", "")
    noise = _build(
        heads.NoiseModel,
        dict(
            flip_prob=float(_get(nz, "flip_prob", "noise.")),
            boundary_jitter=int(_get(nz, "boundary_jitter", "noise.")),
            logit_scale=float(_get(nz, "logit_scale", "noise.")),
            seed=int(_get(nz, "seed", "noise.")),
            exact_logits=bool(nz.get("exact_logits", False)),
        ),
        "noise",
    )
    tr = _get(obj, "train", "")
    train_cfg = _build(
        composition.TrainConfig,
        dict(
            learning_rate=float(_get(tr, "learning_rate", "train.")),
            iterations=int(_get(tr, "iterations", "train.")),
            batch_size=int(_get(tr, "batch_size", "train.")),
            seed=int(_get(tr, "seed", "train.")),
            init=str(tr.get("init", "identity")),
            init_std=float(tr.get("init_std", 0.01)),
        ),
        "train",
    )
    ev = obj.get("eval", {})
    threshold = float(ev.get("threshold", 0.5))
    occlusion_filter = float(ev.get("occlusion_filter", 0.15))
    if not (0.0 < threshold < 1.0):
        raise ConfigError("eval.threshold: must lie in (0, 1)")
    if not (0.0 <= occlusion_filter < 1.0):
        raise ConfigError("eval.occlusion_filter: must lie in [0, 1)")
    return RunConfig(
        prior=prior,
        scene_cfg=scene_cfg,
        train_scenes=train_scenes,
        val_scenes=val_scenes,
        noise=noise,
        train_cfg=train_cfg,
        threshold=threshold,
        occlusion_filter=occlusion_filter,
        out_dir=str(obj.get("out_dir", "run_out")),
    )


def load_config(path) -> RunConfig:
    try:
        obj = load_json(path)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    except ValueError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    return parse_config(obj)


# --- commands ----------------------------------------------------------------

def generate_split(cfg: RunConfig, split: str):
    if split == "train":
        start, count = 0, cfg.train_scenes
    elif split == "val":
        start, count = cfg.train_scenes, cfg.val_scenes
    else:
        raise ValueError(f"unknown split {split!r}")
    return scenes.sample_scenes(cfg.prior, cfg.scene_cfg, start, count)


def run_gen(cfg: RunConfig, out_dir, dump_masks: bool = False):
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for split in ("train", "val"):
        split_scenes = generate_split(cfg, split)
        path = os.path.join(out_dir, f"{split}_manifest.json")
        dump_json(path, scenes.manifest_to_json(cfg.prior, cfg.scene_cfg, split_scenes))
        paths[split] = path
        if dump_masks:
            mask_dir = os.path.join(out_dir, "masks", split)
            os.makedirs(mask_dir, exist_ok=True)
            for s in split_scenes:
                for k, r in enumerate(s.instances):
                    stem = os.path.join(mask_dir, f"scene{s.index:05d}_inst{k}")
                    masks.mask_to_pgm(f"{stem}_amodal.pgm", r.amodal)
                    masks.mask_to_pgm(f"{stem}_visible.pgm", r.visible)
                    masks.mask_to_pgm(f"{stem}_occluded.pgm", r.occluded)
    return paths


def _load_manifest_scenes(cfg: RunConfig, manifest_path):
    mprior, _, split_scenes = scenes.manifest_from_json(load_json(manifest_path))
    if mprior.n != cfg.n:
        raise ConfigError(
            f"manifest {manifest_path} has {mprior.n} categories but the config defines {cfg.n}"
        )
    return split_scenes


def run_train(cfg: RunConfig, manifest_path, out_dir):
    train_scenes = _load_manifest_scenes(cfg, manifest_path)
    weights, trace = composition.train(train_scenes, cfg.n, cfg.noise, cfg.train_cfg)
    os.makedirs(out_dir, exist_ok=True)
    weights_path = os.path.join(out_dir, "weights.json")
    trace_path = os.path.join(out_dir, "loss_trace.csv")
    names = [c.name for c in cfg.prior.categories]
    dump_json(weights_path, composition.weights_to_json(weights, names))
    composition.write_loss_trace(trace_path, trace)
    return {"weights": weights_path, "loss_trace": trace_path}


def build_detections(weights, val_scenes, noise, n, threshold):
    """Per-method detections over the validation split.

    Draw indices are odd (2k+1 for the k-th instance overall), disjoint
    from the even indices consumed during training.
    """
    dets = {
        "arcnn_amodal": [],
        "add_amodal": [],
        "visible": [],
        "occluded_branch": [],
        "orcnn_subtract": [],
    }
    counter = 0
    for s in val_scenes:
        for k, r in enumerate(s.instances):
            vm, om = heads.corrupt_in_scene(s, k, noise, n, 2 * counter + 1)
            counter += 1
            cat = r.category
            arcnn_map = composition.forward(weights, vm, om)[cat]
            add_map = vm[cat] + om[cat]
            arcnn_mask = heads.binarize(arcnn_map, threshold)
            add_mask = heads.binarize(add_map, threshold)
            vis_mask = heads.binarize(vm[cat], threshold)
            occ_mask = heads.binarize(om[cat], threshold)
            sub_mask = composition.orcnn_occluded_baseline(add_mask, vis_mask)
            dets["arcnn_amodal"].append(
                evaluation.Detection(s.index, cat, arcnn_mask, evaluation.score_of(arcnn_map, arcnn_mask))
            )
            dets["add_amodal"].append(
                evaluation.Detection(s.index, cat, add_mask, evaluation.score_of(add_map, add_mask))
            )
            dets["visible"].append(
                evaluation.Detection(s.index, cat, vis_mask, evaluation.score_of(vm[cat], vis_mask))
            )
            dets["occluded_branch"].append(
                evaluation.Detection(s.index, cat, occ_mask, evaluation.score_of(om[cat], occ_mask))
            )
            dets["orcnn_subtract"].append(
                evaluation.Detection(s.index, cat, sub_mask, evaluation.score_of(add_map, sub_mask))
            )
    return dets


def run_eval(cfg: RunConfig, weights_path, manifest_path, out_dir, dump_masks: bool = False):
    weights = composition.weights_from_json(load_json(weights_path))
    if weights.n != cfg.n:
        raise ConfigError(
            f"weights file has {weights.n} categories but the config defines {cfg.n}"
        )
    val_scenes = _load_manifest_scenes(cfg, manifest_path)
    dets = build_detections(weights, val_scenes, cfg.noise, cfg.n, cfg.threshold)
    if dump_masks:
        mask_dir = os.path.join(out_dir, "masks", "eval")
        os.makedirs(mask_dir, exist_ok=True)
        for method in ("arcnn_amodal", "add_amodal", "orcnn_subtract"):
            for k, d in enumerate(dets[method]):
                masks.mask_to_pgm(
                    os.path.join(mask_dir, f"{method}_scene{d.scene_index:05d}_{k}.pgm"),
                    d.mask,
                )
        # per-channel branch probabilities for the first instance, for eyeballing
        if val_scenes and val_scenes[0].instances:
            vm, om = heads.corrupt_in_scene(val_scenes[0], 0, cfg.noise, cfg.n, 1)
            heads.stack_to_pgm(mask_dir, vm, "branch_visible")
            heads.stack_to_pgm(mask_dir, om, "branch_occluded")
    f = cfg.occlusion_filter
    n = cfg.n
    report = {
        "threshold": round9(cfg.threshold),
        "occlusion_filter": round9(f),
        "arcnn": {
            "amodal": evaluation.evaluate(dets["arcnn_amodal"], val_scenes, "amodal", f, n).to_json(),
            "visible": evaluation.evaluate(dets["visible"], val_scenes, "visible", None, n).to_json(),
            "occluded": evaluation.evaluate(dets["occluded_branch"], val_scenes, "occluded", None, n).to_json(),
        },
        "arcnn_add": {
            "amodal": evaluation.evaluate(dets["add_amodal"], val_scenes, "amodal", f, n).to_json(),
            "visible": evaluation.evaluate(dets["visible"], val_scenes, "visible", None, n).to_json(),
            "occluded": evaluation.evaluate(dets["occluded_branch"], val_scenes, "occluded", None, n).to_json(),
        },
        "orcnn_subtract": {
            "occluded": evaluation.evaluate(dets["orcnn_subtract"], val_scenes, "occluded", None, n).to_json(),
        },
    }
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "eval_report.json")
    dump_json(path, report)
    return report, path


def format_report_grid(report: dict) -> str:
    """Summary grid: amodal/visible AP+AR and the filtered occluded AP."""
    lines = [
        f"{'method':<16}{'amodal AP':>11}{'amodal AR':>11}"
        f"{'visible AP':>12}{'visible AR':>12}{'occluded AP':>13}"
    ]
    for method in ("arcnn", "arcnn_add"):
        r = report[method]
        lines.append(
            f"{method:<16}"
            f"{r['amodal']['ap']:>11.4f}{r['amodal']['ar']:>11.4f}"
            f"{r['visible']['ap']:>12.4f}{r['visible']['ar']:>12.4f}"
            f"{r['amodal']['occluded_ap']:>13.4f}"
        )
    lines.append("")
    lines.append(f"{'occluded-mask AP (target=occluded)':<42}")
    for method, key in (("arcnn", "occluded"), ("orcnn_subtract", "occluded")):
        r = report[method][key]
        label = "occlusion branch" if method == "arcnn" else "orcnn subtract"
        lines.append(f"  {label:<20}{r['ap']:>9.4f}  (AR {r['ar']:.4f})")
    return "\n".join(lines)


def run_report(cfg: RunConfig, weights_path, out_dir, category: int, epsilon: float, margin: float):
    weights = composition.weights_from_json(load_json(weights_path))
    if weights.n != cfg.n:
        raise ConfigError(
            f"weights file has {weights.n} categories but the config defines {cfg.n}"
        )
    if not (0 <= category < cfg.n):
        raise ConfigError(f"report category {category} out of range (n={cfg.n})")
    findings = relations.analyze_all(weights, epsilon)
    agreement = relations.prior_agreement(findings, cfg.prior, margin)
    names = {c.id: c.name for c in cfg.prior.categories}
    obj = {
        "epsilon": round9(epsilon),
        "margin": round9(margin),
        "prior_agreement": round9(agreement),
        "findings": [f.to_json() for f in findings],
    }
    chart_findings = [f for f in findings if f.target == category]
    chart = svg.grouped_weight_chart(
        f"composition weights for target '{names[category]}'",
        [names[f.other] for f in chart_findings],
        [round9(f.vw) for f in chart_findings],
        [round9(f.ow) for f in chart_findings],
    )
    os.makedirs(out_dir, exist_ok=True)
    findings_path = os.path.join(out_dir, "findings.json")
    chart_path = os.path.join(out_dir, "relations.svg")
    dump_json(findings_path, obj)
    with open(chart_path, "w", encoding="ascii") as fh:
        fh.write(chart)
    return obj, findings_path, chart_path
