"""Command-line entry point: gen, train, eval, report.

Every command takes --config and is deterministic given the seeds in the
config; rerunning a command reproduces its output files byte for byte.
"""

import argparse
import dataclasses
import sys

from .composition import TrainingError
from .pipeline import (
    ConfigError,
    format_report_grid,
    load_config,
    run_eval,
    run_gen,
    run_report,
    run_train,
)
from .scenes import GenerationError


def _add_common(p):
    p.add_argument("--config", required=True, help="path to the run config JSON")
    p.add_argument("--out", default=None, help="output directory (default: config out_dir)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amodalkit",
        description="Synthetic occlusion scenes, composition-head training, "
        "and COCO-style amodal evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate train/val scene manifests")
    _add_common(p)
    p.add_argument("--seed", type=int, default=None, help="override the generator seed")
    p.add_argument("--dump-masks", action="store_true", help="also write PGM mask images")

    p = sub.add_parser("train", help="train the composition head on a manifest")
    _add_common(p)
    p.add_argument("--manifest", default=None, help="train manifest (default: <out>/train_manifest.json)")
    p.add_argument("--seed", type=int, default=None, help="override the training seed")

    p = sub.add_parser("eval", help="evaluate trained head and baselines on a manifest")
    _add_common(p)
    p.add_argument("--weights", default=None, help="weights JSON (default: <out>/weights.json)")
    p.add_argument("--manifest", default=None, help="val manifest (default: <out>/val_manifest.json)")
    p.add_argument("--seed", type=int, default=None, help="override the corruption noise seed")
    p.add_argument("--threshold", type=float, default=None, help="binarization threshold (default 0.5)")
    p.add_argument(
        "--occlusion-filter",
        type=float,
        default=None,
        help="occlusion rate above which instances count as occluded (default 0.15)",
    )
    p.add_argument("--dump-masks", action="store_true", help="also write predicted masks as PGM")

    p = sub.add_parser("report", help="read occlusion relations out of trained weights")
    _add_common(p)
    p.add_argument("--weights", default=None, help="weights JSON (default: <out>/weights.json)")
    p.add_argument("--category", type=int, default=0, help="target category for the SVG chart")
    p.add_argument("--epsilon", type=float, default=0.05, help="dead zone for weight signs")
    p.add_argument("--margin", type=float, default=0.2, help="decisiveness margin for prior agreement")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if getattr(args, "threshold", None) is not None:
            cfg = dataclasses.replace(cfg, threshold=args.threshold)
        if getattr(args, "occlusion_filter", None) is not None:
            cfg = dataclasses.replace(cfg, occlusion_filter=args.occlusion_filter)
        out = args.out or cfg.out_dir

        if args.command == "gen":
            if args.seed is not None:
                cfg = dataclasses.replace(
                    cfg, scene_cfg=dataclasses.replace(cfg.scene_cfg, seed=args.seed)
                )
            paths = run_gen(cfg, out, dump_masks=args.dump_masks)
            print(f"wrote {paths['train']} and {paths['val']}")
        elif args.command == "train":
            if args.seed is not None:
                cfg = dataclasses.replace(
                    cfg, train_cfg=dataclasses.replace(cfg.train_cfg, seed=args.seed)
                )
            manifest = args.manifest or f"{out}/train_manifest.json"
            paths = run_train(cfg, manifest, out)
            print(f"wrote {paths['weights']} and {paths['loss_trace']}")
        elif args.command == "eval":
            if args.seed is not None:
                cfg = dataclasses.replace(cfg, noise=cfg.noise.with_seed(args.seed))
            weights = args.weights or f"{out}/weights.json"
            manifest = args.manifest or f"{out}/val_manifest.json"
            report, path = run_eval(cfg, weights, manifest, out, dump_masks=args.dump_masks)
            print(format_report_grid(report))
            print(f"wrote {path}")
        elif args.command == "report":
            weights = args.weights or f"{out}/weights.json"
            _, findings_path, chart_path = run_report(
                cfg, weights, out, args.category, args.epsilon, args.margin
            )
            print(f"wrote {findings_path} and {chart_path}")
    except (ConfigError, GenerationError, TrainingError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
