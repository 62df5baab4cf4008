"""Command-line entry point.

    pedcross simulate        --config cfg.json --seed 42 --out data/
    pedcross train-gap       --dataset data/ --kind all --out models/
    pedcross rank-features   --dataset data/ --out ranking/
    pedcross evaluate        --dataset eval/ --model models/model_SVMPoly3.json --out eval_out/
    pedcross compare-behavior --dataset data/ --other other/ --out behavior/

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from .config import ConfigError, ExperimentConfig, load_config
from .experiments import (MODEL_KINDS, DataError, run_compare_behavior, run_evaluate,
                          run_rank_features, run_simulate, run_train_gap)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

log = logging.getLogger("pedcross")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="flat JSON config file")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    p.add_argument("--out", default=None, help="output directory (overrides config and OUTPUT_DIR)")
    p.add_argument("--workers", type=int, default=None, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pedcross", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic interaction dataset")
    _common(p)

    p = sub.add_parser("train-gap", help="train gap-acceptance models and report metrics")
    _common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--kind", default=None, choices=MODEL_KINDS + ("all",),
                   help="model kind (default: model.kind from the config)")

    p = sub.add_parser("rank-features", help="leave-one-feature-out ranking of the SVM")
    _common(p)
    p.add_argument("--dataset", type=Path, required=True)

    p = sub.add_parser("evaluate", help="hybrid vs constant-velocity trajectory prediction")
    _common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--tune-noise", action="store_true",
                   help="grid-search the filter noise on the dataset first")
    p.add_argument("--dump-rollouts", action="store_true",
                   help="write every hybrid rollout as CSV")

    p = sub.add_parser("compare-behavior", help="gap-acceptance and walking-speed comparison")
    _common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--other", type=Path, required=True)
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config, seed=args.seed, out=args.out)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("workers: must be >= 1")
        cfg = replace(cfg, workers=args.workers)
    return cfg


def run(args) -> dict:
    cfg = _config(args)
    out = Path(cfg.output_dir)
    if args.command == "simulate":
        return run_simulate(cfg, out)
    if args.command == "train-gap":
        return run_train_gap(cfg, args.dataset, args.kind or cfg.model.kind, out)
    if args.command == "rank-features":
        return run_rank_features(cfg, args.dataset, out)
    if args.command == "evaluate":
        return run_evaluate(cfg, args.dataset, args.model, out, tune=args.tune_noise,
                            dump_rollouts=args.dump_rollouts)
    return run_compare_behavior(cfg, args.dataset, args.other, out)


def _headline(command: str, summary: dict) -> str:
    if command == "simulate":
        return (f"episodes={summary['episodes']} events={summary['events']} "
                f"accepted={summary['accepted']} rejected={summary['rejected']} "
                f"undetermined={summary['undetermined']} -> {summary['out']}")
    if command == "train-gap":
        return "\n".join(f"{r['model']:<9} acc={r['accuracy']:.3f} prec={r['precision']:.3f} "
                         f"rec={r['recall']:.3f} f1={r['f1']:.3f}" for r in summary["rows"])
    if command == "rank-features":
        return "\n".join(f"-{r['feature_removed']:<14} f1={r['f1']:.3f} drop={r['f1_drop']:+.3f}"
                         for r in summary["rows"])
    if command == "evaluate":
        lines = []
        crossing = summary.get("crossing", {}).get("all", {})
        for m, by_model in crossing.items():
            for h in summary["horizons"]:
                if h in by_model["hybrid"]:
                    lines.append(f"{m} {h:g}s hybrid={by_model['hybrid'][h]:.3f} "
                                 f"cv={by_model['cv'][h]:.3f}")
        return "\n".join(lines)
    return json.dumps({"kl_divergence": summary["kl_divergence"],
                       "walking_speed": summary["walking_speed"]}, sort_keys=True)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        summary = run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(_headline(args.command, summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
