"""Command-line entry point: train, track, eval, ablate, sweep, gradcheck,
profile-energy. Exit codes: 0 success, 1 usage/config error, 2 check failure."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .autodiff import AutodiffError, CheckpointError
from .bench.ablation import default_sweep_grid, rows_to_csv, run_ablation, run_sweep
from .bench.io import load_frames, load_init_box, read_boxes, write_boxes
from .bench.metrics import evaluate_boxes
from .checks import run_gradient_suite
from .config import ConfigError, RunConfig, dump_config, load_config
from .energy import profile_model
from .model import TrackerModel
from .nn.patch import HORIZONTAL, random_patch_fuse
from .runner import evaluate_model, heldout_sequences, run_training
from .tracking import track_sequence
from .training import format_log_csv

USAGE_ERROR = 1
CHECK_FAILURE = 2


def _load(config_path: str | None) -> RunConfig:
    if config_path is None:
        return RunConfig.defaults()
    return load_config(config_path)


def _parse_seeds(text: str) -> list[int]:
    seeds = [int(s) for s in text.split(",") if s.strip() != ""]
    if not seeds:
        raise ConfigError(f"no seeds in {text!r}")
    return seeds


def cmd_train(args) -> int:
    cfg = _load(args.config)
    if args.seed is not None:
        cfg = cfg.replace_train(seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(cfg))

    def progress(row):
        if args.verbose and row["step"] % 50 == 0:
            print(
                f"step {row['step']}: total {row['loss_total']:.4f} "
                f"giou {row['loss_giou']:.4f} lambda_mi {row['lambda_mi']:.4f}"
            )

    result = run_training(cfg, progress=progress)
    result.model.save(out / "checkpoint.json")
    (out / "train_log.csv").write_text(format_log_csv(result.log_rows))
    print(f"checkpoint and log written to {out}")
    return 0


def cmd_track(args) -> int:
    model = TrackerModel.load(args.checkpoint)
    cfg = _load(args.config)
    frames = load_frames(args.sequence)
    init_box = load_init_box(args.sequence)
    boxes = track_sequence(frames, init_box, model, cfg.eval.tracking_config())
    out = Path(args.out) if args.out else Path(args.sequence) / "results.txt"
    write_boxes(out, boxes)
    print(f"{len(boxes)} boxes written to {out}")
    return 0


def cmd_eval(args) -> int:
    preds = read_boxes(args.results)
    gts = read_boxes(args.groundtruth)
    result = evaluate_boxes(preds, gts, precision_threshold=args.threshold)
    print(json.dumps(result.to_dict(), indent=2))
    return 0


def cmd_ablate(args) -> int:
    cfg = _load(args.config)
    seeds = _parse_seeds(args.seeds)
    rows = run_ablation(cfg, seeds)
    csv_text = rows_to_csv(rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.csv").write_text(csv_text)
    print(csv_text, end="")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args.config)
    seeds = _parse_seeds(args.seeds)
    if args.grid is None:
        grid = default_sweep_grid()
    else:
        grid = []
        for cell in args.grid.split(";"):
            cell = cell.strip()
            if not cell:
                continue
            lb, beta = cell.split(":")
            grid.append((float(lb), float(beta)))
        if not grid:
            raise ConfigError(f"empty sweep grid {args.grid!r}")
    rows = run_sweep(cfg, grid, seeds)
    csv_text = rows_to_csv(rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(csv_text)
    print(csv_text, end="")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradient_suite(seed=args.seed)
    failed = 0
    for r in results:
        print(r)
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} gradient checks passed")
    return 0 if failed == 0 else CHECK_FAILURE


def cmd_profile_energy(args) -> int:
    model = TrackerModel.load(args.checkpoint)
    cfg = _load(args.config)
    frames, boxes = heldout_sequences(cfg)[0]
    from .tracking import crop_region

    t_size = model.cfg.template_size
    s_size = model.cfg.search_size
    template, _ = crop_region(frames[0], boxes[0], cfg.eval.template_scale, t_size)
    search, _ = crop_region(frames[0], boxes[0], cfg.eval.search_scale, s_size)
    joint = random_patch_fuse(template, template, search, 0, "infer")
    profile = profile_model(
        model, joint.fused[None], HORIZONTAL, e_mac=cfg.energy.e_mac, e_ac=cfg.energy.e_ac
    )
    text = profile.to_json()
    if args.out:
        Path(args.out).write_text(text)
        print(f"energy profile written to {args.out}")
    else:
        print(text)
    return 0


def cmd_bench(args) -> int:
    """Evaluate a checkpoint on the held-out synthetic sequences."""
    model = TrackerModel.load(args.checkpoint)
    cfg = _load(args.config)
    ev = evaluate_model(model, cfg)
    print(
        json.dumps(
            {"success_auc": ev.success_auc, "precision": ev.precision}, indent=2
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spiketrack",
        description="Spiking-transformer single-object tracker: training, "
        "inference, evaluation, and energy profiling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a tracker from a config file")
    p.add_argument("--config", help="INI config path (defaults when omitted)")
    p.add_argument("--out", required=True, help="run directory for artifacts")
    p.add_argument("--seed", type=int, help="override the training seed")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("track", help="run a checkpoint over a frame directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sequence", required=True, help="directory of numbered PNG/PPM frames + init.txt")
    p.add_argument("--out", help="results file (default <sequence>/results.txt)")
    p.add_argument("--config", help="INI config for inference settings")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score a results file against ground truth")
    p.add_argument("--results", required=True)
    p.add_argument("--groundtruth", required=True)
    p.add_argument("--threshold", type=float, default=20.0, help="precision threshold (px)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="baseline / +MIM / +MIM+ADW comparison")
    p.add_argument("--config", help="INI config path")
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default="0,1,2")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="lambda_base/beta sensitivity sweep")
    p.add_argument("--config", help="INI config path")
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default="0")
    p.add_argument("--grid", help="cells 'lambda_base:beta' joined by ';'")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("profile-energy", help="per-inference energy report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", help="INI config for energy constants")
    p.add_argument("--out", help="JSON output path (stdout when omitted)")
    p.set_defaults(func=cmd_profile_energy)

    p = sub.add_parser("bench", help="evaluate a checkpoint on synthetic sequences")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", help="INI config path")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (FileNotFoundError, ValueError, AutodiffError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
