"""Command-line entry point wiring the whole system.

Subcommands: simulate | run | train | eval | bench. All configuration lives
in JSON files with flag overrides; seeds are explicit in output headers.
Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import evaluate as ev
from .bench import render_bench_table, run_bench
from .gridnet.model import GridNetModel, load_weights, save_weights
from .gridnet.train import TrainingDivergence, build_window_dataset, train, write_history_csv
from .pipeline import (
    ABLATIONS,
    DetectionPipeline,
    PipelineConfig,
    PipelineConfigError,
    load_pipeline_config,
    write_fusion_reports,
    write_track_log,
)
from .simworld import (
    DatasetError,
    SceneConfigError,
    build_scene,
    load_scene_config,
    read_dataset,
    simulate_frames,
    write_dataset,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return load_pipeline_config(path)


def _maybe_model(config: PipelineConfig, weights: str | None):
    if weights:
        return load_weights(weights)
    if config.gridnet_source == "model" and config.weights_path:
        return load_weights(config.weights_path)
    return None


def cmd_simulate(args) -> int:
    scene = build_scene(load_scene_config(args.scene))
    frames = simulate_frames(scene, seconds=args.seconds, seed=args.seed, start=args.start)
    meta = {"scene": Path(args.scene).name, "seed": args.seed, "seconds": args.seconds, "start": args.start}
    n = write_dataset(frames, args.out, lidar=scene.lidar, meta=meta)
    print(f"wrote {n} frames to {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = _load_config(args.config)
    if args.ablate != "fusion":
        from .pipeline import apply_ablation

        config = apply_ablation(config, args.ablate)
    if args.parallel:
        config = PipelineConfig.from_dict({**config.to_dict(), "pipeline": {**config.to_dict()["pipeline"], "parallel": True}})
    model = _maybe_model(config, args.weights)
    if config.gridnet_source == "model" and model is None:
        print("error: gridnet is enabled but no weights were given (use --weights or weights_path)", file=sys.stderr)
        return EXIT_CONFIG
    frames = read_dataset(args.data)
    pipeline = DetectionPipeline(config, model=model)
    results = pipeline.run(frames)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    meta = {"data": Path(args.data).name, "ablation": args.ablate}
    write_track_log(results, outdir / "tracks.jsonl", meta=meta)
    write_fusion_reports(results, outdir / "fusion.jsonl", meta=meta)
    total_tracks = sum(len(r.track_rows) for r in results)
    print(f"processed {len(results)} frames; {total_tracks} track-frames; logs in {outdir}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args.config)
    tc = config.train
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.lr is not None:
        overrides["learning_rate"] = args.lr
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        from .gridnet.train import TrainConfig

        tc = TrainConfig.from_dict({**tc.to_dict(), **overrides})
    frames = read_dataset(args.data)
    samples = build_window_dataset(frames, config.pillar, config.gridnet.history)
    if not samples:
        print("error: dataset too short for the configured scan history", file=sys.stderr)
        return EXIT_DATA
    model = GridNetModel(config.pillar, config.gridnet, seed=tc.seed)
    history = train(model, samples, tc)
    save_weights(model, args.out)
    report_dir = Path(args.report) if args.report else Path(args.out).parent
    report_dir.mkdir(parents=True, exist_ok=True)
    write_history_csv(history, report_dir / "loss_history.csv")
    from .figures import save_loss_figure

    save_loss_figure(history, report_dir / "loss_curve.png")
    print(
        f"trained {tc.epochs} epochs on {len(samples)} windows (seed {tc.seed}); "
        f"final train loss {history['train_loss'][-1]:.4f}, val IoU {history['val_iou'][-1]:.3f}; "
        f"weights in {args.out}"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    sweep = tuple(float(s) for s in args.sweep.split(","))
    ablations = ["fusion"]
    if args.ablate:
        for a in args.ablate.split(","):
            a = a.strip()
            if a and a not in ablations:
                ablations.append(a)
    model = _maybe_model(config, args.weights)
    if config.gridnet_source == "model" and model is None:
        print("error: gridnet is enabled but no weights were given (use --weights or weights_path)", file=sys.stderr)
        return EXIT_CONFIG
    frames = read_dataset(args.data)
    result = ev.run_experiment(
        frames, config, sweep=sweep, ablations=ablations, model=model, warmup_s=args.warmup
    )
    table = ev.render_table(result)
    print(table, end="")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "table.txt").write_text(table)
    ev.write_metrics_csv(result, outdir / "metrics.csv")
    ev.write_timeline_csv(result, outdir / "timeline.csv")
    from .figures import save_metric_figure, save_timeline_figure

    save_metric_figure(result, outdir / "metrics.png")
    save_timeline_figure(result, outdir / "timeline.png")
    print(f"reports in {outdir}")
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _load_config(args.config)
    model = _maybe_model(config, args.weights)
    if config.gridnet_source == "model" and model is None:
        config = PipelineConfig.from_dict(
            {**config.to_dict(), "pipeline": {**config.to_dict()["pipeline"], "gridnet_source": "none", "weights_path": None}}
        )
    frames = read_dataset(args.data)
    if args.frames:
        frames = frames[: args.frames]
    result = run_bench(frames, config, model=model)
    table = render_bench_table(result, gridnet_enabled=config.gridnet_source != "none")
    print(table, end="")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(table)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynogrid",
        description=__doc__,
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="ray-cast a scene into a frame dataset",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--scene", required=True, help="scene config JSON")
    p.add_argument("--seconds", type=float, required=True, help="dataset length in seconds")
    p.add_argument("--seed", type=int, default=0, help="root RNG seed; recorded in the header")
    p.add_argument("--start", type=float, default=0.0, help="scene time of the first frame")
    p.add_argument("--out", required=True, help="output dataset file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run the detection pipeline over a dataset",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--data", required=True, help="input dataset file")
    p.add_argument("--config", default=None, help="pipeline config JSON (defaults used when omitted)")
    p.add_argument("--weights", default=None, help="dynamic-grid weights manifest")
    p.add_argument("--out", default="run_out", help="output directory for track/fusion logs")
    p.add_argument("--ablate", default="fusion", choices=ABLATIONS, help="pipeline variant to run")
    p.add_argument("--parallel", action="store_true", help="run the two branches on worker threads")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("train", help="train the dynamic-grid model",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--data", required=True, help="training dataset file")
    p.add_argument("--config", default=None, help="pipeline config JSON (defaults used when omitted)")
    p.add_argument("--out", required=True, help="weights manifest to write (a .bin sits next to it)")
    p.add_argument("--report", default=None, help="directory for the loss CSV and curve figure")
    p.add_argument("--epochs", type=int, default=None, help="override config epochs")
    p.add_argument("--lr", type=float, default=None, help="override config learning rate")
    p.add_argument("--seed", type=int, default=None, help="override config training seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score the pipeline against dataset ground truth",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--data", required=True, help="dataset file with ground truth")
    p.add_argument("--config", default=None, help="pipeline config JSON (defaults used when omitted)")
    p.add_argument("--weights", default=None, help="dynamic-grid weights manifest")
    p.add_argument("--sweep", default="0.25,0.5,0.75", help="comma-separated distance thresholds (m)")
    p.add_argument("--ablate", default=None, help="comma-separated extra configs: no-gridnet, ogm-only")
    p.add_argument("--warmup", type=float, default=None, help="seconds excluded from scoring (config default)")
    p.add_argument("--out", default="eval_out", help="output directory for tables, CSVs and figures")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-stage runtime table",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--data", required=True, help="dataset file to replay")
    p.add_argument("--config", default=None, help="pipeline config JSON (defaults used when omitted)")
    p.add_argument("--weights", default=None, help="dynamic-grid weights manifest")
    p.add_argument("--frames", type=int, default=None, help="limit the number of frames")
    p.add_argument("--out", default=None, help="also write the table to this file")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SceneConfigError, PipelineConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergence, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
