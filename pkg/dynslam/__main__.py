"""dynslam command line

Usage:
    python -m dynslam mask SEQUENCE_DIR|DEPTH_PNG -o OUT_DIR [options]
    python -m dynslam hist SEQUENCE_DIR -o HIST_CSV [--bins N] [--max-frames N]
    python -m dynslam resample KEYPOINTS_CSV -o OUT_CSV [--image RGB --overlay PNG]
    python -m dynslam track SEQUENCE_DIR -o TRAJECTORY
    python -m dynslam eval ESTIMATE GROUND_TRUTH [--json F] [--ate-csv F] [--rpe-csv F]
                           [--baseline ESTIMATE]
    python -m dynslam map SEQUENCE_DIR TRAJECTORY -o MAP_PLY [--ascii]
    python -m dynslam pipeline SEQUENCE_DIR -o OUT_DIR [--ablation] [--write-masks]
    python -m dynslam synth OUT_DIR [--frames N] [--static]

Exit codes: 0 success, 1 usage error, 2 data or configuration error.
"""
import argparse
import json
import os
import sys

import numpy as np

from . import logger
from .config import Settings, config, load_settings
from .defs.errors import ConfigError, DataError
from .dynamic_mask import predict_masks, window_variance_histogram
from .evaluation import ate_errors, evaluate, improvement, rpe_errors
from .ingest import decode_depth, load_sequence, read_frame
from .mapping import export_ply
from .pipeline import SequenceRunner, external_mask
from .resampler import draw_overlay, nn_distance_std, plan_resampling
from .synthetic import SceneConfig, render_sequence
from .utils import ROOT_LOGGER
from .utils.file_utils import (ensure_parent, read_depth_raw, read_keypoints_csv, read_rgb,
                               read_trajectory, write_json, write_keypoints_csv, write_mask,
                               write_rgb, write_trajectory)
from .utils.log import logging_context, set_console_level

SETTING_FLAGS = {
    "tau_a": "TAU_A", "tau_b": "TAU_B", "tau_c": "TAU_C", "tau_d": "TAU_D",
    "depth_scale": "DEPTH_SCALE", "pixel_eps": "PIXEL_EPS", "pixel_minpts": "PIXEL_MIN_PTS",
    "box_margin": "BOX_MARGIN", "epochs": "EPOCHS", "seed": "SEED",
    "intrinsics": "INTRINSICS", "ext_mask_dir": "EXT_MASK_DIR", "mask_mode": "MASK_MODE",
    "robust_loss": "ROBUST_LOSS", "resample": "RESAMPLE", "warm_start": "WARM_START",
    "max_keypoints": "MAX_KEYPOINTS", "dilate": "DILATE", "voxel": "VOXEL",
    "stride": "STRIDE", "rpe_delta": "RPE_DELTA", "threads": "THREADS",
    "log_level": "LOG_LEVEL_CONSOLE",
}


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors exiting 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def common_options() -> argparse.ArgumentParser:
    common = ArgumentParser(add_help=False)
    group = common.add_argument_group("settings")
    group.add_argument("--config", default='', help="key=value or YAML settings file")
    group.add_argument("--tau-a", type=float, help="lower window-variance bound (m²)")
    group.add_argument("--tau-b", type=float, help="upper window-variance bound (m²)")
    group.add_argument("--tau-c", type=float, help="median validity floor (m)")
    group.add_argument("--tau-d", type=float, help="local-mask depth tolerance (m)")
    group.add_argument("--depth-scale", type=float, help="raw depth units per meter")
    group.add_argument("--pixel-eps", type=float, help="pixel DBSCAN radius")
    group.add_argument("--pixel-minpts", type=int, help="pixel DBSCAN min points")
    group.add_argument("--box-margin", type=int, help="local-mask margin around a cluster")
    group.add_argument("--epochs", type=int, help="autoencoder epochs")
    group.add_argument("--seed", type=int, help="seed for every random choice")
    group.add_argument("--intrinsics", help="file with 'fx fy cx cy'")
    group.add_argument("--ext-mask-dir", help="external masks named like the rgb frames")
    group.add_argument("--mask-mode", choices=("off", "depth", "full"))
    group.add_argument("--no-robust-loss", dest="robust_loss", action="store_false",
                       default=None, help="plain least squares in pose refinement")
    group.add_argument("--resample", action="store_true", default=None,
                       help="resample keypoints before pose refinement")
    group.add_argument("--warm-start", action="store_true", default=None,
                       help="carry autoencoder weights from frame to frame")
    group.add_argument("--max-keypoints", type=int)
    group.add_argument("--dilate", type=int, help="mask dilation radius in pixels")
    group.add_argument("--voxel", type=float, help="map voxel size (m), 0 keeps every point")
    group.add_argument("--stride", type=int, help="map pixel stride")
    group.add_argument("--rpe-delta", type=float, help="RPE interval (s)")
    group.add_argument("--threads", type=int, help="mask workers")
    group.add_argument("--log-level", help="console log level")
    return common


def build_parser() -> ArgumentParser:
    common = common_options()
    parser = ArgumentParser(prog="dynslam", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("mask", parents=[common], help="per-frame dynamic masks")
    p.add_argument("source", help="sequence directory or a single 16-bit depth PNG")
    p.add_argument("-o", "--out", required=True)

    p = commands.add_parser("hist", parents=[common], help="window-variance histogram")
    p.add_argument("sequence")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--bins", type=int, default=60)
    p.add_argument("--max-frames", type=int, default=0)

    p = commands.add_parser("resample", parents=[common], help="keypoint resampling")
    p.add_argument("keypoints")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--image", help="frame to draw the overlay on")
    p.add_argument("--overlay", help="overlay output, default next to --out")

    p = commands.add_parser("track", parents=[common], help="estimate a trajectory")
    p.add_argument("sequence")
    p.add_argument("-o", "--out", required=True)

    p = commands.add_parser("eval", parents=[common], help="ATE and RPE of a trajectory")
    p.add_argument("estimate")
    p.add_argument("ground_truth")
    p.add_argument("--json")
    p.add_argument("--ate-csv")
    p.add_argument("--rpe-csv")
    p.add_argument("--baseline", help="trajectory to report the improvement against")

    p = commands.add_parser("map", parents=[common], help="dynamic-free point cloud")
    p.add_argument("sequence")
    p.add_argument("trajectory")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--ascii", action="store_true")

    p = commands.add_parser("pipeline", parents=[common], help="track, map and evaluate")
    p.add_argument("sequence")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--ablation", action="store_true", help="also run with masking off")
    p.add_argument("--write-masks", action="store_true")
    p.add_argument("--ascii", action="store_true")

    p = commands.add_parser("synth", parents=[common], help="render a synthetic sequence")
    p.add_argument("out")
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--static", action="store_true", help="keep the box still")
    return parser


def settings_from(args: argparse.Namespace) -> Settings:
    overrides = {field: getattr(args, flag, None) for flag, field in SETTING_FLAGS.items()}
    return load_settings(args.config, **overrides)


def write_run_config(directory: str, args: argparse.Namespace, settings: Settings) -> None:
    write_json(os.path.join(directory or ".", "run_config.json"),
               {"command": args.command, "settings": settings.model_dump()})


def out_dir_of(path: str) -> str:
    return os.path.dirname(os.path.abspath(path))


def cmd_mask(args, settings: Settings) -> None:
    th = settings.thresholds()
    use_broad = settings.MASK_MODE != "depth"
    if os.path.isfile(args.source):
        frames = [("mask.png", args.source,
                   decode_depth(read_depth_raw(args.source), settings.DEPTH_SCALE))]
    else:
        records, _ = load_sequence(args.source, settings.ASSOC_MAX_DIFF)
        frames = ((os.path.basename(r.rgb_path), r.rgb_path,
                   read_frame(r, settings.DEPTH_SCALE)[1]) for r in records)
    count = 0
    for name, frame_path, depth in frames:
        m_ext = external_mask(settings.EXT_MASK_DIR, frame_path)
        masks = predict_masks(depth, th, m_ext, settings.PIXEL_EPS, settings.PIXEL_MIN_PTS,
                              settings.BOX_MARGIN, use_broad)
        write_mask(os.path.join(args.out, "m_depth", name), masks.m_depth)
        write_mask(os.path.join(args.out, "m_broad", name), masks.m_broad)
        write_mask(os.path.join(args.out, "m_c", name), masks.m_c)
        count += 1
    write_run_config(args.out, args, settings)
    print(f"wrote masks of {count} frames to {args.out}")


def cmd_hist(args, settings: Settings) -> None:
    records, _ = load_sequence(args.sequence, settings.ASSOC_MAX_DIFF)
    if args.max_frames > 0:
        records = records[:args.max_frames]
    depths = [read_frame(r, settings.DEPTH_SCALE)[1] for r in records]
    edges, counts, zeros = window_variance_histogram(depths, args.bins)
    with open(ensure_parent(args.out), "w", encoding="utf-8") as f:
        f.write(f"# frames: {len(depths)}, zero-variance windows: {zeros}\n")
        f.write("low,high,count\n")
        for lo, hi, n in zip(edges[:-1], edges[1:], counts):
            f.write(f"{lo:.6e},{hi:.6e},{n}\n")
    write_run_config(out_dir_of(args.out), args, settings)
    print(f"histogram of {int(counts.sum()) + zeros} windows written to {args.out}")


def cmd_resample(args, settings: Settings) -> None:
    keypoints = read_keypoints_csv(args.keypoints)
    plan = plan_resampling(keypoints, settings.resample_config())
    kept = keypoints[plan.keep]
    write_keypoints_csv(args.out, kept)
    if args.image:
        overlay = args.overlay or os.path.splitext(args.out)[0] + "_overlay.png"
        write_rgb(overlay, draw_overlay(read_rgb(args.image), keypoints, plan))
    write_run_config(out_dir_of(args.out), args, settings)
    print(f"kept {len(kept)} of {len(keypoints)} keypoints; nearest-neighbour distance std "
          f"{nn_distance_std(keypoints):.3f} -> {nn_distance_std(kept):.3f} px")


def cmd_track(args, settings: Settings) -> None:
    runner = SequenceRunner(settings, args.sequence)
    masks = runner.working_masks(runner.predict(settings.MASK_MODE))
    trajectory, lost = runner.track(masks)
    write_trajectory(args.out, trajectory)
    write_run_config(out_dir_of(args.out), args, settings)
    print(f"{len(trajectory)} poses written to {args.out} ({lost} frames lost)")


def cmd_eval(args, settings: Settings) -> None:
    gt = read_trajectory(args.ground_truth)
    est = read_trajectory(args.estimate)
    report = evaluate(est, gt, settings.RPE_DELTA, settings.ASSOC_MAX_DIFF)
    print(report.table())
    out = report.model_dump()
    if args.baseline:
        baseline = evaluate(read_trajectory(args.baseline), gt, settings.RPE_DELTA,
                            settings.ASSOC_MAX_DIFF)
        gains = improvement(baseline, report)
        out["baseline"] = baseline.model_dump()
        out["improvement_percent"] = gains
        for name, value in gains.items():
            print(f"improvement {name}: {value:.2f} %")
    if args.json:
        write_json(args.json, out)
        write_run_config(out_dir_of(args.json), args, settings)
    if args.ate_csv:
        stamps, errors = ate_errors(est, gt, settings.ASSOC_MAX_DIFF)
        np.savetxt(ensure_parent(args.ate_csv), np.stack([stamps, errors], axis=1),
                   delimiter=",", header="timestamp,ate_m", comments="", fmt="%.9f")
    if args.rpe_csv:
        stamps, trans, rot = rpe_errors(est, gt, settings.RPE_DELTA, settings.ASSOC_MAX_DIFF)
        np.savetxt(ensure_parent(args.rpe_csv), np.stack([stamps, trans, rot], axis=1),
                   delimiter=",", header="timestamp,trans_m_per_s,rot_deg_per_s", comments="",
                   fmt="%.9f")


def cmd_map(args, settings: Settings) -> None:
    runner = SequenceRunner(settings, args.sequence)
    masks = runner.working_masks(runner.predict(settings.MASK_MODE))
    cloud = runner.build_map(read_trajectory(args.trajectory), masks)
    export_ply(cloud, args.out, binary=not args.ascii)
    write_run_config(out_dir_of(args.out), args, settings)
    print(f"{len(cloud)} points written to {args.out}")


def cmd_pipeline(args, settings: Settings) -> None:
    runner = SequenceRunner(settings, args.sequence)
    if args.ablation:
        summary = runner.ablation(args.out)
    else:
        summary = runner.run(args.out, write_masks=args.write_masks,
                             binary_ply=not args.ascii).summary()
    write_run_config(args.out, args, settings)
    print(json.dumps(summary, indent=2, sort_keys=True))


def cmd_synth(args, settings: Settings) -> None:
    scene = SceneConfig(frames=args.frames, seed=settings.SEED,
                        **({"box_step": 0.0} if args.static else {}))
    render_sequence(args.out, scene)
    print(f"rendered {scene.frames} frames into {args.out}")


def run(argv: list[str] | None = None) -> int:
    """run one subcommand; returns the process exit code"""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    try:
        settings = settings_from(args)
        set_console_level(logger, settings.LOG_LEVEL_CONSOLE)
        match args.command:
            case "mask":
                cmd_mask(args, settings)
            case "hist":
                cmd_hist(args, settings)
            case "resample":
                cmd_resample(args, settings)
            case "track":
                cmd_track(args, settings)
            case "eval":
                cmd_eval(args, settings)
            case "map":
                cmd_map(args, settings)
            case "pipeline":
                cmd_pipeline(args, settings)
            case "synth":
                cmd_synth(args, settings)
    except (DataError, ConfigError, OSError, ValueError, FloatingPointError) as e:
        logger.error("%s failed: %s", args.command, e)
        return 2
    return 0


def main() -> None:
    with logging_context(ROOT_LOGGER, config.LOG_LEVEL_CONSOLE,
                         config.LOG_LEVEL if config.LOG_FILE else '',
                         log_file=config.LOG_FILE, level="DEBUG"):
        code = run()
    sys.exit(code)


if __name__ == "__main__":
    main()
