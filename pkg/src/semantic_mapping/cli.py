"""Command line entry points: synth, map, eval and bench."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import PipelineConfig
from .dataset import Dataset, DatasetError, read_classes, read_ground_truth, write_dataset
from .evaluation import evaluate
from .label_tsdf_map import EmptyMapError
from .pipeline import export_outputs, prediction_from_points, run_mapping, session_benchmark
from .ply import read_ply
from .synth import (PRESETS, NoiseSpec, Primitive, Room, SceneSpec, apply_noise, default_classes,
                    default_intrinsics, ground_truth_points, orbit, render_sequence)

log = logging.getLogger("semantic_mapping")


def _config(path) -> PipelineConfig:
    return PipelineConfig.load(path) if path else PipelineConfig()


def scene_from_json(data: dict) -> SceneSpec:
    """Scene description: objects, optional room, orbit trajectory and image size."""
    objects = [Primitive(o["shape"], tuple(o["center"]), tuple(o["size"]), int(o["category"]),
                         int(o["instance_id"]), float(o.get("yaw_deg", 0.0))) for o in data["objects"]]
    room = data.get("room")
    room = Room(tuple(room["lo"]), tuple(room["hi"])) if room else None
    cam = data.get("camera", {})
    intr = default_intrinsics(int(cam.get("width", 160)), int(cam.get("height", 120)))
    orb = data.get("orbit", {})
    traj = orbit(int(orb.get("frames", 60)), float(orb.get("radius", 1.2)), float(orb.get("height", 0.9)),
                 tuple(orb.get("target", (0.0, 0.0, 0.15))), float(orb.get("sweep_deg", 360.0)))
    return SceneSpec(objects, intr, traj, room, default_classes())


def cmd_synth(args) -> int:
    if args.scene:
        scene = scene_from_json(json.loads(Path(args.scene).read_text()))
    else:
        scene = PRESETS[args.preset](args.frames, args.width, args.height)
    frames = render_sequence(scene, seed=args.seed)
    noise = NoiseSpec(args.pose_rot_deg, args.pose_trans_m, args.depth_std, args.mask_px, args.misclass_rate)
    frames = apply_noise(frames, noise, args.seed, scene.classes)
    gt = ground_truth_points(scene, args.gt_resolution, scene.trajectory)
    write_dataset(args.out, frames, scene.classes, gt)
    log.info("wrote %d frames to %s", len(frames), args.out)
    return 0


def cmd_map(args) -> int:
    config = _config(args.config)
    data = Dataset(args.dataset)
    session = run_mapping(iter(data), config, data.classes)
    try:
        result = session.query()
    except EmptyMapError as exc:
        log.error("%s", exc)
        return 1
    gt = data.ground_truth()
    written = export_outputs(session, result, args.out, gt, session_benchmark(session, result))
    log.info("frames %d, superpoints %d, instances %d", session.frames_integrated,
             len(session.manager.labels), len(result.instances))
    for name, path in written.items():
        log.info("%s -> %s", name, path)
    return 0


def cmd_eval(args) -> int:
    vertex, _ = read_ply(args.pred)
    pred = prediction_from_points(vertex)
    gt = read_ground_truth(args.gt)
    things = None
    if args.classes:
        things = read_classes(args.classes).things
    config = _config(args.config)
    report = evaluate(pred, gt, things, config.eval_radius, config.eval_min_region)
    text = report.to_text()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    config = _config(args.config)
    data = Dataset(args.dataset)
    session = run_mapping(iter(data), config, data.classes)
    result = session.query() if session.frames_integrated else None
    text = session_benchmark(session, result).to_text()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semantic-mapping", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic sequence with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=sorted(PRESETS), default="three_objects")
    p.add_argument("--scene", help="JSON scene description (overrides --preset)")
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--width", type=int, default=160)
    p.add_argument("--height", type=int, default=120)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gt-resolution", type=float, default=0.01)
    g = p.add_argument_group("noise")
    g.add_argument("--pose-rot-deg", type=float, default=0.0, help="per-frame rotation drift std")
    g.add_argument("--pose-trans-m", type=float, default=0.0, help="per-frame translation drift std")
    g.add_argument("--depth-std", type=float, default=0.0)
    g.add_argument("--mask-px", type=int, default=0)
    g.add_argument("--misclass-rate", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("map", help="map a dataset and export labelled outputs")
    p.add_argument("dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("eval", help="score an exported points.ply against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--classes", help="classes.txt; restricts scoring to thing classes")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-stage timing and memory report")
    p.add_argument("dataset")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (DatasetError, ValueError) as exc:
        log.error("error: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
