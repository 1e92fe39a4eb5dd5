"""Command-line surface: generate synthetic data, track a frame sequence,
detect a lattice in one image, and run the benchmark suites.

Exit codes: 0 success, 1 usage error, 2 stage failure, 3 benchmark gate
failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from .bench import run_suite
from .config import Config, ConfigError, load_config
from .geometry import inverse
from .imagecore import GrayImage, ImageFormatError, load_image
from .lattice import LatticeError
from .records import RECORDS_HEADER, format_result
from .synth import (
    WeaveSpec,
    generate_sequence,
    rotation_schedule,
    translation_schedule,
)
from .tracker import init, reacquire, track

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_STAGE = 2
EXIT_GATE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _load_config_arg(path: str | None, seed: int | None) -> Config:
    cfg = load_config(path) if path else Config()
    if seed is not None:
        cfg.seed = seed
    cfg.validate()
    return cfg


def _region_record(frame_index: int, r) -> str:
    e = r.ellipse
    return (
        f"frame={frame_index} cx={r.centroid[0]:.9f} cy={r.centroid[1]:.9f} "
        f"area={r.area} major={e.major:.9f} minor={e.minor:.9f} "
        f"orientation={e.orientation:.9f} stability={r.stability:.9f} "
        f"polarity={r.polarity}"
    )


def _ellipse_points(e, steps=40):
    ar = math.radians(e.orientation)
    c, s = math.cos(ar), math.sin(ar)
    pts = []
    for k in range(steps + 1):
        t = 2 * math.pi * k / steps
        x = e.major * math.cos(t)
        y = e.minor * math.sin(t)
        pts.append((e.cx + x * c - y * s, e.cy + x * s + y * c))
    return pts


def _annotate(frame: GrayImage, regions, lattice, motion_segments, out_path: Path):
    from PIL import Image, ImageDraw

    im = Image.fromarray(frame.data, mode="L").convert("RGB")
    draw = ImageDraw.Draw(im)
    for r in regions:
        draw.line(_ellipse_points(r.ellipse), fill=(0, 200, 0), width=1)
        draw.point((r.centroid[0], r.centroid[1]), fill=(0, 255, 0))
    for (x0, y0, x1, y1) in motion_segments:
        draw.line([(x0, y0), (x1, y1)], fill=(255, 220, 0), width=1)
    if lattice is not None:
        ax, ay = lattice.anchor
        v1, v2 = lattice.v1, lattice.v2
        draw.line([(ax, ay), (ax + v1[0], ay + v1[1])], fill=(80, 120, 255), width=2)
        draw.line([(ax, ay), (ax + v2[0], ay + v2[1])], fill=(255, 120, 80), width=2)
        cell = [
            (ax, ay),
            (ax + v1[0], ay + v1[1]),
            (ax + v1[0] + v2[0], ay + v1[1] + v2[1]),
            (ax + v2[0], ay + v2[1]),
            (ax, ay),
        ]
        draw.line(cell, fill=(255, 60, 60), width=1)
        draw.ellipse([ax - 2, ay - 2, ax + 2, ay + 2], fill=(255, 0, 0))
    im.save(out_path, format="PNG")


def cmd_gen(args) -> int:
    spec = WeaveSpec(
        size=args.size,
        v1=(args.pitch, 0.0),
        v2=(0.0, args.pitch),
        noise_sigma=args.noise,
        jitter_sigma=args.jitter,
        seed=args.seed if args.seed is not None else 0,
    )
    if args.schedule == "translation":
        poses = translation_schedule(args.frames - 1 if args.frames else 20, args.step)
    elif args.schedule == "rotation":
        poses = rotation_schedule(args.frames - 1 if args.frames else 60, args.step_deg)
    else:
        from .geometry import RigidTransform

        poses = [RigidTransform() for _ in range(args.frames or 1)]
    try:
        frames, truth = generate_sequence(spec, poses, args.out)
    except (OSError, ValueError) as exc:
        print(f"gen failed: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"wrote {len(frames)} frames to {args.out}")
    print(f"truth file: {truth}")
    return EXIT_OK


def _collect_frames(paths: list[str]) -> list[Path]:
    if len(paths) == 1 and Path(paths[0]).is_dir():
        root = Path(paths[0])
        found = sorted(root.glob("*.pgm")) + sorted(root.glob("*.png"))
        return found
    return [Path(p) for p in paths]


def cmd_track(args) -> int:
    frame_paths = _collect_frames(args.frames)
    if len(frame_paths) < 2:
        print("track needs at least 2 frames", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _load_config_arg(args.config, args.seed)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        frames = [load_image(p) for p in frame_paths]
    except (FileNotFoundError, ImageFormatError) as exc:
        print(f"cannot read frames: {exc}", file=sys.stderr)
        return EXIT_USAGE

    annotate_dir = Path(args.dump_annotated) if args.dump_annotated else None
    if annotate_dir:
        annotate_dir.mkdir(parents=True, exist_ok=True)
    feature_lines = [] if args.dump_features else None

    try:
        state = init(frames[0], cfg)
    except (LatticeError, ValueError) as exc:
        print(f"init failed on {frame_paths[0]}: {exc}", file=sys.stderr)
        return EXIT_STAGE

    if feature_lines is not None:
        feature_lines.extend(_region_record(0, r) for r in state.prev.regions)
    if annotate_dir:
        _annotate(frames[0], state.prev.regions, state.lattice, [], annotate_dir / "frame_0000.png")

    lines = [RECORDS_HEADER]
    for k, frame in enumerate(frames[1:], start=1):
        if state.status == "tracking":
            state, res = track(state, frame)
        else:
            state = reacquire(state, frame)
            from .geometry import identity
            from .lattice import ThreadDelta
            from .tracker import FrameResult

            res = FrameResult(
                frame_index=state.frame_index,
                transform=identity(),
                cumulative_pose=state.cumulative_pose,
                thread_delta=ThreadDelta(0.0, 0.0),
                cumulative_threads=state.cumulative_threads,
                lattice=state.lattice if state.status == "tracking" else None,
                inlier_count=0,
                match_count=0,
                status="reacquiring" if state.status == "tracking" else "lost",
                discontinuity=state.status == "tracking",
            )
        lines.append(format_result(res, timings=args.timings))
        if feature_lines is not None and state.status == "tracking":
            feature_lines.extend(_region_record(k, r) for r in state.prev.regions)
        if annotate_dir and state.status == "tracking":
            segs = []
            if res.status == "tracking":
                inv = inverse(res.transform)
                prev_pts = inv.apply(state.prev.points)
                segs = [
                    (px, py, qx, qy)
                    for (px, py), (qx, qy) in zip(prev_pts, state.prev.points)
                ]
            _annotate(
                frame,
                state.prev.regions,
                state.lattice,
                segs,
                annotate_dir / f"frame_{k:04d}.png",
            )

    out = Path(args.out) if args.out else Path("track_records.txt")
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(lines) - 1} records to {out}")
    if feature_lines is not None:
        fpath = Path(args.dump_features)
        fpath.write_text("\n".join(feature_lines) + "\n")
        print(f"wrote {len(feature_lines)} region records to {fpath}")
    return EXIT_OK


def cmd_lattice(args) -> int:
    try:
        cfg = _load_config_arg(args.config, args.seed)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        img = load_image(args.image)
    except (FileNotFoundError, ImageFormatError) as exc:
        print(f"cannot read image: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        state = init(img, cfg)
    except (LatticeError, ValueError) as exc:
        print(f"lattice detection failed: {exc}", file=sys.stderr)
        return EXIT_STAGE
    basis = state.lattice
    orients = state.orientations
    print(f"anchor: ({basis.anchor[0]:.3f}, {basis.anchor[1]:.3f})")
    print(f"v1: ({basis.v1[0]:.4f}, {basis.v1[1]:.4f})  |v1| = {math.hypot(*basis.v1):.4f} px")
    print(f"v2: ({basis.v2[0]:.4f}, {basis.v2[1]:.4f})  |v2| = {math.hypot(*basis.v2):.4f} px")
    print(f"theta_refs: {basis.theta_refs[0]:.3f} deg, {basis.theta_refs[1]:.3f} deg")
    print("spectrum peaks (orientation deg, magnitude, radius bins):")
    for o, m, r in orients.all_peaks:
        print(f"  {o:8.3f} {m:12.3f} {r:8.3f}")
    if args.dump_features:
        lines = [_region_record(0, r) for r in state.prev.regions]
        Path(args.dump_features).write_text("\n".join(lines) + "\n")
        print(f"wrote {len(lines)} region records to {args.dump_features}")
    if args.annotated:
        _annotate(img, state.prev.regions, basis, [], Path(args.annotated))
        print(f"annotated image: {args.annotated}")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        cfg = _load_config_arg(args.config, args.seed)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = run_suite(args.suite, cfg, cfg.seed)
    except (LatticeError, ValueError) as exc:
        print(f"bench {args.suite} could not run: {exc}", file=sys.stderr)
        return EXIT_STAGE
    print(report.table)
    print(report.summary_line())
    if args.out:
        Path(args.out).write_text(report.summary_line() + "\n")
    return EXIT_OK if report.passed else EXIT_GATE


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="weavetrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="render synthetic weave frames plus ground truth")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--schedule", choices=["translation", "rotation", "none"], default="none")
    p.add_argument("--frames", type=int, default=None, help="frame count override")
    p.add_argument("--step", type=float, default=7.53, help="translation step, px")
    p.add_argument("--step-deg", type=float, default=1.0 / 6.0, help="rotation step, deg")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--pitch", type=float, default=7.53)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("track", help="track a frame sequence and write result records")
    p.add_argument("frames", nargs="+", help="frame files in order, or one directory")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="records output path")
    p.add_argument("--timings", action="store_true", help="append per-stage timings")
    p.add_argument("--dump-annotated", default=None, help="directory for annotated PNGs")
    p.add_argument("--dump-features", default=None, help="file for per-frame region records")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("lattice", help="detect the local lattice in a single image")
    p.add_argument("image")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--annotated", default=None, help="write an annotated PNG here")
    p.add_argument("--dump-features", default=None, help="file for region records")
    p.set_defaults(func=cmd_lattice)

    p = sub.add_parser("bench", help="run a benchmark suite against its gates")
    p.add_argument("suite", choices=["translation", "rotation", "thread", "speed"])
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="machine-readable summary path")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
