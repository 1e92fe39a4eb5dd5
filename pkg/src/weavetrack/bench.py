"""Self-contained benchmark suites mirroring the accuracy experiments:
translation sweep, rotation sweep, thread counting, and throughput.

Every suite renders its own synthetic data under a temporary directory, runs
the full tracker over the written frames, and gates its metrics. The gates
are the acceptance thresholds; exceeding one fails the suite.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Config
from .imagecore import load_image
from .synth import (
    WeaveSpec,
    generate_sequence,
    read_truth,
    rotation_schedule,
    translation_schedule,
)
from .tracker import FrameResult, init, track

__all__ = ["SuiteReport", "run_suite", "SUITES"]

# acceptance gates per suite
TRANSLATION_MEAN_GATE = 0.15  # px
TRANSLATION_MAX_GATE = 0.7  # px
TRANSLATION_RUNTIME_GATE = 30.0  # s
ROTATION_MEAN_GATE = 0.05  # deg
ROTATION_MAX_GATE = 0.15  # deg
ROTATION_RUNTIME_GATE = 90.0  # s
THREAD_DELTA_GATE = 0.05  # thread units, per-frame mean abs
THREAD_CUMULATIVE_GATE = 0.5  # thread units after the sweep
SPEED_FRAME_GATE = 333.0  # ms per tracked frame
SPEED_SOFT_TARGET = 30.0  # ms, reported only


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    metrics: dict
    passed: bool
    table: str

    def summary_line(self) -> str:
        parts = [f"suite={self.suite}"]
        for key in sorted(self.metrics):
            value = self.metrics[key]
            if isinstance(value, float):
                parts.append(f"{key}={value:.9f}")
            else:
                parts.append(f"{key}={value}")
        parts.append(f"pass={1 if self.passed else 0}")
        return " ".join(parts)


def _sweep_results(
    config: Config, spec: WeaveSpec, poses, workdir: Path
) -> tuple[list[FrameResult], list, float]:
    """Render a pose schedule to disk, track it, return results and truth."""
    frame_paths, truth_path = generate_sequence(spec, poses, workdir)
    truth = read_truth(truth_path)
    t0 = time.perf_counter()
    frames = [load_image(p) for p in frame_paths]
    state = init(frames[0], config)
    results = []
    for frame in frames[1:]:
        state, res = track(state, frame)
        results.append(res)
        if res.status != "tracking":
            break
    runtime = time.perf_counter() - t0
    return results, truth, runtime


def _per_frame_camera_truth(spec: WeaveSpec, truth, k: int) -> tuple[float, float, float]:
    """Camera-frame transform between consecutive frames from stage truth."""
    prev, cur = truth[k - 1], truth[k]
    c = (spec.size - 1) / 2.0
    dth = cur.dtheta - prev.dtheta
    r = math.radians(dth)
    co, si = math.cos(r), math.sin(r)
    ax, ay = c + prev.dx, c + prev.dy
    ex = c + cur.dx - (ax * co + ay * si)
    ey = c + cur.dy - (-ax * si + ay * co)
    return ex, ey, dth


def run_translation(config: Config, seed: int) -> SuiteReport:
    spec = WeaveSpec(noise_sigma=0.02, jitter_sigma=0.0, seed=seed)
    poses = translation_schedule(20, 7.53)
    with tempfile.TemporaryDirectory(prefix="weavetrack-bench-") as tmp:
        results, truth, runtime = _sweep_results(config, spec, poses, Path(tmp))
    errs = []
    rows = []
    for res in results:
        if res.status != "tracking":
            break
        ex, ey, _ = _per_frame_camera_truth(spec, truth, res.frame_index)
        err = math.hypot(res.transform.dx - ex, res.transform.dy - ey)
        errs.append(err)
        rows.append((res.frame_index, res.transform.dx, res.transform.dy, err))
    tracked = len(errs)
    mean_err = float(np.mean(errs)) if errs else math.inf
    max_err = float(np.max(errs)) if errs else math.inf
    passed = (
        tracked == len(poses) - 1
        and mean_err <= TRANSLATION_MEAN_GATE
        and max_err <= TRANSLATION_MAX_GATE
        and runtime < TRANSLATION_RUNTIME_GATE
    )
    lines = [f"{'frame':>5} {'dx_est':>10} {'dy_est':>10} {'abs_err_px':>10}"]
    lines += [f"{f:>5} {dx:>10.4f} {dy:>10.4f} {e:>10.4f}" for f, dx, dy, e in rows]
    lines.append(
        f"TmeanAE {mean_err:.4f} px (gate {TRANSLATION_MEAN_GATE}), "
        f"TmaxAE {max_err:.4f} px (gate {TRANSLATION_MAX_GATE}), "
        f"runtime {runtime:.1f} s (gate {TRANSLATION_RUNTIME_GATE})"
    )
    metrics = {
        "frames": tracked,
        "mean_abs_err_px": mean_err,
        "max_abs_err_px": max_err,
        "runtime_s": runtime,
    }
    return SuiteReport("translation", metrics, passed, "\n".join(lines))


def run_rotation(config: Config, seed: int) -> SuiteReport:
    spec = WeaveSpec(noise_sigma=0.02, jitter_sigma=0.0, seed=seed)
    poses = rotation_schedule(60, 1.0 / 6.0)
    with tempfile.TemporaryDirectory(prefix="weavetrack-bench-") as tmp:
        results, truth, runtime = _sweep_results(config, spec, poses, Path(tmp))
    errs = []
    for res in results:
        if res.status != "tracking":
            break
        _, _, dth = _per_frame_camera_truth(spec, truth, res.frame_index)
        errs.append(abs(res.transform.dtheta - dth))
    tracked = len(errs)
    mean_err = float(np.mean(errs)) if errs else math.inf
    max_err = float(np.max(errs)) if errs else math.inf
    passed = (
        tracked == len(poses) - 1
        and mean_err <= ROTATION_MEAN_GATE
        and max_err <= ROTATION_MAX_GATE
        and runtime < ROTATION_RUNTIME_GATE
    )
    lines = [
        f"rotation sweep: {tracked} frames tracked",
        f"RmeanAE {mean_err:.5f} deg (gate {ROTATION_MEAN_GATE}), "
        f"RmaxAE {max_err:.5f} deg (gate {ROTATION_MAX_GATE}), "
        f"runtime {runtime:.1f} s (gate {ROTATION_RUNTIME_GATE})",
    ]
    metrics = {
        "frames": tracked,
        "mean_abs_err_deg": mean_err,
        "max_abs_err_deg": max_err,
        "runtime_s": runtime,
    }
    return SuiteReport("rotation", metrics, passed, "\n".join(lines))


def run_thread(config: Config, seed: int) -> SuiteReport:
    spec = WeaveSpec(noise_sigma=0.02, jitter_sigma=0.0, seed=seed)
    poses = translation_schedule(20, 7.53)
    with tempfile.TemporaryDirectory(prefix="weavetrack-bench-") as tmp:
        results, truth, runtime = _sweep_results(config, spec, poses, Path(tmp))
    delta_errs = []
    cum = None
    for res in results:
        if res.status != "tracking":
            break
        t = truth[res.frame_index]
        delta_errs.append(
            math.hypot(res.thread_delta.du - t.du, res.thread_delta.dv - t.dv)
        )
        cum = res.cumulative_threads
    tracked = len(delta_errs)
    cum_truth_u = sum(t.du for t in truth[1 : tracked + 1])
    cum_truth_v = sum(t.dv for t in truth[1 : tracked + 1])
    mean_delta = float(np.mean(delta_errs)) if delta_errs else math.inf
    cum_err = (
        math.hypot(cum[0] - cum_truth_u, cum[1] - cum_truth_v) if cum else math.inf
    )
    passed = (
        tracked == len(poses) - 1
        and mean_delta <= THREAD_DELTA_GATE
        and cum_err <= THREAD_CUMULATIVE_GATE
    )
    lines = [
        f"thread counting on the translation sweep: {tracked} frames",
        f"mean per-frame thread delta error {mean_delta:.5f} (gate {THREAD_DELTA_GATE})",
        f"cumulative count error after the sweep {cum_err:.5f} (gate {THREAD_CUMULATIVE_GATE})",
    ]
    metrics = {
        "frames": tracked,
        "mean_delta_err_thread": mean_delta,
        "cumulative_err_thread": cum_err,
        "runtime_s": runtime,
    }
    return SuiteReport("thread", metrics, passed, "\n".join(lines))


def run_speed(config: Config, seed: int) -> SuiteReport:
    spec = WeaveSpec(noise_sigma=0.02, jitter_sigma=0.0, seed=seed)
    poses = translation_schedule(10, 1.5)
    with tempfile.TemporaryDirectory(prefix="weavetrack-bench-") as tmp:
        frame_paths, _ = generate_sequence(spec, poses, Path(tmp))
        frames = [load_image(p) for p in frame_paths]
    state = init(frames[0], config)  # also absorbs one-time JIT warmup
    per_frame = []
    tracked = 0
    for frame in frames[1:]:
        t0 = time.perf_counter()
        state, res = track(state, frame)
        per_frame.append((time.perf_counter() - t0) * 1e3)
        if res.status != "tracking":
            break
        tracked += 1
    mean_ms = float(np.mean(per_frame)) if per_frame else math.inf
    max_ms = float(np.max(per_frame)) if per_frame else math.inf
    passed = tracked == len(poses) - 1 and max_ms <= SPEED_FRAME_GATE
    lines = [
        f"throughput over {len(per_frame)} tracked frames (256x256)",
        f"per-frame: mean {mean_ms:.1f} ms, max {max_ms:.1f} ms "
        f"(gate {SPEED_FRAME_GATE:.0f} ms, soft target {SPEED_SOFT_TARGET:.0f} ms)",
    ]
    metrics = {"frames": len(per_frame), "mean_ms": mean_ms, "max_ms": max_ms}
    return SuiteReport("speed", metrics, passed, "\n".join(lines))


SUITES = {
    "translation": run_translation,
    "rotation": run_rotation,
    "thread": run_thread,
    "speed": run_speed,
}


def run_suite(name: str, config: Config, seed: int) -> SuiteReport:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](config, seed)
