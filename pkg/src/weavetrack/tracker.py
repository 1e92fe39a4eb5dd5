"""Per-frame state machine: detect -> describe -> match -> estimate -> lattice
-> accumulate cumulative warp/weft thread counts relative to the start.

Matching is frame-to-frame (previous vs current) with cumulative composition.
Keypoint positions are refined to subpixel template-correlation peaks before
estimation: correlating every blob against the same template cancels the
systematic part of the binarized-centroid bias, which is what makes the
subpixel accuracy targets reachable. Basis axes are re-aligned to the
previous frame's (advanced) axes every frame so the cumulative (u, v) counts
never flip sign or swap families.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .descriptor import BinaryDescriptor, Keypoint, describe_keypoints, match_features
from .features import MserRegion, classify_blobs, detect_mser
from .geometry import (
    EstimationError,
    RigidTransform,
    compose,
    estimate_rigid,
    identity,
)
from .imagecore import GrayImage
from .lattice import (
    BlobTemplate,
    DominantOrientations,
    LatticeBasis,
    LatticeError,
    ThreadDelta,
    blend_templates,
    detect_lattice,
    dominant_orientations,
    estimate_pitch,
    find_neighbors,
    learn_template,
    refine_basis,
    refine_centroids,
    thread_decompose,
)

__all__ = ["TrackerState", "FrameResult", "FrameData", "init", "track", "reacquire"]


@dataclass
class FrameData:
    """Everything remembered about the previous frame."""

    image: GrayImage
    points: np.ndarray  # refined keypoint positions, (n, 2)
    descriptors: list[BinaryDescriptor]
    regions: list[MserRegion]


@dataclass(frozen=True)
class FrameResult:
    frame_index: int
    transform: RigidTransform
    cumulative_pose: RigidTransform
    thread_delta: ThreadDelta
    cumulative_threads: tuple[float, float]
    lattice: LatticeBasis | None
    inlier_count: int
    match_count: int
    status: str  # tracking | lost | reacquiring
    failed_stage: str | None = None
    discontinuity: bool = False
    timings_ms: dict = field(default_factory=dict)


@dataclass
class TrackerState:
    config: Config
    status: str
    frame_index: int
    cumulative_pose: RigidTransform
    cumulative_threads: tuple[float, float]
    template: BlobTemplate
    patch_size: tuple[int, int]
    descriptor_scale: float
    orientations: DominantOrientations
    search_radius: float
    lattice: LatticeBasis
    prev: FrameData
    pending_discontinuity: bool = False


def _frame_seed(base: int, frame_index: int) -> int:
    return (base * 1_000_003 + frame_index) & 0x7FFFFFFF


def _center_crop(img: GrayImage, size: int) -> GrayImage:
    y0 = (img.height - size) // 2
    x0 = (img.width - size) // 2
    return GrayImage(img.data[y0 : y0 + size, x0 : x0 + size])


def _canonical_axis(v: tuple[float, float]) -> tuple[float, float]:
    """Flip an undirected axis vector into the x > 0 half-plane."""
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        return (-v[0], -v[1])
    return v


def _rotate(v: tuple[float, float], dtheta_deg: float) -> tuple[float, float]:
    r = math.radians(dtheta_deg)
    c, s = math.cos(r), math.sin(r)
    return (v[0] * c + v[1] * s, -v[0] * s + v[1] * c)


def _angle_between(a, b) -> float:
    ang_a = math.degrees(math.atan2(a[1], a[0]))
    ang_b = math.degrees(math.atan2(b[1], b[0]))
    d = abs(ang_a - ang_b) % 180.0
    return min(d, 180.0 - d)


def _align_basis(basis: LatticeBasis, expected_v1, expected_v2) -> LatticeBasis:
    """Reorder and sign-align a fresh basis to the expected axis vectors."""
    pair = (basis.v1, basis.v2)
    thetas = basis.theta_refs
    if _angle_between(pair[0], expected_v1) + _angle_between(pair[1], expected_v2) > (
        _angle_between(pair[1], expected_v1) + _angle_between(pair[0], expected_v2)
    ):
        pair = (pair[1], pair[0])
        thetas = (thetas[1], thetas[0])
    v1, v2 = pair
    if v1[0] * expected_v1[0] + v1[1] * expected_v1[1] < 0:
        v1 = (-v1[0], -v1[1])
    if v2[0] * expected_v2[0] + v2[1] * expected_v2[1] < 0:
        v2 = (-v2[0], -v2[1])
    return LatticeBasis(basis.anchor, v1, v2, thetas)


def _detect_and_describe(
    frame: GrayImage, config: Config, template: BlobTemplate, descriptor_scale: float
):
    """Shared per-frame feature stage: regions, refined points, descriptors."""
    params = config.mser.params_for_area(frame.width * frame.height)
    regions = detect_mser(frame, params)
    if not regions:
        raise LatticeError("no blobs detected")
    raw = np.asarray([r.centroid for r in regions], dtype=np.float64)
    points = refine_centroids(frame, template, raw)
    kps = [Keypoint(points[i, 0], points[i, 1], descriptor_scale) for i in range(len(regions))]
    descs, kept = describe_keypoints(frame, kps, config.descriptor.oriented)
    return regions, points[kept], descs


def _median_axis_scale(regions, scale_factor: float) -> float:
    axes = [(r.ellipse.major + r.ellipse.minor) * 0.5 for r in regions]
    return max(1.0, scale_factor * float(np.median(axes)))


def _lattice_at(
    frame: GrayImage,
    template: BlobTemplate,
    anchor: tuple[float, float],
    orients: DominantOrientations,
    search_radius: float,
    config: Config,
) -> LatticeBasis:
    candidates = find_neighbors(
        frame, template, anchor, search_radius, config.lattice.ncc_min
    )
    basis = detect_lattice(
        anchor, candidates, orients, config.lattice.w, config.lattice.angular_tolerance
    )
    return refine_basis(
        anchor, candidates, basis, angular_tolerance=config.lattice.angular_tolerance
    )


def _analyze_fresh(frame: GrayImage, config: Config):
    """Full phase I + phase III pass used by init and reacquire."""
    crop = config.tracker.fft_crop
    if frame.width < crop or frame.height < crop:
        raise ValueError(
            f"frame {frame.width}x{frame.height} smaller than the FFT crop {crop}"
        )
    params = config.mser.params_for_area(frame.width * frame.height)
    regions = detect_mser(frame, params)
    if len(regions) < 4:
        raise LatticeError(f"only {len(regions)} blobs detected; texture too sparse")
    classes = classify_blobs(regions)
    template = learn_template(frame, classes.individual)
    patch_size = (template.patch.width, template.patch.height)

    orients = dominant_orientations(
        _center_crop(frame, crop),
        config.lattice.mask_radius,
        config.lattice.min_separation,
    )
    pitch = estimate_pitch(orients, crop)
    search_radius = config.lattice.search_radius
    if search_radius <= 0:
        search_radius = max(2.6 * pitch, template.patch.width + 2.0)

    raw = np.asarray([r.centroid for r in regions], dtype=np.float64)
    points = refine_centroids(frame, template, raw)

    # anchor: individual blob nearest the image center
    cx, cy = (frame.width - 1) / 2.0, (frame.height - 1) / 2.0
    individual_idx = [i for i, r in enumerate(regions) if r in classes.individual]
    if not individual_idx:
        individual_idx = list(range(len(regions)))
    best = min(
        individual_idx, key=lambda i: (points[i, 0] - cx) ** 2 + (points[i, 1] - cy) ** 2
    )
    anchor = (float(points[best, 0]), float(points[best, 1]))

    basis = _lattice_at(frame, template, anchor, orients, search_radius, config)
    basis = LatticeBasis(
        basis.anchor,
        _canonical_axis(basis.v1),
        _canonical_axis(basis.v2),
        basis.theta_refs,
    )

    descriptor_scale = _median_axis_scale(regions, config.descriptor.scale_factor)
    kps = [
        Keypoint(points[i, 0], points[i, 1], descriptor_scale)
        for i in range(len(regions))
    ]
    descs, kept = describe_keypoints(frame, kps, config.descriptor.oriented)
    if len(descs) < config.msac.min_inliers:
        raise LatticeError(f"only {len(descs)} describable keypoints")
    data = FrameData(frame, points[kept], descs, regions)
    return data, template, patch_size, descriptor_scale, orients, search_radius, basis


def init(frame: GrayImage, config: Config | None = None) -> TrackerState:
    """Run detection, template learning and lattice detection on frame 0."""
    config = (config or Config()).validate()
    data, template, patch_size, scale, orients, radius, basis = _analyze_fresh(
        frame, config
    )
    return TrackerState(
        config=config,
        status="tracking",
        frame_index=0,
        cumulative_pose=identity(),
        cumulative_threads=(0.0, 0.0),
        template=template,
        patch_size=patch_size,
        descriptor_scale=scale,
        orientations=orients,
        search_radius=radius,
        lattice=basis,
        prev=data,
    )


def _lost_result(state: TrackerState, stage: str, match_count: int = 0) -> FrameResult:
    return FrameResult(
        frame_index=state.frame_index + 1,
        transform=identity(),
        cumulative_pose=state.cumulative_pose,
        thread_delta=ThreadDelta(0.0, 0.0),
        cumulative_threads=state.cumulative_threads,
        lattice=None,
        inlier_count=0,
        match_count=match_count,
        status="lost",
        failed_stage=stage,
    )


def track(state: TrackerState, frame: GrayImage) -> tuple[TrackerState, FrameResult]:
    """Advance the tracker by one frame, mutating state in place."""
    if state.status != "tracking":
        raise ValueError(f"track() requires status 'tracking', state is {state.status!r}")
    config = state.config
    timings: dict[str, float] = {}
    next_index = state.frame_index + 1

    t0 = time.perf_counter()
    try:
        regions, points, descs = _detect_and_describe(
            frame, config, state.template, state.descriptor_scale
        )
    except (LatticeError, ValueError):
        state.status = "lost"
        state.frame_index = next_index
        return state, _lost_result(state, "detect")
    timings["detect_ms"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    matches = match_features(
        state.prev.descriptors, descs, config.descriptor.match_threshold
    )
    timings["match_ms"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    try:
        transform, inlier_mask = estimate_rigid(
            state.prev.points,
            points,
            matches,
            config.msac.params(),
            seed=_frame_seed(config.seed, next_index),
        )
    except EstimationError:
        state.status = "lost"
        state.frame_index = next_index
        return state, _lost_result(state, "estimate", len(matches))
    timings["estimate_ms"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    prev_anchor = np.asarray(state.lattice.anchor)
    advanced = transform.apply(prev_anchor)
    anchor_motion = advanced - prev_anchor

    expected_v1 = _rotate(state.lattice.v1, transform.dtheta)
    expected_v2 = _rotate(state.lattice.v2, transform.dtheta)

    orients = state.orientations
    if abs(transform.dtheta) >= config.tracker.rotation_cache_deg:
        try:
            orients = dominant_orientations(
                _center_crop(frame, config.tracker.fft_crop),
                config.lattice.mask_radius,
                config.lattice.min_separation,
            )
        except LatticeError:
            state.status = "lost"
            state.frame_index = next_index
            return state, _lost_result(state, "orientations", len(matches))

    # re-anchor toward the center when the tracked blob nears the border
    margin = config.tracker.border_margin
    anchor_pt = (float(advanced[0]), float(advanced[1]))
    if not (
        margin <= anchor_pt[0] <= frame.width - 1 - margin
        and margin <= anchor_pt[1] <= frame.height - 1 - margin
    ):
        inlier_cur = points[[m.index_b for m, keep in zip(matches, inlier_mask) if keep]]
        if len(inlier_cur):
            cx, cy = (frame.width - 1) / 2.0, (frame.height - 1) / 2.0
            k = int(
                np.argmin((inlier_cur[:, 0] - cx) ** 2 + (inlier_cur[:, 1] - cy) ** 2)
            )
            anchor_pt = (float(inlier_cur[k, 0]), float(inlier_cur[k, 1]))

    try:
        basis = _lattice_at(
            frame, state.template, anchor_pt, orients, state.search_radius, config
        )
    except (LatticeError, ValueError):
        state.status = "lost"
        state.frame_index = next_index
        return state, _lost_result(state, "lattice", len(matches))
    basis = _align_basis(basis, expected_v1, expected_v2)
    timings["lattice_ms"] = (time.perf_counter() - t0) * 1e3

    delta = thread_decompose(anchor_motion, basis)
    cum_u = state.cumulative_threads[0] + delta.du
    cum_v = state.cumulative_threads[1] + delta.dv

    # periodic template refresh by exponential blending
    if next_index % config.tracker.refresh_period == 0:
        try:
            fresh = learn_template(
                frame, classify_blobs(regions).individual, state.patch_size
            )
            state.template = blend_templates(state.template, fresh, 0.1)
        except (LatticeError, ValueError):
            pass

    discontinuity = state.pending_discontinuity
    state.pending_discontinuity = False
    state.cumulative_pose = compose(state.cumulative_pose, transform)
    state.cumulative_threads = (cum_u, cum_v)
    state.orientations = orients
    state.lattice = basis
    state.prev = FrameData(frame, points, descs, regions)
    state.frame_index = next_index

    result = FrameResult(
        frame_index=next_index,
        transform=transform,
        cumulative_pose=state.cumulative_pose,
        thread_delta=delta,
        cumulative_threads=state.cumulative_threads,
        lattice=basis,
        inlier_count=int(inlier_mask.sum()),
        match_count=len(matches),
        status="tracking",
        discontinuity=discontinuity,
        timings_ms=timings,
    )
    return state, result


def reacquire(state: TrackerState, frame: GrayImage) -> TrackerState:
    """Re-run the init pipeline after a loss, preserving cumulative counters."""
    if state.status != "lost":
        raise ValueError(f"reacquire() requires status 'lost', state is {state.status!r}")
    try:
        data, template, patch_size, scale, orients, radius, basis = _analyze_fresh(
            frame, state.config
        )
    except (LatticeError, ValueError):
        state.frame_index += 1
        return state
    state.status = "tracking"
    state.frame_index += 1
    state.template = template
    state.patch_size = patch_size
    state.descriptor_scale = scale
    state.orientations = orients
    state.search_radius = radius
    state.lattice = basis
    state.prev = data
    state.pending_discontinuity = True
    return state
