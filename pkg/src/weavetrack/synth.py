"""Synthetic near-regular weave generator with exact ground truth.

Frames are rendered analytically: every camera pixel is inverse-mapped through
the pose into fabric coordinates, where blob bumps sit on a jittered lattice
and a static value-noise field models yarn micro-texture. Because both the
jitter offsets and the noise field are hashed from (seed, cell) they are
rigidly attached to the fabric: any real-valued pose renders exactly, with no
resampling error, and the fabric carries a stable per-blob fingerprint that a
tracker can lock onto.

Poses translate and rotate the fabric about the image center (the stage
frame). The camera-space transform between two posed frames therefore differs
from the raw pose delta whenever rotation is involved; truth records store the
stage-frame pose, which is what the error metrics compare against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .geometry import RigidTransform
from .imagecore import GrayImage, save_pgm

__all__ = [
    "WeaveSpec",
    "TruthRecord",
    "render",
    "generate_sequence",
    "translation_schedule",
    "rotation_schedule",
    "write_truth",
    "read_truth",
]

# Fabric value-noise grid spacing in fabric pixels. Coarse enough that the
# texture survives subpixel resampling between frames, fine enough that a
# descriptor footprint spans many independent values, and deliberately
# incommensurate with the default 7.53 px lattice pitch (a rational ratio
# makes the noise-blob moire resonate at specific rotation angles).
_NOISE_GRID = 4.65

TRUTH_HEADER = "# weavetrack-truth v1"


@dataclass(frozen=True)
class WeaveSpec:
    """Geometry and appearance of the synthetic weave."""

    size: int = 256
    v1: tuple[float, float] = (7.53, 0.0)
    v2: tuple[float, float] = (0.0, 7.53)
    peak: float = 150.0
    sigma_major: float = 2.1
    sigma_minor: float = 1.7
    blob_orientation: float = 20.0
    background: float = 60.0
    noise_sigma: float = 0.0
    jitter_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.size < 16:
            raise ValueError("size must be at least 16")
        det = self.v1[0] * self.v2[1] - self.v1[1] * self.v2[0]
        if abs(det) < 1e-9:
            raise ValueError("basis vectors must be linearly independent")
        pitch = min(math.hypot(*self.v1), math.hypot(*self.v2))
        if not (0.0 < self.sigma_minor <= self.sigma_major):
            raise ValueError("need 0 < sigma_minor <= sigma_major")
        if self.sigma_major >= pitch / 3.0:
            raise ValueError(
                f"sigma_major {self.sigma_major} too large for pitch {pitch:.3f}; "
                "adjacent blobs would merge"
            )
        if self.noise_sigma < 0 or self.jitter_sigma < 0:
            raise ValueError("noise and jitter sigmas must be nonnegative")

    @property
    def pitch(self) -> float:
        return min(math.hypot(*self.v1), math.hypot(*self.v2))


@dataclass(frozen=True)
class TruthRecord:
    """Stage-frame pose of one frame plus the per-frame thread delta."""

    frame_index: int
    dx: float
    dy: float
    dtheta: float
    v1: tuple[float, float]
    v2: tuple[float, float]
    du: float
    dv: float


def _hash_normal(seed: int, stream: int, ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    """Deterministic standard-normal value per integer cell (splitmix64)."""
    mix = ((seed & 0xFFFFFFFF) * 0x165667B19E3779F9 + stream * 0xD6E8FEB86659FD93) & 0xFFFFFFFFFFFFFFFF
    h = (
        np.asarray(ix, dtype=np.int64).astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
        ^ np.asarray(iy, dtype=np.int64).astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
        ^ np.uint64(mix)
    )
    h ^= h >> np.uint64(30)
    h *= np.uint64(0xBF58476D1CE4E5B9)
    h ^= h >> np.uint64(27)
    h *= np.uint64(0x94D049BB133111EB)
    h ^= h >> np.uint64(31)
    u = ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def _fabric_noise(spec: WeaveSpec, qx: np.ndarray, qy: np.ndarray) -> np.ndarray:
    """Static value-noise field over fabric coords, bilinear between grid nodes."""
    gx = qx / _NOISE_GRID
    gy = qy / _NOISE_GRID
    x0 = np.floor(gx).astype(np.int64)
    y0 = np.floor(gy).astype(np.int64)
    fx = gx - x0
    fy = gy - y0
    n00 = _hash_normal(spec.seed, 3, x0, y0)
    n01 = _hash_normal(spec.seed, 3, x0 + 1, y0)
    n10 = _hash_normal(spec.seed, 3, x0, y0 + 1)
    n11 = _hash_normal(spec.seed, 3, x0 + 1, y0 + 1)
    top = n00 * (1.0 - fx) + n01 * fx
    bot = n10 * (1.0 - fx) + n11 * fx
    return top * (1.0 - fy) + bot * fy


def render(spec: WeaveSpec, pose: RigidTransform) -> GrayImage:
    """Render the weave under a stage pose (rotation about the image center)."""
    n = spec.size
    c = (n - 1) / 2.0
    ys, xs = np.mgrid[0:n, 0:n].astype(np.float64)

    # camera -> fabric: q = (p - c - t) . R(-theta) + c
    r = math.radians(-pose.dtheta)
    co, si = math.cos(r), math.sin(r)
    px = xs - c - pose.dx
    py = ys - c - pose.dy
    qx = px * co + py * si + c
    qy = -px * si + py * co + c

    # lattice cell coordinates of each fabric point
    b = np.array([[spec.v1[0], spec.v1[1]], [spec.v2[0], spec.v2[1]]], dtype=np.float64)
    binv = np.linalg.inv(b.T)
    rel_x = qx - c
    rel_y = qy - c
    u = binv[0, 0] * rel_x + binv[0, 1] * rel_y
    v = binv[1, 0] * rel_x + binv[1, 1] * rel_y
    i0 = np.floor(u + 0.5).astype(np.int64)
    j0 = np.floor(v + 0.5).astype(np.int64)

    ro = math.radians(spec.blob_orientation)
    cob, sib = math.cos(ro), math.sin(ro)
    inv_sm2 = 1.0 / (spec.sigma_major * spec.sigma_major)
    inv_sn2 = 1.0 / (spec.sigma_minor * spec.sigma_minor)

    out = np.full((n, n), spec.background, dtype=np.float64)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            ci = i0 + di
            cj = j0 + dj
            cx = c + ci * spec.v1[0] + cj * spec.v2[0]
            cy = c + ci * spec.v1[1] + cj * spec.v2[1]
            if spec.jitter_sigma > 0.0:
                cx = cx + spec.jitter_sigma * _hash_normal(spec.seed, 1, ci, cj)
                cy = cy + spec.jitter_sigma * _hash_normal(spec.seed, 2, ci, cj)
            dx = qx - cx
            dy = qy - cy
            a = dx * cob + dy * sib
            bb = -dx * sib + dy * cob
            out += spec.peak * np.exp(-0.5 * (a * a * inv_sm2 + bb * bb * inv_sn2))

    if spec.noise_sigma > 0.0:
        out += 255.0 * spec.noise_sigma * _fabric_noise(spec, qx, qy)

    return GrayImage.from_float(out)


def blob_centers(spec: WeaveSpec, pose: RigidTransform = RigidTransform()) -> np.ndarray:
    """Camera-space centers of all blob bumps visible in the frame (truth aid)."""
    n = spec.size
    c = (n - 1) / 2.0
    reach = int(math.ceil(n / spec.pitch)) + 2
    ii, jj = np.mgrid[-reach : reach + 1, -reach : reach + 1]
    ii = ii.ravel()
    jj = jj.ravel()
    fx = c + ii * spec.v1[0] + jj * spec.v2[0]
    fy = c + ii * spec.v1[1] + jj * spec.v2[1]
    if spec.jitter_sigma > 0.0:
        fx = fx + spec.jitter_sigma * _hash_normal(spec.seed, 1, ii, jj)
        fy = fy + spec.jitter_sigma * _hash_normal(spec.seed, 2, ii, jj)
    r = math.radians(pose.dtheta)
    co, si = math.cos(r), math.sin(r)
    px = (fx - c) * co + (fy - c) * si + c + pose.dx
    py = -(fx - c) * si + (fy - c) * co + c + pose.dy
    keep = (px >= 0) & (px <= n - 1) & (py >= 0) & (py <= n - 1)
    return np.column_stack([px[keep], py[keep]])


def translation_schedule(steps: int = 20, step_px: float = 7.53) -> list[RigidTransform]:
    """Horizontal sweep: steps+1 poses at dx = 0, step, 2*step, ..."""
    return [RigidTransform(k * step_px, 0.0, 0.0) for k in range(steps + 1)]


def rotation_schedule(steps: int = 60, step_deg: float = 1.0 / 6.0) -> list[RigidTransform]:
    """Rotation sweep: steps+1 poses at dtheta = 0, step, 2*step, ..."""
    return [RigidTransform(0.0, 0.0, k * step_deg) for k in range(steps + 1)]


def _rotate_vec(v: tuple[float, float], theta_deg: float) -> tuple[float, float]:
    r = math.radians(theta_deg)
    co, si = math.cos(r), math.sin(r)
    return (v[0] * co + v[1] * si, -v[0] * si + v[1] * co)


def truth_records(spec: WeaveSpec, poses: list[RigidTransform]) -> list[TruthRecord]:
    """Ground truth per frame: stage pose plus thread delta vs previous frame.

    The thread delta decomposes the camera-space motion of the fabric point at
    the image center into the frame's (rotated) lattice basis; for pure
    translation schedules this is exact for every fabric point.
    """
    records = []
    c = (spec.size - 1) / 2.0
    center = np.array([c, c])
    for k, pose in enumerate(poses):
        v1 = _rotate_vec(spec.v1, pose.dtheta)
        v2 = _rotate_vec(spec.v2, pose.dtheta)
        if k == 0:
            du = dv = 0.0
        else:
            prev = poses[k - 1]
            # fabric point under the center in frame k-1, moved to frame k
            r = math.radians(-prev.dtheta)
            co, si = math.cos(r), math.sin(r)
            tx, ty = prev.dx, prev.dy
            q = np.array([-tx * co - ty * si + c, tx * si - ty * co + c])
            rr = math.radians(pose.dtheta)
            co2, si2 = math.cos(rr), math.sin(rr)
            px = (q[0] - c) * co2 + (q[1] - c) * si2 + c + pose.dx
            py = -(q[0] - c) * si2 + (q[1] - c) * co2 + c + pose.dy
            delta = np.array([px, py]) - center
            bmat = np.array([[v1[0], v2[0]], [v1[1], v2[1]]])
            du, dv = np.linalg.solve(bmat, delta)
        records.append(
            TruthRecord(k, pose.dx, pose.dy, pose.dtheta, v1, v2, float(du), float(dv))
        )
    return records


def write_truth(records: list[TruthRecord], path: str | Path) -> None:
    lines = [TRUTH_HEADER]
    for r in records:
        lines.append(
            f"frame={r.frame_index} dx={r.dx:.9f} dy={r.dy:.9f} dtheta={r.dtheta:.9f} "
            f"v1x={r.v1[0]:.9f} v1y={r.v1[1]:.9f} v2x={r.v2[0]:.9f} v2y={r.v2[1]:.9f} "
            f"du={r.du:.9f} dv={r.dv:.9f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_truth(path: str | Path) -> list[TruthRecord]:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != TRUTH_HEADER:
        raise ValueError(f"not a weavetrack truth file: {path}")
    records = []
    for line in lines[1:]:
        kv = dict(tok.split("=", 1) for tok in line.split())
        records.append(
            TruthRecord(
                int(kv["frame"]),
                float(kv["dx"]),
                float(kv["dy"]),
                float(kv["dtheta"]),
                (float(kv["v1x"]), float(kv["v1y"])),
                (float(kv["v2x"]), float(kv["v2y"])),
                float(kv["du"]),
                float(kv["dv"]),
            )
        )
    return records


def generate_sequence(
    spec: WeaveSpec, poses: list[RigidTransform], out_dir: str | Path
) -> tuple[list[Path], Path]:
    """Render one PGM per pose plus the truth file; returns (frames, truth path)."""
    if not poses:
        raise ValueError("pose list must be nonempty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame_paths = []
    for k, pose in enumerate(poses):
        img = render(spec, pose)
        p = out / f"frame_{k:04d}.pgm"
        save_pgm(img, p)
        frame_paths.append(p)
    truth_path = out / "truth.txt"
    write_truth(truth_records(spec, poses), truth_path)
    return frame_paths, truth_path
