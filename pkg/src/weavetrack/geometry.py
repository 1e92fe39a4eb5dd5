"""Rigid 2-D transforms and MSAC-robust estimation from matched point pairs.

Convention: row vectors, p' = p . M with

    M = [[ cos(dt), -sin(dt), 0],
         [ sin(dt),  cos(dt), 0],
         [ dx,       dy,      1]]

so apply(x, y) = (x*c + y*s + dx, -x*s + y*c + dy) with dt in degrees.
Rotation and translation only; no scale or shear terms exist in the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RigidTransform",
    "MsacParams",
    "EstimationError",
    "identity",
    "compose",
    "inverse",
    "decompose",
    "estimate_rigid",
]


class EstimationError(RuntimeError):
    """Robust estimation failed; upstream this signals tracking loss."""


def normalize_angle_deg(theta: float) -> float:
    """Fold an angle in degrees into (-180, 180]."""
    t = math.fmod(theta, 360.0)
    if t > 180.0:
        t -= 360.0
    elif t <= -180.0:
        t += 360.0
    return t


@dataclass(frozen=True)
class RigidTransform:
    """Translation (camera pixels) plus rotation (degrees)."""

    dx: float = 0.0
    dy: float = 0.0
    dtheta: float = 0.0

    def matrix(self) -> np.ndarray:
        r = math.radians(self.dtheta)
        c, s = math.cos(r), math.sin(r)
        return np.array(
            [[c, -s, 0.0], [s, c, 0.0], [self.dx, self.dy, 1.0]], dtype=np.float64
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (n, 2) array (or a single (2,) point) of row vectors."""
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        r = math.radians(self.dtheta)
        c, s = math.cos(r), math.sin(r)
        out = np.empty_like(pts)
        out[:, 0] = pts[:, 0] * c + pts[:, 1] * s + self.dx
        out[:, 1] = -pts[:, 0] * s + pts[:, 1] * c + self.dy
        return out[0] if single else out


@dataclass(frozen=True)
class MsacParams:
    """Knobs for the truncated-quadratic sample-consensus loop."""

    inlier_threshold: float = 1.5
    confidence: float = 0.99
    max_iterations: int = 2000
    min_inliers: int = 6

    def __post_init__(self):
        if self.inlier_threshold <= 0:
            raise ValueError("inlier_threshold must be positive")
        if not (0.0 < self.confidence < 1.0):
            raise ValueError("confidence must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.min_inliers < 2:
            raise ValueError("min_inliers must be >= 2")


def identity() -> RigidTransform:
    return RigidTransform(0.0, 0.0, 0.0)


def compose(t1: RigidTransform, t2: RigidTransform) -> RigidTransform:
    """Matrix product M1 . M2: apply t1 first, then t2. Angles add."""
    r2 = math.radians(t2.dtheta)
    c2, s2 = math.cos(r2), math.sin(r2)
    dx = t1.dx * c2 + t1.dy * s2 + t2.dx
    dy = -t1.dx * s2 + t1.dy * c2 + t2.dy
    return RigidTransform(dx, dy, normalize_angle_deg(t1.dtheta + t2.dtheta))


def inverse(t: RigidTransform) -> RigidTransform:
    r = math.radians(-t.dtheta)
    c, s = math.cos(r), math.sin(r)
    dx = -(t.dx * c + t.dy * s)
    dy = -(-t.dx * s + t.dy * c)
    return RigidTransform(dx, dy, normalize_angle_deg(-t.dtheta))


def decompose(t: RigidTransform) -> tuple[float, float, float]:
    """Report (dx, dy, dtheta) with dtheta normalized into (-180, 180]."""
    return (t.dx, t.dy, normalize_angle_deg(t.dtheta))


def _match_indices(matches) -> tuple[np.ndarray, np.ndarray]:
    ia, ib = [], []
    for m in matches:
        if hasattr(m, "index_a"):
            ia.append(m.index_a)
            ib.append(m.index_b)
        else:
            ia.append(m[0])
            ib.append(m[1])
    return np.asarray(ia, dtype=np.int64), np.asarray(ib, dtype=np.int64)


def _rigid_from_pairs(a: np.ndarray, b: np.ndarray) -> RigidTransform:
    """Least-squares rigid fit b ~ a . R + t (orthogonal Procrustes, 2-D)."""
    am = a.mean(axis=0)
    bm = b.mean(axis=0)
    ac = a - am
    bc = b - bm
    # H = sum_i ac_i^T bc_i; the trace objective peaks at
    # theta* = atan2(hyx - hxy, hxx + hyy) for our row-vector R.
    hxx = float(np.dot(ac[:, 0], bc[:, 0]))
    hyy = float(np.dot(ac[:, 1], bc[:, 1]))
    hxy = float(np.dot(ac[:, 0], bc[:, 1]))
    hyx = float(np.dot(ac[:, 1], bc[:, 0]))
    theta = math.atan2(hyx - hxy, hxx + hyy)
    c, s = math.cos(theta), math.sin(theta)
    dx = bm[0] - (am[0] * c + am[1] * s)
    dy = bm[1] - (-am[0] * s + am[1] * c)
    return RigidTransform(dx, dy, normalize_angle_deg(math.degrees(theta)))


def _residuals(t: RigidTransform, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = t.apply(a) - b
    return np.hypot(d[:, 0], d[:, 1])


def estimate_rigid(
    points_a,
    points_b,
    matches,
    params: MsacParams = MsacParams(),
    seed: int = 0,
) -> tuple[RigidTransform, np.ndarray]:
    """MSAC estimate of the rigid transform mapping matched a-points onto b.

    Two-point minimal samples give exact hypotheses; samples whose points sit
    closer than 2 px are degenerate and rejected. Hypotheses are scored with
    the truncated quadratic loss sum(min(r^2, T^2)); the iteration budget
    adapts to the best inlier ratio at the given confidence, capped at
    max_iterations. The best inlier set is refit by least squares and the
    refit transform plus the inlier mask (in input match order) returned.

    Matches are canonicalized by (index_a, index_b) before sampling, so the
    result does not depend on the order the matches arrive in.
    """
    pa = np.asarray(points_a, dtype=np.float64).reshape(-1, 2)
    pb = np.asarray(points_b, dtype=np.float64).reshape(-1, 2)
    ia, ib = _match_indices(matches)
    n = ia.size
    if n < 2:
        raise EstimationError(f"need at least 2 matches, got {n}")

    order = np.lexsort((ib, ia))
    a = pa[ia[order]]
    b = pb[ib[order]]

    thresh = params.inlier_threshold
    t_sq = thresh * thresh
    rng = np.random.default_rng(seed)

    best_score = math.inf
    best_mask: np.ndarray | None = None
    needed = params.max_iterations
    it = 0
    while it < min(needed, params.max_iterations):
        it += 1
        i, j = rng.choice(n, size=2, replace=False)
        if (
            np.hypot(*(a[i] - a[j])) < 2.0
            or np.hypot(*(b[i] - b[j])) < 2.0
        ):
            continue
        va = a[j] - a[i]
        vb = b[j] - b[i]
        # want vb = va . R; our R rotates row vectors by -theta in the usual
        # math sense, hence the sign flip.
        theta = -math.atan2(va[0] * vb[1] - va[1] * vb[0], float(np.dot(va, vb)))
        c, s = math.cos(theta), math.sin(theta)
        dx = b[i][0] - (a[i][0] * c + a[i][1] * s)
        dy = b[i][1] - (-a[i][0] * s + a[i][1] * c)
        hyp = RigidTransform(dx, dy, math.degrees(theta))
        r = _residuals(hyp, a, b)
        score = float(np.minimum(r * r, t_sq).sum())
        if score < best_score:
            best_score = score
            best_mask = r <= thresh
            w = best_mask.sum() / n
            if w >= 1.0:
                break
            if w > 0.0:
                denom = math.log1p(-(w * w))
                if denom < 0.0:
                    needed = min(
                        params.max_iterations,
                        int(math.ceil(math.log(1.0 - params.confidence) / denom)),
                    )

    if best_mask is None:
        raise EstimationError("no non-degenerate minimal sample found")
    inlier_count = int(best_mask.sum())
    if inlier_count < params.min_inliers:
        raise EstimationError(
            f"best model has {inlier_count} inliers, below minimum {params.min_inliers}"
        )

    refit = _rigid_from_pairs(a[best_mask], b[best_mask])
    mask_input_order = np.zeros(n, dtype=bool)
    mask_input_order[order] = best_mask
    return refit, mask_input_order
