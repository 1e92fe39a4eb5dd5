"""Binary keypoint description on a concentric-ring sampling pattern, plus
Hamming matching with mutual-consistency filtering.

The pattern is one center point and four rings (radii 2.9, 4.9, 7.4, 10.8 at
nominal scale 12, with 10/14/15/20 points), 60 sample points total. Each
point is smoothed by an integral-image box mean whose half-width grows with
the ring's point spacing. The 512 descriptor bits compare the smoothed values
of the 512 shortest-distance point pairs; strictly-greater compares to 1.
Long-distance pairs feed the optional orientation estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imagecore import GrayImage

__all__ = [
    "Keypoint",
    "BinaryDescriptor",
    "Match",
    "describe",
    "describe_keypoints",
    "keypoints_from_regions",
    "hamming",
    "match_features",
]

_RING_RADII = (2.9, 4.9, 7.4, 10.8)
_RING_COUNTS = (10, 14, 15, 20)
_NOMINAL_SCALE = 12.0
_CENTER_BOX_UNIT = 0.8
_LONG_PAIR_MIN_DIST = 13.67  # unit-pattern distance
_N_BITS = 512

# Pattern footprint relative to the blob: the outer ring reaches ~9x the mean
# ellipse axis (a few lattice cells), wide enough that the surrounding fabric
# texture fingerprints each keypoint on an otherwise repetitive weave.
_SCALE_PER_MEAN_AXIS = 10.0


def _build_pattern():
    pts = [(0.0, 0.0)]
    box_units = [_CENTER_BOX_UNIT]
    for r, cnt in zip(_RING_RADII, _RING_COUNTS):
        spacing = math.pi * r / cnt
        for k in range(cnt):
            a = 2.0 * math.pi * k / cnt
            pts.append((r * math.cos(a), r * math.sin(a)))
            box_units.append(spacing)
    pts = np.asarray(pts, dtype=np.float64)
    box_units = np.asarray(box_units, dtype=np.float64)

    n = pts.shape[0]
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            d = math.hypot(pts[i, 0] - pts[j, 0], pts[i, 1] - pts[j, 1])
            pairs.append((d, i, j))
    pairs.sort()
    short = np.asarray([(i, j) for _, i, j in pairs[:_N_BITS]], dtype=np.int64)
    long_pairs = np.asarray(
        [(i, j) for d, i, j in pairs if d > _LONG_PAIR_MIN_DIST], dtype=np.int64
    )
    return pts, box_units, short, long_pairs


_PATTERN_PTS, _BOX_UNITS, _SHORT_PAIRS, _LONG_PAIRS = _build_pattern()
_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint16)


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    scale: float = _NOMINAL_SCALE

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True, eq=False)
class BinaryDescriptor:
    """512 comparison bits packed into 64 bytes, plus the described keypoint."""

    bits: np.ndarray
    keypoint: Keypoint

    def hex(self) -> str:
        return self.bits.tobytes().hex()


@dataclass(frozen=True)
class Match:
    index_a: int
    index_b: int
    distance: int


def keypoints_from_regions(regions, scale_factor: float = _SCALE_PER_MEAN_AXIS):
    """Keypoints at region centroids; scale from the mean ellipse axis."""
    kps = []
    for r in regions:
        mean_axis = 0.5 * (r.ellipse.major + r.ellipse.minor)
        kps.append(
            Keypoint(r.centroid[0], r.centroid[1], max(1.0, scale_factor * mean_axis))
        )
    return kps


def _integral_image(data: np.ndarray) -> np.ndarray:
    ii = np.zeros((data.shape[0] + 1, data.shape[1] + 1), dtype=np.int64)
    np.cumsum(np.cumsum(data.astype(np.int64), axis=0), axis=1, out=ii[1:, 1:])
    return ii


def _margin_for_scale(scale: float) -> float:
    s = scale / _NOMINAL_SCALE
    outer = _RING_RADII[-1] * s
    box = max(1, int(math.floor(_BOX_UNITS.max() * s + 0.5)))
    return outer + box + 1.5


def _sample_means(
    ii: np.ndarray, kps_xy: np.ndarray, scales: np.ndarray, angles: np.ndarray | None
) -> np.ndarray:
    """Box means at every pattern point for every keypoint, (n, 60)."""
    h = ii.shape[0] - 1
    w = ii.shape[1] - 1
    s = (scales / _NOMINAL_SCALE)[:, None]
    off = _PATTERN_PTS[None, :, :] * s[:, :, None]
    if angles is not None:
        ca = np.cos(angles)[:, None]
        sa = np.sin(angles)[:, None]
        ox = off[:, :, 0] * ca - off[:, :, 1] * sa
        oy = off[:, :, 0] * sa + off[:, :, 1] * ca
    else:
        ox = off[:, :, 0]
        oy = off[:, :, 1]
    cx = np.floor(kps_xy[:, 0:1] + ox + 0.5).astype(np.int64)
    cy = np.floor(kps_xy[:, 1:2] + oy + 0.5).astype(np.int64)
    b = np.maximum(1, np.floor(_BOX_UNITS[None, :] * s + 0.5).astype(np.int64))
    x0 = np.clip(cx - b, 0, w)
    x1 = np.clip(cx + b + 1, 0, w)
    y0 = np.clip(cy - b, 0, h)
    y1 = np.clip(cy + b + 1, 0, h)
    sums = ii[y1, x1] - ii[y0, x1] - ii[y1, x0] + ii[y0, x0]
    area = (x1 - x0) * (y1 - y0)
    return sums / np.maximum(area, 1)


def _orientations(means: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Gradient direction over long-distance pairs, one angle per keypoint."""
    i = _LONG_PAIRS[:, 0]
    j = _LONG_PAIRS[:, 1]
    dp = _PATTERN_PTS[j] - _PATTERN_PTS[i]
    d2 = (dp * dp).sum(axis=1)
    s = scales / _NOMINAL_SCALE
    diff = means[:, j] - means[:, i]
    gx = (diff * (dp[None, :, 0] / d2[None, :])).sum(axis=1) / s
    gy = (diff * (dp[None, :, 1] / d2[None, :])).sum(axis=1) / s
    return np.arctan2(gy, gx)


def describe_keypoints(
    img: GrayImage, keypoints, oriented: bool = False
) -> tuple[list[BinaryDescriptor], list[int]]:
    """Describe every keypoint far enough from the border.

    Returns the descriptors plus the indices of the keypoints kept; keypoints
    whose pattern would leave the image are dropped.
    """
    kept = [
        i
        for i, kp in enumerate(keypoints)
        if _margin_for_scale(kp.scale) <= kp.x <= img.width - 1 - _margin_for_scale(kp.scale)
        and _margin_for_scale(kp.scale) <= kp.y <= img.height - 1 - _margin_for_scale(kp.scale)
    ]
    if not kept:
        return [], []
    ii = _integral_image(img.data)
    xy = np.asarray([[keypoints[i].x, keypoints[i].y] for i in kept])
    scales = np.asarray([keypoints[i].scale for i in kept])
    angles = None
    if oriented:
        base = _sample_means(ii, xy, scales, None)
        angles = _orientations(base, scales)
    means = _sample_means(ii, xy, scales, angles)
    bits = means[:, _SHORT_PAIRS[:, 0]] > means[:, _SHORT_PAIRS[:, 1]]
    packed = np.packbits(bits, axis=1)
    out = [
        BinaryDescriptor(packed[k].copy(), keypoints[i]) for k, i in enumerate(kept)
    ]
    return out, kept


def describe(img: GrayImage, kp: Keypoint, oriented: bool = False) -> BinaryDescriptor:
    """Describe a single keypoint; raises if it sits too close to the border."""
    descs, kept = describe_keypoints(img, [kp], oriented)
    if not kept:
        raise ValueError(
            f"keypoint ({kp.x:.1f}, {kp.y:.1f}) too close to the border for its "
            f"pattern (margin {_margin_for_scale(kp.scale):.1f} px)"
        )
    return descs[0]


def hamming(a: BinaryDescriptor, b: BinaryDescriptor) -> int:
    """Population count of the XOR of the two bit strings."""
    return int(_POPCOUNT[np.bitwise_xor(a.bits, b.bits)].sum())


def match_features(
    set_a: list[BinaryDescriptor], set_b: list[BinaryDescriptor], threshold: int = 120
) -> list[Match]:
    """Mutual nearest-neighbor matches with distance at most `threshold`.

    A pair survives only if each side is the other's nearest neighbor
    (nearest-neighbor ties resolve to the lowest index). The result is
    one-to-one, sorted by ascending distance with ties broken by index_b.
    """
    if not (0 <= threshold <= _N_BITS):
        raise ValueError(f"threshold must lie in [0, {_N_BITS}], got {threshold}")
    if not set_a or not set_b:
        return []
    a = np.stack([d.bits for d in set_a])
    b = np.stack([d.bits for d in set_b])
    dist = _POPCOUNT[np.bitwise_xor(a[:, None, :], b[None, :, :])].sum(
        axis=2, dtype=np.int64
    )
    nn_b = dist.argmin(axis=1)
    nn_a = dist.argmin(axis=0)
    matches = []
    for i, j in enumerate(nn_b):
        d = int(dist[i, j])
        if nn_a[j] == i and d <= threshold:
            matches.append(Match(i, int(j), d))
    matches.sort(key=lambda m: (m.distance, m.index_b))
    return matches
