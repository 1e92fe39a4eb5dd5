"""Thread-counting core: learn a blob template, find neighboring blobs by
correlation, extract dominant orientations from the FFT magnitude, select the
lattice basis minimizing the combined distance-plus-angle cost, and decompose
translations into fractional thread counts.

Axis selection cost for a candidate centroid y seen from anchor x:

    d(x, y) = ||x - y|| + w * ||angle(y - x) - theta_ref||

with the angular difference folded modulo 180 into [0, 90] degrees (lattice
axes are undirected). Each reference orientation independently takes the
admissible candidate with the smallest cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter

from .imagecore import GrayImage, bilinear_on_array, fft_magnitude, ncc

__all__ = [
    "BlobTemplate",
    "DominantOrientations",
    "LatticeBasis",
    "ThreadDelta",
    "LatticeError",
    "learn_template",
    "blend_templates",
    "refine_centroids",
    "find_neighbors",
    "dominant_orientations",
    "detect_lattice",
    "refine_basis",
    "thread_decompose",
    "threads_to_physical",
    "lattice_cost",
    "fold_angle",
    "estimate_pitch",
]


class LatticeError(RuntimeError):
    """A lattice-detection stage failed; upstream this signals tracking loss."""


@dataclass(frozen=True, eq=False)
class BlobTemplate:
    """Mean appearance patch of individual blobs (odd dimensions)."""

    patch: GrayImage
    support_count: int

    @property
    def trusted(self) -> bool:
        return self.support_count >= 3

    @property
    def half_width(self) -> int:
        return self.patch.width // 2

    @property
    def half_height(self) -> int:
        return self.patch.height // 2


@dataclass(frozen=True)
class DominantOrientations:
    """Two spatial repetition orientations (degrees in [0, 180), undirected).

    all_peaks rows are (orientation_deg, magnitude, frequency_radius_bins)
    for up to three admitted spectrum peaks, strongest first.
    """

    theta_ref_1: float
    theta_ref_2: float
    peak_magnitudes: tuple[float, float]
    all_peaks: tuple

    def as_pair(self) -> tuple[float, float]:
        return (self.theta_ref_1, self.theta_ref_2)


@dataclass(frozen=True)
class LatticeBasis:
    """Two basis vectors anchored at the tracked blob centroid."""

    anchor: tuple[float, float]
    v1: tuple[float, float]
    v2: tuple[float, float]
    theta_refs: tuple[float, float]

    def det(self) -> float:
        return self.v1[0] * self.v2[1] - self.v1[1] * self.v2[0]


@dataclass(frozen=True)
class ThreadDelta:
    """Fractional thread units along the v1/v2 axes."""

    du: float
    dv: float


def fold_angle(deg: float) -> float:
    """Absolute angular difference folded modulo 180 into [0, 90] degrees."""
    a = abs(deg) % 180.0
    return min(a, 180.0 - a)


def lattice_cost(
    anchor: tuple[float, float],
    candidate: tuple[float, float],
    theta_ref: float,
    w: float,
) -> float:
    """Distance plus weighted angular deviation of candidate from theta_ref."""
    vx = candidate[0] - anchor[0]
    vy = candidate[1] - anchor[1]
    dist = math.hypot(vx, vy)
    ang = math.degrees(math.atan2(vy, vx))
    return dist + w * fold_angle(ang - theta_ref)


def learn_template(
    img: GrayImage, individual_blobs, patch_size: tuple[int, int] | None = None
) -> BlobTemplate:
    """Average the patches of individual blobs, centered on their centroids.

    The patch size defaults to the per-dimension median of blob bounding
    boxes, rounded up to odd. Blobs whose patch would leave the image are
    skipped; each used patch is sampled bilinearly at the blob's subpixel
    centroid.
    """
    blobs = list(individual_blobs)
    if not blobs:
        raise ValueError("cannot learn a template from an empty blob list")
    if patch_size is None:
        widths = []
        heights = []
        for b in blobs:
            xs = b.pixels[:, 0]
            ys = b.pixels[:, 1]
            widths.append(int(xs.max() - xs.min() + 1))
            heights.append(int(ys.max() - ys.min() + 1))
        tw = int(math.ceil(float(np.median(widths))))
        th = int(math.ceil(float(np.median(heights))))
        tw += 1 - (tw % 2)
        th += 1 - (th % 2)
        # a patch below 5x5 carries too little structure to correlate on
        tw = max(tw, 5)
        th = max(th, 5)
    else:
        tw, th = patch_size
        if tw % 2 == 0 or th % 2 == 0:
            raise ValueError("template dimensions must be odd")
    hw, hh = tw // 2, th // 2
    gx, gy = np.meshgrid(
        np.arange(tw, dtype=np.float64) - hw, np.arange(th, dtype=np.float64) - hh
    )
    acc = np.zeros((th, tw), dtype=np.float64)
    used = 0
    for b in blobs:
        cx, cy = b.centroid
        if hw <= cx <= img.width - 1 - hw and hh <= cy <= img.height - 1 - hh:
            acc += bilinear_on_array(img.data, gx + cx, gy + cy)
            used += 1
    if used == 0:
        raise LatticeError("no blob fits a full template patch inside the image")
    return BlobTemplate(GrayImage.from_float(acc / used), used)


def blend_templates(old: BlobTemplate, new: BlobTemplate, weight: float) -> BlobTemplate:
    """Exponential template refresh: (1-weight)*old + weight*new."""
    if old.patch.data.shape != new.patch.data.shape:
        raise ValueError("templates must share a patch size to blend")
    mixed = (1.0 - weight) * old.patch.data.astype(np.float64) + (
        weight * new.patch.data.astype(np.float64)
    )
    return BlobTemplate(GrayImage.from_float(mixed), new.support_count)


def _quadratic_offset(m: np.ndarray, x: int, y: int) -> tuple[float, float]:
    """Subpixel offset of a peak from a 3x3 quadratic fit, clipped to +-0.6."""
    if not (1 <= x < m.shape[1] - 1 and 1 <= y < m.shape[0] - 1):
        return 0.0, 0.0
    cvx = m[y, x - 1] - 2.0 * m[y, x] + m[y, x + 1]
    cvy = m[y - 1, x] - 2.0 * m[y, x] + m[y + 1, x]
    dx = (m[y, x - 1] - m[y, x + 1]) / (2.0 * cvx) if cvx < -1e-12 else 0.0
    dy = (m[y - 1, x] - m[y + 1, x]) / (2.0 * cvy) if cvy < -1e-12 else 0.0
    return float(np.clip(dx, -0.6, 0.6)), float(np.clip(dy, -0.6, 0.6))


def refine_centroids(
    img: GrayImage, template: BlobTemplate, points: np.ndarray, min_corr: float = 0.3
) -> np.ndarray:
    """Snap points to subpixel correlation peaks of the blob template.

    Correlating every blob against the same template cancels the systematic
    part of the binarized-centroid bias between frames, which is what makes
    subpixel transform estimates possible. Points without a usable peak
    within one map cell keep their original position.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    corr = ncc(img, template.patch).values
    hw, hh = template.half_width, template.half_height
    out = pts.copy()
    mh, mw = corr.shape
    for k in range(pts.shape[0]):
        ix = int(math.floor(pts[k, 0] + 0.5)) - hw
        iy = int(math.floor(pts[k, 1] + 0.5)) - hh
        best_v = -2.0
        bx = by = -1
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                x, y = ix + dx, iy + dy
                if 0 <= x < mw and 0 <= y < mh and corr[y, x] > best_v:
                    best_v = corr[y, x]
                    bx, by = x, y
        if bx < 0 or best_v < min_corr:
            continue
        ox, oy = _quadratic_offset(corr, bx, by)
        out[k, 0] = bx + hw + ox
        out[k, 1] = by + hh + oy
    return out


def _local_peaks(values: np.ndarray, floor: float) -> list[tuple[int, int]]:
    """(x, y) integer local maxima strictly above floor (8-neighborhood)."""
    mx = maximum_filter(values, size=3, mode="nearest")
    ys, xs = np.nonzero((values >= mx) & (values > floor))
    return list(zip(xs.tolist(), ys.tolist()))


def find_neighbors(
    img: GrayImage,
    template: BlobTemplate,
    anchor: tuple[float, float],
    search_radius: float,
    ncc_min: float = 0.6,
) -> list[tuple[float, float]]:
    """Candidate neighbor centroids: correlation peaks around the anchor.

    Local maxima of the template correlation above ncc_min inside the search
    window, non-max suppressed at half the template width, excluding the
    anchor's own peak, localized to subpixel by a 3x3 quadratic fit. Raises
    when nothing anywhere in the window clears ncc_min; returns an empty list
    when peaks exist but all fall inside the anchor's suppression radius.
    """
    ax, ay = anchor
    tw, th = template.patch.width, template.patch.height
    hw, hh = tw // 2, th // 2
    x_lo = int(math.floor(ax - search_radius)) - hw
    x_hi = int(math.ceil(ax + search_radius)) - hw
    y_lo = int(math.floor(ay - search_radius)) - hh
    y_hi = int(math.ceil(ay + search_radius)) - hh
    x_lo = max(x_lo, 0)
    y_lo = max(y_lo, 0)
    x_hi = min(x_hi, img.width - tw)
    y_hi = min(y_hi, img.height - th)
    if x_hi < x_lo or y_hi < y_lo:
        raise ValueError("search window does not intersect the valid placement domain")
    sub = GrayImage(img.data[y_lo : y_hi + th, x_lo : x_hi + tw])
    corr = ncc(sub, template.patch).values

    peaks = _local_peaks(corr, ncc_min)
    if not peaks:
        raise LatticeError(
            f"no correlation peaks above {ncc_min} within {search_radius:.0f} px of the anchor"
        )
    peaks.sort(key=lambda p: (-corr[p[1], p[0]], p[1], p[0]))
    suppress = tw // 2
    accepted: list[tuple[float, float, float]] = []
    for px, py in peaks:
        cx = px + x_lo + hw
        cy = py + y_lo + hh
        if any((cx - qx) ** 2 + (cy - qy) ** 2 <= suppress * suppress for qx, qy, _ in accepted):
            continue
        ox, oy = _quadratic_offset(corr, px, py)
        accepted.append((cx + ox, cy + oy, corr[py, px]))
    out = [
        (x, y)
        for x, y, v in accepted
        if (x - ax) ** 2 + (y - ay) ** 2 > suppress * suppress
    ]
    return out


def dominant_orientations(
    img: GrayImage,
    mask_radius: int = 3,
    min_separation: float = 30.0,
    max_peaks: int = 3,
) -> DominantOrientations:
    """Spatial repetition orientations from the FFT magnitude spectrum.

    The DC bin and a low-frequency disc are masked; peaks are 8-neighborhood
    local maxima in the upper half-plane (conjugates deduplicated), refined
    by a 3x3 magnitude-weighted centroid. A spectrum peak at angle a means a
    spatial repetition orientation of a + 90 degrees (mod 180).
    """
    spec = fft_magnitude(img)
    mag = spec.magnitude.copy()
    n = mag.shape[0]
    cy, cx = n // 2, n // 2
    yy, xx = np.mgrid[0:n, 0:n]
    rr2 = (xx - cx) ** 2 + (yy - cy) ** 2
    mag[rr2 <= mask_radius * mask_radius] = 0.0

    half = (yy > cy) | ((yy == cy) & (xx > cx))
    mx = maximum_filter(mag, size=3, mode="nearest")
    pys, pxs = np.nonzero((mag >= mx) & (mag > 0.0) & half)
    if pys.size == 0:
        raise LatticeError("dominant_orientations: no spectrum peaks outside the mask")
    # quantization noise creates micro-maxima; only peaks within two orders
    # of magnitude of the strongest can be real repetition components
    floor = 0.02 * float(mag[pys, pxs].max())
    keep = mag[pys, pxs] >= floor
    pys, pxs = pys[keep], pxs[keep]
    order = np.lexsort((pxs, pys, -mag[pys, pxs]))

    selected: list[tuple[float, float, float]] = []  # (orientation, magnitude, radius)
    for k in order:
        py, px = int(pys[k]), int(pxs[k])
        # magnitude-weighted 3x3 centroid for subpixel bin position
        y0, y1 = max(py - 1, 0), min(py + 2, n)
        x0, x1 = max(px - 1, 0), min(px + 2, n)
        win = mag[y0:y1, x0:x1]
        wy, wx = np.mgrid[y0:y1, x0:x1]
        tot = win.sum()
        fy = float((win * wy).sum() / tot) - cy
        fx = float((win * wx).sum() / tot) - cx
        ang = math.degrees(math.atan2(fy, fx))
        orient = (ang + 90.0) % 180.0
        if any(fold_angle(orient - o) < min_separation for o, _, _ in selected):
            continue
        selected.append((orient, float(mag[py, px]), math.hypot(fx, fy)))
        if len(selected) == max_peaks:
            break
    if len(selected) < 2:
        raise LatticeError(
            f"dominant_orientations: {len(selected)} admissible peaks, need 2"
        )
    return DominantOrientations(
        theta_ref_1=selected[0][0],
        theta_ref_2=selected[1][0],
        peak_magnitudes=(selected[0][1], selected[1][1]),
        all_peaks=tuple(selected),
    )


def estimate_pitch(orients: DominantOrientations, image_size: int) -> float:
    """Lattice pitch in pixels from the selected peak frequencies."""
    radii = [orients.all_peaks[0][2], orients.all_peaks[1][2]]
    return image_size / float(np.mean(radii))


def _ranked_candidates(anchor, candidates, theta_ref, w, angular_tolerance):
    ax, ay = anchor
    rows = []
    for c in candidates:
        vx = c[0] - ax
        vy = c[1] - ay
        dist = math.hypot(vx, vy)
        if dist < 1e-12:
            continue
        ang = math.degrees(math.atan2(vy, vx))
        if fold_angle(ang - theta_ref) > angular_tolerance:
            continue
        rows.append((dist + w * fold_angle(ang - theta_ref), ang % 360.0, (c[0], c[1])))
    rows.sort()
    return rows


def detect_lattice(
    anchor: tuple[float, float],
    candidates,
    orientations: DominantOrientations,
    w: float = 0.5,
    angular_tolerance: float = 15.0,
) -> LatticeBasis:
    """Select one basis vector per reference orientation by smallest cost.

    Candidates outside angular_tolerance of an axis are inadmissible for it.
    Cost ties break toward the smaller polar angle. If both axes pick the
    same candidate, the axis with the lower cost keeps it and the other
    advances to its next best distinct choice (trying the reverse assignment
    before giving up).
    """
    cands = [tuple(map(float, c)) for c in candidates]
    if len(cands) < 2:
        raise LatticeError(f"detect_lattice: need at least 2 candidates, got {len(cands)}")
    t1, t2 = orientations.theta_ref_1, orientations.theta_ref_2
    r1 = _ranked_candidates(anchor, cands, t1, w, angular_tolerance)
    r2 = _ranked_candidates(anchor, cands, t2, w, angular_tolerance)
    if not r1 or not r2:
        raise LatticeError("detect_lattice: an axis has no admissible candidate")

    def first_excluding(rows, taken):
        for _, _, p in rows:
            if p != taken:
                return p
        return None

    p1 = r1[0][2]
    p2 = r2[0][2]
    if p1 == p2:
        if r1[0][0] <= r2[0][0]:
            p2 = first_excluding(r2, p1)
            if p2 is None:
                p2 = r2[0][2]
                p1 = first_excluding(r1, p2)
        else:
            p1 = first_excluding(r1, p2)
            if p1 is None:
                p1 = r1[0][2]
                p2 = first_excluding(r2, p1)
        if p1 is None or p2 is None:
            raise LatticeError("detect_lattice: no admissible candidate pair")
    v1 = (p1[0] - anchor[0], p1[1] - anchor[1])
    v2 = (p2[0] - anchor[0], p2[1] - anchor[1])
    if abs(v1[0] * v2[1] - v1[1] * v2[0]) <= 1e-6:
        raise LatticeError("detect_lattice: selected basis is degenerate")
    return LatticeBasis(tuple(map(float, anchor)), v1, v2, (t1, t2))


def refine_basis(
    anchor: tuple[float, float],
    candidates,
    basis: LatticeBasis,
    max_cells: int = 2,
    lateral_frac: float = 0.3,
    angular_tolerance: float = 15.0,
) -> LatticeBasis:
    """Least-squares refinement of each axis over collinear candidates.

    Candidates approximately at integer multiples k (|k| <= max_cells) of an
    axis vector vote for its direction and length; the fit averages per-blob
    placement noise down. An axis keeps its original vector when fewer than
    2 candidates support it or the refit would leave the angular tolerance
    of its reference orientation.
    """
    ax, ay = anchor
    pts = np.asarray([[c[0] - ax, c[1] - ay] for c in candidates], dtype=np.float64)

    def refit(v, theta_ref):
        vv = np.asarray(v)
        norm2 = float(vv @ vv)
        if norm2 < 1e-12 or pts.size == 0:
            return v
        proj = pts @ vv / norm2
        ks = np.floor(proj + 0.5)
        sel = (np.abs(ks) >= 1) & (np.abs(ks) <= max_cells)
        resid = pts - ks[:, None] * vv[None, :]
        sel &= np.hypot(resid[:, 0], resid[:, 1]) <= lateral_frac * math.sqrt(norm2)
        if sel.sum() < 2:
            return v
        k = ks[sel]
        d = pts[sel]
        vfit = (k[:, None] * d).sum(axis=0) / float((k * k).sum())
        ang = math.degrees(math.atan2(vfit[1], vfit[0]))
        if fold_angle(ang - theta_ref) > angular_tolerance:
            return v
        return (float(vfit[0]), float(vfit[1]))

    v1 = refit(basis.v1, basis.theta_refs[0])
    v2 = refit(basis.v2, basis.theta_refs[1])
    if abs(v1[0] * v2[1] - v1[1] * v2[0]) <= 1e-6:
        return basis
    return LatticeBasis(basis.anchor, v1, v2, basis.theta_refs)


def thread_decompose(translation, basis: LatticeBasis) -> ThreadDelta:
    """Solve [v1 v2] (du, dv)^T = translation by the 2x2 closed form."""
    tx, ty = float(translation[0]), float(translation[1])
    v1, v2 = basis.v1, basis.v2
    det = v1[0] * v2[1] - v1[1] * v2[0]
    if abs(det) <= 1e-9:
        raise ValueError("basis is singular; cannot decompose translation")
    du = (tx * v2[1] - ty * v2[0]) / det
    dv = (v1[0] * ty - v1[1] * tx) / det
    return ThreadDelta(du, dv)


def threads_to_physical(delta: ThreadDelta, mm_per_thread: float) -> tuple[float, float]:
    """Scale thread units to millimeters."""
    if mm_per_thread <= 0:
        raise ValueError("mm_per_thread must be positive")
    return (delta.du * mm_per_thread, delta.dv * mm_per_thread)
