"""MSER blob detection on a union-find component tree, ellipse fitting, and
the individual-vs-grouping blob split that feeds template learning.

Thresholding convention: the core operates on level sets {levels <= t} with
4-connected components, so bright blobs are found by running on the inverted
image. Level indices run from 0 to the image maximum (not 255), which makes
the detected pixel sets exactly invariant under adding a constant to all
pixels (as long as nothing clips).

For each seed pixel s (the minimum-(level, raster) pixel of a component) the
chain of components containing s is followed upward while s remains the
component's seed. Along that chain the variation at level i is

    q(i) = (|Q(i + delta)| - |Q(i - delta)|) / |Q(i)|

where Q(j) is the component containing s at level j, the upper level clamps
at the image maximum, and |Q(i - delta)| is 0 when i - delta falls below the
seed's own level. Regions kept are local minima of q along the chain (ends
compared against +inf), then filtered by area bounds, max_variation, and
min_diversity collapse of close-nested regions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .imagecore import GrayImage

__all__ = [
    "MserParams",
    "MserRegion",
    "Ellipse",
    "BlobClasses",
    "detect_mser",
    "extremal_regions",
    "fit_ellipse",
    "classify_blobs",
]


@dataclass(frozen=True)
class MserParams:
    """Detector knobs. max_area=None resolves to 1% of the image area."""

    delta: int = 5
    min_area: int = 30
    max_area: int | None = None
    max_variation: float = 0.25
    min_diversity: float = 0.2
    polarity: str = "bright"

    def __post_init__(self):
        if self.delta < 1:
            raise ValueError("delta must be >= 1")
        if self.min_area <= 0:
            raise ValueError("min_area must be positive")
        if self.max_area is not None and self.max_area <= self.min_area:
            raise ValueError("max_area must exceed min_area")
        if self.max_variation <= 0:
            raise ValueError("max_variation must be positive")
        if not (0.0 <= self.min_diversity < 1.0):
            raise ValueError("min_diversity must lie in [0, 1)")
        if self.polarity not in ("bright", "dark", "both"):
            raise ValueError(f"unknown polarity {self.polarity!r}")


@dataclass(frozen=True)
class Ellipse:
    """Second-moment ellipse: axis lengths are 2*sqrt(eigenvalue)."""

    cx: float
    cy: float
    major: float
    minor: float
    orientation: float  # degrees in [0, 180)
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class MserRegion:
    """One detected extremal region.

    pixels is an (n, 2) int array of (x, y) coordinates in raster order.
    stability is the relative area variation; lower means more stable.
    """

    pixels: np.ndarray
    area: int
    centroid: tuple[float, float]
    ellipse: Ellipse
    stability: float
    mean_intensity: float
    polarity: str


@dataclass(frozen=True)
class BlobClasses:
    individual: list
    grouping: list
    low_confidence: bool = False


@njit(cache=True)
def _find(zpar, x):
    root = x
    while zpar[root] != root:
        root = zpar[root]
    while zpar[x] != root:
        nxt = zpar[x]
        zpar[x] = root
        x = nxt
    return root


@njit(cache=True)
def _build_tree(order, levels, width, height):
    """Union-find flooding over sorted intensities; returns canonical parents."""
    n = order.size
    parent = np.empty(n, np.int64)
    zpar = np.full(n, -1, np.int64)
    for k in range(n):
        p = order[k]
        parent[p] = p
        zpar[p] = p
        x = p % width
        y = p // width
        for t in range(4):
            if t == 0:
                if x == 0:
                    continue
                q = p - 1
            elif t == 1:
                if x == width - 1:
                    continue
                q = p + 1
            elif t == 2:
                if y == 0:
                    continue
                q = p - width
            else:
                if y == height - 1:
                    continue
                q = p + width
            if zpar[q] >= 0:
                r = _find(zpar, q)
                if r != p:
                    parent[r] = p
                    zpar[r] = p
    # canonize root-first so every parent pointer lands on a canonical pixel
    for k in range(n - 1, -1, -1):
        p = order[k]
        q = parent[p]
        if levels[parent[q]] == levels[q]:
            parent[p] = parent[q]
    return parent


@njit(cache=True)
def _node_stats(parent, order, levels):
    """Compact the canonical pixels into node arrays (level, parent, area, seed)."""
    n = parent.size
    node_id = np.full(n, -1, np.int64)
    m = 0
    for k in range(n):
        p = order[k]
        if parent[p] == p or levels[parent[p]] != levels[p]:
            node_id[p] = m
            m += 1
    pix_node = np.empty(n, np.int64)
    for p in range(n):
        if node_id[p] >= 0:
            pix_node[p] = node_id[p]
        else:
            pix_node[p] = node_id[parent[p]]
    node_level = np.empty(m, np.int64)
    node_parent = np.full(m, -1, np.int64)
    for p in range(n):
        c = node_id[p]
        if c >= 0:
            node_level[c] = levels[p]
            q = parent[p]
            if q != p:
                pid = node_id[q]
                if pid < 0:
                    pid = node_id[parent[q]]
                node_parent[c] = pid
    rank = np.empty(n, np.int64)
    for k in range(n):
        rank[order[k]] = k
    node_area = np.zeros(m, np.int64)
    node_seed = np.full(m, n, np.int64)
    for p in range(n):
        c = pix_node[p]
        node_area[c] += 1
        if rank[p] < node_seed[c]:
            node_seed[c] = rank[p]
    # child ids are always smaller than parent ids (strictly lower levels),
    # so one ascending pass accumulates subtrees
    for c in range(m):
        pn = node_parent[c]
        if pn >= 0:
            node_area[pn] += node_area[c]
            if node_seed[c] < node_seed[pn]:
                node_seed[pn] = node_seed[c]
    return pix_node, node_level, node_parent, node_area, node_seed


@njit(cache=True)
def _chain_stability(node_level, node_parent, node_area, node_seed, delta, lmax):
    """Per-node best local-minimum variation along its seed chain (inf if none)."""
    m = node_level.size
    stability = np.full(m, np.inf, np.float64)
    key = node_seed * (lmax + 2) + node_level
    sorted_nodes = np.argsort(key)
    qbuf = np.empty(lmax + 2, np.float64)
    nodebuf = np.empty(lmax + 1, np.int64)
    i = 0
    while i < m:
        s = node_seed[sorted_nodes[i]]
        j = i
        while j < m and node_seed[sorted_nodes[j]] == s:
            j += 1
        start_lvl = node_level[sorted_nodes[i]]
        last = sorted_nodes[j - 1]
        pn = node_parent[last]
        end_lvl = lmax if pn < 0 else node_level[pn] - 1
        for idx in range(i, j):
            c = sorted_nodes[idx]
            lo = node_level[c]
            hi = end_lvl if idx == j - 1 else node_level[sorted_nodes[idx + 1]] - 1
            for lvl in range(lo, hi + 1):
                nodebuf[lvl - start_lvl] = c
        span = end_lvl - start_lvl + 1
        anc = sorted_nodes[i]
        for off in range(span):
            lvl = start_lvl + off
            cur = nodebuf[off]
            tgt_hi = lvl + delta
            if tgt_hi > lmax:
                tgt_hi = lmax
            while True:
                ap = node_parent[anc]
                a_end = lmax if ap < 0 else node_level[ap] - 1
                if a_end >= tgt_hi:
                    break
                anc = ap
            area_hi = node_area[anc]
            tgt_lo = lvl - delta
            if tgt_lo < start_lvl:
                area_lo = 0
            else:
                area_lo = node_area[nodebuf[tgt_lo - start_lvl]]
            qbuf[off] = (area_hi - area_lo) / node_area[cur]
        for off in range(span):
            q = qbuf[off]
            if (off == 0 or q <= qbuf[off - 1]) and (
                off == span - 1 or q <= qbuf[off + 1]
            ):
                c = nodebuf[off]
                if q < stability[c]:
                    stability[c] = q
        i = j
    return stability


@njit(cache=True)
def _subtree_intervals(node_parent):
    """DFS intervals: node d lies in c's subtree iff tin[c] <= tin[d] < tin[c]+size[c]."""
    m = node_parent.size
    size = np.ones(m, np.int64)
    for c in range(m):
        p = node_parent[c]
        if p >= 0:
            size[p] += size[c]
    tin = np.zeros(m, np.int64)
    cursor = np.zeros(m, np.int64)
    for c in range(m - 1, -1, -1):
        p = node_parent[c]
        if p < 0:
            tin[c] = 0
        else:
            tin[c] = tin[p] + cursor[p]
            cursor[p] += size[c]
        cursor[c] = 1
    return tin, size


@njit(cache=True)
def _diversity_collapse(cands, tin, size, node_area, min_diversity):
    """Greedy keep (best first); drop close-nested duplicates of kept regions."""
    k = cands.size
    keep = np.zeros(k, np.bool_)
    kept = np.empty(k, np.int64)
    nk = 0
    for t in range(k):
        c = cands[t]
        ok = True
        for u in range(nk):
            d = kept[u]
            nested = (tin[d] <= tin[c] < tin[d] + size[d]) or (
                tin[c] <= tin[d] < tin[c] + size[c]
            )
            if nested:
                if node_area[d] >= node_area[c]:
                    big, small = node_area[d], node_area[c]
                else:
                    big, small = node_area[c], node_area[d]
                if (big - small) / big < min_diversity:
                    ok = False
                    break
        if ok:
            keep[t] = True
            kept[nk] = c
            nk += 1
    return keep


def _ellipse_from_coords(xs: np.ndarray, ys: np.ndarray) -> Ellipse:
    cx = float(xs.mean())
    cy = float(ys.mean())
    dx = xs - cx
    dy = ys - cy
    mxx = float((dx * dx).mean())
    myy = float((dy * dy).mean())
    mxy = float((dx * dy).mean())
    tr = mxx + myy
    det = mxx * myy - mxy * mxy
    disc = max(tr * tr / 4.0 - det, 0.0)
    lam1 = tr / 2.0 + math.sqrt(disc)
    lam2 = max(tr / 2.0 - math.sqrt(disc), 0.0)
    major = 2.0 * math.sqrt(lam1)
    minor = 2.0 * math.sqrt(lam2)
    degenerate = minor < 0.5
    minor = max(minor, 0.5)
    major = max(major, minor)
    theta = 0.5 * math.degrees(math.atan2(2.0 * mxy, mxx - myy))
    theta %= 180.0
    return Ellipse(cx, cy, major, minor, theta, degenerate)


def fit_ellipse(region_or_pixels) -> Ellipse:
    """Ellipse from the second central moments of a pixel set (area >= 5)."""
    if isinstance(region_or_pixels, MserRegion):
        pts = region_or_pixels.pixels
    else:
        pts = np.asarray(region_or_pixels, dtype=np.int64).reshape(-1, 2)
    if pts.shape[0] < 5:
        raise ValueError(f"need at least 5 pixels to fit an ellipse, got {pts.shape[0]}")
    return _ellipse_from_coords(pts[:, 0].astype(np.float64), pts[:, 1].astype(np.float64))


def extremal_regions(
    levels: np.ndarray,
    params: MserParams,
    polarity: str,
    intensities: np.ndarray | None = None,
) -> list[MserRegion]:
    """Core detector over level sets {levels <= t}; no minimum-size gate.

    `levels` drives thresholding; `intensities` (defaults to levels) is what
    mean_intensity is computed from, so callers can pass the inverted image
    for thresholds while recording original intensities.
    """
    lv = np.ascontiguousarray(levels, dtype=np.uint8)
    if intensities is None:
        intensities = lv
    height, width = lv.shape
    n = height * width
    flat = lv.reshape(-1).astype(np.int64)
    order = np.argsort(flat, kind="stable").astype(np.int64)
    lmax = int(flat.max())

    parent = _build_tree(order, flat, width, height)
    pix_node, node_level, node_parent, node_area, node_seed = _node_stats(
        parent, order, flat
    )
    stability = _chain_stability(
        node_level, node_parent, node_area, node_seed, params.delta, lmax
    )

    max_area = params.max_area if params.max_area is not None else max(
        int(0.01 * n), params.min_area + 1
    )
    cand_mask = (
        np.isfinite(stability)
        & (node_area >= params.min_area)
        & (node_area <= max_area)
        & (stability <= params.max_variation)
    )
    cand = np.nonzero(cand_mask)[0]
    if cand.size == 0:
        return []

    # strict total order: variation, then area, then seed rank, then level
    sort_idx = np.lexsort(
        (node_level[cand], node_seed[cand], node_area[cand], stability[cand])
    )
    cand = cand[sort_idx]

    tin, size = _subtree_intervals(node_parent)
    keep = _diversity_collapse(
        cand, tin, size, node_area, float(params.min_diversity)
    )
    kept = cand[keep]
    if kept.size == 0:
        return []

    # pixels of a node's subtree: group pixels by their node's DFS interval
    pixkey = tin[pix_node]
    po = np.argsort(pixkey, kind="stable")
    sorted_keys = pixkey[po]
    inten = np.asarray(intensities, dtype=np.float64).reshape(-1)

    regions = []
    for c in kept:
        lo = int(np.searchsorted(sorted_keys, tin[c], side="left"))
        hi = int(np.searchsorted(sorted_keys, tin[c] + size[c], side="left"))
        idx = po[lo:hi]
        xs = (idx % width).astype(np.int64)
        ys = (idx // width).astype(np.int64)
        ras = np.lexsort((xs, ys))
        pts = np.column_stack((xs[ras], ys[ras]))
        centroid = (float(xs.mean()), float(ys.mean()))
        ell = _ellipse_from_coords(xs.astype(np.float64), ys.astype(np.float64))
        regions.append(
            MserRegion(
                pixels=pts,
                area=int(node_area[c]),
                centroid=centroid,
                ellipse=ell,
                stability=float(stability[c]),
                mean_intensity=float(inten[idx].mean()),
                polarity=polarity,
            )
        )
    return regions


def _region_sort_key(r: MserRegion):
    return (r.stability, r.area, r.pixels[0, 1], r.pixels[0, 0], r.polarity)


def detect_mser(img: GrayImage, params: MserParams = MserParams()) -> list[MserRegion]:
    """Detect maximally stable extremal regions, most stable first.

    Bright regions come from running the component tree on the inverted
    image; polarity "both" concatenates bright and dark detections.
    """
    if img.height < 16 or img.width < 16:
        raise ValueError(
            f"image must be at least 16x16 for detection, got {img.width}x{img.height}"
        )
    out: list[MserRegion] = []
    if params.polarity in ("bright", "both"):
        out.extend(
            extremal_regions(255 - img.data, params, "bright", intensities=img.data)
        )
    if params.polarity in ("dark", "both"):
        out.extend(extremal_regions(img.data, params, "dark", intensities=img.data))
    out.sort(key=_region_sort_key)
    return out


def classify_blobs(regions: list[MserRegion]) -> BlobClasses:
    """Split blobs into individual vs grouping by 1-D 2-means on area.

    Centers start at the min and max area; ties assign to the individual
    (small) side. If the split is spurious (large-cluster mean below 1.5x the
    small-cluster mean) or there are fewer than 4 regions, everything is
    classified individual.
    """
    regions = list(regions)
    if len(regions) < 4:
        return BlobClasses(regions, [], low_confidence=True)
    areas = np.array([r.area for r in regions], dtype=np.float64)
    c_lo, c_hi = float(areas.min()), float(areas.max())
    if c_lo == c_hi:
        return BlobClasses(regions, [], low_confidence=False)
    assign = None
    for _ in range(100):
        to_hi = np.abs(areas - c_hi) < np.abs(areas - c_lo)
        if assign is not None and np.array_equal(to_hi, assign):
            break
        assign = to_hi
        if assign.any():
            c_hi = float(areas[assign].mean())
        if (~assign).any():
            c_lo = float(areas[~assign].mean())
    if not assign.any() or not (~assign).any():
        return BlobClasses(regions, [], low_confidence=False)
    mean_lo = float(areas[~assign].mean())
    mean_hi = float(areas[assign].mean())
    if mean_hi < 1.5 * mean_lo:
        return BlobClasses(regions, [], low_confidence=False)
    individual = [r for r, g in zip(regions, assign) if not g]
    grouping = [r for r, g in zip(regions, assign) if g]
    return BlobClasses(individual, grouping, low_confidence=False)
