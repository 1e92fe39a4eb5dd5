"""Independent brute-force reference implementations used to check the fast
paths. Everything here favors obviousness over speed: plain loops, BFS
flood fills, exhaustive pair scans.
"""

from __future__ import annotations

import math

import numpy as np


def brute_force_mser(
    levels: np.ndarray,
    delta: int,
    min_area: int,
    max_area: int,
    max_variation: float,
    min_diversity: float,
) -> list[tuple[frozenset, float]]:
    """Threshold-enumeration MSER over level sets {levels <= t}.

    Returns (pixel frozenset, variation) pairs after area, variation and
    diversity filtering, using the same definitions as the component-tree
    detector but computed by literally thresholding every level and flood
    filling 4-connected components.
    """
    lv = np.asarray(levels, dtype=np.int64)
    h, w = lv.shape
    lmax = int(lv.max())

    comps_by_level: list[list[frozenset]] = []
    comp_index: list[dict] = []
    for t in range(lmax + 1):
        mask = lv <= t
        seen = np.zeros((h, w), dtype=bool)
        comps: list[frozenset] = []
        cmap: dict = {}
        for y in range(h):
            for x in range(w):
                if mask[y, x] and not seen[y, x]:
                    stack = [(x, y)]
                    seen[y, x] = True
                    comp = []
                    while stack:
                        cx, cy = stack.pop()
                        comp.append((cx, cy))
                        for nx, ny in (
                            (cx - 1, cy),
                            (cx + 1, cy),
                            (cx, cy - 1),
                            (cx, cy + 1),
                        ):
                            if 0 <= nx < w and 0 <= ny < h and mask[ny, nx] and not seen[ny, nx]:
                                seen[ny, nx] = True
                                stack.append((nx, ny))
                    ci = len(comps)
                    fs = frozenset(comp)
                    comps.append(fs)
                    for p in comp:
                        cmap[p] = ci
        comps_by_level.append(comps)
        comp_index.append(cmap)

    def seed_of(comp: frozenset) -> tuple[int, int]:
        return min(comp, key=lambda p: (int(lv[p[1], p[0]]), p[1], p[0]))

    candidates: dict[frozenset, float] = {}
    for sy in range(h):
        for sx in range(w):
            s = (sx, sy)
            s_lvl = int(lv[sy, sx])
            qseq: list[float] = []
            sets: list[frozenset] = []
            for i in range(s_lvl, lmax + 1):
                comp = comps_by_level[i][comp_index[i][s]]
                if seed_of(comp) != s:
                    break
                hi = min(i + delta, lmax)
                area_hi = len(comps_by_level[hi][comp_index[hi][s]])
                lo = i - delta
                area_lo = len(comps_by_level[lo][comp_index[lo][s]]) if lo >= s_lvl else 0
                qseq.append((area_hi - area_lo) / len(comp))
                sets.append(comp)
            n = len(qseq)
            for k in range(n):
                ql = qseq[k - 1] if k > 0 else math.inf
                qr = qseq[k + 1] if k < n - 1 else math.inf
                if qseq[k] <= ql and qseq[k] <= qr:
                    fs = sets[k]
                    if fs not in candidates or qseq[k] < candidates[fs]:
                        candidates[fs] = qseq[k]

    def seed_key(fs: frozenset):
        s = seed_of(fs)
        return (int(lv[s[1], s[0]]), s[1], s[0])

    def birth_level(fs: frozenset) -> int:
        return max(int(lv[y, x]) for (x, y) in fs)

    items = [
        (q, len(fs), fs)
        for fs, q in candidates.items()
        if min_area <= len(fs) <= max_area and q <= max_variation
    ]
    items.sort(key=lambda t: (t[0], t[1], seed_key(t[2]), birth_level(t[2])))
    kept: list[tuple[float, int, frozenset]] = []
    for q, a, fs in items:
        ok = True
        for q2, a2, fs2 in kept:
            if fs <= fs2 or fs2 <= fs:
                big, small = max(a, a2), min(a, a2)
                if (big - small) / big < min_diversity:
                    ok = False
                    break
        if ok:
            kept.append((q, a, fs))
    return [(fs, q) for q, a, fs in kept]


def naive_hamming(bits_a: np.ndarray, bits_b: np.ndarray) -> int:
    """Bit-by-bit XOR count over packed byte arrays."""
    count = 0
    for ba, bb in zip(bits_a.tolist(), bits_b.tolist()):
        x = ba ^ bb
        for k in range(8):
            count += (x >> k) & 1
    return count


def exhaustive_mutual_matches(
    da: list[np.ndarray], db: list[np.ndarray], threshold: int
) -> list[tuple[int, int, int]]:
    """O(n^2) mutual nearest-neighbor matching with the same tie rules."""
    na, nb = len(da), len(db)
    if na == 0 or nb == 0:
        return []
    dist = [[naive_hamming(da[i], db[j]) for j in range(nb)] for i in range(na)]
    nn_a = [min(range(nb), key=lambda j: (dist[i][j], j)) for i in range(na)]
    nn_b = [min(range(na), key=lambda i: (dist[i][j], i)) for j in range(nb)]
    out = []
    for i in range(na):
        j = nn_a[i]
        if nn_b[j] == i and dist[i][j] <= threshold:
            out.append((i, j, dist[i][j]))
    out.sort(key=lambda t: (t[2], t[1]))
    return out


def fold_angle_90(a: float) -> float:
    """Absolute angular difference folded modulo 180 into [0, 90]."""
    a = abs(a) % 180.0
    return min(a, 180.0 - a)


def exhaustive_lattice_pick(
    anchor: tuple[float, float],
    candidates: list[tuple[float, float]],
    theta_1: float,
    theta_2: float,
    w: float,
    angular_tolerance: float,
) -> tuple[np.ndarray, np.ndarray] | None:
    """Reference axis selection: per-axis exhaustive argmin of the pair cost
    over admissible candidates, with the collision and fallback rules spelled
    out (axis with smaller cost keeps the contested candidate, the other takes
    its next best; if that fails, try the reverse assignment).
    """
    ax, ay = anchor

    def ranked(theta_ref):
        rows = []
        for cx, cy in candidates:
            vx, vy = cx - ax, cy - ay
            dist = math.hypot(vx, vy)
            if dist < 1e-12:
                continue
            ang = math.degrees(math.atan2(vy, vx))
            dev = fold_angle_90(ang - theta_ref)
            if dev > angular_tolerance:
                continue
            cost = dist + w * dev
            polar = ang % 360.0
            rows.append((cost, polar, (cx, cy)))
        rows.sort()
        return rows

    r1 = ranked(theta_1)
    r2 = ranked(theta_2)
    if not r1 or not r2:
        return None

    def build(first, second):
        # first axis takes its best; second axis takes its best not equal to it
        p1 = first[0][2]
        for cost, polar, p2 in second:
            if p2 != p1:
                return p1, p2
        return None

    p1 = r1[0][2]
    p2 = r2[0][2]
    if p1 != p2:
        pick = (p1, p2)
    else:
        if r1[0][0] <= r2[0][0]:
            got = build(r1, r2)
            pick = (got[0], got[1]) if got else None
            if pick is None:
                got = build(r2, r1)
                pick = (got[1], got[0]) if got else None
        else:
            got = build(r2, r1)
            pick = (got[1], got[0]) if got else None
            if pick is None:
                got = build(r1, r2)
                pick = (got[0], got[1]) if got else None
    if pick is None:
        return None
    v1 = np.array([pick[0][0] - ax, pick[0][1] - ay])
    v2 = np.array([pick[1][0] - ax, pick[1][1] - ay])
    if abs(v1[0] * v2[1] - v1[1] * v2[0]) <= 1e-6:
        return None
    return v1, v2
