"""Vectorized numpy fallback for the raster kernels.

Mirrors pvmap.kernels._compiled operation for operation. Floating-point
expressions are written in the exact evaluation order used by the compiled
backend so both produce bit-identical output; keep them in sync when editing.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

# 8-connectivity structuring element for the base component pass.
_STRUCT8 = np.ones((3, 3), dtype=bool)


def label_components(fg: np.ndarray, offsets: np.ndarray) -> tuple[np.ndarray, int]:
    """Label connected foreground under 8-connectivity plus extra merge offsets.

    fg: uint8/bool (h, w). offsets: int64 (n, 2) of forward (dcol, drow)
    pairs beyond the 8-neighborhood; two foreground pixels separated by any
    listed offset join the same component. Returns (labels, count) where
    labels is int32 (h, w), background -1, components numbered in raster-scan
    order of their first pixel.
    """
    fg = np.ascontiguousarray(fg).astype(bool)
    h, w = fg.shape
    base, nbase = ndimage.label(fg, structure=_STRUCT8)
    if nbase == 0:
        return np.full((h, w), -1, dtype=np.int32), 0

    parent = np.arange(nbase + 1, dtype=np.int64)

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for dc, dr in np.asarray(offsets, dtype=np.int64).reshape(-1, 2):
        dc = int(dc)
        dr = int(dr)
        if abs(dc) <= 1 and abs(dr) <= 1:
            continue  # covered by the base pass
        asrc = base[max(0, -dr) : h - max(0, dr), max(0, -dc) : w - max(0, dc)]
        adst = base[max(0, dr) : h + min(0, dr), max(0, dc) : w + min(0, dc)]
        both = (asrc > 0) & (adst > 0)
        if not both.any():
            continue
        pairs = np.unique(
            np.stack([asrc[both], adst[both]], axis=1), axis=0
        )
        for a, b in pairs:
            ra, rb = find(int(a)), find(int(b))
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    roots = np.array([find(i) for i in range(nbase + 1)], dtype=np.int64)
    merged = roots[base]  # 0 stays background

    # Canonical ids: raster-scan order of each component's first pixel.
    flat = merged.ravel()
    first = np.full(nbase + 1, h * w, dtype=np.int64)
    idx = np.flatnonzero(flat)
    np.minimum.at(first, flat[idx], idx)
    order = np.argsort(first[1:], kind="stable")
    rank = np.empty(nbase + 1, dtype=np.int64)
    rank[0] = -1
    used = first[1:][order] < h * w
    remap = np.full(nbase, -1, dtype=np.int64)
    remap[order[used]] = np.arange(int(used.sum()))
    rank[1:] = remap
    labels = rank[merged].astype(np.int32)
    return labels, int(used.sum())


def window_stats(img: np.ndarray, radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and population std over clamped square windows.

    img: float64 (h, w, b). radius >= 0 in pixels; windows shrink at the
    borders instead of padding. Uses summed-area tables in float64.
    """
    img = np.ascontiguousarray(img, dtype=np.float64)
    h, w, b = img.shape
    sat = np.zeros((h + 1, w + 1, b), dtype=np.float64)
    sat[1:, 1:] = img.cumsum(axis=0).cumsum(axis=1)
    sat2 = np.zeros((h + 1, w + 1, b), dtype=np.float64)
    sq = img * img
    sat2[1:, 1:] = sq.cumsum(axis=0).cumsum(axis=1)

    rows = np.arange(h)
    cols = np.arange(w)
    r0 = np.maximum(rows - radius, 0)
    r1 = np.minimum(rows + radius, h - 1) + 1
    c0 = np.maximum(cols - radius, 0)
    c1 = np.minimum(cols + radius, w - 1) + 1

    area = ((r1 - r0)[:, None] * (c1 - c0)[None, :]).astype(np.float64)[:, :, None]

    def window_sum(table: np.ndarray) -> np.ndarray:
        return ((table[r1][:, c1] - table[r0][:, c1]) - table[r1][:, c0]) + table[r0][:, c0]

    mean = window_sum(sat) / area
    msq = window_sum(sat2) / area
    var = msq - mean * mean
    np.maximum(var, 0.0, out=var)
    return mean, np.sqrt(var)


def polygon_grid_mask(
    xs: np.ndarray,
    ys: np.ndarray,
    verts: np.ndarray,
    ring_sizes: np.ndarray,
) -> np.ndarray:
    """Even-odd containment of each grid point in a multi-ring polygon.

    xs, ys: float64 (h, w) world coordinates of pixel centers. verts is the
    concatenation of all rings, (m, 2) float64; ring_sizes gives each ring's
    vertex count. Points on any ring edge count as inside.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    inside = np.zeros(xs.shape, dtype=bool)
    on_edge = np.zeros(xs.shape, dtype=bool)
    start = 0
    for n in np.asarray(ring_sizes, dtype=np.int64):
        n = int(n)
        ring = verts[start : start + n]
        start += n
        for i in range(n):
            x1, y1 = float(ring[i, 0]), float(ring[i, 1])
            x2, y2 = float(ring[(i + 1) % n, 0]), float(ring[(i + 1) % n, 1])
            if y1 != y2:
                cond = (y1 > ys) != (y2 > ys)
                t = (ys - y1) * (x2 - x1)
                xint = t / (y2 - y1) + x1
                inside ^= cond & (xs < xint)
            cross = (x2 - x1) * (ys - y1) - (y2 - y1) * (xs - x1)
            dot = (xs - x1) * (xs - x2) + (ys - y1) * (ys - y2)
            on_edge |= (cross == 0.0) & (dot <= 0.0)
    return (inside | on_edge).astype(np.uint8)
