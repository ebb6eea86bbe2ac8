# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled raster kernels.

Keep every floating-point expression in the same evaluation order as
pvmap.kernels.pure: the two backends are required to produce bit-identical
output (tests/test_kernels.py asserts exact equality).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef long long _find(long long[::1] parent, long long a) nogil:
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


def label_components(fg, offsets):
    """See pvmap.kernels.pure.label_components."""
    cdef const cnp.uint8_t[:, ::1] f = np.ascontiguousarray(fg, dtype=np.uint8)
    cdef const long long[:, ::1] offs = np.ascontiguousarray(offsets, dtype=np.int64).reshape(-1, 2)
    cdef Py_ssize_t h = f.shape[0], w = f.shape[1]
    cdef Py_ssize_t r, c, k, nr, nc
    cdef long long idx, nidx, ra, rb, dc, dr
    cdef long long n = h * w

    labels_arr = np.full((h, w), -1, dtype=np.int32)
    cdef int[:, ::1] labels = labels_arr

    parent_arr = np.arange(n, dtype=np.int64)
    cdef long long[::1] parent = parent_arr
    cdef long long noff = offs.shape[0]

    # Union pass: 8-neighborhood offsets must be included in `offs` by the
    # caller; only forward offsets are expected so each pair unions once.
    for r in range(h):
        for c in range(w):
            if f[r, c] == 0:
                continue
            idx = r * w + c
            for k in range(noff):
                dc = offs[k, 0]
                dr = offs[k, 1]
                nr = r + dr
                nc = c + dc
                if nr < 0 or nr >= h or nc < 0 or nc >= w:
                    continue
                if f[nr, nc] == 0:
                    continue
                nidx = nr * w + nc
                ra = _find(parent, idx)
                rb = _find(parent, nidx)
                if ra != rb:
                    if ra < rb:
                        parent[rb] = ra
                    else:
                        parent[ra] = rb

    # Canonical ids in raster-scan order of each component's first pixel.
    remap_arr = np.full(n, -1, dtype=np.int64)
    cdef long long[::1] remap = remap_arr
    cdef long long count = 0, root
    for r in range(h):
        for c in range(w):
            if f[r, c] == 0:
                continue
            root = _find(parent, r * w + c)
            if remap[root] < 0:
                remap[root] = count
                count += 1
            labels[r, c] = <int> remap[root]
    return labels_arr, int(count)


def window_stats(img, int radius):
    """See pvmap.kernels.pure.window_stats."""
    cdef const cnp.float64_t[:, :, ::1] a = np.ascontiguousarray(img, dtype=np.float64)
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1], b = a.shape[2]
    cdef Py_ssize_t r, c, k

    sat_arr = np.zeros((h + 1, w + 1, b), dtype=np.float64)
    sat2_arr = np.zeros((h + 1, w + 1, b), dtype=np.float64)
    cdef cnp.float64_t[:, :, ::1] sat = sat_arr
    cdef cnp.float64_t[:, :, ::1] sat2 = sat2_arr
    cdef double v

    # Row cumsum then column cumsum, matching numpy's two-pass order.
    for r in range(h):
        for c in range(w):
            for k in range(b):
                v = a[r, c, k]
                if r > 0:
                    sat[r + 1, c + 1, k] = sat[r, c + 1, k] + v
                    sat2[r + 1, c + 1, k] = sat2[r, c + 1, k] + v * v
                else:
                    sat[r + 1, c + 1, k] = v
                    sat2[r + 1, c + 1, k] = v * v
    for r in range(h):
        for c in range(1, w):
            for k in range(b):
                sat[r + 1, c + 1, k] = sat[r + 1, c, k] + sat[r + 1, c + 1, k]
                sat2[r + 1, c + 1, k] = sat2[r + 1, c, k] + sat2[r + 1, c + 1, k]

    mean_arr = np.empty((h, w, b), dtype=np.float64)
    std_arr = np.empty((h, w, b), dtype=np.float64)
    cdef cnp.float64_t[:, :, ::1] mean = mean_arr
    cdef cnp.float64_t[:, :, ::1] std = std_arr
    cdef Py_ssize_t r0, r1, c0, c1
    cdef double area, ws, ws2, m, msq, var
    for r in range(h):
        r0 = r - radius
        if r0 < 0:
            r0 = 0
        r1 = r + radius
        if r1 > h - 1:
            r1 = h - 1
        r1 += 1
        for c in range(w):
            c0 = c - radius
            if c0 < 0:
                c0 = 0
            c1 = c + radius
            if c1 > w - 1:
                c1 = w - 1
            c1 += 1
            area = <double> ((r1 - r0) * (c1 - c0))
            for k in range(b):
                ws = ((sat[r1, c1, k] - sat[r0, c1, k]) - sat[r1, c0, k]) + sat[r0, c0, k]
                ws2 = ((sat2[r1, c1, k] - sat2[r0, c1, k]) - sat2[r1, c0, k]) + sat2[r0, c0, k]
                m = ws / area
                msq = ws2 / area
                var = msq - m * m
                if var < 0.0:
                    var = 0.0
                mean[r, c, k] = m
                std[r, c, k] = sqrt(var)
    return mean_arr, std_arr


def polygon_grid_mask(xs, ys, verts, ring_sizes):
    """See pvmap.kernels.pure.polygon_grid_mask."""
    cdef const cnp.float64_t[:, ::1] gx = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const cnp.float64_t[:, ::1] gy = np.ascontiguousarray(ys, dtype=np.float64)
    cdef const cnp.float64_t[:, ::1] vv = np.ascontiguousarray(verts, dtype=np.float64).reshape(-1, 2)
    cdef const long long[::1] sizes = np.ascontiguousarray(ring_sizes, dtype=np.int64).reshape(-1)
    cdef Py_ssize_t h = gx.shape[0], w = gx.shape[1]
    cdef Py_ssize_t r, c, i, s, start, n
    cdef double x1, y1, x2, y2, px, py, t, xint, cross, dot, dy
    cdef bint inside, on_edge

    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_arr

    for r in range(h):
        for c in range(w):
            px = gx[r, c]
            py = gy[r, c]
            inside = 0
            on_edge = 0
            start = 0
            for s in range(sizes.shape[0]):
                n = <Py_ssize_t> sizes[s]
                for i in range(n):
                    x1 = vv[start + i, 0]
                    y1 = vv[start + i, 1]
                    if i + 1 < n:
                        x2 = vv[start + i + 1, 0]
                        y2 = vv[start + i + 1, 1]
                    else:
                        x2 = vv[start, 0]
                        y2 = vv[start, 1]
                    if y1 != y2:
                        if (y1 > py) != (y2 > py):
                            t = (py - y1) * (x2 - x1)
                            dy = y2 - y1
                            xint = t / dy + x1
                            if px < xint:
                                inside = not inside
                    cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
                    dot = (px - x1) * (px - x2) + (py - y1) * (py - y2)
                    if cross == 0.0 and dot <= 0.0:
                        on_edge = 1
                start += n
            if inside or on_edge:
                out[r, c] = 1
    return out_arr
