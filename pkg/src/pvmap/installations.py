"""Grouping panel pixels into installations and computing their geometry.

Foreground pixels are partitioned by 8-connectivity plus an optional
world-distance merge: pixels within `merge_distance` meters of each other
(through any chain) belong to the same installation. Each installation gets
a pixel-boundary outline whose total polygon area equals pixel_count times
the pixel area exactly. A nonzero merge distance can join spatially disjoint
pixel groups, so the outline is a sequence of polygons; it has a single
entry in the plain 8-connected case.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DataError, FormatError
from .raster import GeoTransform, Raster, pixel_to_world
from .vector import Polygon, polygon_unchecked

DEFAULT_MERGE_DISTANCE_M = 1.8
DEFAULT_MIN_PIXELS = 4

_OFFSET_CAP = 4096  # sanity bound on the merge search radius, in pixels


@dataclass(frozen=True)
class Installation:
    """A connected group of panel pixels with derived geometry.

    pixels is an (n, 2) int32 array of (col, row) indices in raster-scan
    order, or None when the installation was loaded from NDJSON (the export
    keeps the outline but not per-pixel membership).
    """

    id: int
    pixel_count: int
    area_m2: float
    centroid: tuple[float, float]
    outline_parts: tuple[Polygon, ...]
    tile_id: str = ""
    pixels: np.ndarray | None = None
    mean_color: tuple[float, float, float] | None = None

    @property
    def outline(self) -> Polygon:
        """Largest outline part (the whole outline unless a merge joined disjoint groups)."""
        return max(self.outline_parts, key=lambda p: p.area())

    @cached_property
    def pixel_set(self) -> frozenset[tuple[int, int]]:
        if self.pixels is None:
            raise DataError(f"installation {self.id} carries no pixel membership")
        return frozenset((int(c), int(r)) for c, r in self.pixels)


def merge_offsets(geo: GeoTransform, merge_distance: float) -> np.ndarray:
    """Forward pixel offsets whose world displacement is within merge_distance.

    Always includes the forward half of the 8-neighborhood, so a distance of
    zero reduces to plain 8-connectivity.
    """
    offs = [(1, 0), (-1, 1), (0, 1), (1, 1)]
    if merge_distance > 0.0:
        lin = np.array([[geo.dx, geo.rx], [geo.ry, geo.dy]], dtype=np.float64)
        smin = float(np.linalg.svd(lin, compute_uv=False).min())
        radius = int(np.ceil(merge_distance / smin))
        if radius > _OFFSET_CAP:
            raise DataError(
                f"merge_distance {merge_distance} spans {radius} pixels; "
                f"limit is {_OFFSET_CAP} (check units/geotransform)"
            )
        for dr in range(radius + 1):
            for dc in range(-radius, radius + 1):
                if dr == 0 and dc <= 0:
                    continue
                if abs(dc) <= 1 and abs(dr) <= 1:
                    continue
                ex = dc * geo.dx + dr * geo.rx
                ey = dc * geo.ry + dr * geo.dy
                if float(np.hypot(ex, ey)) <= merge_distance:
                    offs.append((dc, dr))
    return np.asarray(offs, dtype=np.int64)


def extract_installations(
    mask: Raster,
    merge_distance: float = DEFAULT_MERGE_DISTANCE_M,
    min_pixels: int = DEFAULT_MIN_PIXELS,
    rgb: Raster | None = None,
) -> list[Installation]:
    """Partition mask foreground into installations.

    Ids are assigned in raster-scan order of each group's first pixel, after
    dropping groups smaller than min_pixels. When an RGB raster congruent
    with the mask is supplied, per-installation mean color is attached.
    """
    if not mask.is_mask:
        raise DataError("extract_installations expects a uint8 mask raster")
    if rgb is not None:
        if rgb.bands != 3 or rgb.width != mask.width or rgb.height != mask.height:
            raise DataError("rgb raster is not congruent with the mask")
    w = mask.width
    labels, count = kernels.label_components(mask.data, merge_offsets(mask.geo, merge_distance))
    if count == 0:
        return []

    flat = labels.ravel()
    fg = np.flatnonzero(flat >= 0)
    order = np.argsort(flat[fg], kind="stable")
    sorted_idx = fg[order]
    bounds = np.searchsorted(flat[sorted_idx], np.arange(count + 1))

    color = None
    if rgb is not None:
        color = rgb.data.astype(np.float64)
        if rgb.data.dtype == np.uint8:
            color = color / 255.0

    out: list[Installation] = []
    for comp in range(count):
        lin = sorted_idx[bounds[comp] : bounds[comp + 1]]
        if lin.size < min_pixels:
            continue
        rows = lin // w
        cols = lin % w
        pixels = np.stack([cols, rows], axis=1).astype(np.int32)
        cx = float(np.mean(cols.astype(np.float64)))
        cy = float(np.mean(rows.astype(np.float64)))
        mc = None
        if color is not None:
            mc = tuple(float(v) for v in color[rows, cols].mean(axis=0))
        out.append(
            Installation(
                id=len(out),
                pixel_count=int(lin.size),
                area_m2=float(lin.size) * mask.geo.pixel_area,
                centroid=pixel_to_world(mask.geo, cx, cy),
                outline_parts=trace_outline(pixels, mask.geo),
                tile_id=mask.tile_id,
                pixels=pixels,
                mean_color=mc,
            )
        )
    return out


def area(inst: Installation) -> float:
    """Surface area in m²: pixel count times per-pixel world area."""
    return inst.area_m2


def mean_color(inst: Installation, rgb: Raster) -> tuple[float, float, float]:
    """Per-channel mean over the installation's pixels, normalized to [0, 1]."""
    if rgb.bands != 3:
        raise DataError("mean_color needs a 3-band raster")
    if inst.pixels is None:
        raise DataError(f"installation {inst.id} carries no pixel membership")
    cols = inst.pixels[:, 0]
    rows = inst.pixels[:, 1]
    if rows.max() >= rgb.height or cols.max() >= rgb.width:
        raise DataError("installation pixels fall outside the rgb raster")
    vals = rgb.data[rows, cols].astype(np.float64)
    if rgb.data.dtype == np.uint8:
        vals = vals / 255.0
    return tuple(float(v) for v in vals.mean(axis=0))


# --- outline tracing ------------------------------------------------------
#
# Corner-lattice coordinates: corner (i, j) sits at pixel coordinates
# (i - 0.5, j - 0.5); pixel (c, r) has corners (c, r) .. (c+1, r+1).
# Boundary edges are directed with the foreground on the left (in col/row
# space with row increasing downward), so exterior loops have positive
# shoelace area and holes negative. At a vertex where two diagonal
# foreground pixels meet, the walk takes the right turn, which keeps
# 8-connected components as a single pinched loop.


def trace_outline(pixels: np.ndarray, geo: GeoTransform) -> tuple[Polygon, ...]:
    """Pixel-boundary outline of a pixel set, in world coordinates.

    Returns one polygon per spatially connected part. The summed polygon
    area equals the pixel count times the pixel area exactly.
    """
    loops = _trace_loops({(int(c), int(r)) for c, r in pixels})
    exteriors = []  # (signed_area, loop)
    holes = []
    for loop in loops:
        signed = _shoelace_int(loop)
        if signed > 0:
            exteriors.append((signed, loop))
        else:
            holes.append(loop)
    if not exteriors:
        raise AssertionError("pixel set traced to no exterior loop")

    # Assign each hole to the smallest exterior containing it (holes can
    # share corner vertices with their exterior, so the test is
    # boundary-inclusive; exact in integer arithmetic).
    by_size = sorted(range(len(exteriors)), key=lambda k: exteriors[k][0])
    assigned: list[list] = [[] for _ in exteriors]
    for hole in holes:
        probe = hole[0]
        for k in by_size:
            if _int_loop_contains(exteriors[k][1], probe):
                assigned[k].append(hole)
                break
        else:
            raise AssertionError("hole loop not contained in any exterior")

    def to_world(loop):
        return tuple(pixel_to_world(geo, i - 0.5, j - 0.5) for i, j in loop)

    return tuple(
        polygon_unchecked(to_world(ext), tuple(to_world(h) for h in hs))
        for (_, ext), hs in zip(exteriors, assigned)
    )


def _shoelace_int(loop) -> int:
    total = 0
    n = len(loop)
    for k in range(n):
        x1, y1 = loop[k]
        x2, y2 = loop[(k + 1) % n]
        total += x1 * y2 - x2 * y1
    return total


def _int_loop_contains(loop, pt) -> bool:
    """Even-odd containment on the integer corner lattice; boundary counts as inside."""
    px, py = pt
    inside = False
    n = len(loop)
    for k in range(n):
        x1, y1 = loop[k]
        x2, y2 = loop[(k + 1) % n]
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        if cross == 0 and (px - x1) * (px - x2) + (py - y1) * (py - y2) <= 0:
            return True
        if y1 != y2 and (y1 > py) != (y2 > py):
            # px < x-intersection, kept in integers: sign dance avoids division
            num = (py - y1) * (x2 - x1)
            den = y2 - y1
            lhs = px * den
            rhs = num + x1 * den
            if (lhs < rhs) if den > 0 else (lhs > rhs):
                inside = not inside
    return inside


def _trace_loops(pixset: set[tuple[int, int]]) -> list[list[tuple[int, int]]]:
    # Directed boundary edges, foreground on the left.
    edges: list[tuple[tuple[int, int], tuple[int, int]]] = []
    for c, r in pixset:
        if (c, r - 1) not in pixset:
            edges.append(((c, r), (c + 1, r)))
        if (c + 1, r) not in pixset:
            edges.append(((c + 1, r), (c + 1, r + 1)))
        if (c, r + 1) not in pixset:
            edges.append(((c + 1, r + 1), (c, r + 1)))
        if (c - 1, r) not in pixset:
            edges.append(((c, r + 1), (c, r)))
    edges.sort()

    outgoing: dict[tuple[int, int], list[int]] = {}
    for k, (a, _) in enumerate(edges):
        outgoing.setdefault(a, []).append(k)

    # Successor of each directed edge. A vertex has two outgoing edges only
    # where two foreground pixels meet diagonally; the right turn keeps the
    # 8-connected component pinched into a single loop.
    succ = [-1] * len(edges)
    for k, (a, b) in enumerate(edges):
        cands = outgoing[b]
        if len(cands) == 1:
            succ[k] = cands[0]
            continue
        din = (b[0] - a[0], b[1] - a[1])
        for cand in cands:
            cb = edges[cand][1]
            dout = (cb[0] - b[0], cb[1] - b[1])
            if din[0] * dout[1] - din[1] * dout[0] < 0:
                succ[k] = cand
                break
        assert succ[k] >= 0, "no right-turn successor at ambiguous vertex"

    loops = []
    seen = [False] * len(edges)
    for k in range(len(edges)):
        if seen[k]:
            continue
        loop = []
        cur = k
        while not seen[cur]:
            seen[cur] = True
            loop.append(edges[cur][0])
            cur = succ[cur]
        loops.append(_compress_collinear(loop))
    return loops


def _compress_collinear(loop: list[tuple[int, int]]) -> list[tuple[int, int]]:
    n = len(loop)
    kept = []
    for k in range(n):
        p_prev = loop[(k - 1) % n]
        p = loop[k]
        p_next = loop[(k + 1) % n]
        d1 = (p[0] - p_prev[0], p[1] - p_prev[1])
        d2 = (p_next[0] - p[0], p_next[1] - p[1])
        if d1[0] * d2[1] - d1[1] * d2[0] != 0:
            kept.append(p)
    return kept


# --- NDJSON export/import -------------------------------------------------


def _rings_obj(poly: Polygon) -> dict:
    return {
        "exterior": [[x, y] for x, y in poly.exterior],
        "holes": [[[x, y] for x, y in h] for h in poly.holes],
    }


def save_installations(insts, path) -> None:
    """Write installations as NDJSON array features with geometry properties.

    The schema's exterior/holes carry the largest outline part; installations
    whose merge joined disjoint groups carry the remaining parts under
    "extra_parts".
    """
    with open(path, "w") as fh:
        for inst in insts:
            main = inst.outline
            rest = [p for p in inst.outline_parts if p is not main]
            obj = {
                "id": str(inst.id),
                "kind": "array",
                **_rings_obj(main),
                "tile_id": inst.tile_id,
                "pixel_count": inst.pixel_count,
                "area_m2": inst.area_m2,
                "centroid": [inst.centroid[0], inst.centroid[1]],
            }
            if inst.mean_color is not None:
                obj["mean_color"] = list(inst.mean_color)
            if rest:
                obj["extra_parts"] = [_rings_obj(p) for p in rest]
            fh.write(json.dumps(obj) + "\n")


def load_installations(path) -> list[Installation]:
    """Read installations exported by save_installations (pixel membership is not kept)."""
    out = []
    seen = set()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
        if obj.get("kind", "array") != "array":
            continue
        try:
            iid = int(obj["id"])
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: bad installation id") from exc
        if iid in seen:
            raise FormatError(f"{path}:{lineno}: duplicate installation id {iid}")
        seen.add(iid)
        try:
            parts = [polygon_unchecked(obj["exterior"], obj.get("holes", []))]
            for extra in obj.get("extra_parts", []):
                parts.append(polygon_unchecked(extra["exterior"], extra.get("holes", [])))
            mc = obj.get("mean_color")
            out.append(
                Installation(
                    id=iid,
                    pixel_count=int(obj["pixel_count"]),
                    area_m2=float(obj["area_m2"]),
                    centroid=(float(obj["centroid"][0]), float(obj["centroid"][1])),
                    outline_parts=tuple(parts),
                    tile_id=str(obj.get("tile_id", "")),
                    mean_color=tuple(float(v) for v in mc) if mc is not None else None,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: bad installation feature: {exc}") from exc
    return out
