"""Polygon annotations, NDJSON feature IO, point-in-polygon, rasterization.

The NDJSON feature format is one JSON object per line:

    {"id": "...", "kind": "array"|"region", "name": "...",
     "exterior": [[x, y], ...], "holes": [[[x, y], ...], ...],
     "reported_capacity": <kW, optional>, "tile_id": "..."}

Containment uses the even-odd rule with boundary points counting as inside;
rasterization applies the same predicate at every pixel center.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import FormatError, GeometryError
from .raster import GeoTransform, Raster

Point = tuple[float, float]


@dataclass(frozen=True)
class Polygon:
    """Simple polygon: one exterior ring plus optional holes.

    Rings are stored open (closure implied; first vertex must differ from the
    last). The exterior must not self-intersect.
    """

    exterior: tuple[Point, ...]
    holes: tuple[tuple[Point, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "exterior", _as_ring(self.exterior))
        object.__setattr__(self, "holes", tuple(_as_ring(h) for h in self.holes))
        _check_ring(self.exterior)
        for h in self.holes:
            _check_ring(h, validate_intersections=False)

    @property
    def rings(self) -> tuple[tuple[Point, ...], ...]:
        return (self.exterior,) + self.holes

    def area(self) -> float:
        """Unsigned area: |exterior| minus hole areas."""
        a = abs(_shoelace(self.exterior))
        return a - sum(abs(_shoelace(h)) for h in self.holes)

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [p[0] for p in self.exterior]
        ys = [p[1] for p in self.exterior]
        return min(xs), min(ys), max(xs), max(ys)

    def translated(self, dx: float, dy: float) -> "Polygon":
        return Polygon(
            exterior=tuple((x + dx, y + dy) for x, y in self.exterior),
            holes=tuple(tuple((x + dx, y + dy) for x, y in h) for h in self.holes),
        )


def _as_ring(ring) -> tuple[Point, ...]:
    return tuple((float(x), float(y)) for x, y in ring)


def polygon_unchecked(exterior, holes=()) -> "Polygon":
    """Construct a Polygon skipping validation.

    For geometry produced internally (pixel-boundary traces are simple by
    construction); loaded geometry must go through the normal constructor.
    """
    p = object.__new__(Polygon)
    object.__setattr__(p, "exterior", _as_ring(exterior))
    object.__setattr__(p, "holes", tuple(_as_ring(h) for h in holes))
    return p


def _shoelace(ring) -> float:
    # Work relative to the first vertex: the area is translation-invariant
    # and small relative coordinates avoid cancellation under large offsets.
    x0, y0 = ring[0]
    total = 0.0
    n = len(ring)
    for i in range(n):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % n]
        total += (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    return 0.5 * total


def _check_ring(ring, validate_intersections: bool = True):
    if len(ring) < 3:
        raise GeometryError(f"ring needs at least 3 vertices, got {len(ring)}")
    if ring[0] == ring[-1]:
        raise GeometryError("rings are stored open: first vertex must differ from last")
    for i in range(len(ring)):
        if ring[i] == ring[(i + 1) % len(ring)]:
            raise GeometryError(f"repeated consecutive vertex at index {i}")
    if validate_intersections and _self_intersects(ring):
        raise GeometryError("exterior ring is self-intersecting")


def _orient(ax, ay, bx, by, cx, cy) -> float:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _segments_cross(p1, p2, q1, q2) -> bool:
    # Proper crossings and T-touches count; shared vertices do not, so the
    # pinched outlines produced for diagonally-adjacent pixel groups remain
    # valid polygons.
    d1 = _orient(*q1, *q2, *p1)
    d2 = _orient(*q1, *q2, *p2)
    d3 = _orient(*p1, *p2, *q1)
    d4 = _orient(*p1, *p2, *q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0:
        return True

    def strictly_inside(a, b, c):
        if c == a or c == b or _orient(*a, *b, *c) != 0:
            return False
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    return (
        strictly_inside(q1, q2, p1)
        or strictly_inside(q1, q2, p2)
        or strictly_inside(p1, p2, q1)
        or strictly_inside(p1, p2, q2)
    )


def _self_intersects(ring) -> bool:
    n = len(ring)
    for i in range(n):
        for j in range(i + 1, n):
            # skip adjacent segments (they share an endpoint)
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]):
                return True
    return False


def point_in_polygon(p: Point, poly: Polygon) -> bool:
    """Even-odd containment; points on any ring boundary count as inside."""
    px, py = float(p[0]), float(p[1])
    inside = False
    for ring in poly.rings:
        n = len(ring)
        for i in range(n):
            x1, y1 = ring[i]
            x2, y2 = ring[(i + 1) % n]
            if y1 != y2 and (y1 > py) != (y2 > py):
                t = (py - y1) * (x2 - x1)
                xint = t / (y2 - y1) + x1
                if px < xint:
                    inside = not inside
            cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
            dot = (px - x1) * (px - x2) + (py - y1) * (py - y2)
            if cross == 0.0 and dot <= 0.0:
                return True
    return inside


def rasterize(polys, geo: GeoTransform, width: int, height: int, tile_id: str = "") -> Raster:
    """Mask raster: pixel is 1 iff its center lies inside any polygon.

    Polygons entirely outside the grid contribute nothing. Matches
    point_in_polygon exactly at every pixel center.
    """
    if geo.det == 0.0:
        raise GeometryError("geotransform is singular")
    cols = np.arange(width, dtype=np.float64)
    rows = np.arange(height, dtype=np.float64)
    cgrid, rgrid = np.meshgrid(cols, rows)
    xs = geo.x0 + cgrid * geo.dx + rgrid * geo.rx
    ys = geo.y0 + cgrid * geo.ry + rgrid * geo.dy
    out = np.zeros((height, width), dtype=np.uint8)
    for poly in polys:
        verts = np.concatenate([np.asarray(r, dtype=np.float64) for r in poly.rings])
        sizes = np.asarray([len(r) for r in poly.rings], dtype=np.int64)
        np.maximum(out, kernels.polygon_grid_mask(xs, ys, verts, sizes), out=out)
    return Raster(data=out, geo=geo, tile_id=tile_id)


@dataclass(frozen=True)
class Annotation:
    """One hand-labeled array outline."""

    id: str
    polygon: Polygon
    tile_id: str = ""


@dataclass(frozen=True)
class AnnotationSet:
    tile_id: str
    annotations: tuple[Annotation, ...] = ()

    def __len__(self) -> int:
        return len(self.annotations)

    def for_tile(self, tile_id: str) -> tuple[Annotation, ...]:
        return tuple(a for a in self.annotations if a.tile_id in ("", tile_id))

    def polygons(self) -> tuple[Polygon, ...]:
        return tuple(a.polygon for a in self.annotations)


@dataclass(frozen=True)
class Region:
    """Administrative region with an optional officially reported capacity."""

    name: str
    boundary: Polygon
    reported_capacity: float | None = None


def _read_ndjson(path):
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            yield lineno, json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{lineno}: malformed JSON: {exc}") from exc


def _polygon_from_obj(obj, path, lineno) -> Polygon:
    try:
        return Polygon(
            exterior=tuple((x, y) for x, y in obj["exterior"]),
            holes=tuple(tuple((x, y) for x, y in h) for h in obj.get("holes", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}:{lineno}: bad geometry: {exc}") from exc
    except GeometryError as exc:
        raise FormatError(f"{path}:{lineno}: {exc}") from exc


def load_annotations(path) -> AnnotationSet:
    """Read array features from an NDJSON file; duplicate ids are an error."""
    annotations = []
    seen = set()
    for lineno, obj in _read_ndjson(path):
        if obj.get("kind", "array") != "array":
            continue
        fid = obj.get("id")
        if fid is None:
            raise FormatError(f"{path}:{lineno}: feature missing 'id'")
        fid = str(fid)
        if fid in seen:
            raise FormatError(f"{path}:{lineno}: duplicate feature id {fid!r}")
        seen.add(fid)
        annotations.append(
            Annotation(
                id=fid,
                polygon=_polygon_from_obj(obj, path, lineno),
                tile_id=str(obj.get("tile_id", "")),
            )
        )
    tile_ids = {a.tile_id for a in annotations}
    tile_id = tile_ids.pop() if len(tile_ids) == 1 else ""
    return AnnotationSet(tile_id=tile_id, annotations=tuple(annotations))


def load_regions(path) -> list[Region]:
    """Read region features from an NDJSON file; duplicate names are an error."""
    regions = []
    seen = set()
    for lineno, obj in _read_ndjson(path):
        if obj.get("kind") != "region":
            continue
        name = obj.get("name")
        if not name:
            raise FormatError(f"{path}:{lineno}: region feature missing 'name'")
        if name in seen:
            raise FormatError(f"{path}:{lineno}: duplicate region name {name!r}")
        seen.add(name)
        cap = obj.get("reported_capacity")
        regions.append(
            Region(
                name=str(name),
                boundary=_polygon_from_obj(obj, path, lineno),
                reported_capacity=float(cap) if cap is not None else None,
            )
        )
    return regions


def save_annotations(annotations, path, kind: str = "array") -> None:
    """Write annotation features to NDJSON (deterministic key order)."""
    with open(path, "w") as fh:
        for a in annotations:
            obj = {
                "id": a.id,
                "kind": kind,
                "exterior": [[x, y] for x, y in a.polygon.exterior],
                "holes": [[[x, y] for x, y in h] for h in a.polygon.holes],
                "tile_id": a.tile_id,
            }
            fh.write(json.dumps(obj) + "\n")


def save_regions(regions, path) -> None:
    with open(path, "w") as fh:
        for r in regions:
            obj = {
                "id": r.name,
                "kind": "region",
                "name": r.name,
                "exterior": [[x, y] for x, y in r.boundary.exterior],
                "holes": [[[x, y] for x, y in h] for h in r.boundary.holes],
            }
            if r.reported_capacity is not None:
                obj["reported_capacity"] = r.reported_capacity
            fh.write(json.dumps(obj) + "\n")
