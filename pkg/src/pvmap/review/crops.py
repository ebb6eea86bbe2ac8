"""Server-side crop rendering for review candidates.

The crop is a PNG cut from the candidate's tile with fixed world-distance
padding around the installation, clamped at tile bounds. The overlay is not
painted into the PNG — it ships as geometry in crop pixel coordinates
(origin at the center of the top-left crop pixel), so clients can restyle
and toggle it without refetching imagery.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from ..installations import Installation
from ..raster import Raster, pixel_to_world, world_to_pixel


@dataclass(frozen=True)
class CropRender:
    png: bytes
    width: int
    height: int
    col0: int
    row0: int
    tile_id: str
    overlay_parts: tuple[dict, ...]  # exterior/holes in crop pixel coordinates
    centroid_px: tuple[float, float]
    geo: dict  # crop pixel (col, row) -> world affine, keys x0 y0 dx dy rx ry


def _to_rgb8(data: np.ndarray) -> np.ndarray:
    if data.ndim == 2:
        data = np.stack([data] * 3, axis=2)
    if data.dtype == np.uint8:
        arr = data if data.max(initial=0) > 1 else data * 255
        return np.ascontiguousarray(arr)
    return np.ascontiguousarray(
        np.round(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)
    )


def render_crop(inst: Installation, tile: Raster, padding_m: float) -> CropRender:
    geo = tile.geo
    # Pixel-space padding that covers padding_m in any direction, even under
    # rotation: world distance per pixel step is bounded below by the
    # geotransform's smallest singular value.
    lin = np.array([[geo.dx, geo.rx], [geo.ry, geo.dy]], dtype=np.float64)
    smin = float(np.linalg.svd(lin, compute_uv=False).min())
    pad_px = padding_m / smin

    cols: list[float] = []
    rows: list[float] = []
    for part in inst.outline_parts:
        for ring in (part.exterior, *part.holes):
            for x, y in ring:
                c, r = world_to_pixel(geo, x, y)
                cols.append(c)
                rows.append(r)
    col0 = max(0, int(math.floor(min(cols) - pad_px)))
    row0 = max(0, int(math.floor(min(rows) - pad_px)))
    col1 = min(tile.width, int(math.ceil(max(cols) + pad_px)) + 1)
    row1 = min(tile.height, int(math.ceil(max(rows) + pad_px)) + 1)

    crop = _to_rgb8(tile.data[row0:row1, col0:col1])
    buf = io.BytesIO()
    Image.fromarray(crop, mode="RGB").save(buf, format="PNG")

    def ring_px(ring):
        return [
            [c - col0, r - row0]
            for c, r in (world_to_pixel(geo, x, y) for x, y in ring)
        ]

    parts = tuple(
        {"exterior": ring_px(p.exterior), "holes": [ring_px(h) for h in p.holes]}
        for p in inst.outline_parts
    )
    cc, cr = world_to_pixel(geo, inst.centroid[0], inst.centroid[1])
    # The crop's own affine: crop pixel (c, r) is tile pixel (c+col0, r+row0),
    # so only the origin shifts. Clients use this to turn clicks into world
    # coordinates (e.g. missed-array marks) without access to the raster.
    ox, oy = pixel_to_world(geo, col0, row0)
    crop_geo = {"x0": ox, "y0": oy, "dx": geo.dx, "dy": geo.dy,
                "rx": geo.rx, "ry": geo.ry}
    return CropRender(
        png=buf.getvalue(),
        width=col1 - col0,
        height=row1 - row0,
        col0=col0,
        row0=row0,
        tile_id=tile.tile_id,
        overlay_parts=parts,
        centroid_px=(cc - col0, cr - row0),
        geo=crop_geo,
    )
