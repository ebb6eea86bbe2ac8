"""Georeferenced rasters, the SARF on-disk format, and thresholding.

A raster is an immutable numpy grid plus an affine geotransform. Three
flavors are used throughout the pipeline:

* confidence: 1 band, float32, values in [0, 1]
* mask: 1 band, uint8, values in {0, 1}
* rgb: 3 bands, uint8 (0..255) or float32 ([0, 1]), band-interleaved by pixel

SARF (Solar Array Raster Format) is a six-line ASCII header followed by the
raw little-endian payload; see `save_raster`.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, GeometryError

_DTYPES = {"f32": np.float32, "u8": np.uint8}
_DTYPE_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.uint8): "u8"}


@dataclass(frozen=True)
class GeoTransform:
    """Affine map from (col, row) pixel-center indices to world coordinates.

    x = x0 + col*dx + row*rx
    y = y0 + col*ry + row*dy

    Shear terms rx, ry are usually zero. The transform must be invertible.
    """

    x0: float = 0.0
    y0: float = 0.0
    dx: float = 1.0
    dy: float = 1.0
    rx: float = 0.0
    ry: float = 0.0
    crs: str = "local"

    @property
    def det(self) -> float:
        return self.dx * self.dy - self.rx * self.ry

    @property
    def pixel_area(self) -> float:
        """World area covered by one pixel."""
        return abs(self.det)

    def __post_init__(self):
        if self.det == 0.0:
            raise GeometryError("geotransform is singular (dx*dy - rx*ry = 0)")


def pixel_to_world(g: GeoTransform, col, row):
    """Map (possibly fractional) pixel indices to world coordinates."""
    x = g.x0 + col * g.dx + row * g.rx
    y = g.y0 + col * g.ry + row * g.dy
    return x, y


def world_to_pixel(g: GeoTransform, x, y):
    """Inverse of pixel_to_world; returns fractional (col, row)."""
    det = g.det
    if det == 0.0:
        raise GeometryError("geotransform is singular")
    u = x - g.x0
    v = y - g.y0
    col = (u * g.dy - v * g.rx) / det
    row = (v * g.dx - u * g.ry) / det
    return col, row


@dataclass(frozen=True)
class Raster:
    """Immutable georeferenced grid. data has shape (h, w) or (h, w, 3)."""

    data: np.ndarray
    geo: GeoTransform = field(default_factory=GeoTransform)
    tile_id: str = ""

    def __post_init__(self):
        data = np.ascontiguousarray(self.data)
        if data.ndim == 2:
            pass
        elif data.ndim == 3 and data.shape[2] == 3:
            pass
        else:
            raise DataError(f"raster must have 1 or 3 bands, got shape {data.shape}")
        if data.dtype not in (np.float32, np.uint8):
            raise DataError(f"raster dtype must be float32 or uint8, got {data.dtype}")
        _validate_range(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @property
    def is_mask(self) -> bool:
        return self.bands == 1 and self.data.dtype == np.uint8

    @property
    def is_confidence(self) -> bool:
        return self.bands == 1 and self.data.dtype == np.float32

    def pixel_centers_world(self) -> tuple[np.ndarray, np.ndarray]:
        """World coordinates of every pixel center, as two (h, w) float64 grids."""
        cols = np.arange(self.width, dtype=np.float64)
        rows = np.arange(self.height, dtype=np.float64)
        cgrid, rgrid = np.meshgrid(cols, rows)
        xs, ys = pixel_to_world(self.geo, cgrid, rgrid)
        return xs, ys


def _validate_range(data: np.ndarray):
    if data.dtype == np.float32:
        if data.size and (np.min(data) < 0.0 or np.max(data) > 1.0):
            raise DataError("float32 raster values must lie in [0, 1]")
    elif data.ndim == 2:
        # single-band uint8 is a mask
        if data.size and np.max(data) > 1:
            raise DataError("mask raster values must lie in {0, 1}")


def threshold(conf: Raster, t: float) -> Raster:
    """Binary mask: 1 where confidence strictly exceeds t, else 0.

    Strict comparison makes t=1.0 an empty mask and t=0.0 keep every
    positive-confidence pixel. The geotransform and tile id carry over.
    """
    if conf.bands != 1:
        raise DataError(f"threshold expects a single-band raster, got {conf.bands} bands")
    if not 0.0 <= t <= 1.0:
        raise DataError(f"threshold must lie in [0, 1], got {t}")
    mask = (conf.data > t).astype(np.uint8)
    return Raster(data=mask, geo=conf.geo, tile_id=conf.tile_id)


def _format_float(v: float) -> str:
    return repr(float(v))


def save_raster(r: Raster, path) -> None:
    """Write SARF: 6 LF-terminated ASCII header lines, then the raw payload.

        SARF1
        <width> <height> <bands>
        <dtype>                      f32 | u8
        <x0> <y0> <dx> <dy> <rx> <ry>
        <crs>
        <tile_id>

    Payload is row-major, band-interleaved by pixel, little-endian. Floats in
    the header use repr, so save/load round-trips bit-exactly.
    """
    g = r.geo
    header = "\n".join(
        [
            "SARF1",
            f"{r.width} {r.height} {r.bands}",
            _DTYPE_NAMES[r.data.dtype],
            " ".join(_format_float(v) for v in (g.x0, g.y0, g.dx, g.dy, g.rx, g.ry)),
            g.crs,
            r.tile_id,
        ]
    ) + "\n"
    payload = np.ascontiguousarray(r.data).astype(r.data.dtype.newbyteorder("<"), copy=False)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload.tobytes())


def load_raster(path) -> Raster:
    """Read a SARF file; validates header consistency and value ranges."""
    raw = Path(path).read_bytes()
    stream = io.BytesIO(raw)
    lines = []
    for _ in range(6):
        line = bytearray()
        while True:
            ch = stream.read(1)
            if not ch:
                raise FormatError(f"{path}: truncated SARF header")
            if ch == b"\n":
                break
            line += ch
        lines.append(line.decode("ascii", errors="strict"))

    if lines[0] != "SARF1":
        raise FormatError(f"{path}: bad magic {lines[0]!r}, expected 'SARF1'")
    try:
        width, height, bands = (int(tok) for tok in lines[1].split())
    except ValueError as exc:
        raise FormatError(f"{path}: bad size line {lines[1]!r}") from exc
    if width <= 0 or height <= 0 or bands not in (1, 3):
        raise FormatError(f"{path}: invalid dimensions {lines[1]!r}")
    if lines[2] not in _DTYPES:
        raise FormatError(f"{path}: unknown dtype {lines[2]!r}")
    dtype = np.dtype(_DTYPES[lines[2]]).newbyteorder("<")
    try:
        x0, y0, dx, dy, rx, ry = (float(tok) for tok in lines[3].split())
    except ValueError as exc:
        raise FormatError(f"{path}: bad geotransform line {lines[3]!r}") from exc

    payload = stream.read()
    expected = width * height * bands * dtype.itemsize
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    data = np.frombuffer(payload, dtype=dtype).astype(_DTYPES[lines[2]], copy=False)
    shape = (height, width) if bands == 1 else (height, width, 3)
    data = data.reshape(shape)
    try:
        geo = GeoTransform(x0=x0, y0=y0, dx=dx, dy=dy, rx=rx, ry=ry, crs=lines[4])
    except GeometryError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    try:
        return Raster(data=data, geo=geo, tile_id=lines[5])
    except DataError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def with_data(r: Raster, data: np.ndarray) -> Raster:
    """New raster sharing r's georeferencing with different pixel data."""
    return replace(r, data=data)
