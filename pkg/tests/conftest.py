import numpy as np
import pytest

from pvmap.raster import GeoTransform, Raster


@pytest.fixture
def geo():
    """0.3 m GSD, north-up, origin offset from zero to catch transform bugs."""
    return GeoTransform(x0=500.0, y0=4200.0, dx=0.3, dy=-0.3)


@pytest.fixture
def unit_geo():
    return GeoTransform()


@pytest.fixture
def make_mask():
    """Wrap a (h, w) 0/1 array as a mask Raster."""

    def build(arr, geo=GeoTransform(), tile_id=""):
        return Raster(np.asarray(arr, dtype=np.uint8), geo, tile_id=tile_id)

    return build
