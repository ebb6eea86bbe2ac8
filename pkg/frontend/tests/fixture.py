"""Build a tiny review bundle for the UI end-to-end test.

Writes into the directory given as argv[1]:
  t0.sarf             128x128 RGB tile with 10 planted panel rectangles
  predictions.ndjson  the 10 installations extracted from the exact mask
  review_bundle.json  bundle in the same shape `pvmap review-export` emits
  meta.json           candidate count + a world point safely outside every
                      outline (for a clean missed-array mark)
"""

import json
import sys
from pathlib import Path

import numpy as np

from pvmap.installations import extract_installations, save_installations
from pvmap.raster import GeoTransform, Raster, pixel_to_world, save_raster


def main() -> int:
    out = Path(sys.argv[1])
    out.mkdir(parents=True, exist_ok=True)
    geo = GeoTransform(x0=500.0, y0=4200.0, dx=0.3, dy=-0.3)

    size = 128
    rgb = np.zeros((size, size, 3), dtype=np.float32)
    rgb[:, :] = (0.38, 0.48, 0.28)  # ground
    mask = np.zeros((size, size), dtype=np.uint8)
    for row0 in (24, 80):  # 2 rows x 5 columns = 10 well-separated panels
        for i in range(5):
            col0 = 8 + 24 * i
            mask[row0 : row0 + 12, col0 : col0 + 10] = 1
            rgb[row0 : row0 + 12, col0 : col0 + 10] = (0.18, 0.20, 0.55)

    tile = Raster(rgb, geo, tile_id="t0")
    tile_path = out / "t0.sarf"
    save_raster(tile, tile_path)

    insts = extract_installations(Raster(mask, geo, tile_id="t0"), rgb=tile)
    assert len(insts) == 10, f"expected 10 installations, got {len(insts)}"
    save_installations(insts, out / "predictions.ndjson")

    bundle = {
        "region": "pilot",
        "predictions": "predictions.ndjson",
        "tiles": [{"tile_id": "t0", "path": str(tile_path.resolve())}],
        "candidates": [i.id for i in insts],
        "empty": False,
        "crop_padding_m": 6.0,
    }
    (out / "review_bundle.json").write_text(json.dumps(bundle, indent=2))

    # pixel (64, 52) sits in the gap between the two panel rows
    mx, my = pixel_to_world(geo, 64.0, 52.0)
    meta = {"candidates": len(insts), "missed_point": [mx, my], "region": "pilot"}
    (out / "meta.json").write_text(json.dumps(meta))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
