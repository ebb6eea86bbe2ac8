"""Raster kernel backend selection.

The compiled Cython extension is preferred when present; otherwise the
vectorized numpy implementation takes over. Both backends produce identical
output. Set PVMAP_KERNELS=pure|compiled to force one (``compiled`` raises if
the extension is not built).
"""

from __future__ import annotations

import os
from types import ModuleType

__all__ = [
    "backend_name",
    "get_backend",
    "label_components",
    "window_stats",
    "polygon_grid_mask",
]


def _load() -> tuple[ModuleType, str]:
    forced = os.environ.get("PVMAP_KERNELS", "auto")
    if forced not in ("auto", "pure", "compiled"):
        raise ValueError(f"PVMAP_KERNELS must be auto, pure or compiled, got {forced!r}")
    if forced != "pure":
        try:
            from . import _compiled

            return _compiled, "compiled"
        except ImportError:
            if forced == "compiled":
                raise
    from . import pure

    return pure, "pure"


def get_backend(name: str) -> ModuleType:
    """Return a specific backend module ("pure" or "compiled") for benchmarks/tests."""
    if name == "pure":
        from . import pure

        return pure
    if name == "compiled":
        from . import _compiled

        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


_impl, backend_name = _load()

label_components = _impl.label_components
window_stats = _impl.window_stats
polygon_grid_mask = _impl.polygon_grid_mask
