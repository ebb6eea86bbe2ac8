"""Run manifests: enough to reproduce every output byte-for-byte.

A manifest records the command, the fully resolved configuration (and its
hash), the seed, and sha256 digests of every input and output file. It
deliberately contains no timestamps or host details — rerunning the same
command with the same inputs must produce an identical manifest.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import __version__


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# Execution knobs that do not affect output bytes stay out of the manifest:
# the same run at --workers 1 and --workers 8 must produce identical files.
_EXECUTION_KEYS = ("workers",)


def write_manifest(out_dir, command: str, cfg: dict, inputs, outputs) -> Path:
    """Write <out_dir>/manifest.json and return its path.

    inputs/outputs: iterables of file paths; digests are computed here, so
    call this after all outputs are on disk.
    """
    out_dir = Path(out_dir)
    recorded = {k: cfg[k] for k in sorted(cfg) if k not in _EXECUTION_KEYS}
    obj = {
        "tool": "pvmap",
        "version": __version__,
        "command": command,
        "config": recorded,
        "config_sha256": config_hash(recorded),
        "seed": cfg.get("seed"),
        "inputs": {str(p): sha256_file(p) for p in sorted(str(x) for x in inputs)},
        "outputs": {
            str(Path(p).relative_to(out_dir)): sha256_file(p)
            for p in sorted(str(x) for x in outputs)
        },
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path
