"""Command-line pipeline: train/finetune, infer, extract, score, crossval,
capacity calibration and aggregation, correlation, review export.

Subcommands communicate only through files; every run writes a manifest
(resolved config, seed, input/output digests) into the output directory, and
rerunning the same command on the same inputs reproduces every output byte
for byte, independent of --workers.

Exit codes: 0 success, 1 usage/config error, 2 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import capacity as cap
from . import metrics as met
from .config import load_config
from .errors import ConfigError, PvmapError
from .installations import extract_installations, load_installations, save_installations
from .manifest import write_manifest
from .raster import Raster, load_raster, save_raster, threshold
from .segmenter import (
    PixelFeatureSpec,
    TrainConfig,
    finetune,
    infer,
    load_model,
    save_model,
    train,
)
from .vector import load_regions, point_in_polygon


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (default: $PVMAP_CONFIG if set)")
    p.add_argument("--workers", type=int, help="tile-level parallelism (output-invariant)")
    p.add_argument("--seed", type=int, help="seed recorded in models and manifests")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pvmap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="cmd", required=True, metavar="SUBCOMMAND")

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        return p

    p = command("train", "fit a segmenter on RGB tiles + masks")
    p.add_argument("--tiles", nargs="+", required=True)
    p.add_argument("--masks", nargs="+", required=True)
    _train_flags(p)

    p = command("finetune", "continue training an existing model on local tiles")
    p.add_argument("--model", required=True)
    p.add_argument("--tiles", nargs="+", required=True)
    p.add_argument("--masks", nargs="+", required=True)
    _train_flags(p)

    p = command("infer", "confidence maps for RGB tiles")
    p.add_argument("--model", required=True)
    p.add_argument("--tiles", nargs="+", required=True)

    p = command("extract", "threshold confidence maps and extract installations")
    p.add_argument("--rasters", nargs="+", required=True,
                   help="confidence or mask rasters (confidence is thresholded)")
    p.add_argument("--rgb", nargs="*", default=[],
                   help="matching RGB tiles for mean-color features")
    _extract_flags(p)

    p = command("score", "pixel + object metrics of predictions against truth")
    p.add_argument("--pred", nargs="+", required=True,
                   help="predicted confidence or mask rasters")
    p.add_argument("--truth", nargs="+", required=True, help="truth mask rasters")
    _extract_flags(p)
    p.add_argument("--iou-min", dest="iou_min", type=float)

    p = command("crossval", "k-fold cross-validation of the full pipeline")
    p.add_argument("--tiles", nargs="+", required=True)
    p.add_argument("--masks", nargs="+", required=True)
    p.add_argument("--folds", type=int)
    _train_flags(p)
    _extract_flags(p)
    p.add_argument("--iou-min", dest="iou_min", type=float)

    p = command("capacity-calibrate", "fixed-gamma calibration from one known regional total")
    p.add_argument("--installations", required=True)
    p.add_argument("--known-capacity", dest="known_capacity", type=float,
                   help="known total kW (default: the region's reported capacity)")
    p.add_argument("--regions", help="regions NDJSON (to select by --region-name)")
    p.add_argument("--region-name", dest="region_name", default="")

    p = command("capacity-fit-color", "color-linear per-array gamma fit")
    p.add_argument("--installations", required=True)
    p.add_argument("--known", required=True,
                   help="JSON object mapping installation id -> known kW")

    p = command("capacity-aggregate", "predict and sum capacity per region")
    p.add_argument("--installations", required=True)
    p.add_argument("--regions", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--exclude", nargs="*", default=[], metavar="NAME=REASON",
                   help="regions excluded from correlation (explicit allowlist)")

    p = command("correlate", "Pearson correlation and outlier flags from a capacity report")
    p.add_argument("--report", required=True)
    p.add_argument("--z-threshold", dest="z_threshold", type=float)

    p = command("review-export", "bundle predictions + tiles for the review service")
    p.add_argument("--installations", required=True)
    p.add_argument("--tiles", nargs="+", required=True)
    p.add_argument("--region-name", dest="region_name", required=True)

    return parser


def _train_flags(p):
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--l2", type=float)
    p.add_argument("--window-radius", dest="window_radius", type=int)


def _extract_flags(p):
    p.add_argument("--threshold", type=float)
    p.add_argument("--merge-distance", dest="merge_distance", type=float)
    p.add_argument("--min-pixels", dest="min_installation_pixels", type=int)


_OVERRIDE_KEYS = (
    "workers", "seed", "threshold", "merge_distance", "min_installation_pixels",
    "iou_min", "learning_rate", "epochs", "l2", "window_radius", "folds",
    "z_threshold",
)


def _resolve_config(args) -> dict:
    overrides = {k: getattr(args, k) for k in _OVERRIDE_KEYS if hasattr(args, k)}
    return load_config(args.config, overrides)


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg["learning_rate"],
        epochs=cfg["epochs"],
        seed=cfg["seed"],
        l2=cfg["l2"],
        class_weighting=cfg["class_weighting"],
    )


def _load_pairs(tile_paths, mask_paths):
    if len(tile_paths) != len(mask_paths):
        raise ConfigError(
            f"--tiles and --masks differ in length ({len(tile_paths)} vs {len(mask_paths)})"
        )
    return [(load_raster(t), load_raster(m)) for t, m in zip(tile_paths, mask_paths)]


def _as_mask(r: Raster, cfg: dict) -> Raster:
    return r if r.is_mask else threshold(r, cfg["threshold"])


def _pmap(fn, items, workers: int):
    """Order-preserving parallel map — results identical for any worker count."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


# --- subcommand implementations --------------------------------------------


def _cmd_train(args, cfg):
    out = _out_dir(args)
    tiles = _load_pairs(args.tiles, args.masks)
    model = train(tiles, _train_config(cfg), PixelFeatureSpec(cfg["window_radius"]))
    path = out / "model.json"
    save_model(model, path)
    write_manifest(out, "train", cfg, list(args.tiles) + list(args.masks), [path])
    return 0


def _cmd_finetune(args, cfg):
    out = _out_dir(args)
    base = load_model(args.model)
    tiles = _load_pairs(args.tiles, args.masks)
    model = finetune(base, tiles, _train_config(cfg))
    path = out / "model.json"
    save_model(model, path)
    write_manifest(
        out, "finetune", cfg, [args.model] + list(args.tiles) + list(args.masks), [path]
    )
    return 0


def _cmd_infer(args, cfg):
    out = _out_dir(args)
    model = load_model(args.model)
    rasters = [load_raster(t) for t in args.tiles]
    confs = _pmap(lambda r: infer(model, r), rasters, cfg["workers"])
    outputs = []
    for i, conf in enumerate(confs):
        path = out / f"confidence_{i:04d}.sarf"
        save_raster(conf, path)
        outputs.append(path)
    write_manifest(out, "infer", cfg, [args.model] + list(args.tiles), outputs)
    return 0


def _cmd_extract(args, cfg):
    out = _out_dir(args)
    if args.rgb and len(args.rgb) != len(args.rasters):
        raise ConfigError("--rgb must pair one-to-one with --rasters")
    rasters = [load_raster(p) for p in args.rasters]
    rgbs = [load_raster(p) for p in args.rgb] if args.rgb else [None] * len(rasters)

    def one(pair):
        r, rgb = pair
        return extract_installations(
            _as_mask(r, cfg), cfg["merge_distance"], cfg["min_installation_pixels"], rgb
        )
    per_tile = _pmap(one, list(zip(rasters, rgbs)), cfg["workers"])
    merged = []
    for insts in per_tile:
        for inst in insts:
            merged.append(dataclasses.replace(inst, id=len(merged)))
    path = out / "installations.ndjson"
    save_installations(merged, path)
    write_manifest(out, "extract", cfg, list(args.rasters) + list(args.rgb), [path])
    return 0


def _cmd_score(args, cfg):
    out = _out_dir(args)
    if len(args.pred) != len(args.truth):
        raise ConfigError("--pred and --truth differ in length")
    pairs = [(load_raster(p), load_raster(t)) for p, t in zip(args.pred, args.truth)]

    def one(pair):
        pred_r, truth_r = pair
        pred_mask = _as_mask(pred_r, cfg)
        pix = met.pixel_iou(pred_mask, truth_r)
        preds = extract_installations(
            pred_mask, cfg["merge_distance"], cfg["min_installation_pixels"]
        )
        truths = extract_installations(
            truth_r, cfg["merge_distance"], cfg["min_installation_pixels"]
        )
        return pix, met.match_objects(preds, truths, cfg["iou_min"])

    results = _pmap(one, pairs, cfg["workers"])
    per_tile = []
    pix_total = met.PixelScore(0, 0, 0, 0)
    c = f = m = 0
    for (pred_path, _), (pix, mr) in zip(zip(args.pred, args.truth), results):
        per_tile.append(
            {
                "pred": str(pred_path),
                "pixel": met.pixel_score_dict(pix),
                "match": met.match_result_dict(mr),
                "prf": met.prf_dict(met.prf(mr)),
            }
        )
        pix_total = pix_total.merged(pix)
        c += len(mr.correct)
        f += len(mr.false_detections)
        m += len(mr.missed)
    report = {
        "per_tile": per_tile,
        "aggregate": {
            "pixel": met.pixel_score_dict(pix_total),
            "counts": {"correct": c, "false": f, "missed": m},
            "prf": met.prf_dict(met.prf_from_counts(c, f, m)),
        },
    }
    path = _write_json(out / "score.json", report)
    write_manifest(out, "score", cfg, list(args.pred) + list(args.truth), [path])
    return 0


def _cmd_crossval(args, cfg):
    out = _out_dir(args)
    tiles = _load_pairs(args.tiles, args.masks)
    rep = met.crossval(
        tiles,
        k=cfg["folds"],
        seed=cfg["seed"],
        cfg=_train_config(cfg),
        spec=PixelFeatureSpec(cfg["window_radius"]),
        conf_threshold=cfg["threshold"],
        merge_distance=cfg["merge_distance"],
        min_pixels=cfg["min_installation_pixels"],
        iou_min=cfg["iou_min"],
    )
    path = _write_json(out / "crossval.json", met.crossval_report_dict(rep))
    write_manifest(out, "crossval", cfg, list(args.tiles) + list(args.masks), [path])
    return 0


def _cmd_capacity_calibrate(args, cfg):
    out = _out_dir(args)
    insts = load_installations(args.installations)
    known = args.known_capacity
    inputs = [args.installations]
    if args.regions:
        inputs.append(args.regions)
        regions = {r.name: r for r in load_regions(args.regions)}
        if args.region_name not in regions:
            raise ConfigError(f"region {args.region_name!r} not in {args.regions}")
        region = regions[args.region_name]
        insts = [i for i in insts if point_in_polygon(i.centroid, region.boundary)]
        if known is None:
            known = region.reported_capacity
    if known is None:
        raise ConfigError("--known-capacity required (region has no reported capacity)")
    model = cap.calibrate_fixed(insts, known, args.region_name)
    path = out / "capacity_model.json"
    cap.save_capacity_model(model, path)
    write_manifest(out, "capacity-calibrate", cfg, inputs, [path])
    return 0


def _cmd_capacity_fit_color(args, cfg):
    out = _out_dir(args)
    insts = {i.id: i for i in load_installations(args.installations)}
    known = json.loads(Path(args.known).read_text())
    samples = []
    for key in sorted(known, key=lambda s: int(s)):
        iid = int(key)
        if iid not in insts:
            raise ConfigError(f"known capacity for id {iid} but no such installation")
        inst = insts[iid]
        if inst.mean_color is None:
            raise ConfigError(f"installation {iid} has no mean_color (re-extract with --rgb)")
        samples.append((inst.mean_color, inst.area_m2, float(known[key])))
    model = cap.fit_color_model(samples)
    path = out / "capacity_model.json"
    cap.save_capacity_model(model, path)
    write_manifest(out, "capacity-fit-color", cfg, [args.installations, args.known], [path])
    return 0


def _parse_exclude(pairs) -> dict:
    exclude = {}
    for item in pairs:
        name, sep, reason = item.partition("=")
        if not sep or not reason:
            raise ConfigError(f"--exclude entries take the form NAME=REASON, got {item!r}")
        exclude[name] = reason
    return exclude


def _cmd_capacity_aggregate(args, cfg):
    out = _out_dir(args)
    insts = load_installations(args.installations)
    regions = load_regions(args.regions)
    model = cap.load_capacity_model(args.model)
    rep = cap.aggregate(insts, regions, model, exclude=_parse_exclude(args.exclude))
    jpath = _write_json(out / "capacity_report.json", cap.report_dict(rep))
    cpath = out / "capacity_report.csv"
    cap.write_report_csv(rep, cpath)
    write_manifest(
        out, "capacity-aggregate", cfg,
        [args.installations, args.regions, args.model], [jpath, cpath],
    )
    return 0


def _cmd_correlate(args, cfg):
    out = _out_dir(args)
    rep = cap.report_from_dict(json.loads(Path(args.report).read_text()))
    flags = cap.detect_outliers(rep, cfg["z_threshold"])
    payload = {
        "pearson_r": rep.pearson_r,
        "n_regions": sum(1 for rt in rep.per_region if rt.reported_kw is not None),
        "excluded": [{"name": n, "reason": why} for n, why in rep.excluded],
        "flagged": [
            {"name": n, "studentized_residual": None if np.isinf(t) else t, "infinite": bool(np.isinf(t))}
            for n, t in flags
        ],
        "z_threshold": cfg["z_threshold"],
    }
    path = _write_json(out / "correlation.json", payload)
    write_manifest(out, "correlate", cfg, [args.report], [path])
    return 0


def _cmd_review_export(args, cfg):
    out = _out_dir(args)
    insts = load_installations(args.installations)
    pred_copy = out / "predictions.ndjson"
    shutil.copyfile(args.installations, pred_copy)
    tiles = []
    for p in args.tiles:
        r = load_raster(p)
        tiles.append({"tile_id": r.tile_id, "path": str(Path(p).resolve())})
    bundle = {
        "region": args.region_name,
        "predictions": "predictions.ndjson",
        "tiles": tiles,
        "candidates": [i.id for i in insts],
        "empty": len(insts) == 0,
        "crop_padding_m": cfg["crop_padding_m"],
    }
    bpath = _write_json(out / "review_bundle.json", bundle)
    write_manifest(
        out, "review-export", cfg, [args.installations] + list(args.tiles),
        [bpath, pred_copy],
    )
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "finetune": _cmd_finetune,
    "infer": _cmd_infer,
    "extract": _cmd_extract,
    "score": _cmd_score,
    "crossval": _cmd_crossval,
    "capacity-calibrate": _cmd_capacity_calibrate,
    "capacity-fit-color": _cmd_capacity_fit_color,
    "capacity-aggregate": _cmd_capacity_aggregate,
    "correlate": _cmd_correlate,
    "review-export": _cmd_review_export,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        cfg = _resolve_config(args)
        return _COMMANDS[args.cmd](args, cfg)
    except ConfigError as exc:
        print(f"pvmap: error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"pvmap: error: missing input: {exc}", file=sys.stderr)
        return 2
    except PvmapError as exc:
        print(f"pvmap: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
