"""Capacity estimation: c_i = γ·α_i, regional aggregation, correlation, outliers.

Two model kinds: "fixed" uses one γ (kW per m²) calibrated from a single
region's known total; "color_linear" regresses a per-array γ on mean color
(γ-space regression — the target is c_i/α_i, not c_i, so area and color
effects stay separate). Predictions never add a residual term; residuals
are recorded in reports, not models.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, FormatError, SingularMatrixError
from .installations import Installation
from .vector import Region, point_in_polygon

_SINGULAR_RTOL = 1e-10


@dataclass(frozen=True)
class CapacityModel:
    kind: str  # "fixed" | "color_linear"
    gamma: float | None = None  # fixed kind
    weights: tuple[float, float, float] | None = None  # color_linear kind
    intercept: float | None = None
    calibration_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "fixed":
            if self.gamma is None or not (self.gamma > 0):
                raise DataError("fixed model requires gamma > 0")
        elif self.kind == "color_linear":
            if self.weights is None or self.intercept is None:
                raise DataError("color_linear model requires weights and intercept")
        else:
            raise DataError(f"unknown capacity model kind {self.kind!r}")


@dataclass
class PredictStats:
    """Counts per-array γ values clamped to zero (physical nonnegativity)."""

    clamped: int = 0
    clamped_ids: list[int] = field(default_factory=list)


def calibrate_fixed(
    insts: Sequence[Installation], known_capacity: float, region_name: str = ""
) -> CapacityModel:
    """γ = known regional capacity / Σ installation areas in that region."""
    total_area = math.fsum(inst.area_m2 for inst in insts)
    if total_area <= 0:
        raise DataError("cannot calibrate on an empty region (total area is zero)")
    if known_capacity <= 0:
        raise DataError("known capacity must be positive")
    return CapacityModel(
        kind="fixed",
        gamma=known_capacity / total_area,
        calibration_meta={
            "region": region_name,
            "total_area_m2": total_area,
            "known_capacity_kw": known_capacity,
            "installations": len(insts),
        },
    )


def fit_color_model(samples: Sequence[tuple]) -> CapacityModel:
    """Least squares for γ_i = w·color_i + b against observed γ_i = c_i/α_i.

    Normal equations with explicit singularity detection: a rank-deficient
    design (e.g. constant colors) raises SingularMatrixError naming the
    degenerate direction in (r, g, b, 1) coefficient space.
    """
    if len(samples) < 4:
        raise DataError("color fit needs at least 4 samples")
    rows = []
    target = []
    for color, area, c_known in samples:
        if not (area > 0):
            raise DataError("color fit requires positive areas")
        r, g, b = (float(v) for v in color)
        rows.append([r, g, b, 1.0])
        target.append(float(c_known) / float(area))
    x = np.asarray(rows, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)

    a = x.T @ x
    rhs = x.T @ y
    eigvals, eigvecs = np.linalg.eigh(a)
    if eigvals[0] <= _SINGULAR_RTOL * max(eigvals[-1], 1.0):
        direction = eigvecs[:, 0]
        labels = ("r", "g", "b", "1")
        desc = " + ".join(f"{c:+.3f}·{n}" for c, n in zip(direction, labels))
        raise SingularMatrixError(
            f"color design matrix is singular; degenerate direction: {desc}",
            direction=tuple(float(v) for v in direction),
        )
    theta = np.linalg.solve(a, rhs)
    return CapacityModel(
        kind="color_linear",
        weights=(float(theta[0]), float(theta[1]), float(theta[2])),
        intercept=float(theta[3]),
        calibration_meta={"samples": len(samples)},
    )


def predict(m: CapacityModel, inst: Installation, stats: PredictStats | None = None) -> float:
    """Estimated capacity in kW. A negative per-array γ (possible only for the
    color model) clamps to 0 and increments the stats counter."""
    if m.kind == "fixed":
        return m.gamma * inst.area_m2
    if inst.mean_color is None:
        raise DataError(f"installation {inst.id} has no mean_color for the color model")
    gamma_i = (
        m.weights[0] * inst.mean_color[0]
        + m.weights[1] * inst.mean_color[1]
        + m.weights[2] * inst.mean_color[2]
        + m.intercept
    )
    if gamma_i < 0.0:
        if stats is not None:
            stats.clamped += 1
            stats.clamped_ids.append(inst.id)
        gamma_i = 0.0
    return gamma_i * inst.area_m2


@dataclass(frozen=True)
class RegionTotal:
    name: str
    estimated_kw: float
    reported_kw: float | None
    excluded_reason: str | None = None


@dataclass(frozen=True)
class CapacityReport:
    per_installation: tuple[tuple[int, float, float], ...]  # (id, area, estimate)
    per_region: tuple[RegionTotal, ...]
    residuals: tuple[tuple[str, float], ...]  # estimated − reported, non-excluded
    pearson_r: float | None
    excluded: tuple[tuple[str, str], ...]  # (name, reason)
    unassigned_ids: tuple[int, ...]
    unassigned_kw: float
    clamp_warnings: int = 0
    clamped_ids: tuple[int, ...] = ()


def aggregate(
    insts: Sequence[Installation],
    regions: Sequence[Region],
    m: CapacityModel,
    exclude: dict[str, str] | None = None,
) -> CapacityReport:
    """Assign each installation to the region containing its centroid and sum.

    Installations whose centroid falls in no region are reported unassigned
    and excluded from regional totals. A centroid inside two regions is an
    error (regions must not overlap). Regions named in `exclude` keep their
    totals but are left out of residuals and the Pearson correlation — the
    explicit allowlist that outlier handling requires.
    """
    exclude = dict(exclude or {})
    names = [r.name for r in regions]
    if len(set(names)) != len(names):
        raise DataError("duplicate region names")
    unknown = set(exclude) - set(names)
    if unknown:
        raise DataError(f"exclude list names unknown regions: {sorted(unknown)}")

    stats = PredictStats()
    per_inst = []
    totals = {r.name: 0.0 for r in regions}
    unassigned_ids = []
    unassigned_kw = 0.0
    for inst in insts:
        est = predict(m, inst, stats)
        per_inst.append((inst.id, inst.area_m2, est))
        hits = [r.name for r in regions if point_in_polygon(inst.centroid, r.boundary)]
        if len(hits) > 1:
            raise DataError(
                f"installation {inst.id} centroid lies in overlapping regions {hits}"
            )
        if hits:
            totals[hits[0]] += est
        else:
            unassigned_ids.append(inst.id)
            unassigned_kw += est

    per_region = []
    residuals = []
    xs, ys = [], []
    for r in regions:
        reason = exclude.get(r.name)
        per_region.append(
            RegionTotal(
                name=r.name,
                estimated_kw=totals[r.name],
                reported_kw=r.reported_capacity,
                excluded_reason=reason,
            )
        )
        if r.reported_capacity is not None and reason is None:
            residuals.append((r.name, totals[r.name] - r.reported_capacity))
            xs.append(totals[r.name])
            ys.append(r.reported_capacity)

    r_val = pearson(xs, ys) if len(xs) >= 2 else None
    return CapacityReport(
        per_installation=tuple(per_inst),
        per_region=tuple(per_region),
        residuals=tuple(residuals),
        pearson_r=r_val,
        excluded=tuple(sorted(exclude.items())),
        unassigned_ids=tuple(unassigned_ids),
        unassigned_kw=unassigned_kw,
        clamp_warnings=stats.clamped,
        clamped_ids=tuple(stats.clamped_ids),
    )


def pearson(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Product-moment correlation; None (undefined) when either input is constant."""
    if len(x) != len(y):
        raise DataError("pearson inputs differ in length")
    if len(x) < 2:
        raise DataError("pearson needs at least 2 points")
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    return float((dx @ dy) / math.sqrt(sxx * syy))


def detect_outliers(report: CapacityReport, z_threshold: float = 3.0) -> tuple[tuple[str, float], ...]:
    """Flag regions by externally studentized residual of reported vs. estimated.

    Each region's reported value is compared against a line fit on the other
    regions; the flag threshold is on the delete-one studentized residual.
    Flagging never removes a region — exclusion happens only through the
    explicit `exclude` allowlist of aggregate().
    """
    pts = [
        (rt.name, rt.estimated_kw, rt.reported_kw)
        for rt in report.per_region
        if rt.reported_kw is not None
    ]
    if len(pts) < 3:
        raise DataError("outlier detection needs at least 3 regions with reported capacity")
    flagged = []
    for i, (name, xi, yi) in enumerate(pts):
        rest = [(x, y) for j, (_, x, y) in enumerate(pts) if j != i]
        t = _studentized_residual(rest, xi, yi)
        if abs(t) > z_threshold:
            flagged.append((name, t))
    return tuple(flagged)


def _studentized_residual(rest: list[tuple[float, float]], xi: float, yi: float) -> float:
    """t-statistic of (xi, yi) against an OLS line fit on `rest`.

    Degenerate conventions keep the statistic meaningful on tiny or exact
    data: a zero residual over a zero error scale is 0 (perfectly on the
    line), a nonzero residual over a zero scale is ±inf (off a perfect line).
    """
    xs = np.asarray([p[0] for p in rest], dtype=np.float64)
    ys = np.asarray([p[1] for p in rest], dtype=np.float64)
    m = xs.size
    xbar = float(xs.mean())
    sxx = float(((xs - xbar) ** 2).sum())
    if sxx == 0.0:
        # All other regions share one estimate; fall back to mean-only model.
        slope = 0.0
        intercept = float(ys.mean())
        dof = m - 1
        leverage = 1.0 + 1.0 / m
    else:
        slope = float(((xs - xbar) * (ys - ys.mean())).sum()) / sxx
        intercept = float(ys.mean()) - slope * xbar
        dof = m - 2
        leverage = 1.0 + 1.0 / m + (xi - xbar) ** 2 / sxx
    resid = yi - (intercept + slope * xi)
    fit_res = ys - (intercept + slope * xs)
    rss = float(fit_res @ fit_res)
    s2 = rss / dof if dof > 0 else 0.0
    denom = math.sqrt(s2 * leverage)
    if denom == 0.0:
        return 0.0 if resid == 0.0 else math.copysign(math.inf, resid)
    return resid / denom


# --- serialization ----------------------------------------------------------


def save_capacity_model(m: CapacityModel, path) -> None:
    obj = {"kind": m.kind, "calibration_meta": m.calibration_meta}
    if m.kind == "fixed":
        obj["gamma"] = m.gamma
    else:
        obj["weights"] = list(m.weights)
        obj["intercept"] = m.intercept
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def load_capacity_model(path) -> CapacityModel:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed model JSON: {exc}") from exc
    try:
        kind = obj["kind"]
        if kind == "fixed":
            return CapacityModel(
                kind="fixed", gamma=float(obj["gamma"]),
                calibration_meta=dict(obj.get("calibration_meta", {})),
            )
        return CapacityModel(
            kind="color_linear",
            weights=tuple(float(v) for v in obj["weights"]),
            intercept=float(obj["intercept"]),
            calibration_meta=dict(obj.get("calibration_meta", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad capacity model: {exc}") from exc


def report_dict(rep: CapacityReport) -> dict:
    return {
        "per_installation": [
            {"id": iid, "area_m2": a, "estimated_kw": e} for iid, a, e in rep.per_installation
        ],
        "per_region": [
            {
                "name": rt.name,
                "estimated_kw": rt.estimated_kw,
                "reported_kw": rt.reported_kw,
                "excluded_reason": rt.excluded_reason,
            }
            for rt in rep.per_region
        ],
        "residuals": [{"name": n, "residual_kw": v} for n, v in rep.residuals],
        "pearson_r": rep.pearson_r,
        "excluded": [{"name": n, "reason": why} for n, why in rep.excluded],
        "unassigned": {"ids": list(rep.unassigned_ids), "estimated_kw": rep.unassigned_kw},
        "clamp_warnings": rep.clamp_warnings,
        "clamped_ids": list(rep.clamped_ids),
    }


def report_from_dict(obj: dict) -> CapacityReport:
    """Inverse of report_dict (for commands that consume a saved report)."""
    try:
        return CapacityReport(
            per_installation=tuple(
                (int(e["id"]), float(e["area_m2"]), float(e["estimated_kw"]))
                for e in obj.get("per_installation", [])
            ),
            per_region=tuple(
                RegionTotal(
                    name=str(e["name"]),
                    estimated_kw=float(e["estimated_kw"]),
                    reported_kw=None if e.get("reported_kw") is None else float(e["reported_kw"]),
                    excluded_reason=e.get("excluded_reason"),
                )
                for e in obj["per_region"]
            ),
            residuals=tuple(
                (str(e["name"]), float(e["residual_kw"])) for e in obj.get("residuals", [])
            ),
            pearson_r=None if obj.get("pearson_r") is None else float(obj["pearson_r"]),
            excluded=tuple((str(e["name"]), str(e["reason"])) for e in obj.get("excluded", [])),
            unassigned_ids=tuple(int(v) for v in obj.get("unassigned", {}).get("ids", [])),
            unassigned_kw=float(obj.get("unassigned", {}).get("estimated_kw", 0.0)),
            clamp_warnings=int(obj.get("clamp_warnings", 0)),
            clamped_ids=tuple(int(v) for v in obj.get("clamped_ids", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad capacity report: {exc}") from exc


def write_report_csv(rep: CapacityReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["region", "estimated_kw", "reported_kw", "residual", "excluded"])
        for rt in rep.per_region:
            resid = "" if rt.reported_kw is None else rt.estimated_kw - rt.reported_kw
            w.writerow(
                [
                    rt.name,
                    rt.estimated_kw,
                    "" if rt.reported_kw is None else rt.reported_kw,
                    resid,
                    rt.excluded_reason or "",
                ]
            )
