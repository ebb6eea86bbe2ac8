"""Pixel and object scoring, the relaxed inspection criterion, cross-validation.

Aggregation anywhere in this module is micro (raw counts pooled, ratios
computed last); undefined ratios are explicit None values, never silent
zeros, so empty tiles cannot corrupt an aggregate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError
from .installations import Installation, extract_installations
from .raster import Raster, threshold
from .segmenter import PixelFeatureSpec, TrainConfig, infer, train

DEFAULT_IOU_MIN = 0.5


@dataclass(frozen=True)
class PixelScore:
    """Pixel-set overlap counts between a predicted and a true mask.

    both_empty marks the 0/0 convention: two empty masks agree perfectly,
    so iou is reported as 1.0 rather than crashing or poisoning a pool.
    """

    intersection: int
    union: int
    predicted_count: int
    truth_count: int

    @property
    def both_empty(self) -> bool:
        return self.union == 0

    @property
    def iou(self) -> float:
        return 1.0 if self.union == 0 else self.intersection / self.union

    def merged(self, other: "PixelScore") -> "PixelScore":
        return PixelScore(
            self.intersection + other.intersection,
            self.union + other.union,
            self.predicted_count + other.predicted_count,
            self.truth_count + other.truth_count,
        )


@dataclass(frozen=True)
class MatchResult:
    correct: tuple[tuple[int, int, float], ...]  # (pred_id, truth_id, iou)
    false_detections: tuple[int, ...]
    missed: tuple[int, ...]
    iou_min: float


@dataclass(frozen=True)
class PRF:
    """Precision / recall / F1, each a ratio or None when its denominator is zero.

    criterion records how correctness was judged: "iou" for threshold
    matching, "overlap" for the relaxed visual-inspection rule.
    """

    precision: float | None
    recall: float | None
    f1: float | None
    criterion: str = "iou"


def pixel_iou(pred: Raster, truth: Raster) -> PixelScore:
    """Intersection-over-union of two mask rasters, with raw counts."""
    if not (pred.is_mask and truth.is_mask):
        raise DataError("pixel_iou expects mask rasters")
    if pred.height != truth.height or pred.width != truth.width:
        raise DataError("pixel_iou: masks have different dimensions")
    a = pred.data != 0
    b = truth.data != 0
    inter = int(np.count_nonzero(a & b))
    union = int(np.count_nonzero(a | b))
    return PixelScore(inter, union, int(np.count_nonzero(a)), int(np.count_nonzero(b)))


def _set_iou(a: frozenset, b: frozenset) -> float:
    inter = len(a & b)
    if inter == 0:
        return 0.0
    return inter / (len(a) + len(b) - inter)


def match_objects(
    preds: Sequence[Installation],
    truths: Sequence[Installation],
    iou_min: float = DEFAULT_IOU_MIN,
) -> MatchResult:
    """One-to-one greedy matching by descending pixel IOU.

    A prediction is correct when matched to a truth at IOU >= iou_min;
    ties break on lower pred id, then lower truth id. Unmatched predictions
    are false detections; unmatched truths are missed.
    """
    pred_ids = [p.id for p in preds]
    truth_ids = [t.id for t in truths]
    if len(set(pred_ids)) != len(pred_ids):
        raise DataError("duplicate prediction ids")
    if len(set(truth_ids)) != len(truth_ids):
        raise DataError("duplicate truth ids")

    candidates = []
    for p in preds:
        for t in truths:
            iou = _set_iou(p.pixel_set, t.pixel_set)
            if iou >= iou_min and iou > 0.0:
                candidates.append((-iou, p.id, t.id))
    candidates.sort()

    used_p: set[int] = set()
    used_t: set[int] = set()
    correct = []
    for neg_iou, pid, tid in candidates:
        if pid in used_p or tid in used_t:
            continue
        used_p.add(pid)
        used_t.add(tid)
        correct.append((pid, tid, -neg_iou))
    return MatchResult(
        correct=tuple(correct),
        false_detections=tuple(pid for pid in pred_ids if pid not in used_p),
        missed=tuple(tid for tid in truth_ids if tid not in used_t),
        iou_min=iou_min,
    )


def f1(p: float | None, r: float | None) -> float | None:
    """Harmonic mean of precision and recall; None when undefined."""
    if p is None or r is None:
        return None
    if p == 0.0 and r == 0.0:
        return None
    return 2.0 * p * r / (p + r)


def prf_from_counts(correct: int, false: int, missed: int, criterion: str = "iou") -> PRF:
    p = correct / (correct + false) if correct + false > 0 else None
    r = correct / (correct + missed) if correct + missed > 0 else None
    return PRF(precision=p, recall=r, f1=f1(p, r), criterion=criterion)


def prf(m: MatchResult) -> PRF:
    return prf_from_counts(len(m.correct), len(m.false_detections), len(m.missed))


@dataclass(frozen=True)
class Verdict:
    """One reviewed item: a prediction judged correct/false, or a missed array."""

    target_id: str
    kind: str  # "correct" | "false" | "missed"

    def __post_init__(self):
        if self.kind not in ("correct", "false", "missed"):
            raise DataError(f"unknown verdict kind {self.kind!r}")


def inspection_score(verdicts: Sequence[Verdict]) -> PRF:
    """Precision/recall under the relaxed criterion: any overlap with a real
    array counts as a detection (no IOU threshold). Each prediction must
    carry exactly one verdict; missed arrays appear as their own entries."""
    seen_preds: set[str] = set()
    seen_missed: set[str] = set()
    counts = {"correct": 0, "false": 0, "missed": 0}
    for v in verdicts:
        if v.kind == "missed":
            if v.target_id in seen_missed:
                raise DataError(f"duplicate missed entry {v.target_id!r}")
            seen_missed.add(v.target_id)
        else:
            if v.target_id in seen_preds:
                raise DataError(f"prediction {v.target_id!r} has multiple verdicts")
            seen_preds.add(v.target_id)
        counts[v.kind] += 1
    return prf_from_counts(
        counts["correct"], counts["false"], counts["missed"], criterion="overlap"
    )


# --- cross-validation -------------------------------------------------------


@dataclass(frozen=True)
class FoldResult:
    fold: int
    tile_indices: tuple[int, ...]
    pixel: PixelScore
    matches: tuple[MatchResult, ...]  # one per evaluation tile
    counts: tuple[int, int, int]  # pooled (correct, false, missed)
    prf: PRF


@dataclass(frozen=True)
class CrossvalReport:
    folds: tuple[FoldResult, ...]
    pixel: PixelScore  # pooled across folds
    counts: tuple[int, int, int]
    prf: PRF
    seed: int
    k: int


def fold_assignment(n_tiles: int, k: int, seed: int) -> list[tuple[int, ...]]:
    """Deterministic near-equal split of tile indices into k folds."""
    if k < 2:
        raise DataError("cross-validation needs k >= 2")
    if n_tiles < k:
        raise DataError(f"{n_tiles} tiles cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(n_tiles)
    base, extra = divmod(n_tiles, k)
    folds = []
    pos = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(tuple(int(v) for v in perm[pos : pos + size]))
        pos += size
    return folds


def crossval(
    tiles,
    k: int = 2,
    seed: int = 0,
    cfg: TrainConfig = TrainConfig(),
    spec: PixelFeatureSpec = PixelFeatureSpec(),
    conf_threshold: float = 0.5,
    merge_distance: float = 1.8,
    min_pixels: int = 4,
    iou_min: float = DEFAULT_IOU_MIN,
) -> CrossvalReport:
    """k-fold cross-validation of the full train → infer → extract pipeline.

    Tiles are shuffled by seed and split into near-equal folds; each fold is
    scored by a model trained on the others. Aggregates pool raw counts
    (micro-average): the pooled IOU equals the IOU of the concatenated masks.
    """
    tiles = list(tiles)
    folds_idx = fold_assignment(len(tiles), k, seed)
    fold_results = []
    pix_total = PixelScore(0, 0, 0, 0)
    c_total = f_total = m_total = 0
    for i, eval_idx in enumerate(folds_idx):
        train_tiles = [tiles[j] for f, fold in enumerate(folds_idx) if f != i for j in fold]
        model = train(train_tiles, cfg, spec)
        pix = PixelScore(0, 0, 0, 0)
        matches = []
        c = fd = ms = 0
        for j in eval_idx:
            rgb, truth_mask = tiles[j]
            pred_mask = threshold(infer(model, rgb), conf_threshold)
            pix = pix.merged(pixel_iou(pred_mask, truth_mask))
            preds = extract_installations(pred_mask, merge_distance, min_pixels)
            truths = extract_installations(truth_mask, merge_distance, min_pixels)
            mr = match_objects(preds, truths, iou_min)
            matches.append(mr)
            c += len(mr.correct)
            fd += len(mr.false_detections)
            ms += len(mr.missed)
        fold_results.append(
            FoldResult(
                fold=i,
                tile_indices=eval_idx,
                pixel=pix,
                matches=tuple(matches),
                counts=(c, fd, ms),
                prf=prf_from_counts(c, fd, ms),
            )
        )
        pix_total = pix_total.merged(pix)
        c_total += c
        f_total += fd
        m_total += ms
    return CrossvalReport(
        folds=tuple(fold_results),
        pixel=pix_total,
        counts=(c_total, f_total, m_total),
        prf=prf_from_counts(c_total, f_total, m_total),
        seed=seed,
        k=k,
    )


# --- JSON-friendly report dicts --------------------------------------------


def pixel_score_dict(s: PixelScore) -> dict:
    return {
        "intersection": s.intersection,
        "union": s.union,
        "predicted_count": s.predicted_count,
        "truth_count": s.truth_count,
        "iou": s.iou,
        "both_empty": s.both_empty,
    }


def prf_dict(p: PRF) -> dict:
    return {"precision": p.precision, "recall": p.recall, "f1": p.f1, "criterion": p.criterion}


def match_result_dict(m: MatchResult) -> dict:
    return {
        "correct": [[pid, tid, iou] for pid, tid, iou in m.correct],
        "false_detections": list(m.false_detections),
        "missed": list(m.missed),
        "iou_min": m.iou_min,
        "counts": {
            "correct": len(m.correct),
            "false": len(m.false_detections),
            "missed": len(m.missed),
        },
    }


def crossval_report_dict(r: CrossvalReport) -> dict:
    return {
        "k": r.k,
        "seed": r.seed,
        "folds": [
            {
                "fold": f.fold,
                "tile_indices": list(f.tile_indices),
                "pixel": pixel_score_dict(f.pixel),
                "per_tile_matches": [match_result_dict(m) for m in f.matches],
                "counts": {
                    "correct": f.counts[0],
                    "false": f.counts[1],
                    "missed": f.counts[2],
                },
                "prf": prf_dict(f.prf),
            }
            for f in r.folds
        ],
        "aggregate": {
            "pixel": pixel_score_dict(r.pixel),
            "counts": {"correct": r.counts[0], "false": r.counts[1], "missed": r.counts[2]},
            "prf": prf_dict(r.prf),
        },
    }
