"""A small trainable pixel classifier producing confidence maps.

Logistic regression over 9 per-pixel features (center RGB, window mean,
window std), fit by full-batch gradient descent on weighted cross-entropy.
It is a desk-scale stand-in for a segmentation CNN: the contract that
matters downstream is RGB raster in, confidence raster out, and the
confidence ingestion path accepts maps from any external model.

Determinism: training and inference are bit-reproducible given the same
inputs and config, independent of worker count — features are extracted
tile by tile in input order and the gradient is reduced in a fixed order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DataError, FormatError, TrainingDivergedError
from .raster import Raster

_PROB_EPS = 1e-7  # keeps confidences inside (0,1) after the float32 cast


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Branch on sign so neither exp overflows.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class PixelFeatureSpec:
    """Window radius for local statistics; features are center values,
    window mean and window std per channel (9 features for RGB)."""

    window_radius: int = 2

    def __post_init__(self):
        if self.window_radius < 0:
            raise DataError("window_radius must be >= 0")

    @property
    def feature_dim(self) -> int:
        return 9


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 200
    seed: int = 0
    l2: float = 0.0
    class_weighting: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")
        if self.epochs < 0:
            raise DataError("epochs must be >= 0")
        if self.l2 < 0:
            raise DataError("l2 must be >= 0")


@dataclass(frozen=True)
class SegmenterModel:
    weights: np.ndarray  # (9,) float64
    bias: float
    feature_spec: PixelFeatureSpec
    train_log: tuple[float, ...] = ()
    seed: int = 0

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
        if w.shape != (self.feature_spec.feature_dim,):
            raise DataError(f"weights must have shape ({self.feature_spec.feature_dim},)")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))


def init_model(spec: PixelFeatureSpec = PixelFeatureSpec(), seed: int = 0) -> SegmenterModel:
    """Fresh model: zero weights and bias (the scratch state training starts from)."""
    return SegmenterModel(
        weights=np.zeros(spec.feature_dim, dtype=np.float64),
        bias=0.0,
        feature_spec=spec,
        train_log=(),
        seed=seed,
    )


def extract_features(r: Raster, spec: PixelFeatureSpec) -> np.ndarray:
    """Per-pixel feature grid, shape (h, w, 9) float64.

    Channels are normalized to [0, 1] first (uint8 divided by 255). Feature
    order: center R,G,B; window mean R,G,B; window std R,G,B. Windows clamp
    at image borders (statistics over the shrunken window).
    """
    if r.bands != 3:
        raise DataError("extract_features expects a 3-band raster")
    img = r.data.astype(np.float64)
    if r.data.dtype == np.uint8:
        img = img / 255.0
    mean, std = kernels.window_stats(img, spec.window_radius)
    return np.concatenate([img, mean, std], axis=2)


def _stack_training_data(tiles, spec: PixelFeatureSpec):
    xs, ys = [], []
    for rgb, mask in tiles:
        if not mask.is_mask:
            raise DataError("training masks must be uint8 {0,1} rasters")
        if mask.height != rgb.height or mask.width != rgb.width:
            raise DataError("mask does not align with its tile")
        xs.append(extract_features(rgb, spec).reshape(-1, spec.feature_dim))
        ys.append(mask.data.astype(np.float64).ravel())
    if not xs:
        raise DataError("no training tiles supplied")
    return np.concatenate(xs, axis=0), np.concatenate(ys, axis=0)


def _fit(weights, bias, x, y, cfg: TrainConfig):
    n = y.size
    n_pos = float(y.sum())
    n_neg = float(n - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("training data contains only one class")
    if cfg.class_weighting:
        # Inverse-frequency ("balanced") weights; they sum to n exactly.
        sw = np.where(y == 1.0, n / (2.0 * n_pos), n / (2.0 * n_neg))
    else:
        sw = np.ones(n, dtype=np.float64)

    w = weights.copy()
    b = bias
    log = []
    for epoch in range(cfg.epochs):
        z = x @ w + b
        # Stable softplus(z) - y*z, the per-sample cross-entropy.
        ce = np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0) - y * z
        loss = float(np.dot(sw, ce)) / n + 0.5 * cfg.l2 * float(np.dot(w, w))
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"loss became non-finite at epoch {epoch} (learning rate too high?)"
            )
        log.append(loss)
        resid = sw * (_sigmoid(z) - y)
        grad_w = (x.T @ resid) / n + cfg.l2 * w
        grad_b = float(resid.sum()) / n
        w = w - cfg.learning_rate * grad_w
        b = b - cfg.learning_rate * grad_b
    if not (np.isfinite(w).all() and np.isfinite(b)):
        raise TrainingDivergedError("parameters became non-finite on the final step")
    return w, b, log


def train(
    tiles,
    cfg: TrainConfig = TrainConfig(),
    spec: PixelFeatureSpec = PixelFeatureSpec(),
) -> SegmenterModel:
    """Fit from scratch: identical to finetune(init_model(spec, cfg.seed), tiles, cfg)."""
    return finetune(init_model(spec, cfg.seed), tiles, cfg)


def finetune(m: SegmenterModel, tiles, cfg: TrainConfig = TrainConfig()) -> SegmenterModel:
    """Continue gradient descent from m's parameters; train_log is appended."""
    x, y = _stack_training_data(tiles, m.feature_spec)
    w, b, log = _fit(m.weights, m.bias, x, y, cfg)
    return SegmenterModel(
        weights=w,
        bias=b,
        feature_spec=m.feature_spec,
        train_log=m.train_log + tuple(log),
        seed=m.seed,
    )


def infer(m: SegmenterModel, r: Raster) -> Raster:
    """Confidence raster: logistic(w·f + b) per pixel, same geometry as r."""
    feats = extract_features(r, m.feature_spec)
    z = feats.reshape(-1, m.feature_spec.feature_dim) @ m.weights + m.bias
    conf = np.clip(_sigmoid(z), _PROB_EPS, 1.0 - _PROB_EPS).reshape(r.height, r.width)
    return Raster(conf.astype(np.float32), r.geo, tile_id=r.tile_id)


def save_model(m: SegmenterModel, path) -> None:
    obj = {
        "kind": "segmenter",
        "weights": [float(v) for v in m.weights],
        "bias": m.bias,
        "feature_spec": {"window_radius": m.feature_spec.window_radius},
        "train_log": list(m.train_log),
        "seed": m.seed,
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def load_model(path) -> SegmenterModel:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed model JSON: {exc}") from exc
    if obj.get("kind") != "segmenter":
        raise FormatError(f"{path}: not a segmenter model file")
    try:
        spec = PixelFeatureSpec(window_radius=int(obj["feature_spec"]["window_radius"]))
        return SegmenterModel(
            weights=np.asarray(obj["weights"], dtype=np.float64),
            bias=float(obj["bias"]),
            feature_spec=spec,
            train_log=tuple(float(v) for v in obj.get("train_log", [])),
            seed=int(obj.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad model file: {exc}") from exc
