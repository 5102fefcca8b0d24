"""Random forest, Newton-boosted trees and their weighted blend.

Both learners are grown by the compiled kernels in ``_kernels``. Every random
draw comes from a numpy ``Generator`` seeded through ``SeedSequence``, so a
given seed reproduces the same model bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import _kernels
from .errors import (
    ModelFormatError,
    SingleClassError,
    TooFewSamplesError,
    UntrainedModelError,
)
from .features import FEATURE_NAMES, N_FEATURES

# Layer-1 weights with the excluded LSTM share (0.20) renormalised away.
W_RF_EXACT = Fraction(45, 100) / Fraction(80, 100)
W_GBT_EXACT = Fraction(35, 100) / Fraction(80, 100)
W_RF = float(W_RF_EXACT)
W_GBT = float(W_GBT_EXACT)

MODEL_MAGIC = "HAORCAST-MODEL"
MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 500
    max_depth: int = 12
    min_samples_split: int = 5


@dataclass(frozen=True)
class BoostParams:
    n_estimators: int = 500
    learning_rate: float = 0.05
    max_depth: int = 8
    subsample: float = 0.8
    colsample: float = 0.8
    reg_lambda: float = 1.0
    gamma: float = 0.0
    # boosting has no min_samples_split; hessian floor per child instead
    min_child_weight: float = 1.0


FAST_TREES = 100


def fast_params() -> tuple[ForestParams, BoostParams]:
    """Reduced profile for CI: 100 trees / 100 stages."""
    return ForestParams(n_estimators=FAST_TREES), BoostParams(n_estimators=FAST_TREES)


@dataclass
class TreeArrays:
    """Trees concatenated into flat arrays; ``offsets`` has n_trees + 1 entries."""

    offsets: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def concat(cls, trees) -> "TreeArrays":
        sizes = [len(t[0]) for t in trees]
        offsets = np.zeros(len(trees) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum(sizes)
        if not trees:
            empty_i = np.empty(0, dtype=np.int32)
            return cls(offsets, empty_i, np.empty(0), empty_i, empty_i, np.empty(0))
        cols = list(zip(*trees))
        return cls(
            offsets,
            np.concatenate(cols[0]).astype(np.int32),
            np.concatenate(cols[1]).astype(np.float64),
            np.concatenate(cols[2]).astype(np.int32),
            np.concatenate(cols[3]).astype(np.int32),
            np.concatenate(cols[4]).astype(np.float64),
        )

    @property
    def n_trees(self) -> int:
        return len(self.offsets) - 1

    def tree(self, t: int) -> dict:
        s, e = self.offsets[t], self.offsets[t + 1]
        return {k: getattr(self, k)[s:e] for k in ("feature", "threshold", "left", "right", "value")}

    def leaf_values(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if self.n_trees == 0:
            return np.zeros((X.shape[0], 0))
        return _kernels.predict_trees(X, self.offsets, self.feature, self.threshold,
                                      self.left, self.right, self.value)

    def to_json(self) -> dict:
        return {
            "offsets": self.offsets.tolist(),
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "TreeArrays":
        return cls(
            np.asarray(d["offsets"], dtype=np.int64),
            np.asarray(d["feature"], dtype=np.int32),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int32),
            np.asarray(d["right"], dtype=np.int32),
            np.asarray(d["value"], dtype=np.float64),
        )


def _normalise(raw: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    total = raw.sum()
    if total > 0:
        return raw / total
    # no split anywhere: spread evenly over usable features
    out = np.zeros(N_FEATURES)
    out[allowed] = 1.0 / len(allowed)
    return out


@dataclass
class ForestModel:
    params: ForestParams
    seed: int
    trees: TreeArrays
    importance: np.ndarray

    def predict_trees(self, X) -> np.ndarray:
        return self.trees.leaf_values(X)

    def predict_proba(self, X) -> np.ndarray:
        return self.predict_trees(X).mean(axis=1)


@dataclass
class BoostModel:
    params: BoostParams
    seed: int
    base_score: float
    trees: TreeArrays
    importance: np.ndarray

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        stages = self.trees.leaf_values(X).sum(axis=1)
        return self.base_score + self.params.learning_rate * stages

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))


def _check_training_set(X, y, min_samples):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise TooFewSamplesError(f"X {X.shape} and y {y.shape} do not line up")
    if X.shape[0] < min_samples:
        raise TooFewSamplesError(f"need >= {min_samples} samples, got {X.shape[0]}")
    if y.min() == y.max():
        raise SingleClassError("training labels contain a single class")
    return X, y


def _allowed(feature_mask, n_features) -> np.ndarray:
    if feature_mask is None:
        return np.arange(n_features, dtype=np.int64)
    allowed = np.flatnonzero(np.asarray(feature_mask, dtype=bool)).astype(np.int64)
    if allowed.size == 0:
        raise TooFewSamplesError("feature mask leaves no usable features")
    return allowed


def train_forest(X, y, params: ForestParams = ForestParams(), seed: int = 0,
                 feature_mask=None) -> ForestModel:
    """Bootstrap-aggregated Gini trees with sqrt(n_features) candidates per split.

    ``feature_mask`` (bool per canonical feature) excludes features from
    split search entirely.
    """
    X, y = _check_training_set(X, y, params.min_samples_split)
    allowed = _allowed(feature_mask, X.shape[1])
    mtry = max(1, int(math.sqrt(len(allowed))))
    n = X.shape[0]
    trees = []
    raw_imp = np.zeros(X.shape[1])
    for t in range(params.n_estimators):
        rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
        rows = np.sort(rng.integers(0, n, size=n)).astype(np.int64)
        keys = rng.random((2 * n + 1, len(allowed)))
        *arrays, imp = _kernels.grow_gini_tree(
            X, y, rows, allowed, mtry, params.max_depth, params.min_samples_split, keys)
        trees.append(arrays)
        raw_imp += imp
    return ForestModel(params, seed, TreeArrays.concat(trees), _normalise(raw_imp, allowed))


def train_boost(X, y, params: BoostParams = BoostParams(), seed: int = 0,
                feature_mask=None, n_stages: int | None = None) -> BoostModel:
    """Newton boosting on logistic loss with row and column subsampling."""
    X, y = _check_training_set(X, y, 2)
    allowed = _allowed(feature_mask, X.shape[1])
    n = X.shape[0]
    n_stages = params.n_estimators if n_stages is None else n_stages
    n_rows = max(1, int(params.subsample * n))
    n_cols = max(1, int(params.colsample * len(allowed)))

    prior = y.mean()
    base = math.log(prior / (1.0 - prior))
    F = np.full(n, base)
    yf = y.astype(np.float64)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB0057]))
    trees = []
    raw_imp = np.zeros(X.shape[1])
    for _ in range(n_stages):
        p = expit(F)
        g = p - yf
        h = p * (1.0 - p)
        rows = np.sort(rng.choice(n, size=n_rows, replace=False)).astype(np.int64)
        cols = np.sort(rng.choice(allowed, size=n_cols, replace=False)).astype(np.int64)
        *arrays, imp = _kernels.grow_newton_tree(
            X, g, h, rows, cols, params.max_depth, params.reg_lambda, params.gamma,
            params.min_child_weight)
        trees.append(arrays)
        raw_imp += imp
        F = F + params.learning_rate * _kernels.predict_one_tree(X, *arrays)
    return BoostModel(params, seed, base, TreeArrays.concat(trees), _normalise(raw_imp, allowed))


def log_loss(y, p, eps: float = 1e-15) -> float:
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1 - eps)
    y = np.asarray(y, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def blend(p_rf, p_gbt, w_rf: float = W_RF, w_gbt: float = W_GBT):
    """Base ensemble probability from the two component probabilities."""
    return w_rf * np.asarray(p_rf, dtype=np.float64) + w_gbt * np.asarray(p_gbt, dtype=np.float64)


@dataclass
class EnsembleModel:
    forest: ForestModel | None = None
    boost: BoostModel | None = None
    w_rf: float = W_RF
    w_gbt: float = W_GBT
    feature_names: tuple = field(default=FEATURE_NAMES)

    def _require_trained(self):
        if self.forest is None or self.boost is None:
            raise UntrainedModelError("ensemble has not been trained")

    def components(self, X) -> tuple[np.ndarray, np.ndarray]:
        self._require_trained()
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if not np.isfinite(X).all():
            raise ValueError("features must be finite")
        return self.forest.predict_proba(X), self.boost.predict_proba(X)


def predict_proba(model: EnsembleModel, X) -> np.ndarray:
    """p_base = w_rf * p_RF + w_gbt * p_GBT for each row of ``X``."""
    p_rf, p_gbt = model.components(X)
    return blend(p_rf, p_gbt, model.w_rf, model.w_gbt)


def merged_importance(model: EnsembleModel) -> np.ndarray:
    model._require_trained()
    merged = model.w_rf * model.forest.importance + model.w_gbt * model.boost.importance
    return merged / merged.sum()


def train_ensemble(X, y, forest_params: ForestParams = ForestParams(),
                   boost_params: BoostParams = BoostParams(), seed: int = 0,
                   feature_mask=None) -> EnsembleModel:
    ss = np.random.SeedSequence(seed)
    rf_seed, gbt_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    return EnsembleModel(
        forest=train_forest(X, y, forest_params, rf_seed, feature_mask),
        boost=train_boost(X, y, boost_params, gbt_seed, feature_mask),
    )


# --- model file -----------------------------------------------------------


def save_model(model: EnsembleModel, path):
    model._require_trained()
    doc = {
        "magic": MODEL_MAGIC,
        "schema_version": MODEL_SCHEMA_VERSION,
        "feature_names": list(model.feature_names),
        "w_rf": model.w_rf,
        "w_gbt": model.w_gbt,
        "forest": {
            "params": asdict(model.forest.params),
            "seed": model.forest.seed,
            "importance": model.forest.importance.tolist(),
            "trees": model.forest.trees.to_json(),
        },
        "boost": {
            "params": asdict(model.boost.params),
            "seed": model.boost.seed,
            "base_score": model.boost.base_score,
            "importance": model.boost.importance.tolist(),
            "trees": model.boost.trees.to_json(),
        },
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def load_model(path) -> EnsembleModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: cannot read model file ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("magic") != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: not a haorcast model file")
    if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ModelFormatError(
            f"{path}: schema version {doc.get('schema_version')} unsupported "
            f"(expected {MODEL_SCHEMA_VERSION})")
    if tuple(doc["feature_names"]) != FEATURE_NAMES:
        raise ModelFormatError(f"{path}: feature layout differs from this build")
    f, b = doc["forest"], doc["boost"]
    forest = ForestModel(ForestParams(**f["params"]), f["seed"],
                         TreeArrays.from_json(f["trees"]), np.asarray(f["importance"]))
    boost = BoostModel(BoostParams(**b["params"]), b["seed"], b["base_score"],
                       TreeArrays.from_json(b["trees"]), np.asarray(b["importance"]))
    return EnsembleModel(forest, boost, doc["w_rf"], doc["w_gbt"])
