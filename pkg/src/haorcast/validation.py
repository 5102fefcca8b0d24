"""Cross-validation harness, metric suite, ablation runner and baselines.

Augmentation happens inside each fold on that fold's training events only;
the held-out event is never passed to ``augment_fold``, so no copy of it can
reach training. Each fold draws from its own ``SeedSequence([seed, fold])``,
which makes results independent of execution order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import (
    DegenerateSpecError,
    EmptyMatrixError,
    LengthMismatchError,
    SingleClassError,
    TooFewSamplesError,
)
from .features import FEATURE_INDEX, FEATURE_NAMES, N_FEATURES, feature_matrix, label_vector
from .layers import CLASSIFICATION_THRESHOLD, DischargeThresholds, combine, discharge_adjust
from .synthetic import AugmentConfig, augment_fold
from .trees import BoostParams, ForestParams, blend, fast_params, train_ensemble

MIN_LOOCV_EVENTS = 10
UNCERTAIN_FOLD_SD = 0.08


# --- metrics --------------------------------------------------------------


@dataclass(frozen=True)
class ConfusionMatrix:
    tn: int
    fp: int
    fn: int
    tp: int

    def __post_init__(self):
        if min(self.tn, self.fp, self.fn, self.tp) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "ConfusionMatrix":
        t = np.asarray(y_true, dtype=bool)
        p = np.asarray(y_pred, dtype=bool)
        return cls(int((~t & ~p).sum()), int((~t & p).sum()),
                   int((t & ~p).sum()), int((t & p).sum()))

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tn + other.tn, self.fp + other.fp,
                               self.fn + other.fn, self.tp + other.tp)


def _ratio(num: int, den: int) -> Fraction | None:
    return None if den == 0 else Fraction(num, den)


@dataclass(frozen=True)
class Metrics:
    """Exact rational metrics; ``None`` marks an undefined ratio (0/0)."""

    accuracy: Fraction | None
    recall: Fraction | None
    precision: Fraction | None
    f1: Fraction | None
    specificity: Fraction | None

    def as_floats(self) -> dict:
        return {k: (None if v is None else float(v)) for k, v in asdict(self).items()}

    def rounded(self, ndigits: int = 3) -> dict:
        return {k: (None if v is None else round(float(v), ndigits))
                for k, v in asdict(self).items()}


def metrics_from_matrix(m: ConfusionMatrix) -> Metrics:
    if m.total == 0:
        raise EmptyMatrixError("confusion matrix is empty")
    recall = _ratio(m.tp, m.tp + m.fn)
    precision = _ratio(m.tp, m.tp + m.fp)
    # 2TP / (2TP + FP + FN) equals the harmonic mean when both are defined
    f1 = None if recall is None or precision is None else _ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn)
    return Metrics(
        accuracy=Fraction(m.tp + m.tn, m.total),
        recall=recall,
        precision=precision,
        f1=f1,
        specificity=_ratio(m.tn, m.tn + m.fp),
    )


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    n = len(x)
    while i < n:
        j = i
        while j + 1 < n and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc_roc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg), ties counting one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise LengthMismatchError(f"{s.shape[0]} scores vs {y.shape[0]} labels")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUC needs both classes")
    ranks = _midranks(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def chi2_sf_1dof(x: float) -> float:
    """Survival function of chi-square with one degree of freedom."""
    if x <= 0:
        return 1.0
    return math.erfc(math.sqrt(x / 2.0))


@dataclass(frozen=True)
class McNemarResult:
    chi2: float
    p: float
    b: int
    c: int


def mcnemar(correct_a, correct_b) -> McNemarResult:
    """Continuity-corrected McNemar test on paired per-event correctness."""
    a = np.asarray(correct_a, dtype=bool)
    b_ = np.asarray(correct_b, dtype=bool)
    if a.shape != b_.shape:
        raise LengthMismatchError(f"{a.size} vs {b_.size} paired outcomes")
    b = int((a & ~b_).sum())
    c = int((~a & b_).sum())
    if b + c == 0:
        return McNemarResult(0.0, 1.0, 0, 0)
    chi2 = (abs(b - c) - 1) ** 2 / (b + c)
    return McNemarResult(float(chi2), chi2_sf_1dof(chi2), b, c)


# --- logistic-regression baseline ------------------------------------------


@dataclass(frozen=True)
class LogisticParams:
    steps: int = 5000
    step_size: float = 0.1


@dataclass
class LogisticModel:
    mean: np.ndarray
    scale: np.ndarray
    coef: np.ndarray
    intercept: float

    def predict_proba(self, X) -> np.ndarray:
        z = (np.atleast_2d(X) - self.mean) / self.scale
        return 1.0 / (1.0 + np.exp(-(z @ self.coef + self.intercept)))


def fit_logistic(X, y, params: LogisticParams = LogisticParams()) -> LogisticModel:
    """Unregularised logistic regression by full-batch gradient descent on
    standardised features."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    n = len(y)
    w = np.zeros(X.shape[1])
    b = 0.0
    for _ in range(params.steps):
        p = 1.0 / (1.0 + np.exp(-(Z @ w + b)))
        r = p - y
        w -= params.step_size * (Z.T @ r) / n
        b -= params.step_size * r.sum() / n
    return LogisticModel(mean, scale, w, b)


# --- trainer and fold machinery --------------------------------------------


@dataclass(frozen=True)
class Trainer:
    forest: ForestParams = ForestParams()
    boost: BoostParams = BoostParams()
    logistic: LogisticParams = LogisticParams()

    @classmethod
    def fast(cls) -> "Trainer":
        rf, gbt = fast_params()
        return cls(rf, gbt)

    def fit(self, X, y, seed: int, feature_mask=None):
        return train_ensemble(X, y, self.forest, self.boost, seed, feature_mask)


@dataclass(frozen=True)
class AblationSpec:
    name: str
    removed_features: frozenset = frozenset()

    def __post_init__(self):
        bad = [f for f in self.removed_features if not 0 <= f < N_FEATURES]
        if bad:
            raise DegenerateSpecError(f"{self.name}: feature indices out of range {bad}")
        object.__setattr__(self, "removed_features", frozenset(self.removed_features))

    @classmethod
    def from_names(cls, name: str, features) -> "AblationSpec":
        unknown = [f for f in features if f not in FEATURE_INDEX]
        if unknown:
            raise DegenerateSpecError(f"{name}: unknown features {unknown}")
        return cls(name, frozenset(FEATURE_INDEX[f] for f in features))

    def mask(self) -> np.ndarray:
        keep = np.ones(N_FEATURES, dtype=bool)
        keep[list(self.removed_features)] = False
        if not keep.any():
            raise DegenerateSpecError(f"{self.name}: removes every feature")
        return keep


BASELINE = AblationSpec("baseline")
SAR_FEATURES = ("vv_db", "vh_db", "vv_vh_ratio", "upstream_vv_db")
RAIN_FORECAST_FEATURES = ("forecast_rain_12h_mm", "forecast_rain_72h_mm")
STANDARD_ABLATIONS = (
    AblationSpec.from_names("no_sar", SAR_FEATURES),
    AblationSpec.from_names("no_rain_forecast", RAIN_FORECAST_FEATURES),
    AblationSpec.from_names("sar_only", [f for f in FEATURE_NAMES if f not in SAR_FEATURES]),
    AblationSpec.from_names("no_vv_vh_ratio", ["vv_vh_ratio"]),
    AblationSpec.from_names("no_ndwi", ["ndwi"]),
)


def parse_ablation_file(text: str) -> list[AblationSpec]:
    """One spec per line: ``name: feature, feature, ...``; '#' starts a comment."""
    specs = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise DegenerateSpecError(f"ablation line needs 'name: features': {raw!r}")
        name, feats = line.split(":", 1)
        names = [f.strip() for f in feats.split(",") if f.strip()]
        specs.append(AblationSpec.from_names(name.strip(), names))
    return specs


def fold_seed(master_seed: int, fold_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, fold_index])


@dataclass
class FoldOutput:
    p_rf: np.ndarray
    p_gbt: np.ndarray
    p_lr: np.ndarray | None
    train_parent_ids: frozenset


def _fit_predict(train_events, test_events, seq: np.random.SeedSequence, trainer: Trainer,
                 augment_cfg: AugmentConfig, mask: np.ndarray, with_logistic: bool) -> FoldOutput:
    aug_seq, model_seq = seq.spawn(2)
    rows = augment_fold(train_events, augment_cfg, np.random.default_rng(aug_seq))
    X = feature_matrix(rows)
    y = label_vector(rows)
    Xt = feature_matrix(test_events)
    X[:, ~mask] = 0.0
    Xt[:, ~mask] = 0.0
    model = trainer.fit(X, y, int(model_seq.generate_state(1)[0]), mask)
    p_rf, p_gbt = model.components(Xt)
    p_lr = None
    if with_logistic:
        p_lr = fit_logistic(X[:, mask], y, trainer.logistic).predict_proba(Xt[:, mask])
    parents = frozenset(r.parent_id for r in rows if r.parent_id is not None)
    return FoldOutput(p_rf, p_gbt, p_lr, parents)


@dataclass
class FoldRecord:
    event_id: str
    fold: int
    label: int
    p_rf: float
    p_gbt: float
    p_base: float
    delta_discharge: float
    p_final: float
    predicted: int
    correct: bool
    p_lr: float | None = None


@dataclass
class ValidationReport:
    protocol: str
    seed: int
    matrix: ConfusionMatrix
    auc_roc: float | None
    per_fold: list = field(default_factory=list)
    layers_enabled: bool = False
    feature_mask: tuple = tuple(FEATURE_NAMES)
    extras: dict = field(default_factory=dict)

    @property
    def metrics(self) -> Metrics:
        return metrics_from_matrix(self.matrix)

    @property
    def accuracy(self) -> float:
        return float(self.metrics.accuracy)

    def correctness(self) -> np.ndarray:
        return np.array([r.correct for r in self.per_fold], dtype=bool)

    def as_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "seed": self.seed,
            "layers_enabled": self.layers_enabled,
            "features_used": list(self.feature_mask),
            "n_events": self.matrix.total,
            "confusion_matrix": asdict(self.matrix),
            "metrics": self.metrics.as_floats(),
            "metrics_rounded": self.metrics.rounded(3),
            "auc_roc": self.auc_roc,
            "extras": self.extras,
            "per_fold": [asdict(r) for r in self.per_fold],
        }

    def to_text(self) -> str:
        return json.dumps(self.as_dict(), indent=1, sort_keys=True) + "\n"


def _check_events(events, minimum):
    if len(events) < minimum:
        raise TooFewSamplesError(f"need >= {minimum} events, got {len(events)}")
    y = label_vector(events)
    if y.min() == y.max():
        raise SingleClassError("events contain a single class")


def _records_for(test_events, fold_idx, out: FoldOutput, layers_enabled: bool,
                 discharge: DischargeThresholds, threshold: float) -> list[FoldRecord]:
    p_base = blend(out.p_rf, out.p_gbt)
    recs = []
    for j, ev in enumerate(test_events):
        pb = float(p_base[j])
        d = discharge_adjust(ev.dashboard.barak_discharge_m3s, discharge) if layers_enabled else 0.0
        pf = combine(pb, d, 0.0).p_final
        pred = int(pf >= threshold)
        recs.append(FoldRecord(
            event_id=ev.event_id, fold=fold_idx, label=ev.y, p_rf=float(out.p_rf[j]),
            p_gbt=float(out.p_gbt[j]), p_base=pb, delta_discharge=d, p_final=pf,
            predicted=pred, correct=pred == ev.y,
            p_lr=None if out.p_lr is None else float(out.p_lr[j]),
        ))
    return recs


def _summarise(protocol, seed, records, layers_enabled, mask, extras=None) -> ValidationReport:
    y = [r.label for r in records]
    pred = [r.predicted for r in records]
    scores = [r.p_final for r in records]
    auc = auc_roc(scores, y) if 0 < sum(y) < len(y) else None
    used = tuple(n for n, keep in zip(FEATURE_NAMES, mask) if keep)
    return ValidationReport(protocol, seed, ConfusionMatrix.from_predictions(y, pred), auc,
                            records, layers_enabled, used, extras or {})


def _hard_cases(records, events_by_id, discharge: DischargeThresholds) -> dict:
    """Events the ML base misses (<0.40) but upstream signals flag."""
    hard = [r for r in records
            if r.p_base < CLASSIFICATION_THRESHOLD
            and (events_by_id[r.event_id].features.upstream_vv_db < -16.0
                 or events_by_id[r.event_id].dashboard.barak_discharge_m3s > discharge.high_m3s)]
    return {
        "n": len(hard),
        "event_ids": [r.event_id for r in hard],
        "ml_only_correct": sum(int(r.p_base >= CLASSIFICATION_THRESHOLD) == r.label for r in hard),
        "layered_correct": sum(r.correct for r in hard),
    }


FoldHook = Callable[[int, list, FoldOutput], None]


def loocv(events, trainer: Trainer = Trainer(), augment_cfg: AugmentConfig = AugmentConfig(),
          seed: int = 42, layers_enabled: bool = False, *, extra_train=(),
          spec: AblationSpec = BASELINE, with_logistic: bool = False,
          discharge: DischargeThresholds = DischargeThresholds(),
          threshold: float = CLASSIFICATION_THRESHOLD,
          on_fold: FoldHook | None = None) -> ValidationReport:
    """Leave-one-out over ``events``.

    Each fold trains on the other events plus ``extra_train`` (never
    evaluated). With ``layers_enabled`` the discharge step is added to the
    base probability before classification.
    """
    events = list(events)
    _check_events(events, MIN_LOOCV_EVENTS)
    mask = spec.mask()
    extra = list(extra_train)
    records = []
    for i, held in enumerate(events):
        train = events[:i] + events[i + 1:] + extra
        out = _fit_predict(train, [held], fold_seed(seed, i), trainer, augment_cfg, mask,
                           with_logistic)
        if on_fold is not None:
            on_fold(i, [held], out)
        records += _records_for([held], i, out, layers_enabled, discharge, threshold)
    extras = {"n_folds": len(events), "train_size_per_fold": len(events) - 1 + len(extra)}
    if layers_enabled:
        by_id = {e.event_id: e for e in events}
        extras["hard_cases"] = _hard_cases(records, by_id, discharge)
    return _summarise("loocv", seed, records, layers_enabled, mask, extras)


def stratified_folds(labels, k: int, rng) -> list[np.ndarray]:
    labels = np.asarray(labels)
    folds = [[] for _ in range(k)]
    offset = 0
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        for j, row in enumerate(idx):
            folds[(offset + j) % k].append(int(row))
        offset += len(idx)
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def kfold(events, k: int = 5, trainer: Trainer = Trainer(),
          augment_cfg: AugmentConfig = AugmentConfig(), seed: int = 42,
          layers_enabled: bool = False, *, extra_train=(), spec: AblationSpec = BASELINE,
          with_logistic: bool = False, discharge: DischargeThresholds = DischargeThresholds(),
          threshold: float = CLASSIFICATION_THRESHOLD,
          on_fold: FoldHook | None = None) -> ValidationReport:
    """Stratified k-fold with per-fold accuracy spread and an 'uncertain' flag."""
    events = list(events)
    _check_events(events, max(k, MIN_LOOCV_EVENTS))
    mask = spec.mask()
    extra = list(extra_train)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF01D]))
    folds = stratified_folds(label_vector(events), k, rng)
    records, accs = [], []
    for i, test_idx in enumerate(folds):
        test_set = set(test_idx.tolist())
        test = [events[j] for j in test_idx]
        train = [e for j, e in enumerate(events) if j not in test_set] + extra
        out = _fit_predict(train, test, fold_seed(seed, i), trainer, augment_cfg, mask,
                           with_logistic)
        if on_fold is not None:
            on_fold(i, test, out)
        recs = _records_for(test, i, out, layers_enabled, discharge, threshold)
        accs.append(sum(r.correct for r in recs) / len(recs))
        records += recs
    sd = float(np.std(accs, ddof=1)) if k > 1 else 0.0
    extras = {
        "k": k,
        "fold_accuracy": accs,
        "fold_accuracy_mean": float(np.mean(accs)),
        "fold_accuracy_sd": sd,
        "uncertain": sd > UNCERTAIN_FOLD_SD,
    }
    return _summarise(f"kfold:{k}", seed, records, layers_enabled, mask, extras)


def holdout(events, repeats: int = 5, test_fraction: float = 0.35,
            trainer: Trainer = Trainer(), augment_cfg: AugmentConfig = AugmentConfig(),
            seed: int = 42, layers_enabled: bool = False, *, extra_train=(),
            spec: AblationSpec = BASELINE, with_logistic: bool = False,
            discharge: DischargeThresholds = DischargeThresholds(),
            threshold: float = CLASSIFICATION_THRESHOLD,
            on_fold: FoldHook | None = None) -> ValidationReport:
    """Stratified holdout repeated over ``repeats`` seeds (seed, seed+1, ...)."""
    events = list(events)
    _check_events(events, MIN_LOOCV_EVENTS)
    mask = spec.mask()
    extra = list(extra_train)
    y = label_vector(events)
    n_test = int(test_fraction * len(events))
    n_test_pos = round(n_test * y.sum() / len(y))
    records, accs, aucs = [], [], []
    for r in range(repeats):
        rng = np.random.default_rng(np.random.SeedSequence([seed + r, 0x4D]))
        pos = np.flatnonzero(y == 1)[rng.permutation(int(y.sum()))][:n_test_pos]
        neg = np.flatnonzero(y == 0)[rng.permutation(int(len(y) - y.sum()))][:n_test - n_test_pos]
        test_idx = np.sort(np.concatenate([pos, neg]))
        test_set = set(test_idx.tolist())
        test = [events[j] for j in test_idx]
        train = [e for j, e in enumerate(events) if j not in test_set] + extra
        out = _fit_predict(train, test, fold_seed(seed + r, 0), trainer, augment_cfg, mask,
                           with_logistic)
        if on_fold is not None:
            on_fold(r, test, out)
        recs = _records_for(test, r, out, layers_enabled, discharge, threshold)
        accs.append(sum(x.correct for x in recs) / len(recs))
        aucs.append(auc_roc([x.p_final for x in recs], [x.label for x in recs]))
        records += recs
    extras = {
        "repeats": repeats,
        "test_size": n_test,
        "repeat_accuracy": accs,
        "repeat_auc": aucs,
        "accuracy_mean": float(np.mean(accs)),
        "accuracy_range": [min(accs), max(accs)],
        "auc_mean": float(np.mean(aucs)),
    }
    return _summarise("holdout", seed, records, layers_enabled, mask, extras)


PROTOCOLS = {"loocv": loocv, "kfold": kfold, "holdout": holdout}


def run_protocol(protocol: str, events, **kw) -> ValidationReport:
    """Dispatch ``loocv``, ``kfold:K`` or ``holdout``."""
    name, _, arg = protocol.partition(":")
    if name == "kfold":
        return kfold(events, k=int(arg or 5), **kw)
    if name in ("loocv", "holdout") and not arg:
        return PROTOCOLS[name](events, **kw)
    raise ValueError(f"unknown protocol {protocol!r}; use loocv, kfold:K or holdout")


# --- ablation and baselines -------------------------------------------------


def run_ablation(events, specs, seed: int = 42, protocol: str = "loocv",
                 **kw) -> dict[str, ValidationReport]:
    """Re-validate once per spec, baseline first."""
    specs = list(specs)
    for s in specs:
        s.mask()  # reject degenerate specs before any training
    if not any(not s.removed_features for s in specs):
        specs = [BASELINE] + specs
    reports = {}
    for s in specs:
        reports[s.name] = run_protocol(protocol, events, seed=seed, spec=s, **kw)
    return reports


def ablation_table(reports: dict[str, ValidationReport]) -> list[dict]:
    base = next(r for name, r in reports.items()
                if len(r.feature_mask) == N_FEATURES)
    rows = []
    for name, rep in reports.items():
        rows.append({
            "name": name,
            "features_used": list(rep.feature_mask),
            "accuracy": rep.accuracy,
            "auc_roc": rep.auc_roc,
            "delta_accuracy_pp": 100.0 * (rep.accuracy - base.accuracy),
        })
    return rows


def baseline_compare(events, seed: int = 42, trainer: Trainer = Trainer(),
                     augment_cfg: AugmentConfig = AugmentConfig(), *, extra_train=(),
                     threshold: float = CLASSIFICATION_THRESHOLD) -> list[dict]:
    """LOOCV rows for logistic regression, RF alone, GBT alone and the ensemble.

    All four share each fold's augmented training split, so the McNemar
    comparisons against the ensemble are on matched folds.
    """
    rep = loocv(events, trainer, augment_cfg, seed, extra_train=extra_train,
                with_logistic=True, threshold=threshold)
    y = np.array([r.label for r in rep.per_fold])
    scores = {
        "logistic_regression": np.array([r.p_lr for r in rep.per_fold]),
        "random_forest": np.array([r.p_rf for r in rep.per_fold]),
        "gradient_boosting": np.array([r.p_gbt for r in rep.per_fold]),
        "ensemble": np.array([r.p_base for r in rep.per_fold]),
    }
    correct = {k: (v >= threshold).astype(int) == y for k, v in scores.items()}
    rows = []
    for name, s in scores.items():
        m = metrics_from_matrix(ConfusionMatrix.from_predictions(y, s >= threshold))
        row = {"model": name, **m.as_floats(), "auc_roc": auc_roc(s, y)}
        if name != "ensemble":
            mc = mcnemar(correct["ensemble"], correct[name])
            row["mcnemar_vs_ensemble"] = asdict(mc)
        rows.append(row)
    return rows
