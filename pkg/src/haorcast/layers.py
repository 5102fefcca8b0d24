"""Three-layer probability pipeline: base ensemble, discharge step, trend ramp.

The two upstream adjustments are additive, jointly capped at +0.30, and the
final probability never exceeds 0.95.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import NegativeDischargeError, OutOfRangeError, WrongLengthError

LOW, MEDIUM, HIGH, EXTREME = "LOW", "MEDIUM", "HIGH", "EXTREME"
TIERS = (LOW, MEDIUM, HIGH, EXTREME)

CLASSIFICATION_THRESHOLD = 0.40
MAX_TOTAL_DELTA = 0.30
P_CEILING = 0.95


@dataclass(frozen=True)
class DischargeThresholds:
    high_m3s: float = 6000.0
    danger_m3s: float = 7500.0
    high_delta: float = 0.10
    danger_delta: float = 0.15

    def __post_init__(self):
        if not self.danger_m3s > self.high_m3s > 0:
            raise OutOfRangeError("need danger_m3s > high_m3s > 0")
        if not 0 <= self.high_delta <= self.danger_delta <= 0.15:
            raise OutOfRangeError("need 0 <= high_delta <= danger_delta <= 0.15")


@dataclass(frozen=True)
class TrendConfig:
    window_days: int = 14
    smooth_days: int = 3
    min_r2: float = 0.60
    min_slope_m3s_per_day: float = 100.0
    delta_min: float = 0.05
    delta_max: float = 0.15
    slope_at_delta_max: float = 500.0

    def __post_init__(self):
        if not 0 < self.delta_min <= self.delta_max:
            raise OutOfRangeError("need 0 < delta_min <= delta_max")
        if not 0 < self.min_r2 < 1:
            raise OutOfRangeError("min_r2 must lie in (0, 1)")
        if self.slope_at_delta_max <= self.min_slope_m3s_per_day:
            raise OutOfRangeError("slope_at_delta_max must exceed min_slope_m3s_per_day")


@dataclass(frozen=True)
class TierBands:
    medium: float = 0.40
    high: float = 0.65
    extreme: float = 0.85


@dataclass(frozen=True)
class TrendResult:
    delta: float
    slope: float
    r2: float


@dataclass(frozen=True)
class PredictionBreakdown:
    p_base: float
    delta_discharge: float
    delta_trend: float
    delta_total_capped: float
    p_final: float
    tier: str
    cap_applied: bool
    ceiling_applied: bool

    @property
    def classification(self) -> str:
        return classify(self.p_final)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["classification"] = self.classification
        return d


def discharge_adjust(barak_m3s: float, th: DischargeThresholds = DischargeThresholds()) -> float:
    if barak_m3s < 0:
        raise NegativeDischargeError(f"discharge must be >= 0, got {barak_m3s}")
    if barak_m3s >= th.danger_m3s:
        return th.danger_delta
    if barak_m3s >= th.high_m3s:
        return th.high_delta
    return 0.0


def smooth_centered(series, width: int = 3) -> np.ndarray:
    """Centred moving average whose window shrinks symmetrically at the ends.

    With width 3 the first and last values are kept as-is, so a straight
    line passes through unchanged.
    """
    x = np.asarray(series, dtype=np.float64)
    half = width // 2
    out = np.empty_like(x)
    n = len(x)
    for i in range(n):
        k = min(half, i, n - 1 - i)
        out[i] = x[i - k:i + k + 1].mean()
    return out


def ols_fit(y) -> tuple[float, float]:
    """Slope and r^2 of y regressed on 0..n-1; r^2 is 0 for a flat series."""
    y = np.asarray(y, dtype=np.float64)
    t = np.arange(len(y), dtype=np.float64)
    dt_ = t - t.mean()
    dy = y - y.mean()
    sxx = float(dt_ @ dt_)
    syy = float(dy @ dy)
    slope = float(dt_ @ dy) / sxx
    if syy == 0.0:
        return slope, 0.0
    resid = dy - slope * dt_
    r2 = 1.0 - float(resid @ resid) / syy
    return slope, min(1.0, max(0.0, r2))


def trend_adjust(series, cfg: TrendConfig = TrendConfig()) -> TrendResult:
    x = np.asarray(series, dtype=np.float64)
    if x.shape != (cfg.window_days,):
        raise WrongLengthError(f"expected {cfg.window_days} daily values, got {x.size}")
    if (x < 0).any():
        raise NegativeDischargeError("discharge series contains negative values")
    slope, r2 = ols_fit(smooth_centered(x, cfg.smooth_days))
    if slope <= 0 or r2 < cfg.min_r2 or slope < cfg.min_slope_m3s_per_day:
        return TrendResult(0.0, slope, r2)
    frac = (slope - cfg.min_slope_m3s_per_day) / (
        cfg.slope_at_delta_max - cfg.min_slope_m3s_per_day)
    delta = cfg.delta_min + (cfg.delta_max - cfg.delta_min) * frac
    return TrendResult(min(cfg.delta_max, max(cfg.delta_min, delta)), slope, r2)


def risk_tier(p_final: float, bands: TierBands = TierBands()) -> str:
    if p_final < bands.medium:
        return LOW
    if p_final < bands.high:
        return MEDIUM
    if p_final < bands.extreme:
        return HIGH
    return EXTREME


def classify(p_final: float, threshold: float = CLASSIFICATION_THRESHOLD) -> str:
    return "flood" if p_final >= threshold else "dry"


def combine(p_base: float, delta_discharge: float = 0.0, delta_trend: float = 0.0,
            bands: TierBands = TierBands()) -> PredictionBreakdown:
    if not 0.0 <= p_base <= 1.0:
        raise OutOfRangeError(f"p_base must lie in [0, 1], got {p_base}")
    if delta_discharge < 0 or delta_trend < 0:
        raise OutOfRangeError("layer deltas must be non-negative")
    raw = delta_discharge + delta_trend
    delta = min(raw, MAX_TOTAL_DELTA)
    uncapped = p_base + delta
    p_final = min(uncapped, P_CEILING)
    return PredictionBreakdown(
        p_base=float(p_base),
        delta_discharge=float(delta_discharge),
        delta_trend=float(delta_trend),
        delta_total_capped=float(delta),
        p_final=float(p_final),
        tier=risk_tier(p_final, bands),
        # a bound "binds" when the input reaches it
        cap_applied=raw >= MAX_TOTAL_DELTA,
        ceiling_applied=uncapped >= P_CEILING,
    )


def run_layers(p_base: float, barak_m3s: float | None = None, series=None,
               discharge: DischargeThresholds = DischargeThresholds(),
               trend: TrendConfig = TrendConfig(),
               bands: TierBands = TierBands()) -> tuple[PredictionBreakdown, TrendResult | None]:
    """Apply whichever upstream layers have inputs available."""
    d_dis = 0.0 if barak_m3s is None else discharge_adjust(barak_m3s, discharge)
    tr = None if series is None else trend_adjust(series, trend)
    d_tr = 0.0 if tr is None else tr.delta
    return combine(p_base, d_dis, d_tr, bands), tr
