"""Proxy events, within-fold augmentation and the bundled synthetic dataset.

Randomness comes only from ``numpy.random.Generator`` over PCG64, seeded
explicitly by the caller. No OS entropy is used anywhere.
"""

from __future__ import annotations

import configparser
import datetime as dt
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import EmptyTrainingSplitError, OutOfRangeError, PostSentinelDateError
from .features import (
    DRY,
    FEATURE_INDEX,
    FLOOD,
    LABEL_AREA_KM2,
    PROXY,
    REAL_SAR,
    SENTINEL_START,
    ClimatologyTable,
    EventRecord,
    build_event,
    feature_matrix,
    with_features,
)

# Non-SAR proxy features: uniform (low, high) per label.
_PROXY_KEYS = (
    "rain_7d_mm", "soil_moisture", "temp_anomaly_c", "wind_kmh", "forecast_rain_12h_mm",
    "forecast_rain_72h_mm", "barak_m3s", "upstream_vv_db",
)


def _rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(np.random.SeedSequence(seed_or_rng))


@dataclass(frozen=True)
class ProxyConfig:
    flooded_vv_range_db: tuple = (-24.0, -18.0)
    dry_vv_range_db: tuple = (-14.0, -9.0)
    vh_offset_db: float = 7.0
    vh_offset_jitter_db: float = 1.0
    ndwi_missing_rate: float = 0.69
    flood_ranges: dict = field(default_factory=lambda: {
        "rain_7d_mm": (60.0, 260.0),
        "soil_moisture": (0.30, 0.48),
        "temp_anomaly_c": (-2.0, 2.0),
        "wind_kmh": (8.0, 38.0),
        "forecast_rain_12h_mm": (0.0, 60.0),
        "forecast_rain_72h_mm": (60.0, 220.0),
        "barak_m3s": (4000.0, 9500.0),
        "upstream_vv_db": (-22.0, -14.0),
    })
    dry_ranges: dict = field(default_factory=lambda: {
        "rain_7d_mm": (0.0, 150.0),
        "soil_moisture": (0.15, 0.40),
        "temp_anomaly_c": (-2.0, 2.0),
        "wind_kmh": (5.0, 32.0),
        "forecast_rain_12h_mm": (0.0, 30.0),
        "forecast_rain_72h_mm": (0.0, 110.0),
        "barak_m3s": (800.0, 6500.0),
        "upstream_vv_db": (-17.0, -9.0),
    })
    seed: int = 0

    def __post_init__(self):
        (flo, fhi), (dlo, dhi) = self.flooded_vv_range_db, self.dry_vv_range_db
        if not (flo < fhi and dlo < dhi):
            raise OutOfRangeError("VV ranges need low < high")
        if max(flo, dlo) < min(fhi, dhi):
            raise OutOfRangeError("flooded and dry VV ranges overlap")
        for ranges in (self.flood_ranges, self.dry_ranges):
            missing = set(_PROXY_KEYS) - set(ranges)
            if missing:
                raise OutOfRangeError(f"proxy ranges missing {sorted(missing)}")
            for key, (lo, hi) in ranges.items():
                if lo > hi:
                    raise OutOfRangeError(f"proxy range {key}: low > high")


@dataclass(frozen=True)
class AugmentConfig:
    noise_mean: float = 0.0
    noise_sigma: float = 0.05
    ratio: int = 8
    seed: int = 0

    def __post_init__(self):
        if not self.noise_sigma > 0:
            raise OutOfRangeError(f"noise_sigma must be > 0, got {self.noise_sigma}")
        if self.ratio < 1:
            raise OutOfRangeError(f"ratio must be >= 1, got {self.ratio}")


# --- config file ----------------------------------------------------------


def _pair(text: str) -> tuple:
    lo, hi = (float(v) for v in text.split(","))
    return lo, hi


def load_config(path=None) -> tuple[ProxyConfig, AugmentConfig]:
    """Read ``[proxy]``, ``[proxy.flood]``, ``[proxy.dry]`` and ``[augment]``
    sections; unspecified keys keep their defaults."""
    parser = configparser.ConfigParser()
    if path is None:
        ref = resources.files("haorcast") / "data" / "synth.cfg"
        parser.read_string(ref.read_text())
    else:
        if not Path(path).is_file():
            raise OutOfRangeError(f"config file not found: {path}")
        parser.read(path)

    base = ProxyConfig()
    kw = {}
    if parser.has_section("proxy"):
        s = parser["proxy"]
        if "flooded_vv_range_db" in s:
            kw["flooded_vv_range_db"] = _pair(s["flooded_vv_range_db"])
        if "dry_vv_range_db" in s:
            kw["dry_vv_range_db"] = _pair(s["dry_vv_range_db"])
        for key in ("vh_offset_db", "vh_offset_jitter_db", "ndwi_missing_rate"):
            if key in s:
                kw[key] = s.getfloat(key)
        if "seed" in s:
            kw["seed"] = s.getint("seed")
    for label, attr in (("flood", "flood_ranges"), ("dry", "dry_ranges")):
        ranges = dict(getattr(base, attr))
        sec = f"proxy.{label}"
        if parser.has_section(sec):
            for key, text in parser[sec].items():
                if key not in _PROXY_KEYS:
                    raise OutOfRangeError(f"[{sec}] unknown key {key!r}")
                ranges[key] = _pair(text)
        kw[attr] = ranges
    proxy = ProxyConfig(**kw)

    akw = {}
    if parser.has_section("augment"):
        s = parser["augment"]
        for key in ("noise_mean", "noise_sigma"):
            if key in s:
                akw[key] = s.getfloat(key)
        for key in ("ratio", "seed"):
            if key in s:
                akw[key] = s.getint(key)
    return proxy, AugmentConfig(**akw)


# --- proxy events ---------------------------------------------------------


def make_proxy_event(date: dt.date, label: str, cfg: ProxyConfig = ProxyConfig(),
                     rng=None, event_id: str | None = None,
                     clim: ClimatologyTable | None = None) -> EventRecord:
    """Pre-Sentinel event with SAR backscatter drawn from the label's dB band."""
    if date >= SENTINEL_START:
        raise PostSentinelDateError(f"proxy events must predate 2014, got {date}")
    if label not in (FLOOD, DRY):
        raise OutOfRangeError(f"label must be 'flood' or 'dry', got {label!r}")
    rng = _rng(cfg.seed if rng is None else rng)
    clim = clim or ClimatologyTable()

    lo, hi = cfg.flooded_vv_range_db if label == FLOOD else cfg.dry_vv_range_db
    vv = float(rng.uniform(lo, hi))
    offset = cfg.vh_offset_db + float(rng.uniform(-cfg.vh_offset_jitter_db,
                                                  cfg.vh_offset_jitter_db))
    ranges = cfg.flood_ranges if label == FLOOD else cfg.dry_ranges
    draw = {k: float(rng.uniform(*ranges[k])) for k in _PROXY_KEYS}
    ndwi = None
    if rng.random() >= cfg.ndwi_missing_rate:
        ndwi = round(float(rng.uniform(0.0, 0.5) if label == FLOOD else rng.uniform(-0.4, 0.1)), 3)
    if label == FLOOD:
        area = float(rng.uniform(LABEL_AREA_KM2 + 5.0, 900.0))
    else:
        area = float(rng.uniform(0.0, LABEL_AREA_KM2))
    barak = draw["barak_m3s"]

    return build_event(
        event_id or f"P-{date.isoformat()}",
        date,
        vv_db=round(vv, 2),
        vh_db=round(vv - offset, 2),
        rain_7d_mm=round(draw["rain_7d_mm"], 1),
        soil_moisture=round(draw["soil_moisture"], 3),
        raw_temp_c=round(clim[date.month] + draw["temp_anomaly_c"], 2),
        wind_kmh=round(draw["wind_kmh"], 1),
        ndwi=ndwi,
        forecast_rain_12h_mm=round(draw["forecast_rain_12h_mm"], 1),
        upstream_vv_db=round(draw["upstream_vv_db"], 2),
        forecast_rain_72h_mm=round(draw["forecast_rain_72h_mm"], 1),
        surma_m3s=round(max(0.0, 0.42 * barak + float(rng.normal(0.0, 350.0))), 1),
        barak_m3s=round(barak, 1),
        otsu_area_km2=round(area, 2),
        ffwc_confirmed=label == FLOOD,
        provenance=PROXY,
        label=label,
        clim=clim,
    )


# --- augmentation ---------------------------------------------------------


_NDWI = FEATURE_INDEX["ndwi"]


def augment_matrix(X: np.ndarray, cfg: AugmentConfig, rng) -> np.ndarray:
    """Noisy copies of X: ``ratio`` per row, parent-major order.

    Noise is drawn in z-score space (per-column mean/std of X) and mapped
    back, i.e. each copy is ``x + (mean + sigma * N(0,1)) * std``.
    """
    rng = _rng(rng)
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    std = X.std(axis=0)
    z = rng.standard_normal((n, cfg.ratio, d))
    copies = X[:, None, :] + (cfg.noise_mean + cfg.noise_sigma * z) * std
    return copies.reshape(n * cfg.ratio, d)


def augment_fold(train_events, cfg: AugmentConfig = AugmentConfig(), rng=None) -> list[EventRecord]:
    """Originals followed by ``ratio`` noisy copies of each, tagged with parent ids.

    Only the events passed in are touched; statistics come from this split.
    """
    train_events = list(train_events)
    if not train_events:
        raise EmptyTrainingSplitError("cannot augment an empty training split")
    rng = _rng(cfg.seed if rng is None else rng)
    X = feature_matrix(train_events)
    copies = augment_matrix(X, cfg, rng)
    out = list(train_events)
    for i, ev in enumerate(train_events):
        for j in range(cfg.ratio):
            row = copies[i * cfg.ratio + j].copy()
            row[_NDWI] = min(1.0, max(-1.0, row[_NDWI]))  # stays a valid index
            out.append(with_features(ev, row, parent_id=ev.event_id,
                                     event_id=f"{ev.event_id}#aug{j + 1}"))
    return out


# --- bundled dataset ------------------------------------------------------

N_REAL_FLOOD, N_REAL_DRY = 32, 45
N_PROXY_FLOOD, N_PROXY_DRY = 28, 26

# Floods cluster in the pre-monsoon and monsoon months; dry events skew to
# the cool season. That seasonality is what makes raw temperature a confound.
_FLOOD_MONTHS = {4: 0.30, 5: 0.22, 6: 0.20, 7: 0.14, 8: 0.09, 9: 0.05}
_DRY_MONTHS = {1: 0.16, 2: 0.16, 3: 0.14, 4: 0.05, 5: 0.04, 6: 0.03, 7: 0.03,
               8: 0.04, 9: 0.05, 10: 0.08, 11: 0.10, 12: 0.12}


def _draw_date(rng, years: range, weights: dict) -> dt.date:
    months = np.array(list(weights))
    p = np.array(list(weights.values()))
    month = int(rng.choice(months, p=p / p.sum()))
    return dt.date(int(rng.choice(np.array(list(years)))), month, int(rng.integers(1, 29)))


def _real_event(rng, event_id, date, label, clim) -> EventRecord:
    flood = label == FLOOD

    def gauss(mu_flood, mu_dry, sd):
        return float(rng.normal(mu_flood if flood else mu_dry, sd))

    vv = min(-5.0, gauss(-16.0, -14.5, 2.4))
    offset = float(rng.uniform(6.4, 8.8) if flood else rng.uniform(5.8, 8.2))
    upstream = min(-5.0, gauss(-15.0, -13.5, 2.4))
    barak = max(300.0, gauss(6100.0, 4300.0, 1300.0) - 250.0 * (upstream + 14.5))
    ndwi = None
    if rng.random() >= 0.69:
        ndwi = round(min(1.0, max(-1.0, gauss(0.12, 0.0, 0.2))), 3)
    month = date.month
    if flood:
        area = float(rng.uniform(LABEL_AREA_KM2 + 5.0, 950.0))
        confirmed = True
    elif rng.random() < 0.25:
        area, confirmed = float(rng.uniform(LABEL_AREA_KM2 + 1.0, 120.0)), False
    else:
        area, confirmed = float(rng.uniform(0.0, LABEL_AREA_KM2)), bool(rng.random() < 0.5)

    return build_event(
        event_id,
        date,
        vv_db=round(vv, 2),
        vh_db=round(vv - offset, 2),
        rain_7d_mm=round(max(0.0, gauss(125.0, 85.0, 50.0)), 1),
        soil_moisture=round(min(0.55, max(0.05, gauss(0.365, 0.31, 0.05))), 3),
        raw_temp_c=round(clim[month] + float(rng.normal(0.0, 1.1)), 2),
        wind_kmh=round(max(0.0, gauss(20.0, 19.0, 7.0)), 1),
        ndwi=ndwi,
        forecast_rain_12h_mm=round(max(0.0, gauss(18.0, 13.0, 12.0)), 1),
        upstream_vv_db=round(upstream, 2),
        forecast_rain_72h_mm=round(max(0.0, gauss(104.0, 46.0, 30.0)), 1),
        surma_m3s=round(max(0.0, 0.42 * barak + float(rng.normal(0.0, 350.0))), 1),
        barak_m3s=round(barak, 1),
        otsu_area_km2=round(area, 2),
        ffwc_confirmed=confirmed,
        provenance=REAL_SAR,
        clim=clim,
    )


def generate_bundled_dataset(seed: int = 42, proxy_cfg: ProxyConfig | None = None,
                             clim: ClimatologyTable | None = None) -> list[EventRecord]:
    """131 events: 77 post-2014 real-SAR-style records and 54 pre-2014 proxies.

    Class balance matches the published dataset summary (32/45 real, 28/26
    proxy). Class-conditional distributions overlap, so the task is not
    separable.
    """
    rng = _rng(seed)
    proxy_cfg = proxy_cfg or ProxyConfig()
    clim = clim or ClimatologyTable()

    real_labels = [FLOOD] * N_REAL_FLOOD + [DRY] * N_REAL_DRY
    proxy_labels = [FLOOD] * N_PROXY_FLOOD + [DRY] * N_PROXY_DRY
    rng.shuffle(real_labels)
    rng.shuffle(proxy_labels)

    real = []
    for label in real_labels:
        weights = _FLOOD_MONTHS if label == FLOOD else _DRY_MONTHS
        real.append((_draw_date(rng, range(2014, 2025), weights), label))
    proxies = []
    for label in proxy_labels:
        weights = _FLOOD_MONTHS if label == FLOOD else _DRY_MONTHS
        proxies.append((_draw_date(rng, range(2009, 2014), weights), label))

    events = []
    real.sort(key=lambda t: t[0])
    proxies.sort(key=lambda t: t[0])
    for i, (date, label) in enumerate(real, 1):
        events.append(_real_event(rng, f"R{i:03d}", date, label, clim))
    for i, (date, label) in enumerate(proxies, 1):
        events.append(make_proxy_event(date, label, proxy_cfg, rng, f"P{i:03d}", clim))
    return events
