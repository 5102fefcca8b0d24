"""Event feature vectors, temperature deseasonalisation and the CSV event store."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import (
    InsufficientDataError,
    InvalidMonthError,
    OutOfRangeError,
    PostSentinelDateError,
    SingleClassError,
)

FLOOD = "flood"
DRY = "dry"
REAL_SAR = "real_sar"
PROXY = "proxy"

LABEL_AREA_KM2 = 50.0
SENTINEL_START = dt.date(2014, 1, 1)

# Canonical order: importance vectors and ablation masks index into this.
FEATURE_NAMES = (
    "vv_db",
    "vh_db",
    "vv_vh_ratio",
    "rain_7d_mm",
    "soil_moisture",
    "temp_anomaly_c",
    "wind_speed_kmh",
    "ndwi",
    "forecast_rain_12h_mm",
    "upstream_vv_db",
    "forecast_rain_72h_mm",
)
N_FEATURES = len(FEATURE_NAMES)
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}

# Monthly mean 2 m temperature for the haor basin, January first.
DEFAULT_CLIMATOLOGY_C = (17.0, 19.4, 22.0, 24.8, 25.4, 27.1, 27.3, 27.5, 28.3, 27.0, 25.4, 20.1)

CSV_COLUMNS = (
    "event_id", "date", "vv_db", "vh_db", "rain_7d_mm", "soil_moisture", "raw_temp_c",
    "wind_kmh", "ndwi", "forecast_rain_12h_mm", "upstream_vv_db", "forecast_rain_72h_mm",
    "surma_m3s", "barak_m3s", "otsu_area_km2", "ffwc_confirmed", "provenance", "label",
)


@dataclass(frozen=True)
class ClimatologyTable:
    monthly_mean_c: tuple = DEFAULT_CLIMATOLOGY_C

    def __post_init__(self):
        vals = tuple(float(v) for v in self.monthly_mean_c)
        if len(vals) != 12:
            raise OutOfRangeError(f"climatology needs 12 monthly values, got {len(vals)}")
        if any(not 0.0 <= v <= 45.0 for v in vals):
            raise OutOfRangeError("climatology values must lie in [0, 45] degC")
        object.__setattr__(self, "monthly_mean_c", vals)

    def __getitem__(self, month: int) -> float:
        _check_month(month)
        return self.monthly_mean_c[month - 1]

    @classmethod
    def from_file(cls, path) -> "ClimatologyTable":
        """Read a ``month,temp_c`` file (12 rows, optional header)."""
        by_month = {}
        for row in csv.reader(Path(path).read_text().splitlines()):
            if not row or row[0].strip().lower() == "month":
                continue
            by_month[int(row[0])] = float(row[1])
        if sorted(by_month) != list(range(1, 13)):
            raise OutOfRangeError(f"{path}: need one row per month 1..12")
        return cls(tuple(by_month[m] for m in range(1, 13)))

    @classmethod
    def default(cls) -> "ClimatologyTable":
        ref = resources.files("haorcast") / "data" / "climatology.csv"
        with resources.as_file(ref) as p:
            return cls.from_file(p)


def _check_month(month):
    if not isinstance(month, (int, np.integer)) or not 1 <= month <= 12:
        raise InvalidMonthError(f"month must be an integer in 1..12, got {month!r}")


def temp_anomaly(t_obs: float, month: int, clim: ClimatologyTable | None = None) -> float:
    """Observed temperature minus the monthly climatological mean."""
    clim = clim or ClimatologyTable()
    if not math.isfinite(t_obs):
        raise OutOfRangeError(f"t_obs must be finite, got {t_obs}")
    return t_obs - clim[month]


def vv_vh_ratio(vv_db: float, vh_db: float) -> float:
    # a linear power ratio is a difference in dB
    return vv_db - vh_db


def fill_ndwi(ndwi: float | None) -> float:
    if ndwi is None or (isinstance(ndwi, float) and math.isnan(ndwi)):
        return 0.0
    if not -1.0 <= ndwi <= 1.0:
        raise OutOfRangeError(f"NDWI must lie in [-1, 1], got {ndwi}")
    return float(ndwi)


def assign_label(otsu_area_km2: float, ffwc_confirmed: bool) -> str:
    if otsu_area_km2 < 0:
        raise OutOfRangeError(f"area must be >= 0, got {otsu_area_km2}")
    return FLOOD if otsu_area_km2 > LABEL_AREA_KM2 and ffwc_confirmed else DRY


@dataclass(frozen=True)
class FeatureVector:
    vv_db: float
    vh_db: float
    vv_vh_ratio: float
    rain_7d_mm: float
    soil_moisture: float
    temp_anomaly_c: float
    wind_speed_kmh: float
    ndwi: float
    forecast_rain_12h_mm: float
    upstream_vv_db: float
    forecast_rain_72h_mm: float

    def __post_init__(self):
        vals = self.as_array()
        if not np.isfinite(vals).all():
            raise OutOfRangeError("feature vector contains non-finite values")
        if not -1.0 <= self.ndwi <= 1.0:
            raise OutOfRangeError(f"ndwi must lie in [-1, 1], got {self.ndwi}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "FeatureVector":
        return cls(*(float(v) for v in arr))


@dataclass(frozen=True)
class DashboardIndicators:
    """Discharge readings shown to operators; never used for training."""

    surma_discharge_m3s: float
    barak_discharge_m3s: float

    def __post_init__(self):
        if self.surma_discharge_m3s < 0 or self.barak_discharge_m3s < 0:
            raise OutOfRangeError("discharge must be non-negative")


@dataclass(frozen=True)
class EventRecord:
    event_id: str
    date: dt.date
    features: FeatureVector
    dashboard: DashboardIndicators
    label: str
    provenance: str
    otsu_area_km2: float
    ffwc_confirmed: bool
    raw_temp_c: float
    ndwi_observed: float | None = None
    # set on augmented copies only
    parent_id: str | None = field(default=None, compare=False)

    @property
    def y(self) -> int:
        return 1 if self.label == FLOOD else 0

    @property
    def month(self) -> int:
        return self.date.month


def build_event(
    event_id: str,
    date: dt.date,
    *,
    vv_db: float,
    vh_db: float,
    rain_7d_mm: float,
    soil_moisture: float,
    raw_temp_c: float,
    wind_kmh: float,
    ndwi: float | None,
    forecast_rain_12h_mm: float,
    upstream_vv_db: float,
    forecast_rain_72h_mm: float,
    surma_m3s: float,
    barak_m3s: float,
    otsu_area_km2: float,
    ffwc_confirmed: bool,
    provenance: str,
    label: str | None = None,
    clim: ClimatologyTable | None = None,
) -> EventRecord:
    """Assemble an event from raw observations, deriving the engineered features.

    ``label`` defaults to the area/confirmation rule.
    """
    fv = FeatureVector(
        vv_db=vv_db,
        vh_db=vh_db,
        vv_vh_ratio=vv_vh_ratio(vv_db, vh_db),
        rain_7d_mm=rain_7d_mm,
        soil_moisture=soil_moisture,
        temp_anomaly_c=temp_anomaly(raw_temp_c, date.month, clim),
        wind_speed_kmh=wind_kmh,
        ndwi=fill_ndwi(ndwi),
        forecast_rain_12h_mm=forecast_rain_12h_mm,
        upstream_vv_db=upstream_vv_db,
        forecast_rain_72h_mm=forecast_rain_72h_mm,
    )
    if label is None:
        label = assign_label(otsu_area_km2, ffwc_confirmed)
    if label not in (FLOOD, DRY):
        raise OutOfRangeError(f"label must be 'flood' or 'dry', got {label!r}")
    if provenance not in (REAL_SAR, PROXY):
        raise OutOfRangeError(f"provenance must be 'real_sar' or 'proxy', got {provenance!r}")
    if provenance == PROXY and date >= SENTINEL_START:
        raise PostSentinelDateError(f"{event_id}: proxy events must predate 2014, got {date}")
    return EventRecord(
        event_id=event_id,
        date=date,
        features=fv,
        dashboard=DashboardIndicators(surma_m3s, barak_m3s),
        label=label,
        provenance=provenance,
        otsu_area_km2=otsu_area_km2,
        ffwc_confirmed=ffwc_confirmed,
        raw_temp_c=raw_temp_c,
        ndwi_observed=None if ndwi is None else float(ndwi),
    )


def with_features(event: EventRecord, arr, parent_id: str, event_id: str) -> EventRecord:
    """Copy of ``event`` carrying a new feature array (used for augmentation)."""
    return replace(event, event_id=event_id, features=FeatureVector.from_array(arr),
                   parent_id=parent_id)


def feature_matrix(events) -> np.ndarray:
    if not events:
        return np.empty((0, N_FEATURES))
    return np.vstack([e.features.as_array() for e in events])


def label_vector(events) -> np.ndarray:
    return np.array([e.y for e in events], dtype=np.int8)


# --- CSV event store ------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def write_events(path, events):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for e in events:
            f = e.features
            w.writerow([
                e.event_id, e.date.isoformat(), _fmt(f.vv_db), _fmt(f.vh_db),
                _fmt(f.rain_7d_mm), _fmt(f.soil_moisture), _fmt(e.raw_temp_c),
                _fmt(f.wind_speed_kmh),
                "" if e.ndwi_observed is None else _fmt(e.ndwi_observed),
                _fmt(f.forecast_rain_12h_mm), _fmt(f.upstream_vv_db),
                _fmt(f.forecast_rain_72h_mm), _fmt(e.dashboard.surma_discharge_m3s),
                _fmt(e.dashboard.barak_discharge_m3s), _fmt(e.otsu_area_km2),
                "true" if e.ffwc_confirmed else "false", e.provenance, e.label,
            ])


def read_events(path, clim: ClimatologyTable | None = None) -> list[EventRecord]:
    clim = clim or ClimatologyTable()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise OutOfRangeError(f"{path}: missing columns {sorted(missing)}")
        return [_row_to_event(row, clim) for row in reader]


def _row_to_event(row: dict, clim: ClimatologyTable) -> EventRecord:
    ndwi = row["ndwi"].strip()
    return build_event(
        row["event_id"],
        dt.date.fromisoformat(row["date"]),
        vv_db=float(row["vv_db"]),
        vh_db=float(row["vh_db"]),
        rain_7d_mm=float(row["rain_7d_mm"]),
        soil_moisture=float(row["soil_moisture"]),
        raw_temp_c=float(row["raw_temp_c"]),
        wind_kmh=float(row["wind_kmh"]),
        ndwi=float(ndwi) if ndwi else None,
        forecast_rain_12h_mm=float(row["forecast_rain_12h_mm"]),
        upstream_vv_db=float(row["upstream_vv_db"]),
        forecast_rain_72h_mm=float(row["forecast_rain_72h_mm"]),
        surma_m3s=float(row["surma_m3s"]),
        barak_m3s=float(row["barak_m3s"]),
        otsu_area_km2=float(row["otsu_area_km2"]),
        ffwc_confirmed=row["ffwc_confirmed"].strip().lower() in ("true", "1", "yes"),
        provenance=row["provenance"],
        label=row["label"],
        clim=clim,
    )


# --- confound analysis ----------------------------------------------------


@dataclass(frozen=True)
class ConfoundSummary:
    n: int
    r_raw_label: float
    p_raw_label: float
    r_anomaly_label: float
    p_anomaly_label: float
    r_raw_month: float

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx, dy = x - x.mean(), y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        return float("nan")
    return max(-1.0, min(1.0, float(dx @ dy) / denom))


def _two_sided_p(r: float, n: int) -> float:
    # t-test on the correlation with n - 2 degrees of freedom
    if math.isnan(r):
        return float("nan")
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * stats.t.sf(abs(t), n - 2))


def point_biserial(values, labels) -> tuple[float, float]:
    """Correlation between a continuous variable and 0/1 labels, with p-value."""
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n = len(values)
    n1 = int(labels.sum())
    if n1 in (0, n):
        raise SingleClassError("point-biserial needs both classes")
    m1 = values[labels == 1].mean()
    m0 = values[labels == 0].mean()
    s = values.std()
    if s == 0.0:
        return float("nan"), float("nan")
    r = (m1 - m0) / s * math.sqrt(n1 * (n - n1)) / n
    r = max(-1.0, min(1.0, r))
    return r, _two_sided_p(r, n)


def confound_report(events, raw_temps=None) -> ConfoundSummary:
    """How strongly raw temperature and its anomaly track the flood label.

    ``raw_temps`` defaults to each event's stored raw temperature.
    """
    events = list(events)
    if len(events) < 3:
        raise InsufficientDataError(f"need >= 3 events, got {len(events)}")
    if raw_temps is None:
        raw_temps = [e.raw_temp_c for e in events]
    raw = np.asarray(raw_temps, dtype=np.float64)
    if raw.shape != (len(events),):
        raise InsufficientDataError("one raw temperature per event required")
    labels = label_vector(events)
    anomaly = np.array([e.features.temp_anomaly_c for e in events])
    months = np.array([e.month for e in events], dtype=np.float64)

    r_raw, p_raw = point_biserial(raw, labels)
    r_anom, p_anom = point_biserial(anomaly, labels)
    return ConfoundSummary(
        n=len(events),
        r_raw_label=r_raw,
        p_raw_label=p_raw,
        r_anomaly_label=r_anom,
        p_anomaly_label=p_anom,
        r_raw_month=_pearson(raw, months),
    )
