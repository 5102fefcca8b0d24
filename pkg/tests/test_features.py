import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from haorcast import features as F
from haorcast.errors import (
    InsufficientDataError,
    InvalidMonthError,
    OutOfRangeError,
    PostSentinelDateError,
    SingleClassError,
)

# published monthly means, January first
TABLE = (17.0, 19.4, 22.0, 24.8, 25.4, 27.1, 27.3, 27.5, 28.3, 27.0, 25.4, 20.1)


def make_event(i=0, label=None, raw_temp=25.0, date=dt.date(2018, 5, 1), ndwi=0.1,
               area=120.0, confirmed=True, provenance=F.REAL_SAR, **over):
    kw = dict(vv_db=-18.0, vh_db=-25.0, rain_7d_mm=120.0, soil_moisture=0.35,
              raw_temp_c=raw_temp, wind_kmh=18.0, ndwi=ndwi, forecast_rain_12h_mm=10.0,
              upstream_vv_db=-15.0, forecast_rain_72h_mm=80.0, surma_m3s=2500.0,
              barak_m3s=6000.0, otsu_area_km2=area, ffwc_confirmed=confirmed,
              provenance=provenance, label=label)
    kw.update(over)
    return F.build_event(f"E{i:03d}", date, **kw)


def test_bundled_climatology_matches_table():
    assert F.DEFAULT_CLIMATOLOGY_C == TABLE
    assert F.ClimatologyTable.default().monthly_mean_c == TABLE


@pytest.mark.parametrize("t, month, expected", [
    (30.0, 7, 2.7), (17.0, 1, 0.0), (25.4, 5, 0.0), (25.4, 11, 0.0),
])
def test_temp_anomaly_examples(t, month, expected):
    assert F.temp_anomaly(t, month) == pytest.approx(expected, abs=1e-12)


def test_temp_anomaly_zero_at_climatology():
    for m in range(1, 13):
        assert F.temp_anomaly(TABLE[m - 1], m) == 0.0


@pytest.mark.parametrize("month", [0, 13, -1, 2.5])
def test_temp_anomaly_bad_month(month):
    with pytest.raises(InvalidMonthError):
        F.temp_anomaly(20.0, month)


@settings(max_examples=100)
@given(st.floats(-10, 45), st.floats(-5, 5), st.integers(1, 12))
def test_temp_anomaly_shift_equivariant(t, delta, m):
    assert F.temp_anomaly(t + delta, m) == pytest.approx(F.temp_anomaly(t, m) + delta, abs=1e-9)


def test_climatology_validation(tmp_path):
    with pytest.raises(OutOfRangeError):
        F.ClimatologyTable(TABLE[:11])
    with pytest.raises(OutOfRangeError):
        F.ClimatologyTable((50.0,) * 12)
    p = tmp_path / "c.csv"
    p.write_text("month,temp_c\n" + "".join(f"{m},{20 + m}\n" for m in range(1, 12)))
    with pytest.raises(OutOfRangeError):
        F.ClimatologyTable.from_file(p)


def test_vv_vh_ratio():
    assert F.vv_vh_ratio(-20.0, -27.0) == 7.0
    assert F.vv_vh_ratio(-11.0, -11.0) == 0.0
    # linear power ratio cross-check
    p_vv, p_vh = 10 ** (-21.0 / 10), 10 ** (-28.5 / 10)
    assert F.vv_vh_ratio(-21.0, -28.5) == pytest.approx(10 * math.log10(p_vv / p_vh), abs=1e-12)
    assert F.vv_vh_ratio(-21.0, -28.5) == 7.5


def test_fill_ndwi():
    assert F.fill_ndwi(None) == 0.0
    assert F.fill_ndwi(float("nan")) == 0.0
    assert F.fill_ndwi(0.35) == 0.35
    with pytest.raises(OutOfRangeError):
        F.fill_ndwi(1.2)


def test_assign_label():
    assert F.assign_label(120.0, True) == F.FLOOD
    assert F.assign_label(120.0, False) == F.DRY
    assert F.assign_label(50.0, True) == F.DRY
    assert F.assign_label(50.0001, True) == F.FLOOD


@given(st.floats(0, 1e4), st.floats(0, 1e4), st.booleans())
def test_assign_label_monotone_in_area(a, b, confirmed):
    lo, hi = sorted((a, b))
    if F.assign_label(lo, confirmed) == F.FLOOD:
        assert F.assign_label(hi, confirmed) == F.FLOOD


def test_feature_order_and_vector():
    assert len(F.FEATURE_NAMES) == 11
    assert F.FEATURE_NAMES[0] == "vv_db" and F.FEATURE_NAMES[-1] == "forecast_rain_72h_mm"
    e = make_event(raw_temp=30.0, date=dt.date(2019, 7, 3), ndwi=None)
    arr = e.features.as_array()
    assert arr.shape == (11,)
    assert arr[F.FEATURE_INDEX["vv_vh_ratio"]] == 7.0
    assert arr[F.FEATURE_INDEX["ndwi"]] == 0.0
    assert arr[F.FEATURE_INDEX["temp_anomaly_c"]] == pytest.approx(2.7)
    assert F.FeatureVector.from_array(arr) == e.features


def test_discharge_not_in_features():
    e = make_event()
    assert not any("surma" in n or "barak" in n for n in F.FEATURE_NAMES)
    assert e.dashboard.barak_discharge_m3s == 6000.0


def test_build_event_rules():
    assert make_event(area=120.0, confirmed=True).label == F.FLOOD
    assert make_event(area=30.0, confirmed=True).label == F.DRY
    with pytest.raises(PostSentinelDateError):
        make_event(provenance=F.PROXY, date=dt.date(2015, 5, 1))
    with pytest.raises(OutOfRangeError):
        make_event(ndwi=-1.5)
    with pytest.raises(OutOfRangeError):
        make_event(vv_db=float("nan"))


def test_csv_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    events = []
    for i in range(20):
        events.append(make_event(
            i, raw_temp=float(rng.normal(25, 3)), date=dt.date(2016, 1 + i % 12, 5),
            ndwi=None if i % 3 == 0 else float(rng.uniform(-1, 1)),
            vv_db=float(rng.normal(-17, 3)), vh_db=float(rng.normal(-24, 3)),
            rain_7d_mm=float(rng.gamma(2, 40)), area=float(rng.uniform(0, 300))))
    p = tmp_path / "events.csv"
    F.write_events(p, events)
    assert p.read_text().splitlines()[0] == ",".join(F.CSV_COLUMNS)
    back = F.read_events(p)
    assert back == events
    np.testing.assert_array_equal(F.feature_matrix(back), F.feature_matrix(events))


def test_read_events_missing_column(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("event_id,date\nX,2018-01-01\n")
    with pytest.raises(OutOfRangeError):
        F.read_events(p)


# --- confound analysis ----------------------------------------------------


def _events_with(temps, labels):
    return [make_event(i, label=F.FLOOD if y else F.DRY, raw_temp=float(t))
            for i, (t, y) in enumerate(zip(temps, labels))]


def test_point_biserial_perfect():
    labels = np.array([0, 1, 0, 1, 1, 0])
    r, p = F.point_biserial(labels * 10.0, labels)
    assert r == pytest.approx(1.0)
    assert p == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(5, 80))
def test_point_biserial_equals_pearson(seed, n):
    rng = np.random.default_rng(seed)
    labels = np.zeros(n)
    labels[: rng.integers(1, n)] = 1
    rng.shuffle(labels)
    x = rng.normal(size=n) + labels
    r, p = F.point_biserial(x, labels)
    ref = stats.pearsonr(x, labels)
    assert r == pytest.approx(ref.statistic, abs=1e-12)
    assert p == pytest.approx(ref.pvalue, rel=1e-6, abs=1e-12)


def test_confound_permutation_independent():
    rng = np.random.default_rng(11)
    labels = np.array([1] * 36 + [0] * 41)
    temps = rng.normal(25, 2, 77)
    events = _events_with(temps, rng.permutation(labels))
    s = F.confound_report(events)
    assert s.n == 77
    assert abs(s.r_anomaly_label) < 0.2


def test_confound_errors():
    with pytest.raises(InsufficientDataError):
        F.confound_report(_events_with([20, 21], [0, 1]))
    with pytest.raises(SingleClassError):
        F.confound_report(_events_with([20, 21, 22, 23], [1, 1, 1, 1]))


def test_confound_raw_override():
    events = _events_with([20, 21, 22, 23, 24, 25], [0, 0, 0, 1, 1, 1])
    s = F.confound_report(events, raw_temps=[1, 1, 1, 5, 5, 5])
    assert s.r_raw_label == pytest.approx(1.0)
    with pytest.raises(InsufficientDataError):
        F.confound_report(events, raw_temps=[1, 2])
