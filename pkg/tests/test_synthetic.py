import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from haorcast import features as F
from haorcast import synthetic as S
from haorcast.errors import EmptyTrainingSplitError, OutOfRangeError, PostSentinelDateError


@pytest.fixture(scope="module")
def bundled():
    return S.generate_bundled_dataset(42)


def test_proxy_sar_ranges():
    rng = np.random.default_rng(7)
    ev = S.make_proxy_event(dt.date(2010, 4, 12), F.FLOOD, rng=rng)
    assert -24 <= ev.features.vv_db <= -18
    assert ev.provenance == F.PROXY and ev.label == F.FLOOD
    ev = S.make_proxy_event(dt.date(2011, 1, 20), F.DRY, rng=np.random.default_rng(7))
    assert -14 <= ev.features.vv_db <= -9


def test_proxy_rejects_sentinel_era():
    with pytest.raises(PostSentinelDateError):
        S.make_proxy_event(dt.date(2015, 6, 1), F.FLOOD, rng=np.random.default_rng(0))


def test_proxy_deterministic():
    a = S.make_proxy_event(dt.date(2012, 5, 5), F.FLOOD, rng=np.random.default_rng(3))
    b = S.make_proxy_event(dt.date(2012, 5, 5), F.FLOOD, rng=np.random.default_rng(3))
    assert a == b


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([F.FLOOD, F.DRY]))
def test_proxy_vv_never_in_gap(seed, label):
    ev = S.make_proxy_event(dt.date(2012, 5, 5), label, rng=np.random.default_rng(seed))
    vv = ev.features.vv_db
    assert not -18 < vv < -14
    offset = ev.features.vv_vh_ratio
    assert 6.0 - 0.02 <= offset <= 8.0 + 0.02


def test_proxy_config_validation():
    with pytest.raises(OutOfRangeError):
        S.ProxyConfig(flooded_vv_range_db=(-24.0, -12.0))
    with pytest.raises(OutOfRangeError):
        S.ProxyConfig(dry_vv_range_db=(-9.0, -14.0))
    with pytest.raises(OutOfRangeError):
        S.AugmentConfig(noise_sigma=0.0)
    with pytest.raises(OutOfRangeError):
        S.AugmentConfig(ratio=0)


def test_bundled_config_file_defaults():
    proxy, aug = S.load_config()
    assert proxy.flooded_vv_range_db == (-24.0, -18.0)
    assert proxy.dry_vv_range_db == (-14.0, -9.0)
    assert (aug.noise_mean, aug.noise_sigma, aug.ratio) == (0.0, 0.05, 8)


def test_config_override(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("[augment]\nratio = 3\n[proxy.flood]\nrain_7d_mm = 100, 110\n")
    proxy, aug = S.load_config(p)
    assert aug.ratio == 3 and aug.noise_sigma == 0.05
    assert proxy.flood_ranges["rain_7d_mm"] == (100.0, 110.0)
    p.write_text("[proxy.flood]\nbogus = 1, 2\n")
    with pytest.raises(OutOfRangeError):
        S.load_config(p)


def test_bundled_counts(bundled):
    assert len(bundled) == 131
    assert sum(e.y for e in bundled) == 60
    real = [e for e in bundled if e.provenance == F.REAL_SAR]
    proxy = [e for e in bundled if e.provenance == F.PROXY]
    assert (len(real), sum(e.y for e in real)) == (77, 32)
    assert (len(proxy), sum(e.y for e in proxy)) == (54, 28)
    assert all(e.date < F.SENTINEL_START for e in proxy)
    assert all(e.date >= F.SENTINEL_START for e in real)
    assert len({e.event_id for e in bundled}) == 131


def test_bundled_labels_follow_rule(bundled):
    for e in bundled:
        assert e.label == F.assign_label(e.otsu_area_km2, e.ffwc_confirmed)


def test_bundled_deterministic(bundled, tmp_path):
    again = S.generate_bundled_dataset(42)
    assert again == bundled
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    F.write_events(a, bundled)
    F.write_events(b, again)
    assert a.read_bytes() == b.read_bytes()
    assert S.generate_bundled_dataset(43) != bundled


def test_bundled_classes_overlap(bundled):
    # no single feature separates the classes
    X = F.feature_matrix(bundled)
    y = F.label_vector(bundled)
    for j in range(X.shape[1]):
        f, d = X[y == 1, j], X[y == 0, j]
        assert f.min() < d.max() and d.min() < f.max()


def test_augment_size_and_tags(bundled):
    train = bundled[:69]
    out = S.augment_fold(train, S.AugmentConfig(), np.random.default_rng(0))
    assert len(out) == 621
    assert out[:69] == train
    ids = {e.event_id for e in train}
    for e in out[69:]:
        assert e.parent_id in ids
        assert e.event_id.startswith(e.parent_id + "#aug")
    # label distribution preserved exactly
    assert F.label_vector(out).sum() == 9 * F.label_vector(train).sum()


def test_augment_tiny_sigma(bundled):
    cfg = S.AugmentConfig(noise_sigma=1e-300)
    out = S.augment_fold(bundled[:10], cfg, np.random.default_rng(0))
    X = F.feature_matrix(out)
    for k in range(8):
        np.testing.assert_allclose(X[10 + k::8][:10], F.feature_matrix(bundled[:10]),
                                   rtol=1e-15, atol=1e-250)


def test_augment_deterministic(bundled):
    a = S.augment_fold(bundled[:30], S.AugmentConfig(), np.random.default_rng(5))
    b = S.augment_fold(bundled[:30], S.AugmentConfig(), np.random.default_rng(5))
    np.testing.assert_array_equal(F.feature_matrix(a), F.feature_matrix(b))


def test_augment_noise_scale(bundled):
    X = F.feature_matrix(bundled)
    copies = S.augment_matrix(X, S.AugmentConfig(), np.random.default_rng(1))
    z = (copies - np.repeat(X, 8, axis=0)) / X.std(axis=0)
    assert abs(z.mean()) < 0.005
    assert z.std() == pytest.approx(0.05, rel=0.05)


def test_augment_empty():
    with pytest.raises(EmptyTrainingSplitError):
        S.augment_fold([], S.AugmentConfig(), np.random.default_rng(0))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_augment_only_sees_split(seed):
    events = S.generate_bundled_dataset(1)[:20]
    held = events[0]
    out = S.augment_fold(events[1:], S.AugmentConfig(), np.random.default_rng(seed))
    assert all(e.parent_id != held.event_id for e in out)
    assert all(e.event_id != held.event_id for e in out)
    assert all(-1.0 <= e.features.ndwi <= 1.0 for e in out)
