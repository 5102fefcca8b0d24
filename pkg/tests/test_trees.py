from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from haorcast import _kernels
from haorcast import trees as T
from haorcast.errors import ModelFormatError, SingleClassError, TooFewSamplesError, UntrainedModelError
from haorcast.features import FEATURE_INDEX, feature_matrix, label_vector
from haorcast.synthetic import generate_bundled_dataset

SMALL_RF = T.ForestParams(n_estimators=25)
SMALL_GBT = T.BoostParams(n_estimators=25)


@pytest.fixture(scope="module")
def bundled_xy():
    ev = generate_bundled_dataset(42)
    return feature_matrix(ev), label_vector(ev)


def toy(seed=0, n=20):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    y[0], y[1] = 1, 0
    X[0], X[1] = (0.9, 0.9), (-0.9, -0.9)
    return X, y


# --- weights and blending ---------------------------------------------------


def test_weights_exact():
    assert T.W_RF_EXACT == Fraction(9, 16) == Fraction(45, 100) / Fraction(80, 100)
    assert T.W_GBT_EXACT == Fraction(7, 16) == Fraction(35, 100) / Fraction(80, 100)
    assert T.W_RF_EXACT + T.W_GBT_EXACT == 1
    assert (T.W_RF, T.W_GBT) == (0.5625, 0.4375)
    assert T.W_RF + T.W_GBT == 1.0


@pytest.mark.parametrize("rf, gbt, expected", [(1.0, 1.0, 1.0), (0.8, 0.4, 0.625), (0.0, 1.0, 0.4375)])
def test_blend_examples(rf, gbt, expected):
    assert T.blend(rf, gbt) == expected


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_blend_monotone_and_bounded(a, b, other):
    lo, hi = sorted((a, b))
    assert T.blend(lo, other) <= T.blend(hi, other)
    assert T.blend(other, lo) <= T.blend(other, hi)
    assert 0.0 <= T.blend(a, b) <= 1.0


def test_untrained_model():
    with pytest.raises(UntrainedModelError):
        T.predict_proba(T.EnsembleModel(), np.zeros((1, 11)))
    with pytest.raises(UntrainedModelError):
        T.merged_importance(T.EnsembleModel())


# --- split oracles ------------------------------------------------------------


def brute_gini_root(X, y):
    """Best root split by exhaustive search with exact rational impurity."""
    n = len(y)
    best = None
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            t = 0.5 * (a + b)
            left = X[:, f] <= t
            imp = Fraction(0)
            for side in (left, ~left):
                m = int(side.sum())
                p = Fraction(int(y[side].sum()), m)
                imp += Fraction(m, n) * (1 - p * p - (1 - p) * (1 - p))
            if best is None or imp < best[0]:
                best = (imp, f, t)
    return best[1], best[2]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(8, 40), st.integers(1, 4))
def test_gini_root_matches_brute_force(seed, n, d):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(n, d)), 3)
    y = rng.integers(0, 2, n)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    allowed = np.arange(d, dtype=np.int64)
    keys = rng.random((2 * n + 1, d))
    f, t, left, right, value, imp = _kernels.grow_gini_tree(
        X, y.astype(np.int64), np.arange(n, dtype=np.int64), allowed, d, 1, 2, keys)
    bf, bt = brute_gini_root(X, y)
    if len(f) == 1:
        # no split beats the parent: brute force must not improve impurity either
        return
    assert (f[0], t[0]) == (bf, bt)
    assert value[0] == y.mean()
    mask = X[:, f[0]] <= t[0]
    assert value[left[0]] == y[mask].mean() and value[right[0]] == y[~mask].mean()


def brute_newton_root(X, g, h, lam, mcw):
    G, H = g.sum(), h.sum()
    best = (1e-12, None, None)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            t = 0.5 * (a + b)
            m = X[:, f] <= t
            GL, HL = g[m].sum(), h[m].sum()
            GR, HR = G - GL, H - HL
            if HL < mcw or HR < mcw:
                continue
            gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam))
            if gain > best[0] * (1 + 1e-9):
                best = (gain, f, t)
    return best


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(10, 60))
def test_newton_root_matches_brute_force(seed, n):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(n, 3)), 2)
    y = (X[:, 0] + rng.normal(0, 0.5, n) > 0).astype(float)
    p = np.full(n, 0.5)
    g, h = p - y, p * (1 - p)
    f, t, left, right, value, imp = _kernels.grow_newton_tree(
        X, g, h, np.arange(n, dtype=np.int64), np.arange(3, dtype=np.int64), 1, 1.0, 0.0, 1.0)
    assert value[0] == pytest.approx(-g.sum() / (h.sum() + 1.0), abs=1e-12)
    gain, bf, bt = brute_newton_root(X, g, h, 1.0, 1.0)
    if bf is None:
        assert len(f) == 1
        return
    assert (f[0], t[0]) == (bf, bt)
    assert imp[bf] == pytest.approx(gain, rel=1e-9)
    m = X[:, bf] <= bt
    assert value[left[0]] == pytest.approx(-g[m].sum() / (h[m].sum() + 1.0), abs=1e-12)


# --- forest -------------------------------------------------------------------


def traverse(tree, x):
    i = 0
    while tree["feature"][i] != _kernels.LEAF:
        i = tree["left"][i] if x[tree["feature"][i]] <= tree["threshold"][i] else tree["right"][i]
    return tree["value"][i]


def test_forest_separable_toy():
    X, y = toy()
    m = T.train_forest(X, y, T.ForestParams(n_estimators=50), seed=1)
    assert ((m.predict_proba(X) >= 0.5) == y).all()
    assert m.trees.n_trees == 50


def test_forest_errors():
    X, y = toy()
    with pytest.raises(SingleClassError):
        T.train_forest(X, np.ones(20, dtype=int))
    with pytest.raises(TooFewSamplesError):
        T.train_forest(X[:4], y[:4])


def test_forest_mean_of_trees_oracle(bundled_xy):
    X, y = bundled_xy
    m = T.train_forest(X, y, SMALL_RF, seed=3)
    per_tree = np.array([[traverse(m.trees.tree(t), x) for t in range(m.trees.n_trees)] for x in X])
    np.testing.assert_allclose(m.predict_proba(X), per_tree.mean(axis=1), rtol=0, atol=1e-15)
    assert ((per_tree >= 0) & (per_tree <= 1)).all()


def tree_depth(tree, i=0):
    if tree["feature"][i] == _kernels.LEAF:
        return 0
    return 1 + max(tree_depth(tree, tree["left"][i]), tree_depth(tree, tree["right"][i]))


def test_depth_limits(bundled_xy):
    X, y = bundled_xy
    rf = T.train_forest(X, y, T.ForestParams(10, max_depth=3), seed=0)
    assert max(tree_depth(rf.trees.tree(t)) for t in range(10)) <= 3
    gb = T.train_boost(X, y, T.BoostParams(10, max_depth=2), seed=0)
    assert max(tree_depth(gb.trees.tree(t)) for t in range(10)) <= 2
    for t in range(10):
        tr = rf.trees.tree(t)
        internal = tr["feature"] != _kernels.LEAF
        assert (tr["left"][internal] > 0).all() and (tr["right"][internal] > 0).all()


def test_forest_importance_normalised(bundled_xy):
    X, y = bundled_xy
    m = T.train_forest(X, y, SMALL_RF, seed=42)
    assert m.importance.sum() == pytest.approx(1.0, abs=1e-9)
    assert (m.importance >= 0).all()


def test_feature_mask_excludes(bundled_xy):
    X, y = bundled_xy
    mask = np.ones(11, dtype=bool)
    mask[[0, 1, 2, 9]] = False
    m = T.train_ensemble(X, y, SMALL_RF, SMALL_GBT, seed=0, feature_mask=mask)
    for model in (m.forest, m.boost):
        used = set(model.trees.feature[model.trees.feature >= 0].tolist())
        assert used.isdisjoint({0, 1, 2, 9})
        assert model.importance[~mask].sum() == 0.0


# --- boosting -----------------------------------------------------------------


def test_boost_zero_stages_is_prior(bundled_xy):
    X, y = bundled_xy
    m = T.train_boost(X, y, seed=0, n_stages=0)
    np.testing.assert_allclose(m.predict_proba(X), y.mean(), rtol=1e-12)


def test_boost_constant_features_predict_prior():
    X = np.ones((30, 11))
    y = np.array([1] * 12 + [0] * 18)
    # full rows: every stage is a single root leaf with zero gradient sum
    m = T.train_boost(X, y, T.BoostParams(n_estimators=20, subsample=1.0), seed=0)
    np.testing.assert_allclose(m.predict_proba(X), 0.4, rtol=1e-9)
    assert m.importance.sum() == pytest.approx(1.0)
    # row subsampling only lets the root leaf chase each subsample's balance
    m = T.train_boost(X, y, T.BoostParams(n_estimators=20), seed=0)
    assert np.ptp(m.predict_proba(X)) == 0.0
    assert m.predict_proba(X)[0] == pytest.approx(0.4, abs=0.03)


def test_boost_loss_decreases_on_toy():
    X, y = toy(n=40)
    losses = [T.log_loss(y, T.train_boost(X, y, seed=5, n_stages=k).predict_proba(X))
              for k in range(11)]
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_boost_learning_rate_tradeoff(bundled_xy):
    X, y = bundled_xy
    a = T.train_boost(X, y, T.BoostParams(500, learning_rate=0.05), seed=42)
    b = T.train_boost(X, y, T.BoostParams(1000, learning_rate=0.025), seed=42)
    la, lb = T.log_loss(y, a.predict_proba(X)), T.log_loss(y, b.predict_proba(X))
    assert abs(la - lb) <= 0.05 * max(la, lb)


def test_boost_prediction_formula(bundled_xy):
    X, y = bundled_xy
    m = T.train_boost(X, y, SMALL_GBT, seed=1)
    stages = np.array([[traverse(m.trees.tree(t), x) for t in range(25)] for x in X])
    z = m.base_score + 0.05 * stages.sum(axis=1)
    np.testing.assert_allclose(m.predict_proba(X), 1 / (1 + np.exp(-z)), rtol=1e-12)
    assert m.base_score == pytest.approx(np.log(y.mean() / (1 - y.mean())))


# --- ensemble -------------------------------------------------------------------


def test_retrain_bit_identical(bundled_xy):
    X, y = bundled_xy
    a = T.train_ensemble(X, y, SMALL_RF, SMALL_GBT, seed=9)
    b = T.train_ensemble(X, y, SMALL_RF, SMALL_GBT, seed=9)
    for k in ("feature", "threshold", "left", "right", "value"):
        np.testing.assert_array_equal(getattr(a.forest.trees, k), getattr(b.forest.trees, k))
        np.testing.assert_array_equal(getattr(a.boost.trees, k), getattr(b.boost.trees, k))
    assert (T.predict_proba(a, X) == T.predict_proba(b, X)).all()
    c = T.train_ensemble(X, y, SMALL_RF, SMALL_GBT, seed=10)
    assert not (T.predict_proba(a, X) == T.predict_proba(c, X)).all()


def test_predict_is_blend(bundled_xy):
    X, y = bundled_xy
    m = T.train_ensemble(X, y, SMALL_RF, SMALL_GBT, seed=2)
    rf, gbt = m.components(X)
    np.testing.assert_array_equal(T.predict_proba(m, X), 0.5625 * rf + 0.4375 * gbt)


def test_merged_importance(bundled_xy):
    X, y = bundled_xy
    m = T.train_ensemble(X, y, seed=42)
    imp = T.merged_importance(m)
    assert imp.sum() == pytest.approx(1.0, abs=1e-9)
    assert int(np.argmax(imp)) == FEATURE_INDEX["forecast_rain_72h_mm"]
    m.boost.importance = m.forest.importance.copy()
    np.testing.assert_allclose(T.merged_importance(m), m.forest.importance, rtol=1e-12)


@pytest.mark.parametrize("scale", [0.001, 3.0, 1000.0])
def test_importance_argmax_scale_invariant(bundled_xy, scale):
    X, y = bundled_xy
    base = T.merged_importance(T.train_ensemble(X, y, SMALL_RF, SMALL_GBT, seed=4))
    scaled = T.merged_importance(T.train_ensemble(X * scale, y, SMALL_RF, SMALL_GBT, seed=4))
    assert np.argmax(base) == np.argmax(scaled)


def test_model_roundtrip(tmp_path, bundled_xy):
    X, y = bundled_xy
    m = T.train_ensemble(X, y, SMALL_RF, SMALL_GBT, seed=3)
    p = tmp_path / "model.json"
    T.save_model(m, p)
    back = T.load_model(p)
    assert (T.predict_proba(back, X) == T.predict_proba(m, X)).all()
    np.testing.assert_array_equal(T.merged_importance(back), T.merged_importance(m))


def test_model_file_validation(tmp_path):
    p = tmp_path / "m.json"
    p.write_text('{"magic": "nope"}')
    with pytest.raises(ModelFormatError):
        T.load_model(p)
    p.write_text('{"magic": "HAORCAST-MODEL", "schema_version": 99}')
    with pytest.raises(ModelFormatError):
        T.load_model(p)
    p.write_text("not json")
    with pytest.raises(ModelFormatError):
        T.load_model(p)
