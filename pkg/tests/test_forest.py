import numpy as np
import pytest

from ivcate import ForestParams, RngStream, fit_forest


def _stump_oracle(x, y):
    """Exhaustive single-split stump: best midpoint threshold by SSE."""
    order = np.argsort(x)
    xo, yo = x[order], y[order]
    best = (np.inf, None)
    for i in range(len(xo) - 1):
        if xo[i] == xo[i + 1]:
            continue
        thr = 0.5 * (xo[i] + xo[i + 1])
        left, right = yo[: i + 1], yo[i + 1 :]
        sse = ((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()
        if sse < best[0]:
            best = (sse, thr)
    return best[1]


class TestFitForest:
    def test_constant_target_predicts_constant(self):
        x = np.linspace(-1, 1, 30)[:, None]
        t = np.full(30, 3.0)
        model = fit_forest(x, t, ForestParams(n_trees=5, max_depth=4, seed=0))
        np.testing.assert_allclose(model.predict(x), 3.0)
        np.testing.assert_allclose(model.predict([[100.0]]), 3.0)

    def test_separable_stump_probability(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(200)[:, None]
        t = (x[:, 0] > 0).astype(float)
        params = ForestParams(n_trees=1, max_depth=1, min_samples_leaf=1,
                              bootstrap=False, seed=0)
        model = fit_forest(x, t, params, mode="probability")
        assert model.predict([[2.0]])[0] >= 0.9
        assert model.predict([[-2.0]])[0] <= 0.1
        # the single split agrees with the exhaustive stump oracle
        thr = _stump_oracle(x[:, 0], t)
        tree = model.trees[0]
        assert tree.feature[0] == 0
        assert tree.threshold[0] == pytest.approx(thr)

    def test_probability_predictions_in_unit_interval(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((150, 2))
        t = (rng.random(150) < 0.3).astype(float)
        model = fit_forest(x, t, ForestParams(n_trees=20, max_depth=3, seed=2),
                           mode="probability")
        p = model.predict(x)
        assert (p >= 0.0).all() and (p <= 1.0).all()

    def test_regression_predictions_inside_target_hull(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((200, 1))
        t = np.sin(3 * x[:, 0]) + 0.1 * rng.standard_normal(200)
        model = fit_forest(x, t, ForestParams(n_trees=15, max_depth=6, seed=3))
        p = model.predict(rng.standard_normal((50, 1)) * 5)
        assert p.min() >= t.min() - 1e-12
        assert p.max() <= t.max() + 1e-12

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((100, 3))
        t = x[:, 0] + rng.standard_normal(100)
        params = ForestParams(n_trees=10, max_depth=4, seed=RngStream(5))
        a = fit_forest(x, t, params).predict(x)
        b = fit_forest(x, t, params).predict(x)
        np.testing.assert_array_equal(a, b)

    def test_seed_changes_bootstrap(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((100, 1))
        t = x[:, 0] ** 2 + rng.standard_normal(100)
        a = fit_forest(x, t, ForestParams(n_trees=5, max_depth=4, seed=0)).predict(x)
        b = fit_forest(x, t, ForestParams(n_trees=5, max_depth=4, seed=1)).predict(x)
        assert not np.array_equal(a, b)

    def test_respects_min_samples_leaf(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((60, 1))
        t = x[:, 0]
        model = fit_forest(
            x, t, ForestParams(n_trees=4, max_depth=10, min_samples_leaf=20,
                               bootstrap=False, seed=0))
        for tree in model.trees:
            # count training rows reaching each leaf
            node = np.zeros(60, dtype=int)
            for _ in range(12):
                active = tree.feature[node] >= 0
                cur = node[active]
                go_left = x[active, tree.feature[cur]] <= tree.threshold[cur]
                node[active] = np.where(go_left, tree.left[cur], tree.right[cur])
            leaves, counts = np.unique(node, return_counts=True)
            assert counts.min() >= 20

    def test_max_features_subsampling(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((200, 4))
        t = x @ np.array([1.0, -2.0, 0.5, 0.0]) + 0.1 * rng.standard_normal(200)
        model = fit_forest(
            x, t, ForestParams(n_trees=10, max_depth=3, max_features=2, seed=7))
        assert np.isfinite(model.predict(x)).all()

    def test_dimension_mismatch_raises(self):
        x = np.zeros((10, 2))
        t = np.zeros(9)
        with pytest.raises(ValueError, match="incompatible"):
            fit_forest(x, t, ForestParams(n_trees=1, seed=0))
        model = fit_forest(np.zeros((10, 2)), np.zeros(10),
                           ForestParams(n_trees=1, seed=0))
        with pytest.raises(ValueError, match="columns"):
            model.predict(np.zeros((5, 3)))

    def test_probability_mode_requires_binary(self):
        with pytest.raises(ValueError, match="0/1"):
            fit_forest(np.zeros((10, 1)), np.linspace(0, 2, 10),
                       ForestParams(n_trees=1, seed=0), mode="probability")

    def test_too_few_rows(self):
        with pytest.raises(ValueError, match="rows"):
            fit_forest(np.zeros((2, 1)), np.zeros(2),
                       ForestParams(n_trees=1, min_samples_leaf=5, seed=0))

    def test_param_validation(self):
        with pytest.raises(ValueError):
            ForestParams(n_trees=0)
        with pytest.raises(ValueError):
            ForestParams(max_depth=0)
        with pytest.raises(ValueError):
            ForestParams(min_samples_leaf=0)

    def test_fit_quality_on_step_function(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(-1, 1, (500, 1))
        t = np.where(x[:, 0] > 0.2, 2.0, -1.0)
        model = fit_forest(x, t, ForestParams(n_trees=30, max_depth=3,
                                              min_samples_leaf=5, seed=9))
        assert abs(model.predict([[0.8]])[0] - 2.0) < 0.2
        assert abs(model.predict([[-0.8]])[0] + 1.0) < 0.2
