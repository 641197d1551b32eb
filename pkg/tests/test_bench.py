import json

import numpy as np
import pytest

from ivcate import ForestParams, NetConfig, StudyConfig, emit_results, run_study
from ivcate.bench import (
    _aggregate,
    _fit_replicate,
    emit_rate_results,
    run_rate_study,
    study_grid,
    study_spec,
)
from ivcate.dgp import oracle
from ivcate.errors import StudyError

FAST_FORESTS = dict(
    outcome_forest=ForestParams(n_trees=10, max_depth=4, min_samples_leaf=5),
    compliance_forest=ForestParams(n_trees=10, max_depth=3, min_samples_leaf=20),
)


def small_cfg(**kw):
    base = dict(dgp="scalar", n_obs=300, n_iv=300, replicates=3, seed=5,
                estimators=("tau_obs", "tau_iv", "tau_param"),
                grid_points=25, **FAST_FORESTS)
    base.update(kw)
    return StudyConfig(**base)


class TestConfigValidation:
    def test_unknown_estimator(self):
        with pytest.raises(ValueError, match="unknown estimators"):
            small_cfg(estimators=("tau_obs", "nope"))

    def test_empty_estimators(self):
        with pytest.raises(ValueError):
            small_cfg(estimators=())

    def test_bad_dgp(self):
        with pytest.raises(ValueError):
            small_cfg(dgp="other")

    def test_replicates_positive(self):
        with pytest.raises(ValueError):
            small_cfg(replicates=0)


class TestRunStudy:
    def test_basic_table(self):
        table = run_study(small_cfg())
        assert table.n_replicates == 3 and table.n_failed == 0
        for name in ("tau_obs", "tau_iv", "tau_param"):
            assert table.mean_mse[name] >= 0.0
            assert table.sd_mse[name] >= 0.0
            assert table.curve_mean[name].shape == (25,)
            assert table.curve_stderr[name].shape == (25,)
        assert table.oracle_tau.shape == (25,)

    def test_single_replicate_sd_zero(self):
        table = run_study(small_cfg(replicates=1))
        for name in table.estimators:
            assert table.sd_mse[name] == 0.0
            np.testing.assert_array_equal(table.curve_stderr[name], 0.0)

    def test_mse_matches_naive_loop(self):
        cfg = small_cfg(replicates=1, estimators=("tau_obs",))
        spec = study_spec(cfg)
        grid = study_grid(cfg, spec)
        tau = oracle(spec).tau(grid)
        rep = _fit_replicate(cfg, spec, grid, tau, 0)
        naive = 0.0
        preds = rep.predictions["tau_obs"]
        for i in range(grid.shape[0]):
            naive += (preds[i] - tau[i]) ** 2
        naive /= grid.shape[0]
        assert abs(rep.mse["tau_obs"] - naive) < 1e-12

    def test_aggregation_order_independent(self):
        cfg = small_cfg()
        spec = study_spec(cfg)
        grid = study_grid(cfg, spec)
        tau = oracle(spec).tau(grid)
        reports = [_fit_replicate(cfg, spec, grid, tau, r) for r in range(3)]
        a = _aggregate(cfg, grid, tau, reports)
        b = _aggregate(cfg, grid, tau, reports[::-1])
        for name in cfg.estimators:
            assert a.mean_mse[name] == b.mean_mse[name]
            np.testing.assert_array_equal(a.curve_mean[name], b.curve_mean[name])

    def test_parallel_equals_serial(self, tmp_path):
        serial = run_study(small_cfg(workers=1))
        parallel = run_study(small_cfg(workers=2))
        emit_results(serial, tmp_path / "serial")
        emit_results(parallel, tmp_path / "parallel")
        for fname in ("table.csv", "curves.csv"):
            assert ((tmp_path / "serial" / fname).read_bytes()
                    == (tmp_path / "parallel" / fname).read_bytes())

    def test_too_many_failures_abort(self):
        # an impossible fold count fails every replicate
        cfg = small_cfg(n_iv=300, folds=301)
        with pytest.warns(RuntimeWarning):
            with pytest.raises(StudyError):
                run_study(cfg)

    def test_shared_estimator_runs(self):
        cfg = small_cfg(
            replicates=1, estimators=("tau_shared",),
            net=NetConfig(repr_dim=2, depth=1, hidden_width=3, epochs=20,
                          batch_size=100))
        table = run_study(cfg)
        assert np.isfinite(table.mean_mse["tau_shared"])

    def test_highdim_grid_and_oracle(self):
        cfg = small_cfg(dgp="highdim", dim=3, highdim_grid_points=50,
                        estimators=("tau_obs",), replicates=1)
        spec = study_spec(cfg)
        grid = study_grid(cfg, spec)
        assert grid.shape == (50, 3)
        table = run_study(cfg)
        assert table.grid_x.shape == (50,)

    def test_highdim_coefficients_fixed_across_replicates(self):
        cfg = small_cfg(dgp="highdim", dim=3)
        assert np.array_equal(study_spec(cfg).beta, study_spec(cfg).beta)


class TestEmitResults:
    def test_file_contents(self, tmp_path):
        table = run_study(small_cfg())
        paths = emit_results(table, tmp_path)
        names = {p.name for p in paths}
        assert names == {"table.csv", "curves.csv", "config.json"}
        table_lines = (tmp_path / "table.csv").read_text().strip().splitlines()
        assert table_lines[0] == "estimator,mean_mse,sd_mse"
        assert len(table_lines) == 1 + 3
        curve_lines = (tmp_path / "curves.csv").read_text().strip().splitlines()
        assert curve_lines[0] == "x,estimator,mean,stderr,oracle,masked"
        assert len(curve_lines) == 1 + 3 * 25
        cfg = json.loads((tmp_path / "config.json").read_text())
        assert cfg["replicates"] == 3

    def test_oracle_column_value(self, tmp_path):
        # tau(0) = 1 for the scalar DGP: find the x=0 row
        cfg = small_cfg(grid_points=25, grid_lo=-1.0, grid_hi=1.0)
        table = run_study(cfg)
        emit_results(table, tmp_path)
        rows = [ln.split(",") for ln
                in (tmp_path / "curves.csv").read_text().strip().splitlines()[1:]]
        at_zero = [r for r in rows if abs(float(r[0])) < 1e-12]
        assert at_zero and all(float(r[4]) == pytest.approx(1.0) for r in at_zero)

    def test_rerun_is_byte_identical(self, tmp_path):
        emit_results(run_study(small_cfg()), tmp_path / "a")
        emit_results(run_study(small_cfg()), tmp_path / "b")
        for fname in ("table.csv", "curves.csv", "config.json"):
            assert ((tmp_path / "a" / fname).read_bytes()
                    == (tmp_path / "b" / fname).read_bytes())


class TestRateStudy:
    def test_validation(self):
        with pytest.raises(ValueError):
            run_rate_study(small_cfg(), [100, 200])
        with pytest.raises(ValueError):
            run_rate_study(small_cfg(), [100, 100, 200])

    def test_oracle_only_medians_and_slope(self):
        cfg = small_cfg(replicates=8)
        table = run_rate_study(cfg, [200, 800, 3200], with_estimated=False)
        assert table.median_estimated is None and table.slope_estimated is None
        assert (table.median_oracle > 0).all()
        assert np.isfinite(table.slope_oracle)
        # noisy-coefficient error decays with sample size end to end
        assert table.median_oracle[-1] < table.median_oracle[0]

    def test_estimated_curve_never_systematically_below_oracle(self):
        # The estimated-nuisance error carries extra terms on top of the
        # oracle-nuisance error, but with a known propensity and an accurate
        # compliance model the gap is small relative to Monte Carlo noise at
        # this scale; assert the estimated curve is not systematically
        # better, with a slack of 0.15 (the observed median fluctuation at
        # R=10).
        table = run_rate_study(StudyConfig(dgp="scalar", replicates=10, seed=5),
                               [500, 2000, 8000], with_estimated=True)
        assert (table.median_estimated >= table.median_oracle - 0.15).all()
        assert table.median_estimated[-1] < table.median_estimated[0]

    def test_emit(self, tmp_path):
        cfg = small_cfg(replicates=4)
        table = run_rate_study(cfg, [200, 400, 800], with_estimated=False)
        emit_rate_results(table, tmp_path)
        lines = (tmp_path / "rates.csv").read_text().strip().splitlines()
        assert lines[0] == "n,median_theta_err_oracle"
        assert len(lines) == 4
