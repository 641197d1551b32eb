import numpy as np
import pytest
from scipy.stats import ks_2samp

from ivcate import RngStream, gen_iv, gen_obs, highdim_dgp, oracle, scalar_dgp
from ivcate.dgp import DgpSpec, U_SD, _outcome


class TestSpecs:
    def test_scalar_spec(self):
        spec = scalar_dgp()
        assert spec.kind == "scalar" and spec.dim == 1

    def test_highdim_draws_coefficients_in_range(self):
        spec = highdim_dgp(7, RngStream(0).child("c"))
        assert spec.beta.shape == (7,) and spec.gamma_coef.shape == (7,)
        assert (np.abs(spec.beta) <= 1).all() and (np.abs(spec.gamma_coef) <= 1).all()

    def test_highdim_requires_coefficients(self):
        with pytest.raises(ValueError):
            DgpSpec(kind="highdim", dim=3)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            DgpSpec(kind="weird")


class TestOracle:
    def test_scalar_tau_values(self):
        orc = oracle(scalar_dgp())
        x = np.array([[0.0], [1.0], [-2.0]])
        np.testing.assert_allclose(orc.tau(x), [1.0, 3.75, 0.0])

    def test_scalar_bias_values(self):
        orc = oracle(scalar_dgp())
        for v in (-1.0, 0.0, 2.0):
            assert orc.bias(np.array([[v]]))[0] == pytest.approx(-v)
            assert (orc.tau(np.array([[v]]))[0] - orc.tau_obs(np.array([[v]]))[0]
                    == pytest.approx(-v))

    def test_gamma_at_zero(self):
        orc = oracle(scalar_dgp())
        assert orc.gamma(np.array([[0.0]]))[0] == pytest.approx(0.5)

    def test_identity_tau_minus_tau_obs_is_bias(self):
        for spec in (scalar_dgp(), highdim_dgp(4, RngStream(1).child("c"))):
            orc = oracle(spec)
            x = RngStream(2).generator().standard_normal((1000, spec.dim))
            np.testing.assert_allclose(orc.tau(x) - orc.tau_obs(x), orc.bias(x),
                                       atol=1e-12)

    def test_gamma_properties_scalar(self):
        orc = oracle(scalar_dgp())
        x = np.linspace(-10, 10, 201)[:, None]
        g = orc.gamma(x)
        assert (g > 0).all() and (g < 1).all()
        assert (np.diff(g) > 0).all()  # monotone increasing

    def test_highdim_theta_is_negated_confounding(self):
        spec = highdim_dgp(3, RngStream(3).child("c"))
        orc = oracle(spec)
        np.testing.assert_allclose(orc.theta, -spec.gamma_coef)


class TestGenObs:
    def test_treatment_share(self):
        o = gen_obs(scalar_dgp(), 100_000, RngStream(4))
        assert 0.49 <= o.a.mean() <= 0.51

    def test_binned_contrast_matches_tau_obs(self):
        # E[Y|A=1,x] - E[Y|A=0,x] at x=1 is 4.75; 3-SE Monte Carlo band
        o = gen_obs(scalar_dgp(), 1_000_000, RngStream(5))
        rows = np.abs(o.x[:, 0] - 1.0) < 0.05
        y1 = o.y[rows & (o.a == 1)]
        y0 = o.y[rows & (o.a == 0)]
        contrast = y1.mean() - y0.mean()
        se = np.sqrt(y1.var(ddof=1) / y1.size + y0.var(ddof=1) / y0.size)
        assert abs(contrast - 4.75) < 3 * se

    def test_deterministic(self):
        a = gen_obs(scalar_dgp(), 50, RngStream(6).child(1))
        b = gen_obs(scalar_dgp(), 50, RngStream(6).child(1))
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            gen_obs(scalar_dgp(), 0, RngStream(0))


class TestGenIv:
    def test_compliers_follow_instrument(self):
        from ivcate.dgp import _iv_parts

        spec = scalar_dgp()
        parts = _iv_parts(spec, 20_000, RngStream(7))
        c, z, a = parts["c"], parts["z"], parts["a"]
        np.testing.assert_array_equal(a[c == 1], z[c == 1])

    def test_binned_compliance_difference(self):
        # empirical P(A=1|Z=1) - P(A=1|Z=0) near x=1 is sigmoid(2) ~ 0.8808
        e = gen_iv(scalar_dgp(), 1_000_000, RngStream(8))
        rows = np.abs(e.x[:, 0] - 1.0) < 0.1
        a1 = e.a[rows & (e.z == 1)]
        a0 = e.a[rows & (e.z == 0)]
        diff = a1.mean() - a0.mean()
        se = np.sqrt(a1.var(ddof=1) / a1.size + a0.var(ddof=1) / a0.size)
        assert abs(diff - 0.8808) < 3 * se + 0.003  # + bin-width curvature

    def test_binned_wald_ratio_matches_tau(self):
        # (E[Y|Z=1,x] - E[Y|Z=0,x]) / gamma(x) at x=0.5 equals tau(0.5)=2.1875
        spec = scalar_dgp()
        orc = oracle(spec)
        e = gen_iv(spec, 1_000_000, RngStream(9))
        rows = np.abs(e.x[:, 0] - 0.5) < 0.05
        y1 = e.y[rows & (e.z == 1)]
        y0 = e.y[rows & (e.z == 0)]
        gamma = orc.gamma(np.array([[0.5]]))[0]
        ratio = (y1.mean() - y0.mean()) / gamma
        se = np.sqrt(y1.var(ddof=1) / y1.size + y0.var(ddof=1) / y0.size) / gamma
        assert abs(ratio - 2.1875) < 3 * se

    def test_deterministic(self):
        a = gen_iv(scalar_dgp(), 50, RngStream(10).child(2))
        b = gen_iv(scalar_dgp(), 50, RngStream(10).child(2))
        np.testing.assert_array_equal(a.y, b.y)


class TestMarginalsMatch:
    def test_obs_and_iv_covariates_share_distribution(self):
        spec = scalar_dgp()
        o = gen_obs(spec, 10_000, RngStream(11).child("obs"))
        e = gen_iv(spec, 10_000, RngStream(11).child("iv"))
        stat = ks_2samp(o.x[:, 0], e.x[:, 0])
        assert stat.pvalue > 0.01


class TestHighdimMonteCarloValidation:
    """Brute-force checks of the high-dimensional closed forms."""

    def test_treatment_contrast_matches_tau_obs(self):
        # at fixed x0, draw many (A, U, eps) and compare the arm contrast
        spec = highdim_dgp(4, RngStream(12).child("c"))
        orc = oracle(spec)
        rng = RngStream(13).generator()
        for trial in range(3):
            x0 = rng.standard_normal(4)
            n = 400_000
            x = np.tile(x0, (n, 1))
            a = (rng.random(n) < 0.5).astype(float)
            u = (x @ spec.gamma_coef) * (a - 0.5) + U_SD * rng.standard_normal(n)
            eps = rng.standard_normal(n)
            y = _outcome(spec, x, a, u, eps)
            y1, y0 = y[a == 1], y[a == 0]
            contrast = y1.mean() - y0.mean()
            se = np.sqrt(y1.var(ddof=1) / y1.size + y0.var(ddof=1) / y0.size)
            expected = orc.tau_obs(x0[None, :])[0]
            assert abs(contrast - expected) < 3 * se

    def test_outcome_level_matches_formula(self):
        # pins the baseline reading: the stray linear term is x_1
        spec = highdim_dgp(3, RngStream(14).child("c"))
        x0 = np.array([0.7, -1.2, 0.4])
        x = x0[None, :]
        a = np.array([1.0])
        y = _outcome(spec, x, a, np.zeros(1), np.zeros(1))
        x1 = x0[0]
        expected = (1.0 + 1.0 + x1 + 2.0 * (spec.beta @ x0) + 0.5 * x1**2
                    + 0.75 * x1**2)
        assert y[0] == pytest.approx(expected, abs=1e-12)

    def test_iv_wald_matches_tau_highdim(self):
        # complier-only effect at fixed x0 equals tau(x0)
        spec = highdim_dgp(3, RngStream(15).child("c"))
        orc = oracle(spec)
        rng = RngStream(16).generator()
        x0 = np.array([0.5, 0.5, -0.5])
        n = 600_000
        x = np.tile(x0, (n, 1))
        z = (rng.random(n) < 0.5).astype(np.int8)
        a_star = (rng.random(n) < 0.5).astype(np.int8)
        from scipy.special import expit

        c = (rng.random(n) < expit(2 * x0[0])).astype(np.int8)
        a = c * z + (1 - c) * a_star
        u = np.where(c == 1, rng.standard_normal(n),
                     (x @ spec.gamma_coef) * (a - 0.5) + U_SD * rng.standard_normal(n))
        y = _outcome(spec, x, a.astype(float), u, rng.standard_normal(n))
        y1, y0 = y[z == 1], y[z == 0]
        gamma = expit(2 * x0[0])
        ratio = (y1.mean() - y0.mean()) / gamma
        se = np.sqrt(y1.var(ddof=1) / y1.size + y0.var(ddof=1) / y0.size) / gamma
        assert abs(ratio - orc.tau(x0[None, :])[0]) < 3 * se
