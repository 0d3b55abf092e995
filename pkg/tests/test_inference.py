import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from concord.estimation import fit, fit_lin
from concord.inference import (
    bootstrap_se,
    commutation_matrix,
    duplication_matrix,
    fisher_z,
    fisher_z_inverse,
    fit_lin_se,
    hotelling_t2,
    laplace_kurtosis,
    lin_asymptotic_variance,
    lin_variance,
    mean_equality_tests,
    rho_p_asymptotic_variance,
    test_means,
    vech,
    vech_s_asymptotic_cov,
)
from concord.sampling import BivariateSample, ModelParams, sample_gaussian, sample_laplace, scenario_sigma


def data(family, n, seed, mu=(0.0, 0.0), m=2):
    p = ModelParams(np.array(mu, float), scenario_sigma(m), family)
    return (sample_laplace if family == "laplace" else sample_gaussian)(p, n, seed)


def by_name(results):
    return {r.name: r for r in results}


class TestLinVariance:
    @pytest.mark.parametrize("rho,n", [(0.3, 10), (0.8, 52), (-0.5, 1000)])
    def test_reduced_case(self, rho, n):
        assert lin_asymptotic_variance(rho, rho, 0.0, n) == pytest.approx(1 / (n - 2), rel=1e-14)

    def test_hand_value(self):
        v2 = lin_asymptotic_variance(0.4, 0.5, 0.0, 102)
        assert v2 == pytest.approx(0.75 * 0.16 / (100 * 0.84 * 0.25), rel=1e-14)
        assert round(v2, 7) == 0.0057143

    def test_full_formula_by_hand(self):
        rc, r, u, n = 0.6, 0.7, 0.3, 50
        a = 1 - rc ** 2
        expected = ((1 - r ** 2) * rc ** 2 / (a * r ** 2) + 2 * rc ** 3 * (1 - rc) * u ** 2 / (r * a ** 2)
                    - rc ** 4 * u ** 4 / (2 * r ** 2 * a ** 2)) / (n - 2)
        assert lin_asymptotic_variance(rc, r, u, n) == pytest.approx(expected, rel=1e-14)

    def test_domain(self):
        for args in [(0.5, 0.0, 0, 10), (1.0, 0.5, 0, 10), (0.5, 0.5, 0, 2)]:
            with pytest.raises(ValueError):
                lin_asymptotic_variance(*args)

    def test_lin_variance(self):
        assert lin_variance(0.5, 0.02) == pytest.approx(0.5625 * 0.02)


class TestRhoPVariance:
    @settings(max_examples=100)
    @given(st.floats(-0.99, 0.99), st.floats(1e-4, 1))
    def test_p2_identity(self, rc, v2):
        assert rho_p_asymptotic_variance(rc, v2, 2) == pytest.approx(v2 * (1 - rc * rc) ** 2, rel=1e-14)

    def test_p1_factor(self):
        assert rho_p_asymptotic_variance(0.75, 1.0, 1) == pytest.approx((1 - 0.5625) ** 2 * 0.25 / 0.25, rel=1e-14)
        assert round(rho_p_asymptotic_variance(0.75, 1.0, 1), 5) == 0.19141

    @settings(max_examples=100)
    @given(st.floats(-0.9, -0.01), st.floats(0.2, 3), st.floats(0.2, 3), st.floats(-1, 1))
    def test_negative_rho_increasing_in_p(self, rho, s11, s22, gamma):
        # for rho < 0 the variance over p = 1..4 is minimized at p = 1 and grows with p
        s12 = rho * math.sqrt(s11 * s22)
        rc = 2 * s12 / (s11 + s22 + gamma ** 2)
        v2 = lin_asymptotic_variance(rc, rho, gamma / math.sqrt(math.sqrt(s11 * s22)), 100)
        v = [rho_p_asymptotic_variance(rc, v2, p) for p in (1, 2, 3, 4)]
        assert all(a < b for a, b in zip(v, v[1:]))

    @pytest.mark.parametrize("s11,s22", [(1, 1), (1, 2), (0.5, 3), (1, 9)])
    def test_p1_p2_boundary(self, s11, s22):
        # with gamma = 0, var(p=1) < var(p=2) exactly below rho* = min(1, 3/8 (s11+s22)/sqrt(s11 s22))
        root = math.sqrt(s11 * s22)
        boundary = min(1.0, 0.375 * (s11 + s22) / root)

        def diff(rho):
            rc = 2 * rho * root / (s11 + s22)
            v2 = lin_asymptotic_variance(rc, rho, 0.0, 100)
            return rho_p_asymptotic_variance(rc, v2, 1) - rho_p_asymptotic_variance(rc, v2, 2)

        grid = [r for r in np.linspace(-0.99, 0.99, 397) if abs(r) > 1e-3 and abs(r - boundary) > 1e-6]
        for r in grid:
            assert (diff(r) < 0) == (r < boundary)


class TestFisherZ:
    def test_values(self):
        assert fisher_z(0.0) == 0.0
        assert fisher_z(0.5) == pytest.approx(0.5 * math.log(3), abs=1e-15)
        assert round(fisher_z(0.5), 6) == 0.549306

    def test_roundtrip(self):
        for r in np.linspace(-0.999, 0.999, 301):
            assert fisher_z_inverse(fisher_z(r)) == pytest.approx(r, abs=1e-14)

    def test_domain(self):
        with pytest.raises(ValueError):
            fisher_z(1.0)


class TestHotelling:
    def test_reduction(self):
        s = data("gaussian", 30, 1, mu=(0.4, 0))
        x = s.as_array()
        S = np.cov(x.T)
        d = x[:, 0].mean() - x[:, 1].mean()
        t2 = hotelling_t2(s)
        assert t2.statistic == pytest.approx(30 * d * d / (S[0, 0] + S[1, 1] - 2 * S[0, 1]), rel=1e-12)
        assert t2.df == 1 and t2.name == "hotelling-t2"

    def test_equal_means_zero(self):
        rng = np.random.default_rng(2)
        x1 = rng.normal(size=20)
        t2 = hotelling_t2(BivariateSample(x1, rng.permutation(x1)))
        assert t2.statistic == pytest.approx(0, abs=1e-20) and t2.p_value == pytest.approx(1)

    def test_singular(self):
        s = BivariateSample([1, 2, 3, 4], [2, 3, 4, 5])  # constant difference
        with pytest.raises(np.linalg.LinAlgError):
            hotelling_t2(s)

    def test_contrast_checks(self):
        s = data("gaussian", 10, 3)
        with pytest.raises(ValueError):
            hotelling_t2(s, np.array([[1.0, -1.0, 0.0]]))
        with pytest.raises(ValueError):
            hotelling_t2(s, np.array([[1.0, -1.0], [2.0, -2.0]]))


class TestMeanTests:
    def test_gaussian_classical_identities(self):
        # unknown-covariance normal theory: LRT = n log(1 + W/n), score = W/(1 + W/n)
        s = data("gaussian", 40, 4, mu=(0.3, 0))
        n = s.n
        x = s.as_array()
        d = x[:, 0].mean() - x[:, 1].mean()
        C = np.cov(x.T, bias=True)
        W = n * d * d / (C[0, 0] + C[1, 1] - 2 * C[0, 1])
        r = by_name(mean_equality_tests(s, "gaussian"))
        assert r["wald"].statistic == pytest.approx(W, rel=1e-10)
        assert r["lrt"].statistic == pytest.approx(n * math.log1p(W / n), rel=1e-8)
        assert r["score"].statistic == pytest.approx(W / (1 + W / n), rel=1e-8)
        assert r["gradient"].statistic == pytest.approx(r["score"].statistic, rel=1e-10)
        assert r["wald"].statistic / r["hotelling-t2"].statistic == pytest.approx(n / (n - 1), rel=1e-12)

    def test_laplace_wald_by_hand(self):
        s = data("laplace", 60, 5, mu=(0.5, 0))
        full = fit(s, "laplace")
        a = np.array([1.0, -1.0])
        expected = 60 / 8 * (a @ full.mu) ** 2 / (a @ full.sigma @ a)
        r = by_name(mean_equality_tests(s, "laplace"))
        assert r["wald"].statistic == pytest.approx(expected, rel=1e-8)
        assert r["lrt"].statistic == pytest.approx(2 * (full.loglik - fit(s, "laplace", True).loglik), rel=1e-8)

    def test_p_values(self):
        for res in mean_equality_tests(data("laplace", 50, 6, mu=(0.3, 0)), "laplace"):
            assert 0 <= res.p_value <= 1 and res.statistic >= 0 and res.df == 1

    @pytest.mark.parametrize("family", ["gaussian", "laplace"])
    def test_identical_columns(self, family):
        x = np.random.default_rng(7).normal(size=25)
        res = mean_equality_tests(BivariateSample(x, x), family)
        assert len(res) == 5
        assert all(r.statistic == 0 and r.p_value == 1 for r in res)

    @settings(max_examples=10, deadline=None)
    @given(st.floats(0.1, 20) | st.floats(-20, -0.1), st.floats(-100, 100), st.sampled_from(["gaussian", "laplace"]))
    def test_affine_invariance(self, c, d, family):
        s = data(family, 50, 8, mu=(0.4, 0))
        t = BivariateSample(c * s.x1 + d, c * s.x2 + d)
        a = by_name(mean_equality_tests(s, family))
        b = by_name(mean_equality_tests(t, family))
        for name in a:
            assert b[name].statistic == pytest.approx(a[name].statistic, rel=1e-5, abs=1e-8)

    @pytest.mark.parametrize("family", ["gaussian", "laplace"])
    def test_agree_at_large_n(self, family):
        s = data(family, 10_000, 9, mu=(0.1 if family == "gaussian" else 0.35, 0))
        stats_ = [r.statistic for r in mean_equality_tests(s, family)[:4]]
        assert min(stats_) > 20
        assert max(stats_) / min(stats_) < 1.10

    def test_fit_order_checked(self):
        s = data("gaussian", 20, 10)
        a, b = fit(s, "gaussian"), fit(s, "gaussian", True)
        with pytest.raises(ValueError):
            test_means(s, (b, a))
        with pytest.raises(ValueError):
            test_means(s, (a, fit(s, "laplace", True)))


class TestOmega:
    def test_matrices(self):
        D, K = duplication_matrix(2), commutation_matrix(2)
        S = np.array([[1.0, 2.0], [2.0, 5.0]])
        assert np.allclose(D @ vech(S), S.reshape(-1, order="F"))
        A = np.arange(4.0).reshape(2, 2)
        assert np.allclose(K @ A.reshape(-1, order="F"), A.T.reshape(-1, order="F"))

    def test_identity_hand(self):
        om = vech_s_asymptotic_cov(np.eye(2))
        # vech = (s11, s21, s22)
        assert np.allclose(om, [[4, 0, 2 / 3], [0, 5 / 3, 0], [2 / 3, 0, 4]], atol=1e-14)
        assert laplace_kurtosis(2) == pytest.approx(2 / 3)

    def test_monte_carlo(self):
        reps, n = 10_000, 2000
        sig = scenario_sigma(2)
        p = ModelParams(np.zeros(2), sig, "laplace")
        out = np.empty((reps, 3))
        for b in range(0, reps, 500):
            x = sample_laplace(p, 500 * n, [31, b]).as_array().reshape(500, n, 2)
            xc = x - x.mean(1, keepdims=True)
            S = np.einsum("rni,rnj->rij", xc, xc) / (n - 1)
            out[b:b + 500] = S[:, [0, 1, 1], [0, 0, 1]]
        mc = n * np.cov(out.T)
        om = vech_s_asymptotic_cov(12 * sig)
        assert np.all(np.abs(mc - om) <= 0.10 * np.abs(om))


class TestBootstrap:
    def test_identical_rows(self):
        s = BivariateSample([1.0] * 10, [2.0] * 10)
        assert bootstrap_se(s, lambda t: t.x1.mean()).se == 0

    def test_mean_se(self):
        # oracle: bootstrap se of a mean is close to sd/sqrt(n)
        s = data("gaussian", 200, 11)
        r = bootstrap_se(s, lambda t: float(t.x1.mean()), B=2000, seed=3)
        assert r.se == pytest.approx(s.x1.std() / math.sqrt(200), rel=0.06)
        assert r.estimates.shape == (2000,) and r.redraws == 0

    def test_deterministic(self):
        s = data("gaussian", 50, 12)
        est = lambda t: fit_lin(fit(t, "gaussian"))  # noqa: E731
        a = bootstrap_se(s, est, B=100, seed=5)
        b = bootstrap_se(s, est, B=100, seed=5)
        c = bootstrap_se(s, est, B=100, seed=6)
        assert np.array_equal(a.estimates, b.estimates) and a.se != c.se

    def test_matches_asymptotic(self):
        s = data("gaussian", 400, 13, m=1)
        f = fit(s, "gaussian")
        boot = bootstrap_se(s, lambda t: fit_lin(fit(t, "gaussian")), B=1000, seed=1)
        asym = fit_lin_se(f)
        assert asym == pytest.approx(0.005, rel=0.3)
        assert boot.se == pytest.approx(asym, rel=0.3)

    def test_redraws_counted(self):
        calls = {"n": 0}

        def flaky(t):
            calls["n"] += 1
            if calls["n"] % 7 == 0:
                raise ValueError("bad resample")
            return float(t.x1.mean())

        r = bootstrap_se(data("gaussian", 30, 14), flaky, B=100)
        assert r.redraws > 0 and np.all(np.isfinite(r.estimates))

    def test_gives_up(self):
        def broken(t):
            raise ValueError("always")

        with pytest.raises(RuntimeError):
            bootstrap_se(data("gaussian", 30, 15), broken, B=100, max_retries=2)

    def test_minimum_B(self):
        with pytest.raises(ValueError):
            bootstrap_se(data("gaussian", 30, 15), lambda t: 0.0, B=50)
