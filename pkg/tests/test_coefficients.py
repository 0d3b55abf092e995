import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from concord.coefficients import (
    REFERENCE_RHO_1,
    REFERENCE_RHO_C,
    CoefficientKind,
    lin_ec,
    lin_gaussian,
    lin_laplace,
    rho1_ec,
    rho1_from_params,
    rho1_gaussian,
    rho_p_from_rho_c,
    scaled_phi_gaussian,
    xi_ratio,
)
from concord.sampling import ModelParams, gaussian_generator, laplace_marginal_generator, scenario_sigma


def mp(mu, s11, s22, s12, family="gaussian"):
    return ModelParams(np.array(mu, float), np.array([[s11, s12], [s12, s22]], float), family)


@st.composite
def bivariate(draw):
    s11 = draw(st.floats(0.1, 5))
    s22 = draw(st.floats(0.1, 5))
    r = draw(st.floats(-0.95, 0.95))
    g = draw(st.floats(-3, 3))
    return mp((g, 0.0), s11, s22, r * math.sqrt(s11 * s22))


class TestKind:
    @pytest.mark.parametrize("text,name", [("lin", "lin"), ("l1", "l1"), ("lp:3", "lp:3"),
                                           ("scaled-phi:abs", "scaled-phi:abs")])
    def test_parse(self, text, name):
        assert CoefficientKind.parse(text).name == name

    @pytest.mark.parametrize("text", ["lp:0", "scaled-phi:cube", "kappa"])
    def test_reject(self, text):
        with pytest.raises(ValueError):
            CoefficientKind.parse(text)


class TestLin:
    def test_reference(self):
        assert lin_gaussian(mp((0, 0), 1, 1, 0.95)) == pytest.approx(0.95, abs=1e-15)

    def test_zero_cov(self):
        assert lin_gaussian(mp((0, 3), 1, 2, 0)) == 0

    def test_hand(self):
        assert lin_gaussian(mp((1, 0), 1, 1, 0.5)) == pytest.approx(1 / 3, abs=1e-15)

    def test_laplace_reference(self):
        assert lin_laplace(mp((0, 0), 1, 1, 0.85, "laplace")) == pytest.approx(0.85, abs=1e-15)

    def test_laplace_hand(self):
        assert lin_laplace(mp((1, 0), 1, 1, 0.5, "laplace")) == pytest.approx(0.48, abs=1e-15)
        assert lin_laplace(mp((1, 0), 1, 1, 0, "laplace")) == 0

    def test_laplace_dimension(self):
        p = ModelParams(np.zeros(3), np.eye(3), "laplace")
        with pytest.raises(ValueError):
            lin_laplace(p)

    @settings(max_examples=100, deadline=None)
    @given(bivariate())
    def test_ec_reproduces_gaussian(self, p):
        assert lin_ec(p, 2.0) == pytest.approx(lin_gaussian(p), rel=1e-12, abs=1e-14)

    @settings(max_examples=100, deadline=None)
    @given(bivariate())
    def test_ec_reproduces_laplace(self, p):
        assert lin_ec(p, 24.0) == pytest.approx(lin_laplace(p), rel=1e-12, abs=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.1, 4), st.floats(-0.9, 0.9), st.floats(0.5, 100))
    def test_ec_equal_scales(self, s, r, er2):
        assert lin_ec(mp((0, 0), s, s, r * s), er2) == pytest.approx(r, abs=1e-14)


class TestRho1:
    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_references(self, m):
        s = scenario_sigma(m)
        value = rho1_gaussian(mp((0, 0), 1, 1, s[0, 1]))
        assert value == pytest.approx(1 - math.sqrt(1 - s[0, 1]), abs=1e-15)
        assert value == pytest.approx(REFERENCE_RHO_1[m], abs=1e-15)

    def test_m3_exact(self):
        assert rho1_gaussian(mp((0, 0), 1, 1, 0.75)) == pytest.approx(0.5, abs=1e-15)

    def test_zero_cov(self):
        assert rho1_gaussian(mp((0, 0), 1.3, 0.7, 0)) == pytest.approx(0, abs=1e-15)

    def test_tau_to_zero(self):
        # with tau -> 0 and gamma = 0 the coefficient tends to 1
        values = [rho1_gaussian(mp((0, 0), 1, 1, 1 - e)) for e in (1e-2, 1e-6, 1e-10)]
        assert values == sorted(values) and values[-1] == pytest.approx(1.0, abs=1e-4)

    def test_monte_carlo_gamma_one(self):
        # oracle: E|Z| with Z = X1 - X2 drawn by brute force, 10^7 draws
        rng = np.random.default_rng(2024)
        n = 10_000_000
        z_dep = 1.0 + rng.standard_normal(n)  # tau^2 = 1 + 1 - 2(0.5) = 1
        z_ind = 1.0 + math.sqrt(2.0) * rng.standard_normal(n)
        mc = 1 - np.abs(z_dep).mean() / np.abs(z_ind).mean()
        value = rho1_gaussian(mp((1, 0), 1, 1, 0.5))
        assert value == pytest.approx(mc, abs=2e-3)
        assert round(value, 5) == 0.16626

    def test_ec_gaussian_generator(self):
        gen = gaussian_generator()
        for g in (-2.0, -0.3, 0.7, 2.5):
            for t in (0.2, 1.0, 1.9):
                p = mp((g, 0), 1.2, 0.9, (2.1 - t * t) / 2)
                assert rho1_from_params(p, gen) == pytest.approx(rho1_gaussian(p), abs=1e-6)

    @pytest.mark.parametrize("gen", [gaussian_generator(), laplace_marginal_generator(2)])
    def test_ec_gamma_zero_generator_free(self, gen):
        assert rho1_ec(0.0, 0.6, 1.5, gen) == pytest.approx(1 - 0.4, abs=1e-15)
        assert rho1_ec(0.0, 1.5, 1.5, gen) == 0.0

    def test_ec_laplace_by_monte_carlo(self):
        # oracle: draw Laplace_2 pairs and evaluate the defining expectation ratio
        from concord.sampling import sample_laplace
        sig = np.array([[1.0, 0.6], [0.6, 1.4]])
        mu = np.array([0.8, 0.0])
        x = sample_laplace(ModelParams(mu, sig, "laplace"), 2_000_000, 5).as_array()
        xi = sample_laplace(ModelParams(mu, np.diag(np.diag(sig)), "laplace"), 2_000_000, 6).as_array()
        mc = 1 - np.abs(x[:, 0] - x[:, 1]).mean() / np.abs(xi[:, 0] - xi[:, 1]).mean()
        gen = laplace_marginal_generator(2)
        value = rho1_ec(0.8, math.sqrt(1.0 + 1.4 - 1.2), math.sqrt(2.4), gen)
        assert value == pytest.approx(mc, abs=5e-3)

    def test_ec_validation(self):
        with pytest.raises(ValueError):
            rho1_ec(0.1, -1.0, 1.0, gaussian_generator())


class TestRhoP:
    def test_reference_values(self):
        assert rho_p_from_rho_c(0.75, 1) == pytest.approx(0.5, abs=1e-15)
        assert round(rho_p_from_rho_c(0.85, 1), 4) == 0.6127
        assert round(rho_p_from_rho_c(0.95, 1), 4) == 0.7764
        assert rho_p_from_rho_c(-1, 1) == pytest.approx(1 - math.sqrt(2), abs=1e-15)

    @pytest.mark.parametrize("p", [1, 2, 3, 4, 7])
    def test_zero(self, p):
        assert rho_p_from_rho_c(0.0, p) == 0.0

    @settings(max_examples=100)
    @given(st.floats(-1, 1))
    def test_identity_p2(self, rc):
        assert rho_p_from_rho_c(rc, 2) == pytest.approx(rc, abs=1e-15)

    @settings(max_examples=100)
    @given(st.floats(0.001, 0.999), st.integers(1, 6))
    def test_monotone_in_p(self, rc, p):
        # (1 - rho_c)^(p/2) shrinks with p, so rho_p grows
        assert rho_p_from_rho_c(rc, p + 1) >= rho_p_from_rho_c(rc, p) - 1e-15

    def test_ordering_against_xi(self):
        # equal means: rho_c = 1 - xi and rho_1 = 1 - sqrt(xi) for xi in [0, 2]
        for xi in np.linspace(0, 2, 401):
            rc = 1 - xi
            r1 = rho_p_from_rho_c(rc, 1)
            assert r1 == pytest.approx(1 - math.sqrt(xi), abs=1e-15)
            if 1e-12 < xi < 1 - 1e-12:
                assert rc > r1
            elif xi > 1 + 1e-12:
                assert rc < r1
            else:
                assert rc == pytest.approx(r1, abs=1e-6)

    def test_references_module(self):
        assert REFERENCE_RHO_C == {1: 0.95, 2: 0.85, 3: 0.75}
        assert xi_ratio(1, 1, 0.75) == pytest.approx(0.25)

    def test_above_one(self):
        with pytest.raises(ValueError):
            rho_p_from_rho_c(1.1, 1)


class TestScaledPhi:
    @settings(max_examples=100, deadline=None)
    @given(bivariate(), st.floats(-3, 3))
    def test_square_is_lin(self, p, shift):
        p = p.with_(mu=p.mu + shift)
        assert scaled_phi_gaussian(p, "square") == pytest.approx(lin_gaussian(p), abs=1e-12)

    def test_perfect(self):
        # limit of identical columns; exact equality would make Sigma singular
        p = mp((0.0, 0.0), 1.0, 1.0, 1.0 - 1e-12)
        assert scaled_phi_gaussian(p, "abs") == pytest.approx(1.0, abs=1e-5)

    def test_abs_by_monte_carlo(self):
        rng = np.random.default_rng(77)
        n = 10_000_000
        cov = np.array([[1.0, 0.5], [0.5, 1.0]])
        L = np.linalg.cholesky(cov)
        x = rng.standard_normal((n, 2)) @ L.T
        xi = rng.standard_normal((n, 2))  # independent copies
        e = lambda v: np.abs(v).mean()  # noqa: E731
        num = e(xi[:, 0] - xi[:, 1]) - e(xi[:, 0] + xi[:, 1]) - (e(x[:, 0] - x[:, 1]) - e(x[:, 0] + x[:, 1]))
        den = e(xi[:, 0] - xi[:, 1]) - e(xi[:, 0] + xi[:, 1]) + 0.5 * (e(2 * x[:, 0]) + e(2 * x[:, 1]))
        value = scaled_phi_gaussian(mp((0, 0), 1, 1, 0.5), "abs")
        assert -1 <= value <= 1
        assert value == pytest.approx(num / den, abs=2e-3)


class TestInvariance:
    @settings(max_examples=60, deadline=None)
    @given(bivariate(), st.floats(0.05, 20))
    def test_scale(self, p, c):
        q = p.with_(mu=p.mu * math.sqrt(c), sigma=p.sigma * c)
        assume(p.tau2 > 1e-6)
        assert lin_gaussian(q) == pytest.approx(lin_gaussian(p), abs=1e-12)
        assert lin_laplace(q) == pytest.approx(lin_laplace(p), abs=1e-12)
        assert rho1_gaussian(q) == pytest.approx(rho1_gaussian(p), abs=1e-12)
        assert scaled_phi_gaussian(q, "abs") == pytest.approx(scaled_phi_gaussian(p, "abs"), abs=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(bivariate())
    def test_ranges(self, p):
        assert -1 <= lin_gaussian(p) <= 1
        assert 1 - math.sqrt(2) - 1e-12 < rho1_gaussian(p) <= 1
        assert -1 - 1e-12 <= scaled_phi_gaussian(p, "abs") <= 1 + 1e-12
