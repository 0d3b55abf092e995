"""Asymptotic variances, mean-equality tests and bootstrap standard errors."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .coefficients import AgreementValue
from .estimation import ModelFit, fit, fit_lin, sample_moments
from .sampling import BivariateSample, make_rng

log = logging.getLogger(__name__)

DEFAULT_CONTRAST = np.array([[1.0, -1.0]])


@dataclass(frozen=True)
class TestResult:
    name: str
    statistic: float
    df: int
    p_value: float

    __test__ = False  # not a pytest class

    @classmethod
    def chi2(cls, name: str, statistic: float, df: int) -> "TestResult":
        statistic = max(float(statistic), 0.0)
        return cls(name, statistic, int(df), float(stats.chi2.sf(statistic, df)))


@dataclass(frozen=True)
class AgreementEstimate:
    value: AgreementValue
    se: float
    se_method: str
    n: int
    bootstrap: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# variances

def lin_asymptotic_variance(rho_c: float, rho: float, u: float, n: int) -> float:
    """v^2 of the Fisher-Z transformed Lin estimator (includes the 1/(n-2) factor)."""
    if rho == 0.0 or abs(rho_c) >= 1.0:
        raise ValueError("variance undefined for rho = 0 or |rho_c| = 1")
    if n < 3:
        raise ValueError("need n >= 3")
    a = 1.0 - rho_c * rho_c
    t1 = (1.0 - rho * rho) * rho_c ** 2 / (a * rho * rho)
    t2 = 2.0 * rho_c ** 3 * (1.0 - rho_c) * u * u / (rho * a * a)
    t3 = rho_c ** 4 * u ** 4 / (2.0 * rho * rho * a * a)
    return (t1 + t2 - t3) / (n - 2)


def lin_variance(rho_c: float, v2: float) -> float:
    """Sampling variance of rho_c-hat from v^2 (back-transform of Fisher Z)."""
    return (1.0 - rho_c * rho_c) ** 2 * v2


def rho_p_asymptotic_variance(rho_c: float, v2: float, p: int) -> float:
    """Delta-method variance of 1 - (1 - rho_c-hat)^(p/2)."""
    if rho_c >= 1.0:
        raise ValueError("rho_c must be < 1")
    deriv = 0.5 * p * (1.0 - rho_c) ** (0.5 * p - 1.0)
    return v2 * (1.0 - rho_c * rho_c) ** 2 * deriv * deriv


def fisher_z(rho: float) -> float:
    if abs(rho) >= 1.0:
        raise ValueError("|rho| must be < 1")
    return math.atanh(rho)


def fisher_z_inverse(z: float) -> float:
    return math.tanh(z)


def _fit_u_and_rho(fit: ModelFit):
    cov = fit.reported_covariance()
    rho = cov[0, 1] / math.sqrt(cov[0, 0] * cov[1, 1])
    u = (fit.mu[0] - fit.mu[1]) / math.sqrt(cov[0, 0] * cov[1, 1])
    return float(rho), float(u)


def fit_lin_se(fit: ModelFit) -> float:
    """Asymptotic SE of the plug-in Lin coefficient of a fit."""
    rho_c = fit_lin(fit)
    rho, u = _fit_u_and_rho(fit)
    v2 = lin_asymptotic_variance(rho_c, rho, u, fit.n)
    return math.sqrt(lin_variance(rho_c, v2))


def fit_rho_p_se(fit: ModelFit, p: int = 1) -> float:
    """Delta-method SE of the plug-in L_p coefficient of a fit."""
    rho_c = fit_lin(fit)
    rho, u = _fit_u_and_rho(fit)
    v2 = lin_asymptotic_variance(rho_c, rho, u, fit.n)
    return math.sqrt(rho_p_asymptotic_variance(rho_c, v2, p))


# ---------------------------------------------------------------------------
# tests of A mu = 0

def _contrast(A, k: int) -> np.ndarray:
    A = DEFAULT_CONTRAST if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != k:
        raise ValueError("contrast matrix has wrong number of columns")
    if np.linalg.matrix_rank(A) != A.shape[0]:
        raise ValueError("contrast matrix must have full row rank")
    return A


def _quad(A, mu, sigma) -> float:
    Am = A @ mu
    return float(Am @ np.linalg.solve(A @ sigma @ A.T, Am))


def test_means(sample: BivariateSample, fits: tuple[ModelFit, ModelFit], A=None) -> list[TestResult]:
    """Wald, score, gradient and likelihood-ratio tests of ``A mu = 0``.

    ``fits`` is ``(unconstrained, constrained)`` from the same family.
    Laplace fits use the information scale 4k; Gaussian fits use 1.
    """
    full, restricted = fits
    if full.family != restricted.family:
        raise ValueError("fits must come from the same family")
    if full.constrained or not restricted.constrained:
        raise ValueError("expected (unconstrained, constrained) fits")
    x = sample.as_array()
    n, k = x.shape
    A = _contrast(A, k)
    r = A.shape[0]
    scale = 4.0 * k if full.family == "laplace" else 1.0

    wald = n / scale * _quad(A, full.mu, full.sigma)
    s = restricted.weights @ (x - restricted.mu)
    sinv_s = np.linalg.solve(restricted.sigma, s)
    score = scale / n * float(s @ sinv_s)
    gradient = float(sinv_s @ (full.mu - restricted.mu))
    lrt = 2.0 * (full.loglik - restricted.loglik)
    return [
        TestResult.chi2("wald", wald, r),
        TestResult.chi2("score", score, r),
        TestResult.chi2("gradient", gradient, r),
        TestResult.chi2("lrt", lrt, r),
    ]


# pytest would otherwise collect this as a test function
test_means.__test__ = False


def hotelling_t2(sample: BivariateSample, A=None) -> TestResult:
    """Generalized Hotelling T^2 with an asymptotic chi-squared(r) reference."""
    mean, _, S = sample_moments(sample)
    A = _contrast(A, mean.size)
    if sample.n < mean.size + 1:
        raise ValueError("need n >= k + 1")
    ASA = A @ S @ A.T
    if np.linalg.matrix_rank(ASA) < A.shape[0] or np.linalg.det(ASA) <= 0:
        if np.allclose(A @ mean, 0.0):
            return TestResult("hotelling-t2", 0.0, A.shape[0], 1.0)
        raise np.linalg.LinAlgError("A S A' is singular")
    return TestResult.chi2("hotelling-t2", sample.n * _quad(A, mean, S), A.shape[0])


TEST_NAMES = ("wald", "score", "gradient", "lrt")


def mean_equality_tests(sample: BivariateSample, family: str = "gaussian", A=None,
                        weights: str = "exact") -> list[TestResult]:
    """Fit both models and return the four likelihood tests plus Hotelling's T^2.

    When ``A x_i = 0`` for every row the hypothesis holds exactly in the
    sample; all statistics are then 0 with p-value 1 and no fit is attempted
    (the scatter estimate would be singular).
    """
    x = sample.as_array()
    A = _contrast(A, x.shape[1])
    r = A.shape[0]
    if np.all(x @ A.T == 0.0):
        return [TestResult(name, 0.0, r, 1.0) for name in TEST_NAMES + ("hotelling-t2",)]
    fits = (fit(sample, family, False, weights=weights), fit(sample, family, True, weights=weights))
    return test_means(sample, fits, A) + [hotelling_t2(sample, A)]


# ---------------------------------------------------------------------------
# Laplace vech(S) covariance

def duplication_matrix(k: int) -> np.ndarray:
    """D_k with vec(S) = D_k vech(S) (vech stacks the lower triangle by columns)."""
    pairs = [(i, j) for j in range(k) for i in range(j, k)]
    D = np.zeros((k * k, len(pairs)))
    for col, (i, j) in enumerate(pairs):
        D[j * k + i, col] = 1.0
        D[i * k + j, col] = 1.0
    return D


def commutation_matrix(k: int) -> np.ndarray:
    K = np.zeros((k * k, k * k))
    for i in range(k):
        for j in range(k):
            K[i * k + j, j * k + i] = 1.0
    return K


def vech(S: np.ndarray) -> np.ndarray:
    k = S.shape[0]
    return np.array([S[i, j] for j in range(k) for i in range(j, k)])


def laplace_kurtosis(k: int) -> float:
    return 2.0 / (k + 1)


def vech_s_asymptotic_cov(sigma, k: int | None = None) -> np.ndarray:
    """Asymptotic covariance Omega of sqrt(n) vech(S) for Laplace_k data.

    Note ``sigma`` here is the covariance of X, to which S converges.
    """
    sigma = np.asarray(sigma, dtype=float)
    k = sigma.shape[0] if k is None else k
    D = duplication_matrix(k)
    K = commutation_matrix(k)
    vs = sigma.reshape(-1, order="F")[:, None]
    inner = (k + 3) * (np.eye(k * k) + K) @ np.kron(sigma, sigma) + 2.0 * vs @ vs.T
    # vech(S) = D^+ vec(S); D^T alone would count each off-diagonal twice
    Dp = np.linalg.solve(D.T @ D, D.T)
    return Dp @ inner @ Dp.T / (k + 1)


# ---------------------------------------------------------------------------
# bootstrap

@dataclass
class BootstrapResult:
    se: float
    estimates: np.ndarray
    redraws: int


def bootstrap_se(
    sample: BivariateSample,
    estimator: Callable[[BivariateSample], float],
    B: int = 1000,
    seed=0,
    max_retries: int = 10,
) -> BootstrapResult:
    """Nonparametric pairs bootstrap standard error of ``estimator``.

    Resamples whose estimator raises are redrawn (up to ``max_retries``
    times each) and counted.
    """
    if B < 100:
        raise ValueError("bootstrap needs B >= 100")
    n = sample.n
    x = sample.as_array()
    if np.all(x == x[0]):
        # every resample equals the original sample
        return BootstrapResult(0.0, np.zeros(0), 0)
    estimates = np.empty(B)
    redraws = 0
    for b in range(B):
        rng = make_rng([int(seed), b])
        for attempt in range(max_retries + 1):
            idx = rng.integers(0, n, size=n)
            try:
                estimates[b] = estimator(sample.take(idx))
                break
            except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
                redraws += 1
                if attempt == max_retries:
                    raise RuntimeError(f"bootstrap replicate {b} failed {max_retries + 1} times") from exc
    return BootstrapResult(float(np.std(estimates, ddof=1)), estimates, redraws)
