"""Moment, Gaussian ML and Laplace EM/ECM estimation for paired measurements."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import (
    AgreementValue,
    CoefficientKind,
    lin_gaussian,
    lin_laplace,
    rho1_ec,
    rho1_gaussian,
    rho_p_from_rho_c,
    scaled_phi_gaussian,
)
from .sampling import (
    BivariateSample,
    DegenerateDataError,
    ModelParams,
    laplace_log_constant,
    laplace_marginal_generator,
)
from .special import bessel_k_ratio

log = logging.getLogger(__name__)

# Laplace_2: cov(X) = 4 (k + 1) Sigma
LAPLACE_COV_FACTOR = 12.0
_MIN_DISTANCE = 1e-8
# EM stops only when the parameters have also settled
PARAM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ConvergenceSpec:
    tolerance: float = 1e-10
    max_iterations: int = 500

    def __post_init__(self):
        if not self.tolerance > 0 or self.max_iterations < 1:
            raise ValueError("need tolerance > 0 and max_iterations >= 1")


DEFAULT_CONVERGENCE = ConvergenceSpec()


@dataclass(frozen=True)
class ModelFit:
    family: str
    constrained: bool
    theta: ModelParams
    loglik: float
    weights: np.ndarray
    iterations: int
    converged: bool
    loglik_trace: np.ndarray
    lam: float | None = None
    weight_rule: str | None = None
    n: int = field(default=0)

    @property
    def mu(self) -> np.ndarray:
        return self.theta.mu

    @property
    def sigma(self) -> np.ndarray:
        return self.theta.sigma

    def reported_covariance(self) -> np.ndarray:
        """cov(X) implied by the fit (12 Sigma for Laplace_2)."""
        if self.family == "laplace":
            return (4.0 * (self.theta.k + 1)) * self.theta.sigma
        return self.theta.sigma


def sample_moments(sample: BivariateSample):
    """Return ``(means, cov_ml, cov_unbiased)``: 1/n and 1/(n-1) covariances."""
    n = sample.n
    if n < 2:
        raise ValueError("need at least two observations")
    x = sample.as_array()
    mean = x.mean(axis=0)
    r = x - mean
    cross = r.T @ r
    return mean, cross / n, cross / (n - 1)


def _check_pd(sigma: np.ndarray):
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDataError("scatter estimate is not positive definite; degenerate data") from exc


def _mahalanobis(x, mu, sigma):
    L = np.linalg.cholesky(sigma)
    r = np.linalg.solve(L, (x - mu).T)
    return np.sqrt(np.sum(r * r, axis=0))


def _gaussian_loglik(x, mu, sigma) -> float:
    n, k = x.shape
    d = _mahalanobis(x, mu, sigma)
    _, logdet = np.linalg.slogdet(sigma)
    return float(-0.5 * (n * k * math.log(2.0 * math.pi) + n * logdet + np.sum(d * d)))


def _laplace_loglik(x, mu, sigma, d=None) -> float:
    n, k = x.shape
    if d is None:
        d = _mahalanobis(x, mu, sigma)
    _, logdet = np.linalg.slogdet(sigma)
    return float(n * laplace_log_constant(k) - 0.5 * n * logdet - 0.5 * np.sum(d))


def _weighted_scatter(x, center, w):
    r = x - center
    return (w[:, None] * r).T @ r / x.shape[0]


def _gls_common_mean(mu, sigma) -> float:
    sinv1 = np.linalg.solve(sigma, np.ones(mu.size))
    return float(sinv1 @ mu / sinv1.sum())


def _converged(old: float, new: float, tol: float) -> bool:
    return abs(new - old) <= tol * (abs(old) + tol)


def fit_gaussian(
    sample: BivariateSample,
    constrained: bool = False,
    spec: ConvergenceSpec = DEFAULT_CONVERGENCE,
) -> ModelFit:
    """Gaussian ML fit, optionally under mu1 = mu2 (coordinate ascent)."""
    if sample.n < 3:
        raise ValueError("need at least three observations")
    x = sample.as_array()
    n = sample.n
    mean, cov, _ = sample_moments(sample)
    _check_pd(cov)
    if not constrained:
        ll = _gaussian_loglik(x, mean, cov)
        return ModelFit("gaussian", False, ModelParams(mean, cov), ll, np.ones(n), 0, True,
                        np.array([ll]), n=n)

    sigma = cov
    lam = _gls_common_mean(mean, sigma)
    trace = []
    converged = False
    it = 0
    for it in range(1, spec.max_iterations + 1):
        mu = np.full(2, lam)
        sigma = _weighted_scatter(x, mu, np.ones(n))
        _check_pd(sigma)
        trace.append(_gaussian_loglik(x, mu, sigma))
        prev, lam = lam, _gls_common_mean(mean, sigma)
        step = abs(lam - prev) / (1.0 + abs(lam))
        if len(trace) > 1 and _converged(trace[-2], trace[-1], spec.tolerance) and step <= PARAM_TOLERANCE:
            converged = True
            break
    mu = np.full(2, lam)
    sigma = _weighted_scatter(x, mu, np.ones(n))
    ll = _gaussian_loglik(x, mu, sigma)
    trace.append(ll)
    return ModelFit("gaussian", True, ModelParams(mu, sigma), ll, np.ones(n), it, converged,
                    np.array(trace), lam=lam, n=n)


def laplace_weights(d, k: int = 2, rule: str = "exact") -> np.ndarray:
    """E-step weights E(w^-2 | x) as a function of the Mahalanobis distance.

    ``rule="exact"`` is the conditional expectation under the scale mixture
    that generates the exp(-D/2) density: the posterior of w^2 is GIG with
    index 1/2, giving ``(1/2)/D * K_{-1/2}(D/2)/K_{1/2}(D/2) = 1/(2D)``.
    ``rule="bessel"`` uses Bessel orders ``k/2 - 1`` and ``k/2`` instead, which
    coincides with the exact rule only for k = 1.
    """
    d = np.maximum(np.asarray(d, dtype=float), _MIN_DISTANCE)
    if rule == "exact":
        order = 0.5
    elif rule == "bessel":
        order = k / 2.0
    else:
        raise ValueError("weight rule must be 'exact' or 'bessel'")
    return 0.5 / d * bessel_k_ratio(order, d / 2.0)


def _laplace_start(x):
    mean = x.mean(axis=0)
    r = x - mean
    cov = r.T @ r / x.shape[0]
    return mean, cov / LAPLACE_COV_FACTOR


def _run_laplace_em(x, constrained: bool, spec: ConvergenceSpec, rule: str):
    n, k = x.shape
    mu, sigma = _laplace_start(x)
    _check_pd(sigma)
    lam = None
    if constrained:
        lam = _gls_common_mean(mu, sigma)
        mu = np.full(k, lam)
    d = _mahalanobis(x, mu, sigma)
    trace = [_laplace_loglik(x, mu, sigma, d)]
    converged = False
    it = 0
    for it in range(1, spec.max_iterations + 1):
        old = np.concatenate([mu, sigma.ravel()])
        w = laplace_weights(d, k, rule)
        center = w @ x / w.sum()
        if constrained:
            lam = _gls_common_mean(center, sigma)
            mu = np.full(k, lam)
        else:
            mu = center
        sigma = _weighted_scatter(x, mu, w)
        _check_pd(sigma)
        d = _mahalanobis(x, mu, sigma)
        trace.append(_laplace_loglik(x, mu, sigma, d))
        new = np.concatenate([mu, sigma.ravel()])
        step = np.max(np.abs(new - old)) / (1.0 + np.max(np.abs(new)))
        if _converged(trace[-2], trace[-1], spec.tolerance) and step <= PARAM_TOLERANCE:
            converged = True
            break
    if not converged:
        log.warning("Laplace EM did not converge in %d iterations", spec.max_iterations)
    w = laplace_weights(d, k, rule)
    return mu, sigma, lam, w, np.array(trace), it, converged


def fit_laplace(
    sample: BivariateSample,
    spec: ConvergenceSpec = DEFAULT_CONVERGENCE,
    weights: str = "exact",
) -> ModelFit:
    """ML fit of Laplace_2(mu, Sigma) by EM over the scale-mixture representation."""
    if sample.n < 3:
        raise ValueError("need at least three observations")
    x = sample.as_array()
    mu, sigma, _, w, trace, it, ok = _run_laplace_em(x, False, spec, weights)
    return ModelFit("laplace", False, ModelParams(mu, sigma, "laplace"), float(trace[-1]), w, it, ok,
                    trace, weight_rule=weights, n=sample.n)


def fit_laplace_constrained(
    sample: BivariateSample,
    spec: ConvergenceSpec = DEFAULT_CONVERGENCE,
    weights: str = "exact",
) -> ModelFit:
    """ECM fit of Laplace_2 under mu1 = mu2 = lambda."""
    if sample.n < 3:
        raise ValueError("need at least three observations")
    x = sample.as_array()
    mu, sigma, lam, w, trace, it, ok = _run_laplace_em(x, True, spec, weights)
    return ModelFit("laplace", True, ModelParams(mu, sigma, "laplace"), float(trace[-1]), w, it, ok,
                    trace, lam=lam, weight_rule=weights, n=sample.n)


def fit(sample: BivariateSample, family: str, constrained: bool = False,
        spec: ConvergenceSpec = DEFAULT_CONVERGENCE, weights: str = "exact") -> ModelFit:
    if family == "gaussian":
        return fit_gaussian(sample, constrained, spec)
    if family == "laplace":
        if constrained:
            return fit_laplace_constrained(sample, spec, weights)
        return fit_laplace(sample, spec, weights)
    raise ValueError(f"cannot fit family {family!r}")


_LAPLACE_GEN = None


def _laplace_generator():
    global _LAPLACE_GEN
    if _LAPLACE_GEN is None:
        _LAPLACE_GEN = laplace_marginal_generator(2)
    return _LAPLACE_GEN


def fit_lin(fit: ModelFit) -> float:
    if fit.family == "laplace":
        return lin_laplace(fit.theta)
    return lin_gaussian(fit.theta)


def estimate_agreement(fit: ModelFit, kind: CoefficientKind) -> AgreementValue:
    """Plug the fitted parameters into the matching population coefficient."""
    theta = fit.theta
    equal_means = fit.constrained or theta.gamma == 0.0
    tag = kind.tag
    if tag == "lp" and kind.p in (1, 2):
        tag = "l1" if kind.p == 1 else "lin"

    if tag == "lin":
        value = fit_lin(fit)
    elif tag == "l1":
        if equal_means:
            value = rho_p_from_rho_c(fit_lin(fit), 1)
        elif fit.family == "gaussian":
            value = rho1_gaussian(theta)
        else:
            s = theta.sigma
            value = rho1_ec(theta.gamma, math.sqrt(max(theta.tau2, 0.0)), math.sqrt(s[0, 0] + s[1, 1]),
                            _laplace_generator())
    elif tag == "lp":
        if not equal_means:
            raise ValueError("L_p coefficients with p > 2 need equal means (use a constrained fit)")
        value = rho_p_from_rho_c(fit_lin(fit), kind.p)
    else:
        if fit.family != "gaussian":
            raise ValueError("scaled-phi plug-in is only available for Gaussian fits")
        value = scaled_phi_gaussian(theta, kind.phi)
    return AgreementValue(kind, fit.family, float(value))
