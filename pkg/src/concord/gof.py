"""Wilson-Hilferty distance diagnostics, QQ envelopes and Jarque-Bera.

Under Laplace_k the unsquared distances satisfy ``D ~ Gamma(k, rate 1/2)``,
so ``F = D / (2k)`` is a scaled chi-squared(2k) variable and its cube root
is close to normal. Under a Gaussian model ``D^2 ~ chi-squared(k)`` and the
same transform is applied to ``D^2 / k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .estimation import ModelFit, fit
from .inference import TestResult
from .sampling import ModelParams, mahalanobis, make_rng, sample_gaussian, sample_laplace

OUTLIER_LEVEL = 0.995


@dataclass(frozen=True)
class GofReport:
    family: str
    distances: np.ndarray
    fhat: np.ndarray
    z: np.ndarray
    jarque_bera: TestResult
    sorted_z: np.ndarray
    theoretical: np.ndarray
    envelope: np.ndarray  # (n, 3): lower, median, upper
    outliers: np.ndarray
    threshold: float

    def rows(self):
        """Plot-ready rows: index, sorted z, normal quantile, band lower/median/upper."""
        for i in range(self.sorted_z.size):
            lo, med, hi = self.envelope[i]
            yield i + 1, self.sorted_z[i], self.theoretical[i], lo, med, hi


def _wh_params(family: str, k: int):
    # (degrees of freedom of the chi-squared law of the transformed quantity)
    return 2 * k if family == "laplace" else k


def transformed_distances(distances, family: str, k: int = 2):
    """Return ``(F, z)``, the scaled distances and their Wilson-Hilferty normal scores."""
    d = np.asarray(distances, dtype=float)
    nu = _wh_params(family, k)
    fhat = d / (2 * k) if family == "laplace" else d * d / k
    z = (np.cbrt(fhat) - (1.0 - 2.0 / (9.0 * nu))) / math.sqrt(2.0 / (9.0 * nu))
    return fhat, z


def wilson_hilferty(fhat, k: int = 2):
    """z-score of ``F = D/(2k)`` for Laplace distances."""
    return (np.cbrt(np.asarray(fhat, dtype=float)) - (1.0 - 1.0 / (9.0 * k))) / (1.0 / math.sqrt(9.0 * k))


def jarque_bera(z) -> TestResult:
    z = np.asarray(z, dtype=float)
    n = z.size
    if n < 8:
        raise ValueError("Jarque-Bera needs at least 8 values")
    c = z - z.mean()
    m2 = np.mean(c ** 2)
    if m2 == 0.0:
        raise ValueError("zero variance input")
    skew = np.mean(c ** 3) / m2 ** 1.5
    exkurt = np.mean(c ** 4) / m2 ** 2 - 3.0
    return TestResult.chi2("jarque-bera", n / 6.0 * (skew ** 2 + exkurt ** 2 / 4.0), 2)


def outlier_threshold(family: str, k: int = 2, level: float = OUTLIER_LEVEL) -> float:
    """Cutoff for F above which an observation is flagged."""
    if family == "laplace":
        return stats.gamma.ppf(level, a=k, scale=2.0) / (2 * k)
    return stats.chi2.ppf(level, k) / k


def _fit_distances(x: np.ndarray, model: ModelFit) -> np.ndarray:
    return mahalanobis(x, model.mu, model.sigma)


def _simulate(model: ModelFit, n: int, rng):
    theta = model.theta
    if model.family == "laplace":
        return sample_laplace(theta, n, rng)
    return sample_gaussian(ModelParams(theta.mu, theta.sigma), n, rng)


def gof_report(sample, model: ModelFit, envelope_sims: int = 100, seed=0) -> GofReport:
    """Distances, WH scores, JB test and a simulated QQ envelope for a fit.

    Each envelope sample is drawn from the fitted model and refitted with
    the same family and constraint before its sorted scores are recorded.
    """
    if envelope_sims < 19:
        raise ValueError("need at least 19 envelope simulations")
    x = sample.as_array()
    n, k = x.shape
    d = _fit_distances(x, model)
    fhat, z = transformed_distances(d, model.family, k)
    sims = np.empty((envelope_sims, n))
    for b in range(envelope_sims):
        rng = make_rng([int(seed), b])
        synthetic = _simulate(model, n, rng)
        refit = fit(synthetic, model.family, model.constrained, weights=model.weight_rule or "exact")
        _, zb = transformed_distances(_fit_distances(synthetic.as_array(), refit), model.family, k)
        sims[b] = np.sort(zb)
    envelope = np.percentile(sims, [2.5, 50.0, 97.5], axis=0).T
    theoretical = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    threshold = outlier_threshold(model.family, k)
    return GofReport(
        family=model.family,
        distances=d,
        fhat=fhat,
        z=z,
        jarque_bera=jarque_bera(z),
        sorted_z=np.sort(z),
        theoretical=theoretical,
        envelope=envelope,
        outliers=np.flatnonzero(fhat > threshold),
        threshold=float(threshold),
    )
