"""Distribution-free U-statistic estimators of the phi-agreement coefficient.

With ``phi`` applied to paired and cross differences,

    U1 = mean_{i != j} (phi(X1i - X2i) + phi(X1j - X2j)) / 2
    U2 = mean_{i != j} (phi(X1i - X2j) + phi(X1j - X2i)) / 2

and ``rho = H / G`` with ``H = (n-1)(U2 - U1)``, ``G = U1 + (n-1) U2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sampling import BivariateSample

PHIS = {
    "abs": np.abs,
    "square": np.square,
}


class UndefinedEstimate(ArithmeticError):
    pass


@dataclass(frozen=True)
class UStatEstimate:
    phi: str
    n: int
    u1: float
    u2: float
    h: float
    g: float
    rho_hat: float
    var_hat: float = float("nan")

    @property
    def se(self) -> float:
        return math.sqrt(self.var_hat) if self.var_hat >= 0 else float("nan")


def _phi(name: str):
    try:
        return PHIS[name]
    except KeyError:
        raise ValueError(f"phi must be one of {sorted(PHIS)}") from None


def _kernels(sample: BivariateSample, phi: str):
    f = _phi(phi)
    a = f(sample.x1 - sample.x2)
    M = f(sample.x1[:, None] - sample.x2[None, :])
    return a, M


def _ratio(u1: float, u2: float, n: int):
    h = (n - 1) * (u2 - u1)
    g = u1 + (n - 1) * u2
    return h, g


def ustat_estimate(sample: BivariateSample, phi: str = "abs") -> UStatEstimate:
    """O(n^2) U-statistic estimate of the phi-coefficient (pairwise summation)."""
    n = sample.n
    if n < 2:
        raise ValueError("need at least two observations")
    a, M = _kernels(sample, phi)
    u1 = float(np.sum(a)) / n
    off = float(np.sum(M)) - float(np.sum(np.diag(M)))
    u2 = off / (n * (n - 1))
    h, g = _ratio(u1, u2, n)
    if g == 0.0:
        raise UndefinedEstimate("zero denominator: all cross differences vanish")
    return UStatEstimate(phi, n, u1, u2, h, g, h / g)


def _component_covariance(a: np.ndarray, M: np.ndarray):
    # Hajek projections psi_i = E[kernel(i, j) | i] estimated by row means over j != i
    n = a.size
    psi1 = 0.5 * (a + (a.sum() - a) / (n - 1))
    sym = 0.5 * (M + M.T)
    psi2 = (sym.sum(axis=1) - np.diag(sym)) / (n - 1)
    c = np.cov(np.vstack([psi1, psi2]), ddof=1)
    return 4.0 / n * c


def ratio_variance(est: UStatEstimate, var_u1: float, var_u2: float, cov_u12: float) -> float:
    n = est.n
    var_h = (n - 1) ** 2 * (var_u1 + var_u2 - 2.0 * cov_u12)
    var_g = (n - 1) ** 2 * var_u2 + var_u1 + 2.0 * (n - 1) * cov_u12
    cov_hg = (n - 1) * ((n - 1) * var_u2 - var_u1 - (n - 2) * cov_u12)
    h, g = est.h, est.g
    if h == 0.0:
        # rho_hat = 0; use the limit rho^2 var(H)/H^2 = var(H)/G^2
        return max(var_h / (g * g), 0.0)
    value = est.rho_hat ** 2 * (var_h / h ** 2 + var_g / g ** 2 - 2.0 * cov_hg / (h * g))
    return max(value, 0.0)


def jackknife_variance(sample: BivariateSample, phi: str = "abs") -> float:
    """Leave-one-out jackknife variance of the U-statistic coefficient, O(n^2)."""
    n = sample.n
    if n < 4:
        raise ValueError("need at least four observations")
    a, M = _kernels(sample, phi)
    off_total = M.sum() - np.trace(M)
    row_off = M.sum(axis=1) - np.diag(M)
    col_off = M.sum(axis=0) - np.diag(M)
    m = n - 1
    u1 = (a.sum() - a) / m
    u2 = (off_total - row_off - col_off) / (m * (m - 1))
    h = (m - 1) * (u2 - u1)
    g = u1 + (m - 1) * u2
    loo = h / g
    return float((n - 1) / n * np.sum((loo - loo.mean()) ** 2))


def ustat_variance(sample: BivariateSample, est: UStatEstimate, method: str = "projection") -> float:
    """Asymptotic variance of the U-statistic coefficient.

    ``method="projection"`` plugs first-order projection estimates of
    var(U1), var(U2), cov(U1, U2) into the ratio delta method;
    ``method="jackknife"`` returns the jackknife variance instead.
    """
    if sample.n < 4:
        raise ValueError("need at least four observations")
    if method == "jackknife":
        return jackknife_variance(sample, est.phi)
    if method != "projection":
        raise ValueError("method must be 'projection' or 'jackknife'")
    a, M = _kernels(sample, est.phi)
    c = _component_covariance(a, M)
    return ratio_variance(est, c[0, 0], c[1, 1], c[0, 1])


def ustat(sample: BivariateSample, phi: str = "abs", method: str = "projection") -> UStatEstimate:
    """Estimate and variance in one call."""
    est = ustat_estimate(sample, phi)
    if sample.n < 4:
        return est
    var = ustat_variance(sample, est, method)
    return UStatEstimate(est.phi, est.n, est.u1, est.u2, est.h, est.g, est.rho_hat, var)
