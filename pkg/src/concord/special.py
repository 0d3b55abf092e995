"""Scalar special functions and 1-D quadrature used throughout the package."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature does not reach the requested tolerance.

    The best available estimate and its error bound are attached so that
    callers can decide whether to accept it.
    """

    def __init__(self, message: str, estimate: float, abserr: float):
        super().__init__(message)
        self.estimate = estimate
        self.abserr = abserr


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


DEFAULT_QUADRATURE = QuadratureSpec()


def std_normal_cdf(x):
    """Standard normal CDF, accurate in both tails (erfc based)."""
    return special.ndtr(x)


def std_normal_pdf(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def _half_integer_k(nu: float, x):
    # K_{n+1/2}(x) = sqrt(pi/(2x)) e^{-x} sum_{j=0}^{n} (n+j)! / (j! (n-j)! (2x)^j)
    n = int(round(abs(nu) - 0.5))
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    for j in range(n + 1):
        coef = math.factorial(n + j) / (math.factorial(j) * math.factorial(n - j))
        total = total + coef / (2.0 * x) ** j
    return np.sqrt(math.pi / (2.0 * x)) * np.exp(-x) * total


def _is_half_integer(nu: float) -> bool:
    return abs(2.0 * abs(nu) - round(2.0 * abs(nu))) < 1e-14 and round(2.0 * abs(nu)) % 2 == 1


def bessel_k(nu: float, x):
    """Modified Bessel function of the second kind, K_nu(x), for real x > 0.

    Half-integer orders use the terminating closed form; other orders
    defer to the exponentially scaled routine in scipy.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or np.any(~np.isfinite(x)):
        raise ValueError("bessel_k requires finite x > 0")
    if _is_half_integer(nu):
        out = _half_integer_k(nu, x)
    else:
        out = special.kve(abs(nu), x) * np.exp(-x)
    return out if out.ndim else float(out)


def bessel_k_ratio(nu: float, x):
    """K_{nu-1}(x) / K_nu(x), computed without underflow for large x."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("bessel_k_ratio requires x > 0")
    if _is_half_integer(nu) and _is_half_integer(nu - 1.0):
        # both closed form; the e^{-x} factors cancel
        num = _half_integer_k(nu - 1.0, x) * np.exp(x)
        den = _half_integer_k(nu, x) * np.exp(x)
    else:
        num = special.kve(abs(nu - 1.0), x)
        den = special.kve(abs(nu), x)
    out = num / den
    return out if out.ndim else float(out)


def integrate_1d(
    f: Callable[[float], float],
    lower: float,
    upper: float,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Adaptive Gauss-Kronrod quadrature of ``f`` over ``(lower, upper)``.

    Infinite limits are accepted; QUADPACK maps them onto (0, 1] before
    subdividing.

    Raises
    ------
    QuadratureError
        If the error estimate exceeds ``max(abs_tol, rel_tol * |I|)`` after
        ``max_subdivisions`` bisections.
    """
    if lower == upper:
        return 0.0
    if lower > upper:
        return -integrate_1d(f, upper, lower, spec)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, abserr, info = integrate.quad(
            f,
            lower,
            upper,
            epsabs=spec.abs_tol,
            epsrel=spec.rel_tol,
            limit=spec.max_subdivisions,
            full_output=1,
        )[:3]
    bound = max(spec.abs_tol, spec.rel_tol * abs(value))
    if abserr > bound:
        raise QuadratureError(
            f"quadrature did not converge: error estimate {abserr:.3g} > {bound:.3g}",
            value,
            abserr,
        )
    return float(value)


def gamma_quantile(shape: float, rate: float, p: float) -> float:
    """Quantile of the Gamma(shape, rate) law."""
    if shape <= 0 or rate <= 0:
        raise ValueError("gamma shape and rate must be positive")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    return float(special.gammaincinv(shape, p) / rate)


def gamma_cdf(x, shape: float, rate: float):
    return special.gammainc(shape, rate * np.maximum(np.asarray(x, dtype=float), 0.0))
