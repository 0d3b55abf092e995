"""Population agreement coefficients.

All functions take model parameters (not data). ``gamma`` denotes the
mean difference ``mu1 - mu2`` and ``tau**2 = s11 + s22 - 2 s12`` the scatter
of ``X1 - X2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .sampling import DensityGenerator, ModelParams
from .special import DEFAULT_QUADRATURE, QuadratureSpec, integrate_1d, std_normal_cdf


@dataclass(frozen=True)
class CoefficientKind:
    """Which coefficient to compute.

    tag is one of ``"lin"``, ``"l1"``, ``"lp"`` (with ``p``) or
    ``"scaled-phi"`` (with ``phi`` in ``{"abs", "square"}``).
    """

    tag: str
    p: int | None = None
    phi: str | None = None

    def __post_init__(self):
        if self.tag not in ("lin", "l1", "lp", "scaled-phi"):
            raise ValueError(f"unknown coefficient {self.tag!r}")
        if self.tag == "lp" and (self.p is None or int(self.p) != self.p or self.p < 1):
            raise ValueError("lp coefficient needs an integer p >= 1")
        if self.tag == "scaled-phi" and self.phi not in ("abs", "square"):
            raise ValueError("scaled-phi coefficient needs phi in {'abs', 'square'}")

    @classmethod
    def parse(cls, text: str) -> "CoefficientKind":
        """Parse ``lin``, ``l1``, ``lp:3`` or ``scaled-phi:abs``."""
        tag, _, arg = text.partition(":")
        if tag == "lp":
            return cls("lp", p=int(arg))
        if tag == "scaled-phi":
            return cls("scaled-phi", phi=arg or "abs")
        return cls(tag)

    @property
    def name(self) -> str:
        if self.tag == "lp":
            return f"lp:{self.p}"
        if self.tag == "scaled-phi":
            return f"scaled-phi:{self.phi}"
        return self.tag


LIN = CoefficientKind("lin")
L1 = CoefficientKind("l1")


@dataclass(frozen=True)
class AgreementValue:
    kind: CoefficientKind
    assumption: str
    value: float


def _moments(params: ModelParams):
    s = params.sigma
    return params.gamma, float(s[0, 0]), float(s[1, 1]), float(s[0, 1])


def lin_gaussian(params: ModelParams) -> float:
    g, s11, s22, s12 = _moments(params)
    return 2.0 * s12 / (s11 + s22 + g * g)


def lin_laplace(params: ModelParams) -> float:
    """Lin's coefficient for Laplace_2, where cov(X) = 12 Sigma."""
    if params.k != 2:
        raise ValueError("lin_laplace is defined for k = 2")
    g, s11, s22, s12 = _moments(params)
    return 24.0 * s12 / (12.0 * (s11 + s22) + g * g)


def lin_ec(params: ModelParams, second_radial_moment: float) -> float:
    """Lin's coefficient for a bivariate EC law with E(R^2) given."""
    if not second_radial_moment > 0:
        raise ValueError("E(R^2) must be positive and finite")
    g, s11, s22, s12 = _moments(params)
    a = g / (s11 * s22) ** 0.25
    b = math.sqrt(s11 / s22)
    c12 = 2.0 / (b + 1.0 / b + a * a / (second_radial_moment / 2.0))
    return params.rho * c12


def _folded_normal_mean(m: float, s: float) -> float:
    # E|W| for W ~ N(m, s^2)
    if s == 0.0:
        return abs(m)
    return m * (1.0 - 2.0 * std_normal_cdf(-m / s)) + s * math.sqrt(2.0 / math.pi) * math.exp(-0.5 * (m / s) ** 2)


def rho1_gaussian(params: ModelParams) -> float:
    g, s11, s22, _ = _moments(params)
    tau2 = params.tau2
    if tau2 <= 0.0:
        return 1.0
    num = _folded_normal_mean(g, math.sqrt(tau2))
    den = _folded_normal_mean(g, math.sqrt(s11 + s22))
    return 1.0 - num / den


def _ec_folded_mean(gamma: float, scale: float, gen: DensityGenerator, spec: QuadratureSpec) -> float:
    # E|gamma + scale W| with W having density C_g g(w^2)
    if scale == 0.0:
        return abs(gamma)
    if gamma == 0.0:
        upper = 0.0
    else:
        upper = -gamma / scale
    tail = integrate_1d(lambda r: gen.g(r * r), -math.inf, upper, spec)
    partial = integrate_1d(lambda r: r * gen.g(r * r), -math.inf, upper, spec)
    return gamma * (1.0 - 2.0 * gen.c_g * tail) - 2.0 * gen.c_g * scale * partial


def rho1_ec(
    gamma: float,
    tau: float,
    indep_scale: float,
    gen: DensityGenerator,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """L1 coefficient for a bivariate EC law with univariate generator ``gen``.

    Parameters
    ----------
    gamma : float
        Mean difference ``mu1 - mu2``.
    tau : float
        Scale of ``X1 - X2``, ``sqrt(s11 + s22 - 2 s12)``.
    indep_scale : float
        Scale of ``X1 - X2`` under zero covariance, ``sqrt(s11 + s22)``.
    gen : DensityGenerator
        Generator of the standardized law of ``X1 - X2``.
    """
    if tau < 0 or indep_scale <= 0:
        raise ValueError("need tau >= 0 and indep_scale > 0")
    if gamma == 0.0:
        return 1.0 - tau / indep_scale
    num = _ec_folded_mean(gamma, tau, gen, spec)
    den = _ec_folded_mean(gamma, indep_scale, gen, spec)
    return 1.0 - num / den


def rho1_from_params(params: ModelParams, gen: DensityGenerator, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    s = params.sigma
    return rho1_ec(params.gamma, math.sqrt(max(params.tau2, 0.0)), math.sqrt(s[0, 0] + s[1, 1]), gen, spec)


def rho_p_from_rho_c(rho_c: float, p: int) -> float:
    """L_p coefficient of an EC law with equal means, as a function of rho_c."""
    if rho_c > 1.0:
        raise ValueError("rho_c must not exceed 1")
    return 1.0 - (1.0 - rho_c) ** (p / 2.0)


def scaled_phi_gaussian(params: ModelParams, phi: str) -> float:
    """Scaled phi-agreement coefficient for bivariate normal data, phi = |.| or (.)^2."""
    mu1, mu2 = (float(v) for v in params.mu)
    _, s11, s22, s12 = _moments(params)
    if phi == "square":
        def e(m, v):
            return m * m + v
    elif phi == "abs":
        def e(m, v):
            return _folded_normal_mean(m, math.sqrt(v))
    else:
        raise ValueError("phi must be 'abs' or 'square'")

    diff0 = e(mu1 - mu2, s11 + s22)
    sum0 = e(mu1 + mu2, s11 + s22)
    diff = e(mu1 - mu2, s11 + s22 - 2.0 * s12)
    summ = e(mu1 + mu2, s11 + s22 + 2.0 * s12)
    twice = 0.5 * (e(2.0 * mu1, 4.0 * s11) + e(2.0 * mu2, 4.0 * s22))
    return (diff0 - sum0 - (diff - summ)) / (diff0 - sum0 + twice)


def xi_ratio(s11: float, s22: float, s12: float) -> float:
    return (s11 + s22 - 2.0 * s12) / (s11 + s22)


REFERENCE_RHO_C = {m: v for m, v in zip((1, 2, 3), (0.95, 0.85, 0.75))}
REFERENCE_RHO_1 = {m: rho_p_from_rho_c(v, 1) for m, v in REFERENCE_RHO_C.items()}
