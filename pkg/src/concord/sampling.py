"""Data containers, scenario samplers and the multivariate Laplace density.

The multivariate Laplace law used here has density proportional to
``exp(-D/2)`` with ``D`` the (unsquared) Mahalanobis distance. It is
generated as a Gaussian scale mixture ``X | w ~ N(mu, w^2 Sigma)`` with
``w^2 ~ Gamma((k + 1)/2, scale=8)``, which gives ``cov(X) = 4 (k + 1) Sigma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .special import DEFAULT_QUADRATURE, QuadratureSpec, bessel_k, integrate_1d

FAMILIES = ("gaussian", "laplace", "cauchy", "contaminated-normal")


class DegenerateDataError(ValueError):
    """Scatter matrix is not positive definite or the sample is too small."""


def as_scatter(sigma) -> np.ndarray:
    """Validate a scatter matrix (symmetric, positive definite) and return it."""
    s = np.array(sigma, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("scatter matrix must be square")
    if not np.allclose(s, s.T, rtol=0, atol=1e-12 * max(1.0, np.abs(s).max())):
        raise ValueError("scatter matrix must be symmetric")
    try:
        np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDataError("scatter matrix is not positive definite") from exc
    return s


@dataclass(frozen=True)
class ModelParams:
    """Location ``mu`` and scatter ``sigma`` of a bivariate model.

    ``epsilon``/``eta`` are only meaningful for the contaminated normal.
    """

    mu: np.ndarray
    sigma: np.ndarray
    family: str = "gaussian"
    epsilon: float | None = None
    eta: float | None = None

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(-1)
        sigma = as_scatter(self.sigma)
        if not np.all(np.isfinite(mu)):
            raise ValueError("mu must be finite")
        if sigma.shape[0] != mu.size:
            raise ValueError("mu and sigma dimensions differ")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        contaminated = self.family == "contaminated-normal"
        has_cont = self.epsilon is not None and self.eta is not None
        if contaminated != has_cont:
            raise ValueError("epsilon/eta must be given exactly for the contaminated normal")
        if contaminated and not (0.0 <= self.epsilon <= 1.0 and self.eta > 0):
            raise ValueError("need 0 <= epsilon <= 1 and eta > 0")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def k(self) -> int:
        return self.mu.size

    @property
    def gamma(self) -> float:
        return float(self.mu[0] - self.mu[1])

    @property
    def tau2(self) -> float:
        s = self.sigma
        return float(s[0, 0] + s[1, 1] - 2.0 * s[0, 1])

    @property
    def rho(self) -> float:
        s = self.sigma
        return float(s[0, 1] / math.sqrt(s[0, 0] * s[1, 1]))

    def with_(self, **changes) -> "ModelParams":
        values = dict(mu=self.mu, sigma=self.sigma, family=self.family,
                      epsilon=self.epsilon, eta=self.eta)
        values.update(changes)
        return ModelParams(**values)


@dataclass(frozen=True)
class BivariateSample:
    x1: np.ndarray
    x2: np.ndarray
    labels: tuple[str, str] = ("x1", "x2")

    def __post_init__(self):
        x1 = np.array(self.x1, dtype=float).reshape(-1)
        x2 = np.array(self.x2, dtype=float).reshape(-1)
        if x1.size != x2.size:
            raise ValueError("columns must have equal length")
        if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
            raise ValueError("sample entries must be finite")
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", x2)
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def from_array(cls, x, labels=("x1", "x2")) -> "BivariateSample":
        x = np.asarray(x, dtype=float)
        return cls(x[:, 0], x[:, 1], labels)

    @property
    def n(self) -> int:
        return self.x1.size

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.x1, self.x2])

    def take(self, idx) -> "BivariateSample":
        return BivariateSample(self.x1[idx], self.x2[idx], self.labels)


@dataclass(frozen=True)
class DensityGenerator:
    """Univariate density generator ``g`` with constant ``C_g``.

    A random variable with this generator has density ``C_g * g(r**2)``.
    """

    g: Callable[[float], float]
    c_g: float
    label: str
    meta: dict = field(default_factory=dict, compare=False)

    def density(self, r: float) -> float:
        return self.c_g * self.g(r * r)


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator from an int, a sequence of ints or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def replicate_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for replicate ``index`` of a run seeded by ``master_seed``."""
    return make_rng([int(master_seed), int(index)])


def _check_family(params: ModelParams, *allowed: str):
    if params.family not in allowed:
        raise ValueError(f"sampler expects family in {allowed}, got {params.family!r}")


def _gaussian_core(params: ModelParams, n: int, rng: np.random.Generator) -> np.ndarray:
    L = np.linalg.cholesky(params.sigma)
    return rng.standard_normal((n, params.k)) @ L.T


def _to_sample(x: np.ndarray) -> BivariateSample:
    return BivariateSample(x[:, 0], x[:, 1])


def sample_gaussian(params: ModelParams, n: int, seed) -> BivariateSample:
    _check_family(params, "gaussian")
    rng = make_rng(seed)
    return _to_sample(params.mu + _gaussian_core(params, n, rng))


def sample_laplace(params: ModelParams, n: int, seed) -> BivariateSample:
    _check_family(params, "laplace")
    rng = make_rng(seed)
    k = params.k
    z = _gaussian_core(params, n, rng)
    w = np.sqrt(rng.gamma(shape=(k + 1) / 2.0, scale=8.0, size=n))
    return _to_sample(params.mu + w[:, None] * z)


def sample_cauchy(params: ModelParams, n: int, seed) -> BivariateSample:
    _check_family(params, "cauchy")
    rng = make_rng(seed)
    z = _gaussian_core(params, n, rng)
    w = rng.chisquare(1.0, size=n)
    return _to_sample(params.mu + z / np.sqrt(w)[:, None])


def sample_contaminated(params: ModelParams, n: int, seed) -> BivariateSample:
    _check_family(params, "contaminated-normal")
    rng = make_rng(seed)
    # same leading draws as sample_gaussian, so epsilon = 0 reproduces it exactly
    z = _gaussian_core(params, n, rng)
    u = rng.random(n)
    scale = np.where(u < params.epsilon, math.sqrt(params.eta), 1.0)
    return _to_sample(params.mu + scale[:, None] * z)


SAMPLERS = {
    "gaussian": sample_gaussian,
    "laplace": sample_laplace,
    "cauchy": sample_cauchy,
    "contaminated-normal": sample_contaminated,
}


def sample(params: ModelParams, n: int, seed) -> BivariateSample:
    return SAMPLERS[params.family](params, n, seed)


def mahalanobis(x: np.ndarray, mu, sigma) -> np.ndarray:
    """Unsquared Mahalanobis distances of the rows of ``x``."""
    L = np.linalg.cholesky(np.asarray(sigma, dtype=float))
    r = np.linalg.solve(L, (np.atleast_2d(x) - np.asarray(mu)).T)
    return np.sqrt(np.sum(r * r, axis=0))


def laplace_log_constant(k: int) -> float:
    return float(gammaln(k / 2.0) - (k / 2.0) * math.log(math.pi) - gammaln(k) - (k + 1) * math.log(2.0))


def laplace_log_density(x, params: ModelParams) -> np.ndarray | float:
    """Log density of Laplace_k(mu, Sigma) at the rows of ``x``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    d = mahalanobis(np.atleast_2d(x), params.mu, params.sigma)
    _, logdet = np.linalg.slogdet(params.sigma)
    out = laplace_log_constant(params.k) - 0.5 * logdet - 0.5 * d
    return float(out[0]) if single else out


def gaussian_log_density(x, params: ModelParams) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    d = mahalanobis(np.atleast_2d(x), params.mu, params.sigma)
    _, logdet = np.linalg.slogdet(params.sigma)
    out = -0.5 * (params.k * math.log(2.0 * math.pi) + logdet + d * d)
    return float(out[0]) if single else out


# --------------------------------------------------------------------------
# density generators

def gaussian_generator() -> DensityGenerator:
    return DensityGenerator(
        g=lambda t: math.exp(-0.5 * t),
        c_g=1.0 / math.sqrt(2.0 * math.pi),
        label="gaussian",
    )


def _omega_density(w: float, k: int) -> float:
    # h(w) = w^k exp(-w^2/8) / (2^{(3k+1)/2} Gamma((k+1)/2)), w > 0
    logh = k * math.log(w) - w * w / 8.0 - 0.5 * (3 * k + 1) * math.log(2.0) - math.lgamma((k + 1) / 2.0)
    return math.exp(logh)


def _laplace_marginal_closed(t: float, k: int) -> float:
    # integral of N(r; 0, v) against Gamma(v; (k+1)/2, scale 8) in closed form:
    # 2 (4 t)^{k/4} K_{k/2}(sqrt(t)/2) / (sqrt(2 pi) Gamma((k+1)/2) 8^{(k+1)/2}), t = r^2
    nu = k / 2.0
    log_c = -0.5 * math.log(2.0 * math.pi) - math.lgamma((k + 1) / 2.0) - 0.5 * (k + 1) * math.log(8.0)
    x = 0.5 * math.sqrt(t)
    if x == 0.0:
        # x^nu K_nu(x) -> 2^{nu-1} Gamma(nu)
        return math.exp(log_c + math.log(2.0) + nu * math.log(4.0) + (nu - 1.0) * math.log(2.0) + math.lgamma(nu))
    return math.exp(log_c + math.log(2.0) + 0.5 * nu * math.log(4.0 * t)) * float(bessel_k(nu, x))


def laplace_marginal_generator(
    k: int = 2,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    method: str = "closed",
) -> DensityGenerator:
    """Generator of a standardized univariate projection of Laplace_k.

    For ``a'X`` with ``X ~ Laplace_k(mu, Sigma)`` the standardized variable
    ``W = a'(X - mu) / sqrt(a' Sigma a)`` is the normal scale mixture
    ``W | w ~ N(0, w^2)``. ``method="closed"`` evaluates the mixture integral
    through a Bessel function; ``method="quadrature"`` integrates over the
    mixing law numerically.
    """
    if method == "closed":
        def density(t: float) -> float:
            return _laplace_marginal_closed(t, k)
    elif method == "quadrature":
        @lru_cache(maxsize=4096)
        def density(t: float) -> float:
            def integrand(w):
                return math.exp(-0.5 * t / (w * w)) / (math.sqrt(2.0 * math.pi) * w) * _omega_density(w, k)

            return integrate_1d(integrand, 0.0, math.inf, spec)
    else:
        raise ValueError("method must be 'closed' or 'quadrature'")

    f0 = density(0.0)

    def g(t: float) -> float:
        return density(float(t)) / f0

    return DensityGenerator(g=g, c_g=f0, label=f"laplace{k}-marginal", meta={"k": k, "method": method})


def builtin_generators() -> list[DensityGenerator]:
    return [gaussian_generator(), laplace_marginal_generator(2, method="quadrature")]


def generator_normalization(gen: DensityGenerator, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``C_g * integral of g(r^2) over the real line``; 1 for a proper generator."""
    half = integrate_1d(lambda r: gen.g(r * r), 0.0, math.inf, spec)
    return 2.0 * gen.c_g * half


def scenario_sigma(m: int) -> np.ndarray:
    """The scatter matrices used in the simulation study (unit variances)."""
    off = {1: 0.95, 2: 0.85, 3: 0.75}[m]
    return np.array([[1.0, off], [off, 1.0]])
