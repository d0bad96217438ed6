"""Temporal covariance construction and shared probability primitives.

Every parameter path in the model carries a Gaussian-process prior with
covariance ``tau * f(kappa)``, where ``f`` is an exponential correlation
function of the distance between timepoints and ``kappa = 0`` denotes the
identity matrix (the independence limit).  This module owns that kernel
plus the multivariate-normal, inverse-gamma and half-Cauchy primitives the
sampler and generator are built from.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import NumericalError

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

# Diagonal jitter ladder tried when a Cholesky factorization fails.
JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)

DEFAULT_KAPPA_MAX = 1e3


@dataclass(frozen=True)
class GpHyper:
    """Variance multiplier and range (length-scale) of one GP prior block."""

    tau: float
    kappa: float

    def __post_init__(self):
        if not self.tau > 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.kappa < 0.0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of the inverse-gamma and half-Cauchy priors.

    ``(a, b)`` govern the GP variance multipliers, ``(a_sigma, b_sigma)``
    the error variance, and ``gamma`` the half-Cauchy scale of the range
    parameters.  The latent-position variances use ``(a_u, b_u)``, which
    default to ``(a, b)`` when left unset.
    """

    a: float = 2.0
    b: float = 1.0
    a_sigma: float = 2.0
    b_sigma: float = 1.0
    gamma: float = 5.0
    a_u: float | None = None
    b_u: float | None = None

    def __post_init__(self):
        for name in ("a", "b", "a_sigma", "b_sigma", "gamma"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"prior hyperparameter {name} must be positive")
        for name in ("a_u", "b_u"):
            val = getattr(self, name)
            if val is not None and not val > 0.0:
                raise ValueError(f"prior hyperparameter {name} must be positive")

    @property
    def au(self) -> float:
        return self.a if self.a_u is None else self.a_u

    @property
    def bu(self) -> float:
        return self.b if self.b_u is None else self.b_u


class CovarianceMatrix:
    """Symmetric positive-definite matrix with a cached lower Cholesky factor.

    Jitter is added to the diagonal only if the plain factorization fails,
    escalating through ``JITTER_LADDER``; each rescue is logged and the
    amount used is kept on the instance.  A factorization that fails even
    at the top of the ladder raises :class:`NumericalError`.
    """

    __slots__ = ("values", "chol", "jitter")

    def __init__(self, values):
        values = np.ascontiguousarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("covariance must be a square matrix")
        self.values = values
        self.chol, self.jitter = _factor(values)

    @classmethod
    def _from_factor(cls, values, chol, jitter):
        obj = object.__new__(cls)
        obj.values = values
        obj.chol = chol
        obj.jitter = jitter
        return obj

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def solve(self, x):
        """Return ``values^{-1} x`` via the cached factor."""
        return cho_solve((self.chol, True), x, check_finite=False)

    def inverse(self):
        return self.solve(np.eye(self.dim))

    def scaled(self, factor: float) -> "CovarianceMatrix":
        """Exact rescaling ``factor * values``, reusing the cached factor.

        The Cholesky factor scales by ``sqrt(factor)``, so rescaling never
        refactors and cannot fail, however extreme ``factor`` is (a
        variance multiplier of 1e-300 still yields a usable factor).
        """
        if not factor > 0.0:
            raise ValueError("scale factor must be positive")
        return CovarianceMatrix._from_factor(
            factor * self.values, math.sqrt(factor) * self.chol, factor * self.jitter
        )


def _factor(values):
    eye = None
    for jitter in JITTER_LADDER:
        if jitter:
            if eye is None:
                eye = np.eye(values.shape[0])
            attempt = values + jitter * eye
        else:
            attempt = values
        try:
            chol = np.linalg.cholesky(attempt)
        except np.linalg.LinAlgError:
            continue
        if jitter:
            log.warning("covariance factorization needed diagonal jitter %.0e", jitter)
        return chol, jitter
    raise NumericalError(
        f"Cholesky factorization failed even with diagonal jitter {JITTER_LADDER[-1]:.0e}"
    )


def _as_cov(cov) -> CovarianceMatrix:
    return cov if isinstance(cov, CovarianceMatrix) else CovarianceMatrix(cov)


def exp_covariance(kappa, n_times, squared=False, times=None) -> CovarianceMatrix:
    """Exponential correlation matrix ``exp(-|t - t'| / kappa)``.

    ``squared=True`` substitutes the squared distance, ``exp(-|t-t'|^2 /
    kappa)``.  ``kappa = 0`` returns the identity matrix (independence
    model).  ``times`` overrides the default unit spacing ``0..T-1`` for
    unequally spaced observation times.
    """
    if n_times < 1:
        raise ValueError("n_times must be >= 1")
    if kappa < 0.0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    if times is None:
        times = np.arange(n_times, dtype=float)
    else:
        times = np.asarray(times, dtype=float)
        if times.shape != (n_times,):
            raise ValueError("times must have length n_times")
    if kappa == 0.0:
        return CovarianceMatrix(np.eye(n_times))
    dist = np.abs(times[:, None] - times[None, :])
    if squared:
        dist = dist * dist
    return CovarianceMatrix(np.exp(-dist / kappa))


def scaled_covariance(hyper: GpHyper, n_times, squared=False, times=None) -> CovarianceMatrix:
    """Full prior covariance ``tau * f(kappa)`` with its Cholesky factor."""
    return exp_covariance(hyper.kappa, n_times, squared=squared, times=times).scaled(hyper.tau)


def mvn_logpdf(x, mean, cov) -> float:
    """Multivariate-normal log-density, exact via triangular solves."""
    cov = _as_cov(cov)
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if x.shape != (cov.dim,) or mean.shape != (cov.dim,):
        raise ValueError("x and mean must match the covariance dimension")
    w = solve_triangular(cov.chol, x - mean, lower=True, check_finite=False)
    return float(-0.5 * (cov.dim * LOG_2PI + cov.log_det + w @ w))


def mvn_logpdf_sum(vectors, cov) -> float:
    """Sum of centered MVN log-densities over the rows of ``vectors``."""
    cov = _as_cov(cov)
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    if vectors.shape[1] != cov.dim:
        raise ValueError("row length must match the covariance dimension")
    w = solve_triangular(cov.chol, vectors.T, lower=True, check_finite=False)
    k = vectors.shape[0]
    return float(-0.5 * (k * cov.dim * LOG_2PI + k * cov.log_det + np.sum(w * w)))


def mvn_sample(rng, mean, cov):
    """One draw ``mean + L z``; deterministic given the generator state."""
    cov = _as_cov(cov)
    z = rng.standard_normal(cov.dim)
    return np.asarray(mean, dtype=float) + cov.chol @ z


def sample_mvn_from_precision(rng, precision, rhs):
    """One draw from ``N(P^{-1} rhs, P^{-1})`` given the precision ``P``."""
    prec = _as_cov(precision)
    mean = prec.solve(np.asarray(rhs, dtype=float))
    z = rng.standard_normal(prec.dim)
    return mean + solve_triangular(prec.chol, z, lower=True, trans="T", check_finite=False)


def ig_logpdf(x, a, b) -> float:
    """Inverse-gamma log-density with shape ``a`` and scale ``b``."""
    if not (a > 0.0 and b > 0.0):
        raise ValueError("inverse-gamma parameters must be positive")
    if not x > 0.0:
        raise ValueError(f"inverse-gamma support is x > 0, got {x}")
    return a * math.log(b) - math.lgamma(a) - (a + 1.0) * math.log(x) - b / x


def ig_sample(rng, a, b, size=None):
    """Inverse-gamma draw(s) as the reciprocal of a gamma variate."""
    if not (a > 0.0 and b > 0.0):
        raise ValueError("inverse-gamma parameters must be positive")
    g = rng.gamma(a, 1.0 / b, size=size)
    return 1.0 / g


def half_cauchy_logpdf(x, gamma, upper=None) -> float:
    """Half-Cauchy log-density on x >= 0, optionally truncated to [0, upper]."""
    if not gamma > 0.0:
        raise ValueError("half-Cauchy scale must be positive")
    if x < 0.0:
        raise ValueError(f"half-Cauchy support is x >= 0, got {x}")
    base = math.log(2.0) - math.log(math.pi) - math.log(gamma) - math.log1p((x / gamma) ** 2)
    if upper is None:
        return base
    if x > upper:
        return -math.inf
    mass = (2.0 / math.pi) * math.atan(upper / gamma)
    return base - math.log(mass)


def half_cauchy_sample(rng, gamma, upper=None) -> float:
    """Half-Cauchy draw by inverse CDF, optionally truncated to [0, upper]."""
    if not gamma > 0.0:
        raise ValueError("half-Cauchy scale must be positive")
    hi = 1.0 if upper is None else (2.0 / math.pi) * math.atan(upper / gamma)
    u = rng.uniform(0.0, hi)
    return gamma * math.tan(0.5 * math.pi * u)
