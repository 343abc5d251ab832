"""Samplers and log densities for the distribution families used by the Gibbs blocks.

Inverse-Gamma specs follow the (nu, tau) convention: IG(nu/2, tau/2) with
density proportional to x^-(nu/2+1) exp(-tau/(2x)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from sparsepanel.rng import as_generator


class ParameterDomainError(ValueError):
    """A distribution parameter is outside its valid domain."""


class MatrixDomainError(ValueError):
    """A matrix argument is not symmetric / positive definite as required."""


@dataclass(frozen=True)
class InverseGammaSpec:
    """IG(nu/2, tau/2). Mean tau/(nu-2) for nu > 2; variance exists for nu > 4."""

    nu: float
    tau: float

    def __post_init__(self):
        if not (self.nu > 0 and self.tau > 0):
            raise ParameterDomainError(f"inverse-gamma requires nu, tau > 0, got ({self.nu}, {self.tau})")

    @property
    def mean(self) -> float:
        if self.nu <= 2:
            raise ParameterDomainError(f"IG mean undefined for nu={self.nu} <= 2")
        return self.tau / (self.nu - 2.0)

    @property
    def variance(self) -> float:
        if self.nu <= 4:
            raise ParameterDomainError(f"IG variance undefined for nu={self.nu} <= 4")
        a = self.nu / 2.0
        b = self.tau / 2.0
        return b * b / ((a - 1.0) ** 2 * (a - 2.0))


@dataclass(frozen=True)
class InverseWishartSpec:
    dof: float
    scale: np.ndarray

    def __post_init__(self):
        scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        object.__setattr__(self, "scale", scale)
        d = scale.shape[0]
        if scale.shape != (d, d) or not np.allclose(scale, scale.T):
            raise MatrixDomainError("inverse-Wishart scale must be a symmetric matrix")
        try:
            np.linalg.cholesky(scale)
        except np.linalg.LinAlgError as exc:
            raise MatrixDomainError("inverse-Wishart scale must be positive definite") from exc
        if not self.dof > d - 1:
            raise ParameterDomainError(f"inverse-Wishart dof must exceed dim-1={d - 1}, got {self.dof}")

    @property
    def dim(self) -> int:
        return self.scale.shape[0]

    @property
    def mean(self) -> np.ndarray:
        if self.dof <= self.dim + 1:
            raise ParameterDomainError("IW mean requires dof > dim + 1")
        return self.scale / (self.dof - self.dim - 1.0)


@dataclass(frozen=True)
class TruncatedNormalSpec:
    """Normal(center, scale^2) truncated to (lower_bound, inf)."""

    center: float
    lower_bound: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ParameterDomainError(f"truncated normal requires scale > 0, got {self.scale}")


def ig_spec_from_variance(v: float) -> InverseGammaSpec:
    """Spec of the unit-mean inverse gamma with variance v: nu = 2/v + 4, tau = 2/v + 2."""
    if not v > 0:
        raise ParameterDomainError(f"variance must be positive, got {v}")
    return InverseGammaSpec(nu=2.0 / v + 4.0, tau=2.0 / v + 2.0)


def sample_inverse_gamma(spec: InverseGammaSpec, rng, size=None):
    """Draw from IG(nu/2, tau/2) via the reciprocal of a Gamma draw."""
    gen = as_generator(rng)
    g = gen.gamma(shape=spec.nu / 2.0, scale=2.0 / spec.tau, size=size)
    return 1.0 / g


def sample_beta(a: float, b: float, rng, size=None):
    if not (a > 0 and b > 0):
        raise ParameterDomainError(f"beta requires a, b > 0, got ({a}, {b})")
    gen = as_generator(rng)
    # Two-Gamma construction keeps the draw path uniform across backends.
    x = gen.gamma(shape=a, scale=1.0, size=size)
    y = gen.gamma(shape=b, scale=1.0, size=size)
    return x / (x + y)


def sample_bernoulli(p, rng, size=None):
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ParameterDomainError("bernoulli probability must lie in [0, 1]")
    gen = as_generator(rng)
    if size is None and p.ndim > 0:
        size = p.shape
    u = gen.random(size=size)
    draw = (u < p).astype(np.int64)
    return draw if size is not None else int(draw)


def _chol_with_jitter(cov: np.ndarray) -> np.ndarray:
    """Cholesky factor, adding a tiny diagonal jitter up to 3 times on failure."""
    cov = np.asarray(cov, dtype=float)
    if not np.allclose(cov, cov.T, rtol=1e-8, atol=1e-12):
        raise MatrixDomainError("covariance must be symmetric")
    jitter = 1e-10 * np.trace(cov) / cov.shape[0]
    for attempt in range(4):
        try:
            bump = 0.0 if attempt == 0 else jitter * 10 ** (attempt - 1)
            return np.linalg.cholesky(cov + bump * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise MatrixDomainError("covariance not positive definite even after jitter")


def sample_mv_normal(mean, cov, rng, size=None):
    """Multivariate normal draw; degenerate (all-zero) covariance returns the mean."""
    gen = as_generator(rng)
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (mean.size, mean.size):
        raise MatrixDomainError(f"cov shape {cov.shape} does not match mean length {mean.size}")
    if not np.any(cov):
        if size is None:
            return mean.copy()
        return np.broadcast_to(mean, (size, mean.size)).copy()
    chol = _chol_with_jitter(cov)
    shape = (mean.size,) if size is None else (size, mean.size)
    z = gen.standard_normal(shape)
    return mean + z @ chol.T


def sample_inverse_wishart(spec: InverseWishartSpec, rng, size=None):
    """Inverse-Wishart draw (Bartlett decomposition, via scipy); SPD by construction."""
    gen = as_generator(rng)
    draw = stats.invwishart.rvs(df=spec.dof, scale=spec.scale, size=1 if size is None else size, random_state=gen)
    draw = np.atleast_2d(np.asarray(draw, dtype=float))
    if size is None:
        return draw.reshape(spec.dim, spec.dim)
    return draw.reshape(size, spec.dim, spec.dim)


def sample_truncated_normal(spec: TruncatedNormalSpec, rng, size=None):
    """Inverse-CDF draw from N(center, scale^2) restricted to (lower_bound, inf)."""
    gen = as_generator(rng)
    a = (spec.lower_bound - spec.center) / spec.scale
    lo = special.ndtr(a)
    u = gen.random(size=size)
    # Map U(0,1) into the surviving CDF mass; clip guards the open support.
    p = np.clip(lo + u * (1.0 - lo), np.nextafter(lo, 1.0), np.nextafter(1.0, 0.0))
    draw = spec.center + spec.scale * special.ndtri(p)
    return np.maximum(draw, np.nextafter(spec.lower_bound, np.inf))


def log_density(family: str, params, x) -> float:
    """Natural-log density; returns -inf outside the support."""
    x = float(x) if np.ndim(x) == 0 else np.asarray(x, dtype=float)
    if family == "normal":
        mu, var = params
        if var <= 0:
            raise ParameterDomainError("normal variance must be positive")
        return float(-0.5 * np.log(2.0 * np.pi * var) - 0.5 * (x - mu) ** 2 / var)
    if family == "inverse_gamma":
        spec = params if isinstance(params, InverseGammaSpec) else InverseGammaSpec(*params)
        if x <= 0:
            return -np.inf
        a, b = spec.nu / 2.0, spec.tau / 2.0
        return float(a * np.log(b) - special.gammaln(a) - (a + 1.0) * np.log(x) - b / x)
    if family == "beta":
        a, b = params
        if not (a > 0 and b > 0):
            raise ParameterDomainError("beta requires a, b > 0")
        if not 0.0 < x < 1.0:
            return -np.inf
        return float((a - 1) * np.log(x) + (b - 1) * np.log1p(-x) - special.betaln(a, b))
    if family == "truncated_normal":
        spec = params if isinstance(params, TruncatedNormalSpec) else TruncatedNormalSpec(*params)
        if x <= spec.lower_bound:
            return -np.inf
        z = (x - spec.center) / spec.scale
        a = (spec.lower_bound - spec.center) / spec.scale
        log_tail = special.log_ndtr(-a)
        return float(-0.5 * np.log(2.0 * np.pi) - np.log(spec.scale) - 0.5 * z * z - log_tail)
    if family == "inverse_wishart":
        spec = params if isinstance(params, InverseWishartSpec) else InverseWishartSpec(*params)
        x = np.atleast_2d(x)
        try:
            return float(stats.invwishart.logpdf(x, df=spec.dof, scale=spec.scale))
        except (np.linalg.LinAlgError, ValueError):
            return -np.inf
    raise ParameterDomainError(f"unknown distribution family {family!r}")
