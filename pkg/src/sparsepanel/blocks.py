"""Conditional-posterior updates shared by the panel samplers.

Each update draws one block of a Gibbs sweep from its exact conditional.
Indicator/deviation blocks are vectorized across units; all posterior odds
are computed in log space so large T cannot overflow the Gamma-function
ratios.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import special

from sparsepanel.distributions import (
    InverseGammaSpec,
    InverseWishartSpec,
    TruncatedNormalSpec,
    sample_beta,
    sample_inverse_gamma,
    sample_inverse_wishart,
    sample_mv_normal,
    sample_truncated_normal,
)
from sparsepanel.rng import as_generator


@dataclass
class HyperParams:
    """Prior hyperparameters for one model variant."""

    v_alpha: Union[float, np.ndarray] = 1.0
    mu_alpha: Union[float, np.ndarray] = 0.0
    v_rho: float = 0.25
    mu_rho: float = 0.0
    a: float = 1.0
    b: float = 1.0
    v_delta_rho: InverseGammaSpec = field(default_factory=lambda: InverseGammaSpec(6.0, 2.0))
    # Regression model: scalar noise variance, scalar intercept-deviation variance.
    sigma2: Optional[InverseGammaSpec] = None
    v_delta_alpha: Optional[InverseGammaSpec] = None
    v_delta_sigma: Optional[InverseGammaSpec] = None
    # State-space model: per-period variances, matrix-valued intercept deviations.
    sigma2_u: Optional[InverseGammaSpec] = None
    sigma2_eps: Optional[InverseGammaSpec] = None
    v_delta_alpha_iw: Optional[InverseWishartSpec] = None
    v_delta_sigma_u: Optional[InverseGammaSpec] = None
    v_delta_sigma_eps: Optional[InverseGammaSpec] = None
    mu_s0_mean: float = 0.0
    mu_s0_var: float = 0.05
    v_s0: Optional[InverseGammaSpec] = None

    @classmethod
    def m1_defaults(cls) -> "HyperParams":
        return cls(
            v_alpha=1.0,
            v_rho=0.25,
            sigma2=InverseGammaSpec(12.0, 10.0),
            a=1.0,
            b=1.0,
            v_delta_alpha=InverseGammaSpec(6.0, 4.0),
            v_delta_rho=InverseGammaSpec(6.0, 2.0),
            v_delta_sigma=InverseGammaSpec(12.0, 10.0),
        )

    @classmethod
    def m2_defaults(cls, k: int = 2) -> "HyperParams":
        scale = np.diag([0.5, 0.1]) if k == 2 else 0.5 * np.eye(k)
        return cls(
            v_alpha=np.eye(k),
            mu_alpha=np.zeros(k),
            v_rho=1.0,
            mu_rho=0.8,
            sigma2_u=InverseGammaSpec(6.0, 0.2),
            sigma2_eps=InverseGammaSpec(6.0, 0.2),
            a=1.0,
            b=1.0,
            v_delta_alpha_iw=InverseWishartSpec(dof=k + 3.05, scale=scale),
            v_delta_rho=InverseGammaSpec(16.5, 3.625),
            v_delta_sigma_u=InverseGammaSpec(12.0, 10.0),
            v_delta_sigma_eps=InverseGammaSpec(12.0, 10.0),
            mu_s0_mean=0.0,
            mu_s0_var=0.05,
            v_s0=InverseGammaSpec(6.0, 0.2),
        )


@dataclass
class CommonState:
    """Current draw of the parameters shared across units."""

    alpha: Union[float, np.ndarray]
    rho: float
    q: dict
    v_delta_alpha: Union[float, np.ndarray]
    v_delta_rho: float
    sigma2: Optional[float] = None
    v_delta_sigma: Optional[float] = None
    sigma2_u: Optional[np.ndarray] = None
    sigma2_eps: Optional[np.ndarray] = None
    v_delta_sigma_u: Optional[float] = None
    v_delta_sigma_eps: Optional[float] = None
    mu_s0: Optional[float] = None
    v_s0: Optional[float] = None


@dataclass
class UnitState:
    """Current draw of the per-unit indicators, deviations, and states."""

    z: dict
    delta_alpha: np.ndarray
    delta_rho: np.ndarray
    delta_sigma: Optional[np.ndarray] = None
    delta_sigma_u: Optional[np.ndarray] = None
    delta_sigma_eps: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None  # states, shape (N, T+1) with column 0 = s_0


@dataclass
class RwmhAdaptState:
    """Step-size adaptation bookkeeping for the random-walk variance update."""

    log_step: float = 0.0
    iteration: int = 0
    target_accept: float = 0.44
    exponent_p: float = 0.55
    cap: float = 10.0
    accepted: int = 0
    proposed: int = 0

    @property
    def step(self) -> float:
        return float(np.exp(self.log_step))

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")


def update_common_regression(prior_mean, prior_cov, xtx, xty, rng):
    """Normal draw for a regression-coefficient block.

    `xtx` and `xty` are precision-weighted data sums (sum of x x' / sigma^2 and
    x y / sigma^2 over all observations); with no data both are zero and the
    draw comes from the prior.
    """
    prior_mean = np.atleast_1d(np.asarray(prior_mean, dtype=float))
    prior_cov = np.atleast_2d(np.asarray(prior_cov, dtype=float))
    xtx = np.atleast_2d(np.asarray(xtx, dtype=float))
    xty = np.atleast_1d(np.asarray(xty, dtype=float))
    prior_prec = np.linalg.inv(prior_cov)
    post_cov = np.linalg.inv(prior_prec + xtx)
    post_cov = 0.5 * (post_cov + post_cov.T)
    post_mean = post_cov @ (prior_prec @ prior_mean + xty)
    draw = sample_mv_normal(post_mean, post_cov, rng)
    return draw, post_mean, post_cov


def update_q(z, a, b, rng) -> float:
    z = np.asarray(z)
    psi = int(z.sum())
    return float(sample_beta(a + psi, b + z.size - psi, rng))


def update_v_delta_normal(z, deltas, spec: InverseGammaSpec, rng) -> float:
    """Variance of the Normal slab given the active deviations."""
    z = np.asarray(z, dtype=bool)
    deltas = np.asarray(deltas, dtype=float)
    post = InverseGammaSpec(nu=spec.nu + z.sum(), tau=spec.tau + float(np.sum(deltas[z] ** 2)))
    return float(sample_inverse_gamma(post, rng))


def update_v_delta_alpha_iw(z, deltas, spec: InverseWishartSpec, rng) -> np.ndarray:
    """Covariance of a vector-valued Normal slab given the active deviation vectors."""
    z = np.asarray(z, dtype=bool)
    deltas = np.atleast_2d(np.asarray(deltas, dtype=float))
    scatter = deltas[z].T @ deltas[z] if z.any() else np.zeros((spec.dim, spec.dim))
    post = InverseWishartSpec(dof=spec.dof + int(z.sum()), scale=spec.scale + scatter)
    return sample_inverse_wishart(post, rng)


def _log_odds_prior(q: float) -> float:
    if q <= 0.0:
        return -np.inf
    if q >= 1.0:
        return np.inf
    return float(np.log(q) - np.log1p(-q))


def _draw_indicators(log_k, rng):
    """Bernoulli draws from log posterior odds, robust at +-inf."""
    gen = as_generator(rng)
    p = special.expit(log_k)
    return (gen.random(size=np.shape(log_k)) < p).astype(np.int64)


def update_indicator_and_deviation_normal(q, v_delta, precision, score, rng):
    """Spike/slab indicator and Normal deviation for each unit.

    `precision[i]` is the data precision sum(x^2/sigma^2) and `score[i]` the
    matching sum(x * resid / sigma^2), both computed with the unit's own
    residuals holding every other parameter fixed.
    """
    precision = np.asarray(precision, dtype=float)
    score = np.asarray(score, dtype=float)
    v_bar = 1.0 / (1.0 / v_delta + precision)
    delta_bar = v_bar * score
    log_k = _log_odds_prior(q) - 0.5 * (np.log(v_delta) - np.log(v_bar)) + delta_bar**2 / (2.0 * v_bar)
    z = _draw_indicators(log_k, rng)
    gen = as_generator(rng)
    delta = np.where(z == 1, delta_bar + np.sqrt(v_bar) * gen.standard_normal(precision.shape), 0.0)
    return z, delta


def update_indicator_and_deviation_ig(q, v_delta_sigma, weighted_ssr, n_obs, rng):
    """Spike/slab indicator and inverse-gamma variance deviation for each unit.

    `weighted_ssr[i]` is sum over t of resid^2 / (period variance) evaluated at
    the spike value delta = 1; `n_obs[i]` is the unit's observation count.
    """
    weighted_ssr = np.asarray(weighted_ssr, dtype=float)
    n_obs = np.asarray(n_obs, dtype=float)
    inv_v = 1.0 / v_delta_sigma
    nu_bar = 2.0 * inv_v + 4.0 + n_obs
    tau_bar = 2.0 * inv_v + 2.0 + weighted_ssr
    log_k = (
        _log_odds_prior(q)
        + special.gammaln(nu_bar / 2.0)
        - special.gammaln(inv_v + 2.0)
        + (inv_v + 2.0) * np.log(inv_v + 1.0)
        - (nu_bar / 2.0) * np.log(tau_bar / 2.0)
        + weighted_ssr / 2.0
    )
    z = _draw_indicators(log_k, rng)
    gen = as_generator(rng)
    # IG(nu_bar/2, tau_bar/2) via reciprocal Gamma, drawn for every unit then masked.
    g = gen.gamma(shape=nu_bar / 2.0, scale=2.0 / tau_bar)
    delta_sigma = np.where(z == 1, 1.0 / g, 1.0)
    return z, delta_sigma


def log_posterior_slab_variance(omega: float, active_deltas, prior: InverseGammaSpec) -> float:
    """Unnormalized log conditional of the IG-slab variance hyperparameter."""
    if omega <= 0.0:
        return -np.inf
    active_deltas = np.asarray(active_deltas, dtype=float)
    psi = active_deltas.size
    inv = 1.0 / omega
    value = (
        psi * (inv + 2.0) * np.log(inv + 1.0)
        - psi * special.gammaln(inv + 2.0)
        - (prior.nu / 2.0 + 1.0) * np.log(omega)
        - inv * (float(np.sum(np.log(active_deltas) + 1.0 / active_deltas)) + prior.tau / 2.0)
    )
    return float(value)


def update_v_delta_sigma_rwmh(
    omega: float,
    active_deltas,
    prior: InverseGammaSpec,
    adapt: RwmhAdaptState,
    rng,
    adapt_enabled: bool = True,
):
    """One Metropolis-Hastings step on the IG-slab variance, positive-support proposal.

    The proposal is a zero-truncated Normal centered at the current value; the
    acceptance ratio carries the truncation correction ln Phi(prop/c) - ln Phi(cur/c).
    When adaptation is enabled, the log step size moves toward the target
    acceptance rate with a decaying gain, clipped at +-cap.
    """
    gen = as_generator(rng)
    c = adapt.step
    proposal = float(sample_truncated_normal(TruncatedNormalSpec(center=omega, lower_bound=0.0, scale=c), gen))
    lp_prop = log_posterior_slab_variance(proposal, active_deltas, prior)
    lp_cur = log_posterior_slab_variance(omega, active_deltas, prior)
    if np.isfinite(lp_prop):
        log_accept = (lp_prop - lp_cur) - (special.log_ndtr(proposal / c) - special.log_ndtr(omega / c))
        accept_prob = float(min(1.0, np.exp(min(log_accept, 0.0))))
    else:
        accept_prob = 0.0
    accepted = gen.random() < accept_prob
    new_omega = proposal if accepted else omega
    adapt.iteration += 1
    adapt.proposed += 1
    adapt.accepted += int(accepted)
    if adapt_enabled:
        raw = adapt.log_step + adapt.iteration ** (-adapt.exponent_p) * (accept_prob - adapt.target_accept)
        adapt.log_step = float(np.sign(raw) * min(abs(raw), adapt.cap))
    return float(new_omega), adapt
