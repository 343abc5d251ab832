"""Joint-distribution tests for the Gibbs samplers.

Two ways of sampling from the joint law of (parameters, data) must agree:
direct prior-then-likelihood simulation, and a chain that alternates one
Gibbs sweep on the parameters with re-simulation of the data. Disagreement
in the moments of any test function flags an incorrect updating block.
"""

from __future__ import annotations

from typing import Callable, Dict, Optional

import numpy as np

from sparsepanel.blocks import CommonState, HyperParams, RwmhAdaptState, UnitState
from sparsepanel.distributions import sample_inverse_gamma
from sparsepanel.m1 import M1Config, m1_sweep
from sparsepanel.panel import draw_unit_deviations
from sparsepanel.rng import as_generator


def batch_means_variance(x: np.ndarray, n_batches: int = 30) -> float:
    """Variance of the sample mean of a stationary series via batch means."""
    n = x.size
    b = n // n_batches
    means = x[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(means.var(ddof=1) / n_batches)


def z_statistics(marginal: Dict[str, np.ndarray], successive: Dict[str, np.ndarray]) -> Dict[str, float]:
    """Standardized mean differences between the two simulators, with a
    batch-means correction for the autocorrelated chain."""
    out = {}
    for name, mc in marginal.items():
        sc = successive[name]
        var = mc.var(ddof=1) / mc.size + batch_means_variance(sc)
        out[name] = float((sc.mean() - mc.mean()) / np.sqrt(var))
    return out


def _draw_m1_common(hyper: HyperParams, heteroskedastic: bool, gen) -> CommonState:
    q = {
        "alpha": float(gen.beta(hyper.a, hyper.b)),
        "rho": float(gen.beta(hyper.a, hyper.b)),
        "sigma": float(gen.beta(hyper.a, hyper.b)) if heteroskedastic else 0.0,
    }
    return CommonState(
        alpha=float(hyper.mu_alpha + np.sqrt(hyper.v_alpha) * gen.standard_normal()),
        rho=float(hyper.mu_rho + np.sqrt(hyper.v_rho) * gen.standard_normal()),
        sigma2=float(sample_inverse_gamma(hyper.sigma2, gen)),
        q=q,
        v_delta_alpha=float(sample_inverse_gamma(hyper.v_delta_alpha, gen)),
        v_delta_rho=float(sample_inverse_gamma(hyper.v_delta_rho, gen)),
        v_delta_sigma=float(sample_inverse_gamma(hyper.v_delta_sigma, gen))
        if heteroskedastic else None,
    )


def _simulate_m1_given(common: CommonState, units: UnitState, n: int, t: int, gen) -> np.ndarray:
    sigma_i = np.sqrt(common.sigma2 * units.delta_sigma)
    alpha_i = common.alpha + units.delta_alpha
    rho_i = common.rho + units.delta_rho
    y = np.zeros((n, t + 1))
    for step in range(1, t + 1):
        y[:, step] = alpha_i + rho_i * y[:, step - 1] + sigma_i * gen.standard_normal(n)
    return y


def _m1_test_functions(common: CommonState, units: UnitState, heteroskedastic: bool) -> Dict[str, float]:
    g = {
        "alpha": common.alpha,
        "alpha_sq": common.alpha**2,
        "rho": common.rho,
        "rho_sq": common.rho**2,
        "sigma2": common.sigma2,
        "log_sigma2": np.log(common.sigma2),
        "q_alpha": common.q["alpha"],
        "q_rho": common.q["rho"],
        "log_v_delta_alpha": np.log(common.v_delta_alpha),
        "log_v_delta_rho": np.log(common.v_delta_rho),
        "mean_z_alpha": units.z["alpha"].mean(),
        "mean_z_rho": units.z["rho"].mean(),
        "mean_delta_alpha": units.delta_alpha.mean(),
        "mean_delta_alpha_sq": (units.delta_alpha**2).mean(),
        "mean_delta_rho_sq": (units.delta_rho**2).mean(),
        "alpha_times_rho": common.alpha * common.rho,
    }
    if heteroskedastic:
        g["q_sigma"] = common.q["sigma"]
        g["log_v_delta_sigma"] = np.log(common.v_delta_sigma)
        g["mean_z_sigma"] = units.z["sigma"].mean()
        g["mean_log_delta_sigma"] = np.log(units.delta_sigma).mean()
    return g


def run_geweke_m1(variant: str, n: int, t: int, n_iter: int, rng,
                  thin: int = 1) -> Dict[str, Dict[str, np.ndarray]]:
    """Collect test-function draws from both simulators for the panel model."""
    config = M1Config(variant=variant, n_draws=2, burn_in=0)
    hyper = config.hyper
    hetsk = config.heteroskedastic
    gen_mc = as_generator(rng.substream(0) if hasattr(rng, "substream") else rng)
    gen_sc = as_generator(rng.substream(1) if hasattr(rng, "substream") else rng)

    blocks = ("alpha", "rho", "sigma") if hetsk else ("alpha", "rho")

    def fill_units(units):
        if units.delta_sigma is None:
            units.delta_sigma = np.ones(n)
            units.z["sigma"] = np.zeros(n, dtype=np.int64)
        return units

    marginal = {}
    for _ in range(n_iter):
        common = _draw_m1_common(hyper, hetsk, gen_mc)
        units = fill_units(draw_unit_deviations(common, n, gen_mc, blocks=blocks))
        for name, val in _m1_test_functions(common, units, hetsk).items():
            marginal.setdefault(name, []).append(val)

    successive = {}
    common = _draw_m1_common(hyper, hetsk, gen_sc)
    units = fill_units(draw_unit_deviations(common, n, gen_sc, blocks=blocks))
    adapt = RwmhAdaptState()
    y0 = np.zeros(n)
    for j in range(n_iter * thin):
        y = _simulate_m1_given(common, units, n, t, gen_sc)
        m1_sweep(y0, y[:, 1:], common, units, config, adapt, gen_sc, adapt_enabled=False)
        if j % thin:
            continue
        for name, val in _m1_test_functions(common, units, hetsk).items():
            successive.setdefault(name, []).append(val)

    return {
        "marginal": {k: np.array(v) for k, v in marginal.items()},
        "successive": {k: np.array(v) for k, v in successive.items()},
    }

def _draw_m2_common(hyper: HyperParams, k: int, t: int, config, gen) -> CommonState:
    from sparsepanel.distributions import sample_inverse_wishart, sample_mv_normal

    hetero = config.coef_heterogeneity
    q_coef = {None: None, False: 0.0, True: 1.0}[hetero]
    q = {
        "alpha": float(gen.beta(hyper.a, hyper.b)) if q_coef is None else q_coef,
        "rho": float(gen.beta(hyper.a, hyper.b)) if q_coef is None else q_coef,
        "sigma_u": float(gen.beta(hyper.a, hyper.b)) if config.heteroskedastic else 0.0,
        "sigma_eps": float(gen.beta(hyper.a, hyper.b)) if config.heteroskedastic else 0.0,
    }
    prior_cov = np.atleast_2d(np.asarray(hyper.v_alpha, dtype=float))
    mu = np.broadcast_to(np.asarray(hyper.mu_alpha, dtype=float), (k,))
    return CommonState(
        alpha=sample_mv_normal(mu, prior_cov, gen),
        rho=float(hyper.mu_rho + np.sqrt(hyper.v_rho) * gen.standard_normal()),
        q=q,
        v_delta_alpha=sample_inverse_wishart(hyper.v_delta_alpha_iw, gen),
        v_delta_rho=float(sample_inverse_gamma(hyper.v_delta_rho, gen)),
        sigma2_u=sample_inverse_gamma(hyper.sigma2_u, gen, size=t),
        sigma2_eps=sample_inverse_gamma(hyper.sigma2_eps, gen, size=t),
        v_delta_sigma_u=float(sample_inverse_gamma(hyper.v_delta_sigma_u, gen))
        if config.heteroskedastic else None,
        v_delta_sigma_eps=float(sample_inverse_gamma(hyper.v_delta_sigma_eps, gen))
        if config.heteroskedastic else None,
        mu_s0=float(hyper.mu_s0_mean + np.sqrt(hyper.mu_s0_var) * gen.standard_normal()),
        v_s0=float(sample_inverse_gamma(hyper.v_s0, gen)),
    )


def _draw_m2_units(common: CommonState, n: int, t: int, k: int, gen) -> UnitState:
    from sparsepanel.distributions import sample_mv_normal
    from sparsepanel.panel import ig_from_v

    z = {}
    z["alpha"] = (gen.random(n) < common.q["alpha"]).astype(np.int64)
    z["rho"] = (gen.random(n) < common.q["rho"]).astype(np.int64)
    delta_alpha = z["alpha"][:, None] * sample_mv_normal(
        np.zeros(k), np.atleast_2d(common.v_delta_alpha), gen, size=n
    )
    delta_rho = z["rho"] * np.sqrt(common.v_delta_rho) * gen.standard_normal(n)
    deltas = {}
    for label, v in (("sigma_u", common.v_delta_sigma_u), ("sigma_eps", common.v_delta_sigma_eps)):
        if v is None:
            z[label] = np.zeros(n, dtype=np.int64)
            deltas[label] = np.ones(n)
        else:
            z[label] = (gen.random(n) < common.q[label]).astype(np.int64)
            draws = sample_inverse_gamma(ig_from_v(v), gen, size=n)
            deltas[label] = np.where(z[label] == 1, draws, 1.0)
    s = np.empty((n, t + 1))
    s[:, 0] = common.mu_s0 + np.sqrt(common.v_s0) * gen.standard_normal(n)
    phi = common.rho + delta_rho
    for step in range(1, t + 1):
        sd = np.sqrt(common.sigma2_eps[step - 1] * deltas["sigma_eps"])
        s[:, step] = phi * s[:, step - 1] + sd * gen.standard_normal(n)
    return UnitState(z=z, delta_alpha=delta_alpha, delta_rho=delta_rho,
                     delta_sigma_u=deltas["sigma_u"], delta_sigma_eps=deltas["sigma_eps"], s=s)


def _simulate_m2_given(common: CommonState, units: UnitState, x: np.ndarray, gen) -> np.ndarray:
    n, t, k = x.shape
    sd_u = np.sqrt(common.sigma2_u[None, :] * units.delta_sigma_u[:, None])
    fitted = np.einsum("itk,ik->it", x, common.alpha[None, :] + units.delta_alpha)
    return fitted + units.s[:, 1:] + sd_u * gen.standard_normal((n, t))


def _resimulate_m2_states(common: CommonState, units: UnitState, gen) -> None:
    """Redraw the latent states from their prior given the unit parameters, so
    the successive-conditional chain refreshes the full joint (params, s, y)."""
    n, t_plus = units.s.shape
    units.s[:, 0] = common.mu_s0 + np.sqrt(common.v_s0) * gen.standard_normal(n)
    phi = common.rho + units.delta_rho
    for step in range(1, t_plus):
        sd = np.sqrt(common.sigma2_eps[step - 1] * units.delta_sigma_eps)
        units.s[:, step] = phi * units.s[:, step - 1] + sd * gen.standard_normal(n)


def _m2_test_functions(common: CommonState, units: UnitState, config) -> Dict[str, float]:
    g = {
        "rho": common.rho,
        "rho_sq": common.rho**2,
        "mu_s0": common.mu_s0,
        "log_v_s0": np.log(common.v_s0),
        "log_v_delta_rho": np.log(common.v_delta_rho),
        "mean_z_rho": units.z["rho"].mean(),
        "mean_delta_rho_sq": (units.delta_rho**2).mean(),
        "mean_s0": units.s[:, 0].mean(),
        "mean_s_last": units.s[:, -1].mean(),
        "mean_s_sq": (units.s**2).mean(),
        "mean_log_sigma2_u": np.log(common.sigma2_u).mean(),
        "mean_log_sigma2_eps": np.log(common.sigma2_eps).mean(),
    }
    for j, a in enumerate(np.atleast_1d(common.alpha)):
        g[f"alpha_{j}"] = a
        g[f"alpha_{j}_sq"] = a**2
    vda = np.atleast_2d(common.v_delta_alpha)
    for j in range(vda.shape[0]):
        g[f"log_v_delta_alpha_{j}{j}"] = np.log(vda[j, j])
    g["mean_z_alpha"] = units.z["alpha"].mean()
    g["mean_delta_alpha_sq"] = (units.delta_alpha**2).mean()
    if config.coef_heterogeneity is None:
        g["q_alpha"] = common.q["alpha"]
        g["q_rho"] = common.q["rho"]
    if config.heteroskedastic:
        g["q_sigma_u"] = common.q["sigma_u"]
        g["q_sigma_eps"] = common.q["sigma_eps"]
        g["log_v_delta_sigma_u"] = np.log(common.v_delta_sigma_u)
        g["log_v_delta_sigma_eps"] = np.log(common.v_delta_sigma_eps)
        g["mean_z_sigma_u"] = units.z["sigma_u"].mean()
        g["mean_z_sigma_eps"] = units.z["sigma_eps"].mean()
        g["mean_log_delta_sigma_u"] = np.log(units.delta_sigma_u).mean()
        g["mean_log_delta_sigma_eps"] = np.log(units.delta_sigma_eps).mean()
    return g


def run_geweke_m2(variant: str, n: int, t: int, k: int, n_iter: int, rng,
                  thin: int = 1) -> Dict[str, Dict[str, np.ndarray]]:
    """Collect test-function draws from both simulators for the state-space model."""
    from sparsepanel.blocks import HyperParams as _HP
    from sparsepanel.m2 import M2Config, m2_sweep

    config = M2Config(variant=variant, n_draws=2, burn_in=0, hyper=_HP.m2_defaults(k=k))
    hyper = config.hyper
    gen_mc = as_generator(rng.substream(0) if hasattr(rng, "substream") else rng)
    gen_sc = as_generator(rng.substream(1) if hasattr(rng, "substream") else rng)
    x = np.ones((n, t, k))
    if k > 1:
        x[:, :, 1] = np.arange(1, t + 1)[None, :] / 10.0
    mask = np.ones((n, t), dtype=bool)

    marginal = {}
    for _ in range(n_iter):
        common = _draw_m2_common(hyper, k, t, config, gen_mc)
        units = _draw_m2_units(common, n, t, k, gen_mc)
        for name, val in _m2_test_functions(common, units, config).items():
            marginal.setdefault(name, []).append(val)

    successive = {}
    common = _draw_m2_common(hyper, k, t, config, gen_sc)
    units = _draw_m2_units(common, n, t, k, gen_sc)
    from sparsepanel.blocks import RwmhAdaptState as _RA

    adapts = {"sigma_u": _RA(), "sigma_eps": _RA()}
    for j in range(n_iter * thin):
        _resimulate_m2_states(common, units, gen_sc)
        y = _simulate_m2_given(common, units, x, gen_sc)
        m2_sweep(y, x, mask, common, units, config, adapts, gen_sc, adapt_enabled=False)
        if j % thin:
            continue
        for name, val in _m2_test_functions(common, units, config).items():
            successive.setdefault(name, []).append(val)

    return {
        "marginal": {k_: np.array(v) for k_, v in marginal.items()},
        "successive": {k_: np.array(v) for k_, v in successive.items()},
    }
