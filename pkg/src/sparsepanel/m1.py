"""Gibbs sampler for the dynamic panel regression model.

y_it = alpha + delta_alpha_i + (rho + delta_rho_i) y_{i,t-1}
       + sigma * sqrt(delta_sigma_i) * u_it,   y_i0 given (zero in simulations).

Variants: spike-and-slab with common noise variance ("ss_homosk"), with
unit-specific variance discrepancies ("ss_hetsk"), all-common coefficients
("homogeneous"), and every-unit-deviates versions ("full_hetero_homosk",
"full_hetero_hetsk").
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from sparsepanel.blocks import (
    CommonState,
    HyperParams,
    RwmhAdaptState,
    UnitState,
    update_common_regression,
    update_indicator_and_deviation_ig,
    update_indicator_and_deviation_normal,
    update_q,
    update_v_delta_normal,
    update_v_delta_sigma_rwmh,
)
from sparsepanel.chainout import ChainOutput
from sparsepanel.distributions import InverseGammaSpec, sample_inverse_gamma
from sparsepanel.panel import PanelData
from sparsepanel.rng import as_generator

VARIANTS = ("ss_homosk", "ss_hetsk", "homogeneous", "full_hetero_homosk", "full_hetero_hetsk")


class ConfigurationError(ValueError):
    pass


@dataclass
class M1Config:
    variant: str = "ss_homosk"
    n_draws: int = 5000
    burn_in: int = 2500
    thin: int = 1
    hyper: HyperParams = field(default_factory=HyperParams.m1_defaults)
    store_unit_draws: bool = True
    adapt_after_burnin: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}")
        if not 0 <= self.burn_in < self.n_draws:
            raise ConfigurationError("burn_in must satisfy 0 <= burn_in < n_draws")
        if self.thin < 1:
            raise ConfigurationError("thin must be >= 1")
        if self.heteroskedastic and self.hyper.v_delta_sigma is None:
            raise ConfigurationError(f"variant {self.variant!r} needs a v_delta_sigma prior")
        if self.hyper.sigma2 is None or self.hyper.v_delta_alpha is None:
            raise ConfigurationError("hyper must carry sigma2 and v_delta_alpha priors")

    @property
    def heteroskedastic(self) -> bool:
        return self.variant in ("ss_hetsk", "full_hetero_hetsk")


def init_m1_state(n: int, config: M1Config):
    """Common parameters at prior means; every unit starts at the spike."""
    hyper = config.hyper
    q0 = {"homogeneous": 0.0, "full_hetero_homosk": 1.0, "full_hetero_hetsk": 1.0}.get(
        config.variant, hyper.a / (hyper.a + hyper.b)
    )
    common = CommonState(
        alpha=float(hyper.mu_alpha),
        rho=float(hyper.mu_rho),
        sigma2=hyper.sigma2.mean,
        q={"alpha": q0, "rho": q0, "sigma": q0 if config.heteroskedastic else 0.0},
        v_delta_alpha=hyper.v_delta_alpha.mean,
        v_delta_rho=hyper.v_delta_rho.mean,
        v_delta_sigma=hyper.v_delta_sigma.mean if config.heteroskedastic else None,
    )
    z_init = 1 if config.variant.startswith("full_hetero") else 0
    units = UnitState(
        z={
            "alpha": np.full(n, z_init, dtype=np.int64),
            "rho": np.full(n, z_init, dtype=np.int64),
            "sigma": np.full(n, z_init if config.heteroskedastic else 0, dtype=np.int64),
        },
        delta_alpha=np.zeros(n),
        delta_rho=np.zeros(n),
        delta_sigma=np.ones(n),
    )
    return common, units


def _draw_joint_deviations(resid0, L, w, v_alpha, v_rho, gen):
    """Vectorized bivariate Normal draw of (delta_alpha_i, delta_rho_i) for
    the every-unit-deviates variants. `resid0` is y minus the common part."""
    n, t = resid0.shape
    sum_l = L.sum(axis=1)
    sum_l2 = (L * L).sum(axis=1)
    a = 1.0 / v_alpha + w * t
    b = w * sum_l
    c = 1.0 / v_rho + w * sum_l2
    det = a * c - b * b
    s_a = w * resid0.sum(axis=1)
    s_r = w * (L * resid0).sum(axis=1)
    mean_a = (c * s_a - b * s_r) / det
    mean_r = (a * s_r - b * s_a) / det
    # Cholesky of the 2x2 posterior covariance [[c,-b],[-b,a]]/det, closed form.
    c11 = np.sqrt(c / det)
    c21 = -b / det / c11
    c22 = np.sqrt(a / det - c21**2)
    e1 = gen.standard_normal(n)
    e2 = gen.standard_normal(n)
    return mean_a + c11 * e1, mean_r + c21 * e1 + c22 * e2


def m1_sweep(y0, Y, common: CommonState, units: UnitState, config: M1Config, adapt, gen,
             fixed_common: bool = False, adapt_enabled: bool = True) -> None:
    """One full Gibbs sweep, updating `common` and `units` in place.

    With `fixed_common` only the per-unit indicator/deviation blocks run,
    which is the posterior used by the known-truth reference estimator.
    """
    hyper = config.hyper
    n, t = Y.shape
    L = np.column_stack([y0, Y[:, :-1]])
    hetsk = config.heteroskedastic
    ss = config.variant in ("ss_homosk", "ss_hetsk")
    full = config.variant.startswith("full_hetero")
    homog = config.variant == "homogeneous"

    w = 1.0 / (common.sigma2 * units.delta_sigma)

    if not fixed_common:
        # Common regression coefficients.
        y_tilde = Y - units.delta_alpha[:, None] - units.delta_rho[:, None] * L
        sum_l = L.sum(axis=1)
        xtx = np.array(
            [
                [np.sum(w) * t, np.sum(w * sum_l)],
                [np.sum(w * sum_l), np.sum(w * (L * L).sum(axis=1))],
            ]
        )
        xty = np.array(
            [np.sum(w * y_tilde.sum(axis=1)), np.sum(w * (L * y_tilde).sum(axis=1))]
        )
        prior_cov = np.diag([float(hyper.v_alpha), hyper.v_rho])
        draw, _, _ = update_common_regression(
            np.array([float(hyper.mu_alpha), hyper.mu_rho]), prior_cov, xtx, xty, gen
        )
        common.alpha, common.rho = float(draw[0]), float(draw[1])

        if ss:
            common.q["alpha"] = update_q(units.z["alpha"], hyper.a, hyper.b, gen)
            common.q["rho"] = update_q(units.z["rho"], hyper.a, hyper.b, gen)
            if hetsk:
                common.q["sigma"] = update_q(units.z["sigma"], hyper.a, hyper.b, gen)
        if not homog:
            common.v_delta_alpha = update_v_delta_normal(
                units.z["alpha"], units.delta_alpha, hyper.v_delta_alpha, gen
            )
            common.v_delta_rho = update_v_delta_normal(
                units.z["rho"], units.delta_rho, hyper.v_delta_rho, gen
            )
            if hetsk:
                active = units.delta_sigma[units.z["sigma"] == 1]
                common.v_delta_sigma, _ = update_v_delta_sigma_rwmh(
                    common.v_delta_sigma, active, hyper.v_delta_sigma, adapt, gen,
                    adapt_enabled=adapt_enabled,
                )

    if not homog:
        if full:
            resid0 = Y - common.alpha - common.rho * L
            units.delta_alpha, units.delta_rho = _draw_joint_deviations(
                resid0, L, w, common.v_delta_alpha, common.v_delta_rho, gen
            )
            units.z["alpha"][:] = 1
            units.z["rho"][:] = 1
        else:
            resid_a = Y - common.alpha - (common.rho + units.delta_rho)[:, None] * L
            units.z["alpha"], units.delta_alpha = update_indicator_and_deviation_normal(
                common.q["alpha"], common.v_delta_alpha, t * w, w * resid_a.sum(axis=1), gen
            )
            resid_r = Y - common.alpha - units.delta_alpha[:, None] - common.rho * L
            units.z["rho"], units.delta_rho = update_indicator_and_deviation_normal(
                common.q["rho"], common.v_delta_rho,
                w * (L * L).sum(axis=1), w * (L * resid_r).sum(axis=1), gen,
            )
        if hetsk:
            resid = Y - (common.alpha + units.delta_alpha)[:, None] - (common.rho + units.delta_rho)[:, None] * L
            ssr = (resid * resid).sum(axis=1) / common.sigma2
            q_sigma = 1.0 if full else common.q["sigma"]
            units.z["sigma"], units.delta_sigma = update_indicator_and_deviation_ig(
                q_sigma, common.v_delta_sigma, ssr, np.full(n, t), gen
            )

    if not fixed_common:
        resid = Y - (common.alpha + units.delta_alpha)[:, None] - (common.rho + units.delta_rho)[:, None] * L
        ssr_w = float(np.sum((resid * resid).sum(axis=1) / units.delta_sigma))
        post = InverseGammaSpec(nu=hyper.sigma2.nu + n * t, tau=hyper.sigma2.tau + ssr_w)
        common.sigma2 = float(sample_inverse_gamma(post, gen))


def _extract_arrays(data: PanelData):
    if not data.balanced:
        raise ConfigurationError("estimation requires a fully observed panel")
    if data.n_periods < 3:
        raise ConfigurationError("need at least 3 periods (T >= 2)")
    y0 = data.y[:, 0].copy()
    Y = data.y[:, 1:].copy()
    return y0, Y


def run_m1(data: PanelData, config: M1Config, rng,
           fixed_common: Optional[CommonState] = None) -> ChainOutput:
    """Run the Gibbs sampler and collect post-burn-in, thinned draws.

    `fixed_common` holds the shared parameters at the given values and updates
    only the per-unit blocks (known-truth reference posterior).
    """
    gen = as_generator(rng)
    y0, Y = _extract_arrays(data)
    n, t = Y.shape
    common, units = init_m1_state(n, config)
    if fixed_common is not None:
        common = replace(fixed_common)
        common.q = dict(fixed_common.q)
        if common.v_delta_sigma is None:
            common.v_delta_sigma = 1.0
    adapt = RwmhAdaptState()
    kept = (config.n_draws - config.burn_in + config.thin - 1) // config.thin
    scalars = ["alpha", "rho", "sigma2", "q_alpha", "q_rho", "v_delta_alpha", "v_delta_rho"]
    if config.heteroskedastic:
        scalars += ["q_sigma", "v_delta_sigma"]
    common_draws = {name: np.empty(kept) for name in scalars}
    unit_names = ["delta_alpha", "delta_rho", "delta_sigma", "z_alpha", "z_rho", "z_sigma"]
    unit_draws = {name: np.empty((kept, n)) for name in unit_names} if config.store_unit_draws else {}
    unit_sums = {name: np.zeros(n) for name in ["alpha_i", "rho_i", "sigma2_i"] + unit_names}
    kept_count = 0
    for j in range(config.n_draws):
        in_burn = j < config.burn_in
        m1_sweep(
            y0, Y, common, units, config, adapt, gen,
            fixed_common=fixed_common is not None,
            adapt_enabled=in_burn or config.adapt_after_burnin,
        )
        if in_burn or (j - config.burn_in) % config.thin:
            continue
        idx = kept_count
        kept_count += 1
        common_draws["alpha"][idx] = common.alpha
        common_draws["rho"][idx] = common.rho
        common_draws["sigma2"][idx] = common.sigma2
        common_draws["q_alpha"][idx] = common.q["alpha"]
        common_draws["q_rho"][idx] = common.q["rho"]
        common_draws["v_delta_alpha"][idx] = common.v_delta_alpha
        common_draws["v_delta_rho"][idx] = common.v_delta_rho
        if config.heteroskedastic:
            common_draws["q_sigma"][idx] = common.q["sigma"]
            common_draws["v_delta_sigma"][idx] = common.v_delta_sigma
        values = {
            "delta_alpha": units.delta_alpha,
            "delta_rho": units.delta_rho,
            "delta_sigma": units.delta_sigma,
            "z_alpha": units.z["alpha"],
            "z_rho": units.z["rho"],
            "z_sigma": units.z["sigma"],
            "alpha_i": common.alpha + units.delta_alpha,
            "rho_i": common.rho + units.delta_rho,
            "sigma2_i": common.sigma2 * units.delta_sigma,
        }
        for name in unit_sums:
            unit_sums[name] += values[name]
        for name in unit_draws:
            unit_draws[name][idx] = values[name]
    assert kept_count == kept
    return ChainOutput(
        common=common_draws,
        unit=unit_draws,
        unit_means={name: total / kept for name, total in unit_sums.items()},
        diagnostics={
            "rwmh_acceptance": adapt.acceptance_rate if config.heteroskedastic else float("nan"),
            "rwmh_step": adapt.step,
        },
        config={
            "model": "m1",
            "variant": config.variant,
            "n_draws": config.n_draws,
            "burn_in": config.burn_in,
            "thin": config.thin,
        },
        unit_ids=data.unit_ids,
    )


def point_estimates(chain: ChainOutput, rule: str = "mean", threshold: float = 0.8):
    """Per-unit point estimates of the composite coefficients.

    Rules: "mean" (posterior means), "median" (plain medians of the composite
    draws), "median_with_spike_adjust" (deviation set to its spike value when
    the spike share of draws exceeds `threshold`).
    """
    if chain.n_draws == 0:
        raise ValueError("empty chain")
    if rule == "mean":
        return {k: chain.unit_means[k].copy() for k in ("alpha_i", "rho_i", "sigma2_i")}
    if not chain.unit:
        raise ValueError(f"rule {rule!r} needs stored unit draws")
    out = {}
    for label, common_name, delta_name, z_name, spike in (
        ("alpha_i", "alpha", "delta_alpha", "z_alpha", 0.0),
        ("rho_i", "rho", "delta_rho", "z_rho", 0.0),
        ("sigma2_i", "sigma2", "delta_sigma", "z_sigma", 1.0),
    ):
        combine = np.add if spike == 0.0 else np.multiply
        if rule == "median":
            draws = combine(chain.common[common_name][:, None], chain.unit[delta_name])
            out[label] = np.median(draws, axis=0)
        elif rule == "median_with_spike_adjust":
            spike_share = 1.0 - chain.unit[z_name].mean(axis=0)
            delta_hat = np.where(
                spike_share > threshold, spike, np.median(chain.unit[delta_name], axis=0)
            )
            out[label] = combine(np.median(chain.common[common_name]), delta_hat)
        else:
            raise ValueError(f"unknown rule {rule!r}")
    return out
