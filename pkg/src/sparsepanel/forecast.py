"""Posterior-predictive forecasting, scoring, and variance decomposition.

Forecasts iterate the latent-state model forward from the end of the sample
with fresh shocks, under three scenarios: averaging over retained posterior
draws, fixing parameters and deviations at their posterior means, or using
chains estimated on one unit's history alone. Density forecasts are scored
by a Rao-Blackwellized Normal mixture: the predictive density at a point is
the average over draws of the Normal density implied by each draw.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from sparsepanel.blocks import CommonState
from sparsepanel.chainout import ChainOutput
from sparsepanel.distributions import sample_inverse_gamma
from sparsepanel.panel import PanelData, draw_unit_deviations, ig_from_v
from sparsepanel.rng import as_generator

SCENARIOS = ("full_info_param_unc", "full_info_no_param_unc", "individual_info")


@dataclass
class PredictiveDraws:
    """Simulated future outcomes, one array entry per (draw, unit, horizon)."""

    draws: np.ndarray  # (n_draws, n_units, n_horizons)
    h1_means: np.ndarray  # (n_draws, n_units) conditional mean of y at horizon 1
    h1_vars: np.ndarray  # (n_draws, n_units) conditional variance at horizon 1
    scenario: str
    horizons: Tuple[int, ...]
    unit_ids: Tuple[str, ...]

    @property
    def n_units(self) -> int:
        return self.draws.shape[1]

    def predictive_mean(self, horizon: int = 1) -> np.ndarray:
        j = self.horizons.index(horizon)
        return self.draws[:, :, j].mean(axis=0)

    def interval(self, horizon: int, level: float = 0.90) -> Tuple[np.ndarray, np.ndarray]:
        """Equal-tail interval per unit at the given horizon."""
        j = self.horizons.index(horizon)
        tail = (1.0 - level) / 2.0
        lo = np.quantile(self.draws[:, :, j], tail, axis=0)
        hi = np.quantile(self.draws[:, :, j], 1.0 - tail, axis=0)
        return lo, hi


@dataclass
class ScoreReport:
    """Point and density forecast scores at horizon one."""

    mse: float
    lps: float
    per_unit_lps: np.ndarray
    zero_density_units: List[str] = field(default_factory=list)

    def mse_delta_vs(self, base: "ScoreReport") -> float:
        """Relative MSE difference in percent; negative means improvement."""
        return 100.0 * (self.mse - base.mse) / base.mse

    def lps_delta_vs(self, base: "ScoreReport") -> float:
        return self.lps - base.lps


@dataclass
class DecompositionResult:
    """Cross-sectional variance paths from three coupled cohort simulations."""

    v_baseline: np.ndarray
    v_no_alpha_dev: np.ndarray
    v_no_transitory: np.ndarray

    @property
    def alpha_share(self) -> np.ndarray:
        """Share of cross-sectional variance removed by equalizing intercepts."""
        return 1.0 - self.v_no_alpha_dev / self.v_baseline

    @property
    def transitory_share(self) -> np.ndarray:
        """Share removed by shutting down the measurement noise."""
        return 1.0 - self.v_no_transitory / self.v_baseline


def _terminal_regressors(data: PanelData, horizons: Sequence[int]) -> np.ndarray:
    """Regressor paths [1, experience/10] for the forecast periods.

    Experience is deterministic and grows by one per period, so the
    out-of-sample regressor at horizon h is the last in-sample experience
    level plus h.
    """
    if data.x is None:
        raise ValueError("forecasting requires panel regressors")
    h_last = data.x[:, -1, 1] * 10.0
    n = data.y.shape[0]
    out = np.empty((n, len(horizons), 2))
    for j, h in enumerate(horizons):
        out[:, j, 0] = 1.0
        out[:, j, 1] = (h_last + h) / 10.0
    return out


def _simulate_forward(s0, rho_i, x_path, coef_i, u_sd, eps_sd, horizons, gen):
    """Iterate states and outcomes forward, returning y at each horizon.

    All arguments are broadcast over units; `s0`, `rho_i`, `u_sd`, `eps_sd`
    have shape (n,), `coef_i` (n, k), `x_path` (n, len(horizons), k).
    """
    n = s0.shape[0]
    n_h = len(horizons)
    y = np.empty((n, n_h))
    s = s0.copy()
    col = 0
    for step in range(1, max(horizons) + 1):
        s = rho_i * s + eps_sd * gen.standard_normal(n)
        if col < n_h and step == horizons[col]:
            x_t = x_path[:, col, :]
            y[:, col] = np.sum(x_t * coef_i, axis=1) + s + u_sd * gen.standard_normal(n)
            col += 1
        # horizons are sorted, so interior steps only advance the state
    return y


def _chain_unit_arrays(chain: ChainOutput, n: int, k: int):
    required = ["s_last", "delta_rho", "delta_sigma_u", "delta_sigma_eps"]
    required += [f"delta_alpha_{j}" for j in range(k)]
    missing = [name for name in required if name not in chain.unit]
    if missing:
        raise ValueError(f"chain lacks stored unit draws needed for forecasting: {missing}")
    delta_alpha = np.stack([chain.unit[f"delta_alpha_{j}"] for j in range(k)], axis=-1)
    return (chain.unit["s_last"], chain.unit["delta_rho"], chain.unit["delta_sigma_u"],
            chain.unit["delta_sigma_eps"], delta_alpha)


def predict(chain, data: PanelData, horizons: Sequence[int], scenario: str, rng
            ) -> PredictiveDraws:
    """Posterior-predictive simulation for the latent-state panel model.

    `chain` is the full-panel ChainOutput for the two full-information
    scenarios, or a sequence of single-unit ChainOutputs (one per unit, in
    panel order) for the individual-information scenario.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    horizons = tuple(sorted(int(h) for h in horizons))
    if not horizons or horizons[0] < 1:
        raise ValueError("horizons must be positive integers")
    gen = as_generator(rng)
    if scenario == "individual_info":
        return _predict_individual(chain, data, horizons, gen)

    k = chain.common["alpha"].shape[1]
    n = data.y.shape[0]
    x_path = _terminal_regressors(data, horizons)
    s_last, delta_rho, delta_su, delta_se, delta_alpha = _chain_unit_arrays(chain, n, k)
    n_draws = chain.n_draws
    # period-T variances are carried forward beyond the sample
    sig2_u_t = chain.common["sigma2_u"][:, -1]
    sig2_e_t = chain.common["sigma2_eps"][:, -1]
    if scenario == "full_info_no_param_unc":
        coef = chain.common["alpha"].mean(axis=0)[None, :] + np.stack(
            [chain.unit_means[f"delta_alpha_{j}"] for j in range(k)], axis=-1)
        rho_i = chain.common["rho"].mean() + chain.unit_means["delta_rho"]
        u_var = sig2_u_t.mean() * chain.unit_means["delta_sigma_u"]
        e_var = sig2_e_t.mean() * chain.unit_means["delta_sigma_eps"]
        s0 = chain.unit_means["s_last"]
        draws = np.empty((n_draws, n, len(horizons)))
        for d in range(n_draws):
            draws[d] = _simulate_forward(s0, rho_i, x_path, coef, np.sqrt(u_var),
                                         np.sqrt(e_var), horizons, gen)
        h1_means = np.tile(np.sum(x_path[:, 0, :] * coef, axis=1) + rho_i * s0, (n_draws, 1)) \
            if horizons[0] == 1 else np.full((n_draws, n), np.nan)
        h1_vars = np.tile(e_var + u_var, (n_draws, 1)) if horizons[0] == 1 \
            else np.full((n_draws, n), np.nan)
        return PredictiveDraws(draws, h1_means, h1_vars, scenario, horizons, data.unit_ids)

    draws = np.empty((n_draws, n, len(horizons)))
    h1_means = np.full((n_draws, n), np.nan)
    h1_vars = np.full((n_draws, n), np.nan)
    for d in range(n_draws):
        coef = chain.common["alpha"][d][None, :] + delta_alpha[d]
        rho_i = chain.common["rho"][d] + delta_rho[d]
        u_var = sig2_u_t[d] * delta_su[d]
        e_var = sig2_e_t[d] * delta_se[d]
        draws[d] = _simulate_forward(s_last[d], rho_i, x_path, coef, np.sqrt(u_var),
                                     np.sqrt(e_var), horizons, gen)
        if horizons[0] == 1:
            h1_means[d] = np.sum(x_path[:, 0, :] * coef, axis=1) + rho_i * s_last[d]
            h1_vars[d] = e_var + u_var
    return PredictiveDraws(draws, h1_means, h1_vars, scenario, horizons, data.unit_ids)


def _predict_individual(chains, data: PanelData, horizons, gen) -> PredictiveDraws:
    try:
        chains = list(chains)
    except TypeError:
        raise ValueError("individual_info needs one single-unit chain per unit")
    n = data.y.shape[0]
    if len(chains) != n:
        raise ValueError(f"expected {n} single-unit chains, got {len(chains)}")
    x_path = _terminal_regressors(data, horizons)
    n_draws = min(c.n_draws for c in chains)
    draws = np.empty((n_draws, n, len(horizons)))
    h1_means = np.full((n_draws, n), np.nan)
    h1_vars = np.full((n_draws, n), np.nan)
    for i, unit_chain in enumerate(chains):
        if "s_last" not in unit_chain.common:
            raise ValueError(f"unit chain {i} lacks terminal state draws")
        coef = unit_chain.common["coef"][:n_draws]
        rho_i = unit_chain.common["rho_i"][:n_draws]
        s0 = unit_chain.common["s_last"][:n_draws]
        u_var = unit_chain.common["sigma2_u"][:n_draws]
        e_var = unit_chain.common["sigma2_eps"][:n_draws]
        x_i = x_path[i : i + 1]
        for d in range(n_draws):
            draws[d, i] = _simulate_forward(
                s0[d : d + 1], rho_i[d : d + 1], x_i, coef[d : d + 1],
                np.sqrt(u_var[d : d + 1]), np.sqrt(e_var[d : d + 1]), horizons, gen,
            )[0]
        if horizons[0] == 1:
            h1_means[:, i] = coef @ x_path[i, 0, :] + rho_i * s0
            h1_vars[:, i] = e_var + u_var
    return PredictiveDraws(draws, h1_means, h1_vars, "individual_info", tuple(horizons),
                           data.unit_ids)


def score(pred: PredictiveDraws, realized: np.ndarray) -> ScoreReport:
    """MSE of the predictive mean and the average log predictive score at
    horizon one. The density at each realization is the average over draws
    of the Normal density implied by that draw's mean and variance."""
    if 1 not in pred.horizons:
        raise ValueError("scoring requires horizon-1 predictions")
    realized = np.asarray(realized, dtype=float)
    if realized.shape != (pred.n_units,):
        raise ValueError("realized outcomes must align with horizon-1 predictions")
    mse = float(np.mean((pred.predictive_mean(1) - realized) ** 2))
    m, v = pred.h1_means, pred.h1_vars
    n_draws = m.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        logpdf = np.where(
            v > 0,
            -0.5 * (np.log(2.0 * np.pi * np.where(v > 0, v, 1.0))
                    + (realized[None, :] - m) ** 2 / np.where(v > 0, v, 1.0)),
            np.where(np.isclose(m, realized[None, :]), np.inf, -np.inf),
        )
        per_unit = logsumexp(logpdf, axis=0) - np.log(n_draws)
    zero = [pred.unit_ids[i] for i in np.flatnonzero(np.isneginf(per_unit))]
    lps = float(np.mean(per_unit)) if not zero else float("-inf")
    return ScoreReport(mse=mse, lps=lps, per_unit_lps=per_unit, zero_density_units=zero)


@dataclass
class WidthRatioReport:
    """Per-unit interval-width ratios and group means."""

    ratios: np.ndarray  # (n_units,) with NaN for excluded units
    excluded_units: List[str]
    core_mean: float
    deviator_mean: float
    overall_mean: float


def interval_width_ratios(numerator: PredictiveDraws, denominator: PredictiveDraws,
                          level: float = 0.90, horizon: int = 1,
                          core_mask: Optional[np.ndarray] = None) -> WidthRatioReport:
    """Ratio of equal-tail interval widths per unit, with group means for
    core units (posterior probability of no deviation at least one half)
    versus deviators. Units with a zero-width denominator are excluded and
    reported."""
    if numerator.n_units != denominator.n_units:
        raise ValueError("scenario outputs cover different numbers of units")
    lo_n, hi_n = numerator.interval(horizon, level)
    lo_d, hi_d = denominator.interval(horizon, level)
    width_n = hi_n - lo_n
    width_d = hi_d - lo_d
    ratios = np.full(numerator.n_units, np.nan)
    ok = width_d > 0
    ratios[ok] = width_n[ok] / width_d[ok]
    excluded = [numerator.unit_ids[i] for i in np.flatnonzero(~ok)]
    if core_mask is None:
        core_mask = np.zeros(numerator.n_units, dtype=bool)
    core_mask = np.asarray(core_mask, dtype=bool)

    def group_mean(mask):
        vals = ratios[mask & ok]
        return float(vals.mean()) if vals.size else float("nan")

    return WidthRatioReport(
        ratios=ratios,
        excluded_units=excluded,
        core_mean=group_mean(core_mask),
        deviator_mean=group_mean(~core_mask),
        overall_mean=group_mean(np.ones_like(core_mask)),
    )


def core_units_from_chain(chain: ChainOutput, label: str = "alpha") -> np.ndarray:
    """Units whose posterior probability of no deviation is at least 1/2."""
    return 1.0 - chain.unit_means[f"z_{label}"] >= 0.5


def inequality_decomposition(theta: CommonState, n: int = 10_000, t: int = 20,
                             rng=None) -> DecompositionResult:
    """Cross-sectional variance of simulated outcomes for a cohort starting
    at experience 1, and the shares attributable to intercept heterogeneity
    and to the transitory shock.

    The three simulations (baseline, intercepts equalized, transitory shock
    off) share every random draw, so the counterfactual variances differ
    from the baseline only through the channel being shut down.
    """
    gen = as_generator(rng)
    truth = draw_unit_deviations(theta, n, gen, blocks=("alpha", "rho"))
    scale = {}
    for label, v in (("sigma_u", theta.v_delta_sigma_u), ("sigma_eps", theta.v_delta_sigma_eps)):
        q = theta.q.get(label, 0.0)
        zl = (gen.random(n) < q).astype(np.int64)
        if v is not None and v > 0:
            slab = sample_inverse_gamma(ig_from_v(v), gen, size=n)
        else:
            slab = np.ones(n)
        scale[label] = np.where(zl == 1, slab, 1.0)
    rho_i = theta.rho + truth.delta_rho
    s0 = theta.mu_s0 + np.sqrt(theta.v_s0) * gen.standard_normal(n)
    eps = gen.standard_normal((n, t))
    u = gen.standard_normal((n, t))
    sig2_u = np.broadcast_to(np.asarray(theta.sigma2_u, dtype=float), (t,))
    sig2_e = np.broadcast_to(np.asarray(theta.sigma2_eps, dtype=float), (t,))
    alpha = np.atleast_1d(np.asarray(theta.alpha, dtype=float))

    def run(zero_alpha_dev: bool, zero_transitory: bool) -> np.ndarray:
        coef = alpha[None, :] + (0.0 if zero_alpha_dev else truth.delta_alpha)
        v_path = np.empty(t)
        s = s0
        for step in range(1, t + 1):
            s = rho_i * s + np.sqrt(sig2_e[step - 1] * scale["sigma_eps"]) * eps[:, step - 1]
            x_t = np.column_stack([np.ones(n), np.full(n, step / 10.0)])
            y = np.sum(x_t * coef, axis=1) + s
            if not zero_transitory:
                y = y + np.sqrt(sig2_u[step - 1] * scale["sigma_u"]) * u[:, step - 1]
            v_path[step - 1] = y.var()
        return v_path

    return DecompositionResult(
        v_baseline=run(False, False),
        v_no_alpha_dev=run(True, False),
        v_no_transitory=run(False, True),
    )


FAN_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def write_fan_chart(pred: PredictiveDraws, out_path,
                    quantiles: Sequence[float] = FAN_QUANTILES) -> None:
    """Plot-ready long-format CSV: unit, horizon, quantile, value."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["unit", "horizon", "quantile", "value"])
    for j, h in enumerate(pred.horizons):
        qs = np.quantile(pred.draws[:, :, j], quantiles, axis=0)
        for i, unit in enumerate(pred.unit_ids):
            for qi, q in enumerate(quantiles):
                writer.writerow([unit, h, format(q, "g"), format(qs[qi, i], ".17g")])
    Path(out_path).write_text(buf.getvalue())


def write_scores(reports: Dict[str, ScoreReport], out_path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scenario", "mse", "lps", "zero_density_units"])
    for name, rep in reports.items():
        writer.writerow([name, format(rep.mse, ".17g"), format(rep.lps, ".17g"),
                         ";".join(rep.zero_density_units)])
    Path(out_path).write_text(buf.getvalue())


def write_decomposition(result: DecompositionResult, out_path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "v_baseline", "v_no_alpha_dev", "v_no_transitory",
                     "alpha_share", "transitory_share"])
    for step in range(result.v_baseline.size):
        writer.writerow([step + 1] + [
            format(arr[step], ".17g")
            for arr in (result.v_baseline, result.v_no_alpha_dev, result.v_no_transitory,
                        result.alpha_share, result.transitory_share)
        ])
    Path(out_path).write_text(buf.getvalue())
