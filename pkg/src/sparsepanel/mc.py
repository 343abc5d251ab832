"""Monte Carlo risk experiments for the panel regression model.

Each replication draws unit deviations from the truth, simulates a panel,
runs a set of estimators, and scores the per-unit posterior means of the
composite intercept and autoregressive coefficient under quadratic compound
loss (1/N) sum_i (l_hat_i - l_i)^2. Risks average over replications.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from sparsepanel.blocks import CommonState, HyperParams
from sparsepanel.chainout import ChainOutput
from sparsepanel.m1 import ConfigurationError, M1Config, point_estimates, run_m1
from sparsepanel.panel import simulate_m1
from sparsepanel.rng import RngStream

ESTIMATORS = ("ss", "q0", "q1", "oracle", "ss_homosk_misspec")
TARGETS = ("alpha", "rho")


@dataclass
class MCDesign:
    model: str = "m1_homosk"  # or "m1_hetsk"
    theta: CommonState = None
    q_grid: Sequence[float] = (0.0, 0.4, 1.0)
    v_delta_alpha_grid: Sequence[float] = (0.05, 0.5)
    n: int = 500
    t: int = 8
    n_sim: int = 100
    estimators: Sequence[str] = ("ss", "q0", "q1", "oracle")
    n_draws: int = 5000
    burn_in: int = 2500
    hyper: HyperParams = field(default_factory=HyperParams.m1_defaults)

    def __post_init__(self):
        if self.model not in ("m1_homosk", "m1_hetsk"):
            raise ConfigurationError(f"unknown model {self.model!r}")
        if self.n_sim < 1:
            raise ConfigurationError("n_sim must be >= 1")
        for est in self.estimators:
            if est not in ESTIMATORS:
                raise ConfigurationError(f"unknown estimator {est!r}")
        if self.model == "m1_homosk" and "ss_homosk_misspec" in self.estimators:
            raise ConfigurationError("the misspecified estimator needs heteroskedastic data")
        if self.theta is None:
            hetsk = self.model == "m1_hetsk"
            self.theta = CommonState(
                alpha=1.0, rho=0.6, sigma2=0.8,
                q={"alpha": 0.4, "rho": 0.4, "sigma": 0.4 if hetsk else 0.0},
                v_delta_alpha=0.5, v_delta_rho=0.09,
                v_delta_sigma=1.0 if hetsk else None,
            )

    @property
    def heteroskedastic(self) -> bool:
        return self.model == "m1_hetsk"


@dataclass
class RiskTable:
    """Compound-risk estimates per (q, v_delta_alpha, estimator, target)."""

    risks: Dict[Tuple[float, float, str, str], float]
    stderrs: Dict[Tuple[float, float, str, str], float]
    failed: Dict[Tuple[float, float, str], int]
    design: MCDesign

    def risk(self, q, v, estimator, target="alpha"):
        return self.risks[(q, v, estimator, target)]

    def stderr(self, q, v, estimator, target="alpha"):
        return self.stderrs[(q, v, estimator, target)]

    def to_csv(self) -> str:
        """Rows: target x v_delta_alpha x estimator; one risk column per q."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        qs = list(self.design.q_grid)
        header = ["target", "v_delta_alpha", "estimator"]
        for q in qs:
            header += [f"risk_q{q:g}", f"stderr_q{q:g}"]
        writer.writerow(header)
        for target in TARGETS:
            for v in self.design.v_delta_alpha_grid:
                for est in self.design.estimators:
                    row = [target, format(v, "g"), est]
                    for q in qs:
                        row.append(format(self.risks[(q, v, est, target)], ".17g"))
                        row.append(format(self.stderrs[(q, v, est, target)], ".17g"))
                    writer.writerow(row)
        return buf.getvalue()

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "risk_table.csv").write_text(self.to_csv())
        manifest = {
            "model": self.design.model,
            "n": self.design.n,
            "t": self.design.t,
            "n_sim": self.design.n_sim,
            "n_draws": self.design.n_draws,
            "burn_in": self.design.burn_in,
            "q_grid": list(self.design.q_grid),
            "v_delta_alpha_grid": list(self.design.v_delta_alpha_grid),
            "estimators": list(self.design.estimators),
            "failed_replications": {
                f"q={k[0]:g},v={k[1]:g},{k[2]}": v for k, v in self.failed.items() if v
            },
            "written_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _estimator_config(design: MCDesign, estimator: str) -> M1Config:
    hetsk = design.heteroskedastic
    variant = {
        "ss": "ss_hetsk" if hetsk else "ss_homosk",
        "q0": "homogeneous",
        "q1": "full_hetero_hetsk" if hetsk else "full_hetero_homosk",
        "oracle": "ss_hetsk" if hetsk else "ss_homosk",
        "ss_homosk_misspec": "ss_homosk",
    }[estimator]
    return M1Config(
        variant=variant, n_draws=design.n_draws, burn_in=design.burn_in,
        hyper=design.hyper, store_unit_draws=False,
    )


def oracle_estimator(data, theta: CommonState, rng, heteroskedastic: bool = False,
                     n_draws: int = 5000, burn_in: int = 2500) -> Dict[str, np.ndarray]:
    """Per-unit posterior means with every shared parameter held at the truth;
    only the indicator/deviation blocks are sampled."""
    config = M1Config(
        variant="ss_hetsk" if heteroskedastic else "ss_homosk",
        n_draws=n_draws, burn_in=burn_in, store_unit_draws=False,
    )
    chain = run_m1(data, config, rng, fixed_common=theta)
    return point_estimates(chain, "mean")


def _cell_theta(design: MCDesign, q: float, v: float) -> CommonState:
    theta = replace(design.theta)
    theta.q = {
        "alpha": q, "rho": q,
        "sigma": q if design.heteroskedastic else 0.0,
    }
    theta.v_delta_alpha = v
    return theta


def _run_replication(design: MCDesign, theta: CommonState, stream: RngStream):
    data, truth = simulate_m1(
        theta, design.hyper, design.n, design.t, stream.substream(0),
        heteroskedastic=design.heteroskedastic,
    )
    true_vals = {"alpha": theta.alpha + truth.delta_alpha, "rho": theta.rho + truth.delta_rho}
    losses = {}
    for e_idx, est in enumerate(design.estimators):
        config = _estimator_config(design, est)
        chain = run_m1(data, config, stream.substream(1 + e_idx),
                       fixed_common=theta if est == "oracle" else None)
        if not all(np.all(np.isfinite(v)) for v in chain.common.values()):
            losses[est] = None
            continue
        means = point_estimates(chain, "mean")
        losses[est] = {
            "alpha": float(np.mean((means["alpha_i"] - true_vals["alpha"]) ** 2)),
            "rho": float(np.mean((means["rho_i"] - true_vals["rho"]) ** 2)),
        }
    return losses


def run_experiment(design: MCDesign, seed: int = 0, threads: int = 1,
                   progress=None) -> RiskTable:
    """Run the full grid. Replications use disjoint RNG streams keyed by
    (cell index, replication index), so results are reproducible for any
    thread count; reduction happens in fixed replication order."""
    cells = [(q, v) for v in design.v_delta_alpha_grid for q in design.q_grid]
    risks, stderrs, failed = {}, {}, {}
    root = RngStream(seed=seed, stream_id=0)
    for c_idx, (q, v) in enumerate(cells):
        theta = _cell_theta(design, q, v)
        streams = [root.substream(c_idx).substream(rep) for rep in range(design.n_sim)]
        run_one = lambda stream: _run_replication(design, theta, stream)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(run_one, streams))
        else:
            results = [run_one(s) for s in streams]
        for est in design.estimators:
            ok = [r[est] for r in results if r[est] is not None]
            n_failed = design.n_sim - len(ok)
            failed[(q, v, est)] = n_failed
            if n_failed > 0.05 * design.n_sim:
                raise RuntimeError(
                    f"estimator {est!r} failed {n_failed}/{design.n_sim} replications "
                    f"in cell q={q}, v={v}"
                )
            for target in TARGETS:
                vals = np.array([r[target] for r in ok])
                risks[(q, v, est, target)] = float(vals.mean())
                stderrs[(q, v, est, target)] = (
                    float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
                )
        if progress is not None:
            progress(c_idx + 1, len(cells))
    return RiskTable(risks=risks, stderrs=stderrs, failed=failed, design=design)


def _kde_on_unit_grid(draws: np.ndarray, n_grid: int = 512) -> Tuple[np.ndarray, np.ndarray]:
    """Gaussian KDE of draws supported on [0, 1], boundary-corrected by
    reflection, renormalized to integrate to one on the grid."""
    grid = np.linspace(0.0, 1.0, n_grid)
    draws = np.asarray(draws, dtype=float)
    if draws.std() < 1e-12:
        # Degenerate chain: all mass in the nearest grid cell.
        density = np.zeros(n_grid)
        j = int(np.argmin(np.abs(grid - draws[0])))
        density[j] = 1.0 / (grid[1] - grid[0])
        return grid, density
    from scipy.stats import gaussian_kde

    kde = gaussian_kde(draws)
    density = kde(grid) + kde(-grid) + kde(2.0 - grid)
    density /= np.trapezoid(density, grid)
    return grid, density


def histogram_export(chain: ChainOutput, rule: str = "median_with_spike_adjust",
                     threshold: float = 0.8) -> Dict[str, np.ndarray]:
    """Plot-ready cross-sectional point estimates and heterogeneity-probability
    posterior densities on a 512-point [0, 1] grid."""
    out = {}
    estimates = point_estimates(chain, rule, threshold=threshold)
    for name, vals in estimates.items():
        out["estimate_" + name] = vals
    for name, draws in chain.common.items():
        if name.startswith("q_"):
            grid, density = _kde_on_unit_grid(draws)
            out["grid"] = grid
            out["density_" + name] = density
    return out


def write_histogram_export(export: Dict[str, np.ndarray], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    est_names = sorted(n for n in export if n.startswith("estimate_"))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["unit_index"] + est_names)
    n = len(export[est_names[0]])
    for i in range(n):
        writer.writerow([i] + [format(export[name][i], ".17g") for name in est_names])
    (out / "point_estimates.csv").write_text(buf.getvalue())
    dens_names = sorted(n_ for n_ in export if n_.startswith("density_"))
    if dens_names:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["grid"] + dens_names)
        for j in range(len(export["grid"])):
            writer.writerow(
                [format(export["grid"][j], ".17g")]
                + [format(export[name][j], ".17g") for name in dens_names]
            )
        (out / "q_densities.csv").write_text(buf.getvalue())
