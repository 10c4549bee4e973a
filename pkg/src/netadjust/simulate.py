"""Generative response models, Monte-Carlo ground truth, and the replicated
experiment runner that produces bias / SE / SE-ratio / coverage reports."""

from __future__ import annotations

import concurrent.futures
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .design import TreatmentVector, bernoulli_assign, global_vector, stream_rng
from .errors import ConfigError, InvalidParameterError, NumericalError
from .estimators import (
    difference_in_means,
    exposure_profile,
    exposure_propensities,
    exposure_indicators,
    hajek,
    ols_adjusted_tau,
    ols_fit,
    crossfit_adjusted_tau,
)
from .features import (
    FeatureRecipe,
    build_features,
    counterfactual_matrices,
    counterfactual_means,
)
from .graph import Graph, normalized_adjacency_apply
from .inference import (
    confidence_interval,
    mc_gamma,
    neyman_variance,
    plugin_variance,
    residual_variance,
)
from .predictors import make_regressor


def _main_graph(graphs):
    if isinstance(graphs, Graph):
        return graphs, {"main": graphs}
    return next(iter(graphs.values())), dict(graphs)


# ---------------------------------------------------------------------------
# Response models


@dataclass(frozen=True)
class ExogenousLIM:
    """Response to own treatment plus the treated fraction of neighbors."""

    alpha: float = 0.0
    gamma: float = 1.0
    delta: float = 0.0
    sigma: float = 1.0

    def generate(self, graphs, w: TreatmentVector, rng) -> np.ndarray:
        g, _ = _main_graph(graphs)
        x = normalized_adjacency_apply(g, w.w)
        eps = rng.normal(0.0, self.sigma, g.n) if self.sigma > 0 else 0.0
        return self.alpha + self.gamma * w.w + self.delta * x + eps


@dataclass(frozen=True)
class EquilibriumLIM:
    """Endogenous peer response solved to its fixed point.

    y = alpha + beta * (mean neighbor response) + gamma * w
        + delta * (mean neighbor treatment) + eps, with |beta| < 1.
    """

    alpha: float = 0.0
    beta: float = 0.5
    gamma: float = 1.0
    delta: float = 0.0
    sigma: float = 1.0
    tol: float = 1e-10

    def __post_init__(self):
        if not abs(self.beta) < 1:
            raise InvalidParameterError("endogenous effect must satisfy |beta| < 1")

    def _solve(self, g: Graph, base: np.ndarray) -> np.ndarray:
        y = base.copy()
        if self.beta == 0:
            return y
        max_iter = 10 * max(1, math.ceil(math.log(self.tol) / math.log(abs(self.beta))))
        for _ in range(max_iter):
            y_next = base + self.beta * normalized_adjacency_apply(g, y)
            if np.max(np.abs(y_next - y)) < self.tol:
                return y_next
            y = y_next
        raise NumericalError("fixed-point iteration did not converge")

    def generate(self, graphs, w: TreatmentVector, rng) -> np.ndarray:
        g, _ = _main_graph(graphs)
        eps = rng.normal(0.0, self.sigma, g.n) if self.sigma > 0 else np.zeros(g.n)
        base = (
            self.alpha
            + self.gamma * w.w
            + self.delta * normalized_adjacency_apply(g, w.w)
            + eps
        )
        return self._solve(g, base)


@dataclass(frozen=True)
class DynamicLIM:
    """Discrete-time best-response dynamics on neighbor mean outcomes.

    Starting from all-zero outcomes, each step sets
    y_t = alpha + beta_direct * w + gamma_spill * (mean neighbor y_{t-1}) + eps_t
    with fresh noise per step; the final step is the response.
    """

    alpha: float = 0.0
    beta_direct: float = 1.0
    gamma_spill: float = 0.5
    sigma: float = 1.0
    T: int = 2

    def __post_init__(self):
        if self.T < 1:
            raise InvalidParameterError("T must be >= 1")

    def generate(self, graphs, w: TreatmentVector, rng) -> np.ndarray:
        g, _ = _main_graph(graphs)
        y = np.zeros(g.n)
        for _ in range(self.T):
            eps = rng.normal(0.0, self.sigma, g.n) if self.sigma > 0 else 0.0
            y = (
                self.alpha
                + self.beta_direct * w.w
                + self.gamma_spill * normalized_adjacency_apply(g, y)
                + eps
            )
        return y


@dataclass(frozen=True)
class SeparateSlopesLinear:
    """Arm-specific linear response in a set of named feature recipes."""

    recipes: tuple
    alpha0: float = 0.0
    alpha1: float = 1.0
    beta0: tuple = ()
    beta1: tuple = ()
    sigma: float = 1.0

    def __post_init__(self):
        if len(self.beta0) != len(self.recipes) or len(self.beta1) != len(self.recipes):
            raise ConfigError("coefficient lengths must match the recipe list")

    def generate(self, graphs, w: TreatmentVector, rng) -> np.ndarray:
        _, gdict = _main_graph(graphs)
        x = build_features(gdict, self.recipes, w).values
        mu0 = self.alpha0 + x @ np.asarray(self.beta0, dtype=float)
        mu1 = self.alpha1 + x @ np.asarray(self.beta1, dtype=float)
        n = len(w.w)
        eps = rng.normal(0.0, self.sigma, n) if self.sigma > 0 else 0.0
        return np.where(w.w == 1, mu1, mu0) + eps


@dataclass(frozen=True)
class AvgAggregateNonlinear:
    """Nonlinear response to both the fraction and the count of treated
    neighbors, with a heterogeneous direct effect."""

    intercept: float = -5.0
    direct_scale: float = 2.0
    direct_base: float = 2.0
    het_var: float = 2.0
    frac_lin: float = 0.03
    num_logit: tuple = (1.0, 0.001, 0.03, 300.0)
    frac_logit: tuple = (10.0, 3.0, 8.0, 0.4)
    sigma: float = 1.0

    def mean_surface(self, frac: np.ndarray, num: np.ndarray,
                     w: np.ndarray, het: np.ndarray) -> np.ndarray:
        a, b, c, m = self.num_logit
        fa, fb, fc, fm = self.frac_logit
        return (
            self.intercept
            + self.direct_scale * (self.direct_base + het) * w
            + self.frac_lin * frac
            + a / (1.0 + b * np.exp(-c * (num - m)))
            + fa / (fb + np.exp(-fc * (frac - fm)))
        )

    def generate(self, graphs, w: TreatmentVector, rng) -> np.ndarray:
        g, gdict = _main_graph(graphs)
        recipes = (FeatureRecipe("frac_treated", 1), FeatureRecipe("num_treated", 1))
        x = build_features(gdict, recipes, w).values
        het = rng.normal(0.0, math.sqrt(self.het_var), g.n)
        eps = rng.normal(0.0, self.sigma, g.n) if self.sigma > 0 else 0.0
        return self.mean_surface(x[:, 0], x[:, 1], w.w, het) + eps


def gen_response(model, graphs, w: TreatmentVector, seed) -> np.ndarray:
    """Draw one response vector; deterministic given the seed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return model.generate(graphs, w, rng)


# ---------------------------------------------------------------------------
# Ground truth


def true_gate_mc(model, graphs, R: int, seed):
    """Monte-Carlo truth: paired global-treatment / global-control draws.

    Both arms of a replicate reuse the same noise stream, which cancels the
    shared noise in the difference and shrinks the MC standard error.
    """
    if R < 1:
        raise InvalidParameterError("R must be >= 1")
    g, gdict = _main_graph(graphs)
    w1, w0 = global_vector(g.n, 1), global_vector(g.n, 0)
    diffs = np.empty(R)
    for r in range(R):
        y1 = gen_response(model, gdict, w1, stream_rng(seed, r, 1))
        y0 = gen_response(model, gdict, w0, stream_rng(seed, r, 1))
        diffs[r] = y1.mean() - y0.mean()
    mc_se = float(diffs.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
    return float(diffs.mean()), mc_se


def true_gate_analytic(model, graphs):
    """Exact truth where a closed form exists, else None."""
    g, gdict = _main_graph(graphs)
    ones = np.ones(g.n)
    if isinstance(model, ExogenousLIM):
        return float(model.gamma + model.delta * normalized_adjacency_apply(g, ones).mean())
    if isinstance(model, SeparateSlopesLinear):
        om = counterfactual_means(gdict, model.recipes)
        b0 = np.concatenate([[model.alpha0], model.beta0])
        b1 = np.concatenate([[model.alpha1], model.beta1])
        return float(om.omega1 @ b1 - om.omega0 @ b0)
    if isinstance(model, DynamicLIM):
        mu = {0: np.zeros(g.n), 1: np.zeros(g.n)}
        for arm in (0, 1):
            for _ in range(model.T):
                mu[arm] = (
                    model.alpha
                    + model.beta_direct * arm
                    + model.gamma_spill * normalized_adjacency_apply(g, mu[arm])
                )
        return float((mu[1] - mu[0]).mean())
    if isinstance(model, EquilibriumLIM):
        out = {}
        for arm in (0, 1):
            base = (
                model.alpha
                + model.gamma * arm * ones
                + model.delta * arm * normalized_adjacency_apply(g, ones)
            )
            out[arm] = model._solve(g, base)
        return float((out[1] - out[0]).mean())
    return None


# ---------------------------------------------------------------------------
# Campaign runner


@dataclass
class EstimatorSpec:
    """One estimator column of a campaign.

    method: dm | hajek | ols | crossfit.
    variance: none | neyman | plugin | bootstrap.
    """

    method: str
    name: str = ""
    recipes: tuple = ()
    q: float = 0.75
    K: int = 2
    regressor: str = "ols"
    regressor_params: dict = field(default_factory=dict)
    variance: str = "default"
    gamma_draws: int = 200
    bootstrap_draws: int = 100
    interval: str = "gaussian"

    def __post_init__(self):
        if self.method not in ("dm", "hajek", "ols", "crossfit"):
            raise ConfigError(f"unknown estimator method {self.method!r}")
        if not self.name:
            object.__setattr__(self, "name", self.method)
        if self.variance == "default":
            self.variance = {
                "dm": "neyman",
                "hajek": "none",
                "ols": "plugin",
                "crossfit": "none",
            }[self.method]


@dataclass
class Scenario:
    label: str
    model: object


@dataclass
class CampaignConfig:
    graphs: dict
    estimators: list
    scenarios: list
    pi: float = 0.5
    replications: int = 1000
    level: float = 0.9
    seed: int = 0
    mc_truth_reps: int = 1000
    threads: int = 1
    covariates: dict | None = None


@dataclass
class SimulationReport:
    rows: list

    HEADER = ("scenario", "estimator", "bias", "true_se", "se_ratio",
              "coverage", "failures")

    def write_csv(self, stream) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(self.HEADER)
        for row in self.rows:
            writer.writerow([
                row["scenario"], row["estimator"],
                repr(row["bias"]), repr(row["true_se"]),
                repr(row["se_ratio"]), repr(row["coverage"]),
                row["failures"],
            ])

    def row(self, scenario: str, estimator: str) -> dict:
        for r in self.rows:
            if r["scenario"] == scenario and r["estimator"] == estimator:
                return r
        raise KeyError((scenario, estimator))


@dataclass
class _Prepared:
    """Per-estimator quantities that do not depend on the replicate."""

    spec: EstimatorSpec
    omega: object = None
    gamma: object = None
    x0: object = None
    x1: object = None
    propensity: object = None


def _prepare(config: CampaignConfig):
    prepared = []
    gamma_cache = {}
    g = next(iter(config.graphs.values()))
    for spec in config.estimators:
        prep = _Prepared(spec)
        if spec.method in ("ols", "crossfit"):
            prep.omega = counterfactual_means(config.graphs, spec.recipes,
                                              config.covariates)
            prep.x0, prep.x1 = counterfactual_matrices(config.graphs, spec.recipes,
                                                       config.covariates)
        if spec.method == "ols" and spec.variance == "plugin":
            key = (tuple(r.label for r in spec.recipes), spec.gamma_draws)
            if key not in gamma_cache:
                gamma_cache[key] = mc_gamma(
                    config.graphs, spec.recipes, config.pi,
                    spec.gamma_draws, seed=(config.seed ^ 0x5A5A),
                )
            prep.gamma = gamma_cache[key]
        if spec.method == "hajek":
            prep.propensity = exposure_propensities(g, spec.q, config.pi)
        prepared.append(prep)
    return prepared


def _one_replicate(config: CampaignConfig, prepared, model, s_idx: int, r: int):
    g = next(iter(config.graphs.values()))
    w = bernoulli_assign(g.n, config.pi, stream_rng(config.seed, s_idx, r, 0))
    out = []
    y = None
    for prep in prepared:
        spec = prep.spec
        try:
            if y is None:
                y = gen_response(model, config.graphs, w,
                                 stream_rng(config.seed, s_idx, r, 1))
            tau, se = _estimate(config, prep, w, y, s_idx, r)
            out.append((tau, se, False))
        except NumericalError:
            out.append((math.nan, math.nan, True))
    return out


def _estimate(config: CampaignConfig, prep: _Prepared, w, y, s_idx, r):
    spec = prep.spec
    if spec.method == "dm":
        rep = difference_in_means(w, y)
        se = math.sqrt(neyman_variance(w, y)) if spec.variance == "neyman" else None
    elif spec.method == "hajek":
        g = next(iter(config.graphs.values()))
        prof = exposure_indicators(g, spec.q, w)
        prof.p1, prof.p0 = prep.propensity.p1, prep.propensity.p0
        rep = hajek(y, prof)
        se = None
    elif spec.method == "ols":
        x = build_features(config.graphs, spec.recipes, w, config.covariates)
        fit = ols_fit(x, w, y)
        rep = ols_adjusted_tau(fit, prep.omega)
        if spec.variance == "plugin":
            sig2 = residual_variance(x, w, y, fit)
            se = math.sqrt(plugin_variance(sig2, prep.omega, prep.gamma))
        else:
            se = None
    else:  # crossfit
        x = build_features(config.graphs, spec.recipes, w, config.covariates)
        reg = make_regressor(spec.regressor, **spec.regressor_params)
        fold_seed = int(stream_rng(config.seed, s_idx, r, 2).integers(2**31))
        rep = crossfit_adjusted_tau(reg, spec.K, x, prep.x0, prep.x1, w, y, fold_seed)
        if spec.variance == "bootstrap":
            from .inference import bootstrap_variance

            boot = bootstrap_variance(
                config.graphs, spec.recipes, reg, spec.K, w, y,
                B=spec.bootstrap_draws,
                seed=int(stream_rng(config.seed, s_idx, r, 3).integers(2**31)),
                interval=spec.interval, level=config.level,
                covariates=config.covariates,
            )
            se = boot.se
        else:
            se = None
    return rep.tau_hat, se


def _replicate_chunk(args):
    config, prepared, model, s_idx, indices = args
    return [(r, _one_replicate(config, prepared, model, s_idx, r)) for r in indices]


def run_experiment(config: CampaignConfig) -> SimulationReport:
    """Run every scenario x estimator cell and aggregate the usual columns.

    Deterministic given the master seed and independent of the worker
    count: every replicate derives its RNG streams from (seed, scenario,
    replicate).
    """
    names = [spec.name for spec in config.estimators]
    if len(set(names)) != len(names):
        raise ConfigError("estimator names must be unique")
    rows = []
    for s_idx, scenario in enumerate(config.scenarios):
        model = scenario.model
        truth = true_gate_analytic(model, config.graphs)
        if truth is None:
            truth, _ = true_gate_mc(model, config.graphs, config.mc_truth_reps,
                                    seed=(config.seed ^ 0x7757))
        prepared = _prepare(config)
        R = config.replications
        results = [None] * R
        if config.threads and config.threads > 1:
            chunks = np.array_split(np.arange(R), config.threads * 4)
            tasks = [
                (config, prepared, model, s_idx, chunk.tolist())
                for chunk in chunks if len(chunk)
            ]
            with concurrent.futures.ProcessPoolExecutor(config.threads) as pool:
                for done in pool.map(_replicate_chunk, tasks):
                    for r, res in done:
                        results[r] = res
        else:
            for r in range(R):
                results[r] = _one_replicate(config, prepared, model, s_idx, r)
        for e_idx, spec in enumerate(config.estimators):
            taus = np.array([results[r][e_idx][0] for r in range(R)])
            ses = np.array([
                results[r][e_idx][1] if results[r][e_idx][1] is not None else math.nan
                for r in range(R)
            ])
            fails = sum(results[r][e_idx][2] for r in range(R))
            ok = ~np.isnan(taus)
            true_se = float(taus[ok].std(ddof=1)) if ok.sum() > 1 else math.nan
            bias = float(taus[ok].mean() - truth) if ok.any() else math.nan
            if np.isnan(ses[ok]).all():
                se_ratio = math.nan
                coverage = math.nan
            else:
                se_ratio = float(np.nanmean(ses[ok]) / true_se)
                z_ci = np.array([
                    confidence_interval(t, s, config.level)
                    for t, s in zip(taus[ok], ses[ok])
                ])
                coverage = float(
                    np.mean((z_ci[:, 0] <= truth) & (truth <= z_ci[:, 1]))
                )
            rows.append({
                "scenario": scenario.label,
                "estimator": spec.name,
                "bias": bias,
                "true_se": true_se,
                "se_ratio": se_ratio,
                "coverage": coverage,
                "failures": int(fails),
                "truth": truth,
                "flagged": fails > 0.1 * R,
            })
    return SimulationReport(rows)
