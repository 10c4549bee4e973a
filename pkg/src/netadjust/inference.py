"""Variance and interval estimation.

Monte-Carlo moments of the inverse per-arm Gram matrices, the plug-in
variance for the OLS-adjusted estimator, the Neyman variance for the
difference in means, a design-resampling residual bootstrap for the
cross-fitted estimator, and the closed-form asymptotic variance used as an
oracle in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .design import TreatmentVector, bernoulli_assign, stream_rng
from .errors import (
    DegenerateArmError,
    EstimationFailureError,
    InvalidParameterError,
    NumericalError,
)
from .estimators import (
    CrossFitResult,
    SeparateSlopesFit,
    crossfit_fit,
    crossfit_tau_from_fit,
    _values,
)
from .features import CounterfactualMeans, build_features, counterfactual_matrices
from .graph import Graph


@dataclass
class GammaEstimate:
    """Monte-Carlo moments of the inverse per-arm Gram matrices.

    gamma0/gamma1 estimate E[(X_w' X_w)^-1] on the intercept-augmented
    design, as used by the plug-in variance.  The per-unit normalized
    moments are kept for diagnostics.
    """

    gamma0: np.ndarray
    gamma1: np.ndarray
    normalized0: np.ndarray
    normalized1: np.ndarray
    B: int
    singular_skips: int


@dataclass
class AsymptoticInputs:
    """Population quantities entering the closed-form asymptotic variance."""

    sigma2: float
    pi: float
    omega0: np.ndarray  # slope-only, no intercept entry
    omega1: np.ndarray
    mu_x: np.ndarray
    sigma_x: np.ndarray


def mc_gamma(graphs, recipes, pi: float, B: int, seed, covariates=None) -> GammaEstimate:
    """Estimate the inverse-Gram moments by redrawing the design B times.

    Each arm accumulates over its own nonsingular replicates, so Gamma_w
    estimates E[(X_w' X_w)^{-1} | nonsingular]; replicates where an arm's
    Gram matrix is singular are skipped for that arm and counted.
    """
    if B < 1:
        raise InvalidParameterError("B must be >= 1")
    if isinstance(graphs, Graph):
        graphs = {"main": graphs}
    n = next(iter(graphs.values())).n
    p1 = len(recipes) + 1
    acc = [np.zeros((p1, p1)) for _ in range(4)]  # g0, g1, norm0, norm1
    used = [0, 0]
    skips = 0
    for b in range(B):
        w = bernoulli_assign(n, pi, stream_rng(seed, b))
        x = build_features(graphs, recipes, w, covariates).values
        z = np.column_stack([np.ones(n), x])
        trt = w.w == 1
        skipped_any = False
        for arm, mask in enumerate((~trt, trt)):
            nb = int(mask.sum())
            try:
                if nb < p1:
                    raise np.linalg.LinAlgError
                gram = z[mask].T @ z[mask]
                if np.linalg.cond(gram) > 1e12:
                    raise np.linalg.LinAlgError
                inv = np.linalg.inv(gram)
            except np.linalg.LinAlgError:
                skipped_any = True
                continue
            acc[arm] += inv
            acc[2 + arm] += inv * nb  # inverse of the per-unit-normalized Gram
            used[arm] += 1
        if skipped_any:
            skips += 1
    if used[0] == 0 or used[1] == 0:
        raise EstimationFailureError(f"all {B} Monte-Carlo replicates were singular")
    return GammaEstimate(
        acc[0] / used[0], acc[1] / used[1], acc[2] / used[0], acc[3] / used[1],
        B=B, singular_skips=skips,
    )


def residual_variance(X, w: TreatmentVector, y: np.ndarray,
                      fit: SeparateSlopesFit) -> float:
    """Mean squared residual over all n units (divisor n)."""
    y = np.asarray(y, dtype=np.float64)
    resid = y - fit.fitted
    return float(np.mean(resid * resid))


def plugin_variance(sigma2_hat: float, om: CounterfactualMeans,
                    gam: GammaEstimate) -> float:
    """sigma2 * (omega0' Gamma0 omega0 + omega1' Gamma1 omega1), clamped at 0."""
    v = sigma2_hat * (
        om.omega0 @ gam.gamma0 @ om.omega0 + om.omega1 @ gam.gamma1 @ om.omega1
    )
    return max(float(v), 0.0)


def neyman_variance(w: TreatmentVector, y: np.ndarray) -> float:
    """Conservative two-sample variance S0^2/N0 + S1^2/N1."""
    y = np.asarray(y, dtype=np.float64)
    trt = w.w == 1
    if trt.sum() < 2 or (~trt).sum() < 2:
        raise DegenerateArmError("Neyman variance needs >= 2 units per arm")
    s1 = y[trt].var(ddof=1)
    s0 = y[~trt].var(ddof=1)
    return float(s0 / (~trt).sum() + s1 / trt.sum())


def asymptotic_variance(inp: AsymptoticInputs) -> float:
    """Closed-form limit of n * Var(tau_hat) for the linear adjustment."""
    sig = np.atleast_2d(np.asarray(inp.sigma_x, dtype=np.float64))
    try:
        inv = np.linalg.inv(sig)
    except np.linalg.LinAlgError:
        raise NumericalError("feature covariance is singular") from None
    if np.linalg.cond(sig) > 1e12:
        raise NumericalError("feature covariance is numerically singular")
    d0 = np.atleast_1d(inp.omega0 - inp.mu_x)
    d1 = np.atleast_1d(inp.omega1 - inp.mu_x)
    return float(
        inp.sigma2
        * (
            1.0 / (inp.pi * (1.0 - inp.pi))
            + (d0 @ inv @ d0) / (1.0 - inp.pi)
            + (d1 @ inv @ d1) / inp.pi
        )
    )


def confidence_interval(tau_hat: float, se: float, level: float,
                        style: str = "gaussian", draws=None):
    """Symmetric Gaussian interval or empirical percentile interval."""
    if not 0.0 < level < 1.0:
        raise InvalidParameterError("level must lie in (0, 1)")
    if style == "gaussian":
        z = stats.norm.ppf(0.5 + level / 2.0)
        return (tau_hat - z * se, tau_hat + z * se)
    if style == "percentile":
        if draws is None or len(draws) == 0:
            raise InvalidParameterError("percentile interval requires draws")
        alpha = (1.0 - level) / 2.0
        lo, hi = np.quantile(np.asarray(draws, dtype=np.float64), [alpha, 1.0 - alpha])
        return (float(lo), float(hi))
    raise InvalidParameterError(f"unknown interval style {style!r}")


@dataclass
class BootstrapResult:
    se: float
    ci: tuple[float, float]
    draws: np.ndarray
    skipped: int = 0
    tau_hat: float = 0.0


def bootstrap_variance(graphs, recipes, reg, K: int, w: TreatmentVector,
                       y: np.ndarray, B: int, seed,
                       interval: str = "gaussian", level: float = 0.9,
                       covariates=None, prior_fit: CrossFitResult | None = None,
                       max_skip_frac: float = 0.2) -> BootstrapResult:
    """Design-resampling residual bootstrap for the cross-fitted estimator.

    Per replicate: redraw the treatment vector from the design, rebuild the
    features, resample the observed residuals i.i.d., synthesize responses
    from the initially fitted per-fold models, and recompute the estimator
    with a fresh cross-fit.
    """
    if B < 2:
        raise InvalidParameterError("bootstrap needs B >= 2")
    if isinstance(graphs, Graph):
        graphs = {"main": graphs}
    n = next(iter(graphs.values())).n
    x_obs = build_features(graphs, recipes, w, covariates)
    x0, x1 = counterfactual_matrices(graphs, recipes, covariates)
    if prior_fit is None:
        prior_fit = crossfit_fit(reg, K, x_obs, w, y, seed)
    point = crossfit_tau_from_fit(prior_fit, x0, x1)
    resid = prior_fit.residuals
    draws = []
    skipped = 0
    y_arr = np.asarray(y, dtype=np.float64)
    binary = bool(np.all((y_arr == 0) | (y_arr == 1)))
    for b in range(B):
        rng = stream_rng(seed, b, 0xB0)
        wb = bernoulli_assign(n, w.pi, rng)
        xb = build_features(graphs, recipes, wb, covariates)
        mu_b = (
            wb.w * prior_fit.predict_arm(1, _values(xb))
            + (1.0 - wb.w) * prior_fit.predict_arm(0, _values(xb))
        )
        if binary:
            # residual resampling would break the 0/1 support, so draw the
            # synthetic response from the fitted probability surface instead
            yb = (rng.random(n) < np.clip(mu_b, 0.0, 1.0)).astype(np.float64)
        else:
            yb = mu_b + rng.choice(resid, size=n, replace=True)
        fold_seed = int(stream_rng(seed, b, 0xF0).integers(2**31))
        try:
            res_b = crossfit_fit(reg, K, xb, wb, yb, fold_seed)
            rep = crossfit_tau_from_fit(res_b, x0, x1)
        except NumericalError:
            skipped += 1
            continue
        draws.append(rep.tau_hat)
    if skipped > max_skip_frac * B:
        raise EstimationFailureError(
            f"{skipped}/{B} bootstrap replicates failed"
        )
    draws = np.asarray(draws)
    se = float(draws.std(ddof=1))
    ci = confidence_interval(point.tau_hat, se, level, interval, draws)
    return BootstrapResult(se, ci, draws, skipped, tau_hat=point.tau_hat)
