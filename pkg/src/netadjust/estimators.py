"""Point estimators of the global average treatment effect.

Difference in means, exposure-model inverse propensity weighting
(Horvitz-Thompson and Hajek) with exact neighborhood-threshold
propensities, separate-slopes OLS adjustment toward the global
counterfactual feature means, and the cross-fitted variant that accepts
arbitrary regressors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .design import TreatmentVector
from .errors import (
    DegenerateArmError,
    InvalidParameterError,
    PositivityViolationError,
    SingularDesignError,
)
from .features import CounterfactualMeans, FeatureMatrix
from .graph import Graph, adjacency_sum

CONDITION_LIMIT = 1e8


@dataclass
class EstimateReport:
    """Point estimate with optional uncertainty and method diagnostics."""

    tau_hat: float
    method: str
    se: float | None = None
    ci: tuple[float, float] | None = None
    level: float | None = None
    diagnostics: dict = field(default_factory=dict)


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=np.float64)


def _arms(w: TreatmentVector):
    treated = w.w == 1
    return ~treated, treated


def difference_in_means(w: TreatmentVector, y: np.ndarray) -> EstimateReport:
    """Mean treated response minus mean control response."""
    ctrl, trt = _arms(w)
    if not trt.any() or not ctrl.any():
        raise DegenerateArmError("difference in means needs units in both arms")
    y = np.asarray(y, dtype=np.float64)
    return EstimateReport(float(y[trt].mean() - y[ctrl].mean()), method="dm")


# ---------------------------------------------------------------------------
# Exposure modeling


@dataclass
class ExposureProfile:
    """Neighborhood-threshold exposure indicators and exact propensities."""

    q: float
    e1: np.ndarray | None = None
    e0: np.ndarray | None = None
    p1: np.ndarray | None = None
    p0: np.ndarray | None = None


def _snap(x: float) -> float:
    """Guard threshold arithmetic against float noise like 5*0.6=3.0000000004."""
    r = round(x)
    return float(r) if abs(x - r) < 1e-9 else x


def exposure_thresholds(d: np.ndarray, q: float):
    """Per-unit count thresholds for the two exposure conditions.

    Treatment exposure means a treated-neighbor count >= min(floor(d*q)+1, d):
    strictly more than a fraction q, capped at d so that q = 1 means "all
    neighbors treated" rather than an impossible event.  Control exposure
    means count <= floor(d*(1-q)).  Degree-0 units are vacuously exposed on
    both sides.
    """
    d = np.asarray(d)
    k1 = np.array([min(int(np.floor(_snap(di * q))) + 1, int(di)) for di in d])
    k0 = np.array([int(np.floor(_snap(di * (1.0 - q)))) for di in d])
    return k1, k0


def _check_q(q: float):
    if not 0.5 < q <= 1.0:
        raise InvalidParameterError("q must lie in (0.5, 1]")


def exposure_propensities(g: Graph, q: float, pi: float) -> ExposureProfile:
    """Exact exposure propensities under the Bernoulli design.

    p1_i = pi * P(Bin(d_i, pi) >= min(floor(d_i q) + 1, d_i)) and
    p0_i = (1 - pi) * P(Bin(d_i, pi) <= floor(d_i (1 - q))), evaluated with
    the binomial CDF.  These match the indicator events exactly, including
    the boundary case where d_i * q is an integer, and stay positive for
    every degree.
    """
    _check_q(q)
    if not 0.0 < pi < 1.0:
        raise InvalidParameterError("pi must lie strictly between 0 and 1")
    d = g.degrees
    k1, k0 = exposure_thresholds(d, q)
    # sf(k-1) = P(X >= k); cdf handles the control side directly
    p1 = pi * stats.binom.sf(k1 - 1, d, pi)
    p0 = (1.0 - pi) * stats.binom.cdf(k0, d, pi)
    return ExposureProfile(q=q, p1=p1, p0=p0)


def exposure_indicators(g: Graph, q: float, w: TreatmentVector) -> ExposureProfile:
    """Realized exposure indicators for one assignment.

    A unit is exposed to global treatment when it is treated and its treated
    neighbor count reaches the q threshold; symmetrically for control.
    """
    _check_q(q)
    counts = adjacency_sum(g, w.w)
    k1, k0 = exposure_thresholds(g.degrees, q)
    treated = w.w == 1
    e1 = treated & (counts >= k1 - 1e-9)
    e0 = ~treated & (counts <= k0 + 1e-9)
    return ExposureProfile(q=q, e1=e1, e0=e0)


def exposure_profile(g: Graph, q: float, w: TreatmentVector) -> ExposureProfile:
    """Indicators and propensities together."""
    prof = exposure_propensities(g, q, w.pi)
    ind = exposure_indicators(g, q, w)
    prof.e1, prof.e0 = ind.e1, ind.e0
    return prof


def horvitz_thompson(y: np.ndarray, profile: ExposureProfile) -> EstimateReport:
    """Unnormalized inverse propensity contrast over exposed units."""
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    for e, p, side in ((profile.e1, profile.p1, "treatment"),
                       (profile.e0, profile.p0, "control")):
        if np.any(e & (p <= 0)):
            raise PositivityViolationError(
                f"exposed unit with zero {side} propensity"
            )
    t1 = np.sum(np.where(profile.e1, y / np.where(profile.p1 > 0, profile.p1, 1.0), 0.0))
    t0 = np.sum(np.where(profile.e0, y / np.where(profile.p0 > 0, profile.p0, 1.0), 0.0))
    report = EstimateReport(float((t1 - t0) / n), method="ht")
    report.diagnostics = {
        "n_exposed_1": int(profile.e1.sum()),
        "n_exposed_0": int(profile.e0.sum()),
    }
    return report


def hajek(y: np.ndarray, profile: ExposureProfile) -> EstimateReport:
    """Self-normalized inverse propensity contrast; arm weights sum to one."""
    y = np.asarray(y, dtype=np.float64)
    n1, n0 = int(profile.e1.sum()), int(profile.e0.sum())
    if n1 == 0 or n0 == 0:
        raise DegenerateArmError(
            f"no exposed units in an arm (treatment={n1}, control={n0})"
        )
    terms = []
    for e, p in ((profile.e1, profile.p1), (profile.e0, profile.p0)):
        if np.any(e & (p <= 0)):
            raise PositivityViolationError("exposed unit with zero propensity")
        inv = np.where(e, 1.0 / np.where(p > 0, p, 1.0), 0.0)
        terms.append(float(np.sum(inv * y) / np.sum(inv)))
    report = EstimateReport(terms[0] - terms[1], method="hajek")
    report.diagnostics = {"n_exposed_1": n1, "n_exposed_0": n0}
    return report


# ---------------------------------------------------------------------------
# Separate-slopes OLS adjustment


@dataclass
class SeparateSlopesFit:
    """Per-arm OLS coefficients, intercept first."""

    beta0: np.ndarray
    beta1: np.ndarray
    rank_ok: bool
    cond0: float
    cond1: float
    x: np.ndarray
    w: TreatmentVector
    y: np.ndarray

    @property
    def fitted(self) -> np.ndarray:
        z = np.column_stack([np.ones(len(self.y)), self.x])
        return np.where(self.w.w == 1, z @ self.beta1, z @ self.beta0)


def _arm_solve(Z: np.ndarray, y: np.ndarray, arm: str):
    if Z.shape[0] < Z.shape[1]:
        raise SingularDesignError(
            f"{arm} arm has {Z.shape[0]} units for {Z.shape[1]} coefficients"
        )
    cond = np.linalg.cond(Z)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularDesignError(
            f"{arm} arm design condition number {cond:.3g} exceeds {CONDITION_LIMIT:.0e}"
        )
    qmat, rmat = np.linalg.qr(Z)
    beta = np.linalg.solve(rmat, qmat.T @ y)
    return beta, float(cond)


def ols_fit(X, w: TreatmentVector, y: np.ndarray) -> SeparateSlopesFit:
    """Fit separate per-arm least squares with an intercept column added."""
    x = _values(X)
    y = np.asarray(y, dtype=np.float64)
    ctrl, trt = _arms(w)
    if not trt.any() or not ctrl.any():
        raise DegenerateArmError("OLS adjustment needs units in both arms")
    z = np.column_stack([np.ones(len(y)), x])
    beta0, cond0 = _arm_solve(z[ctrl], y[ctrl], "control")
    beta1, cond1 = _arm_solve(z[trt], y[trt], "treatment")
    return SeparateSlopesFit(beta0, beta1, True, cond0, cond1, x, w, y)


def ols_adjusted_tau(fit: SeparateSlopesFit, om: CounterfactualMeans) -> EstimateReport:
    """Difference of predicted means at the global counterfactual features."""
    if len(om.omega1) != len(fit.beta1) or len(om.omega0) != len(fit.beta0):
        raise InvalidParameterError("omega length does not match coefficient length")
    tau = float(om.omega1 @ fit.beta1 - om.omega0 @ fit.beta0)
    return EstimateReport(
        tau,
        method="ols_adjusted",
        diagnostics={"cond0": fit.cond0, "cond1": fit.cond1},
    )


def estimator_weights(X, w: TreatmentVector, om: CounterfactualMeans):
    """Per-unit response weights (a0, a1) with tau = a1'y1 - a0'y0."""
    x = _values(X)
    ctrl, trt = _arms(w)
    z = np.column_stack([np.ones(len(x)), x])
    weights = []
    for mask, omega, arm in ((ctrl, om.omega0, "control"), (trt, om.omega1, "treatment")):
        zw = z[mask]
        if zw.shape[0] < zw.shape[1]:
            raise SingularDesignError(f"{arm} arm is rank deficient")
        cond = np.linalg.cond(zw)
        if not np.isfinite(cond) or cond > CONDITION_LIMIT:
            raise SingularDesignError(f"{arm} arm condition number {cond:.3g}")
        weights.append(np.linalg.solve(zw.T @ zw, omega) @ zw.T)
    return weights[0], weights[1]


# ---------------------------------------------------------------------------
# Cross-fitted adjustment


@dataclass
class CrossFitResult:
    """Fold assignment, per-fold per-arm models, and observed-data predictions."""

    fold_of: np.ndarray
    models0: list
    models1: list
    mu0_obs: np.ndarray
    mu1_obs: np.ndarray
    w: TreatmentVector
    y: np.ndarray
    in_sample: bool

    @property
    def residuals(self) -> np.ndarray:
        return self.y - np.where(self.w.w == 1, self.mu1_obs, self.mu0_obs)

    def predict_arm(self, arm: int, x: np.ndarray) -> np.ndarray:
        """Per-unit predictions at new feature rows via each unit's fold model."""
        models = self.models1 if arm == 1 else self.models0
        out = np.empty(len(x))
        for f, model in enumerate(models):
            idx = self.fold_of == f
            if idx.any():
                out[idx] = model.predict(x[idx])
        return out


def crossfit_fit(reg, K: int, X, w: TreatmentVector, y: np.ndarray, seed,
                 max_retries: int = 10) -> CrossFitResult:
    """Train per-arm models on K folds; predictions for a unit come from the
    models trained without its fold.  K=1 trains in sample."""
    if K < 1:
        raise InvalidParameterError("fold count must be >= 1")
    x = _values(X)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    ctrl, trt = _arms(w)
    if not trt.any() or not ctrl.any():
        raise DegenerateArmError("cross-fitting needs units in both arms")
    last_err = None
    for attempt in range(max_retries):
        rng = np.random.default_rng(
            np.random.SeedSequence((int(seed), attempt, 0xCF))
        )
        if K == 1:
            fold_of = np.zeros(n, dtype=np.int64)
        else:
            fold_of = rng.permutation(np.arange(n) % K)
        try:
            models0, models1 = [], []
            for f in range(K):
                train = np.ones(n, dtype=bool) if K == 1 else fold_of != f
                for mask, models in ((train & ctrl, models0), (train & trt, models1)):
                    if not mask.any():
                        raise DegenerateArmError(f"fold {f} has an empty training arm")
                    models.append(reg.fit(x[mask], y[mask]))
            break
        except (DegenerateArmError, SingularDesignError) as err:
            last_err = err
    else:
        raise type(last_err)(f"cross-fit folding failed after {max_retries} tries: {last_err}")
    res = CrossFitResult(
        fold_of, models0, models1,
        mu0_obs=np.empty(n), mu1_obs=np.empty(n),
        w=w, y=y, in_sample=(K == 1),
    )
    res.mu0_obs = res.predict_arm(0, x)
    res.mu1_obs = res.predict_arm(1, x)
    return res


def crossfit_tau_from_fit(res: CrossFitResult, X0, X1) -> EstimateReport:
    """Counterfactual-mean term plus per-arm residual-mean corrections."""
    x0, x1 = _values(X0), _values(X1)
    ctrl, trt = _arms(res.w)
    cf_term = float(np.mean(res.predict_arm(1, x1) - res.predict_arm(0, x0)))
    resid1 = float(np.mean(res.y[trt] - res.mu1_obs[trt]))
    resid0 = float(np.mean(res.y[ctrl] - res.mu0_obs[ctrl]))
    return EstimateReport(
        cf_term + resid1 - resid0,
        method="crossfit",
        diagnostics={"in_sample": res.in_sample, "folds": len(res.models0)},
    )


def crossfit_adjusted_tau(reg, K: int, X, X0, X1, w: TreatmentVector,
                          y: np.ndarray, seed) -> EstimateReport:
    """Cross-fitted adjustment: fit, then evaluate at the counterfactual rows."""
    res = crossfit_fit(reg, K, X, w, y, seed)
    return crossfit_tau_from_fit(res, X0, X1)
