"""Pluggable regressors for the cross-fitted adjustment estimator.

Each regressor has fit(X, y) -> FittedModel with a predict(X) method.
X never carries an intercept column; linear models add their own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SingularDesignError


def _with_intercept(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(len(X)), X])


@dataclass
class LinearModel:
    coef: np.ndarray  # intercept first

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _with_intercept(np.atleast_2d(X)) @ self.coef


class OLSRegressor:
    """Plain least squares with intercept."""

    name = "ols"

    def fit(self, X: np.ndarray, y: np.ndarray) -> LinearModel:
        Z = _with_intercept(X)
        coef, _, rank, _ = np.linalg.lstsq(Z, y, rcond=None)
        if rank < Z.shape[1]:
            raise SingularDesignError("rank-deficient training design")
        return LinearModel(coef)


class RidgeRegressor:
    """Ridge with unpenalized intercept; default lambda is trace-scaled."""

    name = "ridge"

    def __init__(self, lam: float | None = None):
        self.lam = lam

    def fit(self, X: np.ndarray, y: np.ndarray) -> LinearModel:
        Z = _with_intercept(X)
        gram = Z.T @ Z
        p = Z.shape[1]
        if self.lam is None:
            lam = 1e-3 * np.trace(gram[1:, 1:]) / max(p - 1, 1)
        else:
            lam = self.lam
        penalty = lam * np.eye(p)
        penalty[0, 0] = 0.0
        coef = np.linalg.solve(gram + penalty, Z.T @ y)
        return LinearModel(coef)


@dataclass
class KNNModel:
    X_train: np.ndarray
    y_train: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    k: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        Xs = (np.atleast_2d(X) - self.mean) / self.scale
        # duplicate query rows share their neighbor search
        uniq, inverse = np.unique(Xs, axis=0, return_inverse=True)
        if len(uniq) < len(Xs):
            return self._predict_rows(uniq)[inverse.ravel()]
        return self._predict_rows(Xs)

    def _predict_rows(self, Xs: np.ndarray) -> np.ndarray:
        Ts = (self.X_train - self.mean) / self.scale
        d2 = (
            (Xs * Xs).sum(axis=1)[:, None]
            - 2.0 * Xs @ Ts.T
            + (Ts * Ts).sum(axis=1)[None, :]
        )
        nt = Ts.shape[0]
        k = self.k
        # Select a candidate superset by partial partition, then order the
        # candidates by (distance, training index) so exact-distance ties
        # resolve toward the lowest index, as a full stable sort would.
        m = min(nt, k + 64)
        if m < nt:
            cand = np.argpartition(d2, m - 1, axis=1)[:, :m]
        else:
            cand = np.broadcast_to(np.arange(nt), d2.shape).copy()
        cd = np.take_along_axis(d2, cand, axis=1)
        order = np.lexsort((cand, cd), axis=1)[:, :k]
        top = np.take_along_axis(cand, order, axis=1)
        out = self.y_train[top].mean(axis=1)
        if m < nt:
            # a boundary tie could extend past the candidate set; redo those
            # rows with the full stable sort
            kth = np.take_along_axis(d2, top[:, k - 1 : k], axis=1)[:, 0]
            for r in np.nonzero(cd.max(axis=1) <= kth)[0]:
                full = np.argsort(d2[r], kind="stable")[:k]
                out[r] = self.y_train[full].mean()
        return out


class KNNRegressor:
    """Mean of the k nearest training rows under standardized Euclidean distance.

    Standardization statistics come from the training fold only; distance
    ties break toward the lowest training index for determinism.
    """

    name = "knn"

    def __init__(self, k: int = 20):
        self.k = k

    def fit(self, X: np.ndarray, y: np.ndarray) -> KNNModel:
        X = np.atleast_2d(X)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        k = min(self.k, len(y))
        return KNNModel(X.copy(), np.asarray(y, dtype=float).copy(), mean, scale, k)


@dataclass
class LogisticModel:
    coef: np.ndarray
    penalized_fallback: bool = False

    def predict(self, X: np.ndarray) -> np.ndarray:
        z = _with_intercept(np.atleast_2d(X)) @ self.coef
        return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


class LogisticRegressor:
    """Damped-Newton logistic regression for binary responses.

    Predictions are on the probability scale.  If the fit fails to converge
    (separation), re-fits with a small ridge penalty and flags the model.
    """

    name = "logistic"

    def __init__(self, tol: float = 1e-8, max_iter: int = 100):
        self.tol = tol
        self.max_iter = max_iter

    def _newton(self, Z, y, lam):
        p = Z.shape[1]
        coef = np.zeros(p)
        for _ in range(self.max_iter):
            eta = np.clip(Z @ coef, -30, 30)
            mu = 1.0 / (1.0 + np.exp(-eta))
            grad = Z.T @ (mu - y) + lam * coef
            if np.linalg.norm(grad) < self.tol:
                return coef, True
            wdiag = np.maximum(mu * (1 - mu), 1e-10)
            hess = (Z * wdiag[:, None]).T @ Z + lam * np.eye(p)
            step = np.linalg.solve(hess, grad)
            # halve the step until the penalized deviance stops increasing
            damp = 1.0
            cur = self._loss(Z, y, coef, lam)
            for _ in range(30):
                cand = coef - damp * step
                if self._loss(Z, y, cand, lam) <= cur:
                    break
                damp /= 2.0
            coef = coef - damp * step
        return coef, False

    @staticmethod
    def _loss(Z, y, coef, lam):
        eta = np.clip(Z @ coef, -30, 30)
        return float(
            np.sum(np.log1p(np.exp(eta)) - y * eta) + 0.5 * lam * coef @ coef
        )

    def fit(self, X: np.ndarray, y: np.ndarray) -> LogisticModel:
        y = np.asarray(y, dtype=float)
        if not np.all((y == 0) | (y == 1)):
            raise ConfigError("logistic regression needs a binary response")
        Z = _with_intercept(np.atleast_2d(X))
        coef, ok = self._newton(Z, y, lam=0.0)
        # fitted probabilities numerically at 0/1 mean the unpenalized MLE
        # diverged (separation); fall back to a lightly penalized fit
        saturated = (not np.all(np.isfinite(coef))) or np.abs(Z @ coef).max() >= 15
        if ok and not saturated:
            return LogisticModel(coef)
        coef, _ = self._newton(Z, y, lam=1e-4)
        return LogisticModel(coef, penalized_fallback=True)


_REGRESSORS = {
    "ols": OLSRegressor,
    "ridge": RidgeRegressor,
    "knn": KNNRegressor,
    "logistic": LogisticRegressor,
}


def make_regressor(name: str, **hyperparams):
    try:
        return _REGRESSORS[name](**hyperparams)
    except KeyError:
        raise ConfigError(f"unknown regressor {name!r}") from None
