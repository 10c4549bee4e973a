"""Interference feature construction and counterfactual feature means.

A recipe is a declarative column constructor: fraction of treated units in
the 1- or 2-step neighborhood, the raw count of such units, powers of the
degree-normalized adjacency applied to the treatment vector, or a static
per-unit covariate.  Graph-based recipes depend on the indirect treatments
only, so flipping a unit's own assignment never changes its own row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import TreatmentVector, global_vector
from .errors import ConfigError, InvalidParameterError
from .graph import Graph, adjacency_sum, normalized_adjacency_apply
from .kernels import neighbor_sum

GRAPH_KINDS = ("frac_treated", "num_treated", "adj_power")
KINDS = GRAPH_KINDS + ("covariate",)


@dataclass(frozen=True)
class FeatureRecipe:
    """One feature column.

    kind: one of frac_treated / num_treated / adj_power / covariate.
    step: neighborhood step (1 or 2) or adjacency power (>= 1).
    name: covariate column name (covariate kind only).
    graph: key of the graph this recipe binds to.
    """

    kind: str
    step: int = 1
    name: str = ""
    graph: str = "main"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown feature kind {self.kind!r}")
        if self.kind in ("frac_treated", "num_treated") and self.step not in (1, 2):
            raise InvalidParameterError("neighborhood step must be 1 or 2")
        if self.kind == "adj_power" and self.step < 1:
            raise InvalidParameterError("adjacency power must be >= 1")
        if self.kind == "covariate" and not self.name:
            raise ConfigError("covariate recipe needs a column name")

    @property
    def label(self) -> str:
        if self.kind == "frac_treated":
            return f"frac{self.step}"
        if self.kind == "num_treated":
            return f"num{self.step}"
        if self.kind == "adj_power":
            return f"pow{self.step}"
        return f"cov:{self.name}"

    @classmethod
    def parse(cls, spec: str, graph: str = "main") -> "FeatureRecipe":
        """Parse shorthand like 'frac1', 'num2', 'pow3', 'cov:age'."""
        spec = spec.strip()
        if spec.startswith("cov:"):
            return cls("covariate", name=spec[4:], graph=graph)
        for prefix, kind in (
            ("frac", "frac_treated"),
            ("num", "num_treated"),
            ("pow", "adj_power"),
        ):
            if spec.startswith(prefix) and spec[len(prefix):].isdigit():
                return cls(kind, step=int(spec[len(prefix):]), graph=graph)
        raise ConfigError(f"cannot parse feature recipe {spec!r}")


@dataclass(frozen=True)
class FeatureMatrix:
    """Realized n x p feature values; the intercept is added by estimators."""

    values: np.ndarray
    recipes: tuple

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CounterfactualMeans:
    """Exact mean feature vectors under global control / treatment.

    Both carry a leading intercept entry of 1.
    """

    omega0: np.ndarray
    omega1: np.ndarray


def _neighbor_csr(g: Graph, step: int):
    if step == 1:
        return g.indptr, g.indices
    return g.two_step_csr()


def _column(recipe: FeatureRecipe, graphs, w: np.ndarray, covariates) -> np.ndarray:
    if recipe.kind == "covariate":
        if covariates is None or recipe.name not in covariates:
            raise ConfigError(f"unknown covariate column {recipe.name!r}")
        return np.asarray(covariates[recipe.name], dtype=np.float64)
    if recipe.graph not in graphs:
        raise ConfigError(f"unknown graph {recipe.graph!r}")
    g = graphs[recipe.graph]
    if recipe.kind == "adj_power":
        out = w
        for _ in range(recipe.step):
            out = normalized_adjacency_apply(g, out)
        return out
    indptr, indices = _neighbor_csr(g, recipe.step)
    counts = neighbor_sum(indptr, indices, np.ascontiguousarray(w, dtype=np.float64))
    if recipe.kind == "num_treated":
        return counts
    sizes = np.diff(indptr)
    out = np.zeros(g.n, dtype=np.float64)
    nz = sizes > 0
    out[nz] = counts[nz] / sizes[nz]
    return out


def build_features(
    graphs,
    recipes,
    w: TreatmentVector | np.ndarray,
    covariates=None,
) -> FeatureMatrix:
    """Realize the feature matrix for one treatment vector.

    ``graphs`` is a dict of named Graph objects (a bare Graph is accepted
    and bound to the name 'main').  Column order follows recipe order.
    """
    if isinstance(graphs, Graph):
        graphs = {"main": graphs}
    wv = w.w if isinstance(w, TreatmentVector) else np.asarray(w, dtype=np.float64)
    cols = [_column(r, graphs, wv, covariates) for r in recipes]
    values = np.column_stack(cols) if cols else np.empty((len(wv), 0))
    return FeatureMatrix(values, tuple(recipes))


def counterfactual_matrices(graphs, recipes, covariates=None):
    """Feature matrices realized at the global control / treatment vectors."""
    if isinstance(graphs, Graph):
        graphs = {"main": graphs}
    n = next(iter(graphs.values())).n
    x0 = build_features(graphs, recipes, global_vector(n, 0), covariates)
    x1 = build_features(graphs, recipes, global_vector(n, 1), covariates)
    return x0, x1


def counterfactual_means(graphs, recipes, covariates=None) -> CounterfactualMeans:
    """Exact omega vectors: population feature means under the two global arms.

    Static covariates contribute their observed mean to both vectors, so
    with covariates only this reduces to the classical adjusted contrast.
    """
    x0, x1 = counterfactual_matrices(graphs, recipes, covariates)
    omega0 = np.concatenate([[1.0], x0.values.mean(axis=0)]) if x0.p else np.array([1.0])
    omega1 = np.concatenate([[1.0], x1.values.mean(axis=0)]) if x1.p else np.array([1.0])
    return CounterfactualMeans(omega0, omega1)
