"""Command-line surface: estimate on field data, run simulation campaigns,
dump exposure propensities, and dump feature distributions.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import __version__
from .design import TreatmentVector, bernoulli_assign, global_vector, stream_rng
from .errors import ConfigError, DataError, NetAdjustError
from .estimators import (
    crossfit_fit,
    crossfit_tau_from_fit,
    difference_in_means,
    exposure_profile,
    exposure_propensities,
    hajek,
    horvitz_thompson,
    ols_adjusted_tau,
    ols_fit,
)
from .features import FeatureRecipe, build_features, counterfactual_matrices, counterfactual_means
from .graph import Graph, load_edge_list, watts_strogatz
from .inference import (
    bootstrap_variance,
    confidence_interval,
    mc_gamma,
    neyman_variance,
    plugin_variance,
    residual_variance,
)
from .predictors import make_regressor
from .simulate import (
    AvgAggregateNonlinear,
    CampaignConfig,
    DynamicLIM,
    EquilibriumLIM,
    EstimatorSpec,
    ExogenousLIM,
    Scenario,
    SeparateSlopesLinear,
    run_experiment,
)

SCHEMA_VERSION = 1


def _fmt(x) -> str:
    """Shortest round-trip decimal for floats; str otherwise."""
    if isinstance(x, float):
        return repr(x)
    return str(x)


# ---------------------------------------------------------------------------
# Graph loading


def _graph_from_spec(spec: str) -> Graph:
    """A graph source: either an edge-list path or 'ws:n=...,k=...,p=...,seed=...'."""
    if spec.startswith("ws:"):
        params = {}
        for part in spec[3:].split(","):
            if "=" not in part:
                raise ConfigError(f"bad graph spec fragment {part!r}")
            key, val = part.split("=", 1)
            params[key.strip()] = val.strip()
        try:
            return watts_strogatz(
                n=int(params["n"]), k=int(params["k"]),
                p_rewire=float(params.get("p", params.get("p_rewire", 0.1))),
                seed=int(params.get("seed", 0)),
            )
        except KeyError as err:
            raise ConfigError(f"graph spec missing key {err}") from None
    return load_edge_list(spec)


def _parse_graph_args(graph_args) -> dict:
    graphs = {}
    for item in graph_args:
        if "=" in item and not item.startswith("ws:"):
            name, spec = item.split("=", 1)
        else:
            name, spec = "main", item
        if name in graphs:
            raise ConfigError(f"duplicate graph name {name!r}")
        graphs[name] = _graph_from_spec(spec)
    if not graphs:
        raise ConfigError("at least one --graph is required")
    if "main" not in graphs:
        # first named graph doubles as the main one
        graphs = {"main": next(iter(graphs.values())), **graphs}
    return graphs


def _parse_recipes(recipe_args):
    out = []
    for item in recipe_args:
        if "@" in item:
            spec, gname = item.split("@", 1)
            out.append(FeatureRecipe.parse(spec, graph=gname))
        else:
            out.append(FeatureRecipe.parse(item))
    return tuple(out)


# ---------------------------------------------------------------------------
# estimate


def _read_units(path: str):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot read units file: {err}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError("units CSV is empty")
        required = ("id", "w", "y")
        for col in required:
            if col not in reader.fieldnames:
                raise DataError(f"units CSV is missing column {col!r}")
        extra = [c for c in reader.fieldnames if c not in required]
        ids, ws, ys = [], [], []
        cov = {c: [] for c in extra}
        for lineno, row in enumerate(reader, start=2):
            try:
                ids.append(int(row["id"]))
                wval = int(row["w"])
                if wval not in (0, 1):
                    raise ValueError
                ws.append(wval)
                ys.append(float(row["y"]))
                for c in extra:
                    cov[c].append(float(row[c]))
            except (TypeError, ValueError):
                raise DataError(f"units CSV line {lineno}: bad value") from None
    return (np.array(ids), np.array(ws, dtype=np.int8), np.array(ys),
            {c: np.array(v) for c, v in cov.items()})


def _align_units(g: Graph, ids, ws, ys, cov):
    """Reorder unit rows to graph id order; report mismatches."""
    gid = np.asarray(g.ids)
    pos = {int(v): i for i, v in enumerate(ids)}
    missing = [int(v) for v in gid if int(v) not in pos]
    extra = [int(v) for v in ids if int(v) not in set(int(u) for u in gid)]
    if missing or extra:
        offenders = (missing + extra)[:10]
        raise DataError(
            f"graph and units ids disagree ({len(missing)} missing, "
            f"{len(extra)} extra); first offenders: {offenders}"
        )
    order = np.array([pos[int(v)] for v in gid])
    return (ws[order], ys[order], {c: v[order] for c, v in cov.items()})


def cmd_estimate(args) -> int:
    graphs = _parse_graph_args(args.graph)
    g = graphs["main"]
    ids, ws, ys, cov = _read_units(args.units)
    ws, ys, cov = _align_units(g, ids, ws, ys, cov)
    w = TreatmentVector(ws, args.pi)
    recipes = _parse_recipes(args.recipes)
    level = args.level
    diagnostics: dict = {}
    se = None
    ci = None

    if args.estimator == "dm":
        rep = difference_in_means(w, ys)
        if args.variance == "neyman":
            se = float(np.sqrt(neyman_variance(w, ys)))
    elif args.estimator in ("hajek", "ht"):
        prof = exposure_profile(g, args.q, w)
        rep = hajek(ys, prof) if args.estimator == "hajek" else horvitz_thompson(ys, prof)
        diagnostics.update(rep.diagnostics)
    elif args.estimator == "ols":
        x = build_features(graphs, recipes, w, cov or None)
        om = counterfactual_means(graphs, recipes, cov or None)
        fit = ols_fit(x, w, ys)
        rep = ols_adjusted_tau(fit, om)
        diagnostics.update(rep.diagnostics)
        if args.variance == "plugin":
            gam = mc_gamma(graphs, recipes, args.pi, args.gamma_draws,
                           seed=args.seed, covariates=cov or None)
            sig2 = residual_variance(x, w, ys, fit)
            se = float(np.sqrt(plugin_variance(sig2, om, gam)))
            diagnostics["gamma_singular_skips"] = gam.singular_skips
    elif args.estimator == "crossfit":
        x = build_features(graphs, recipes, w, cov or None)
        x0, x1 = counterfactual_matrices(graphs, recipes, cov or None)
        reg = make_regressor(args.regressor)
        res = crossfit_fit(reg, args.folds, x, w, ys, args.seed)
        rep = crossfit_tau_from_fit(res, x0, x1)
        diagnostics.update(rep.diagnostics)
        if args.variance == "bootstrap":
            boot = bootstrap_variance(
                graphs, recipes, reg, args.folds, w, ys,
                B=args.bootstrap_draws, seed=args.seed,
                interval=args.interval, level=level,
                covariates=cov or None, prior_fit=res,
            )
            se = boot.se
            ci = boot.ci
            diagnostics["bootstrap_skipped"] = boot.skipped
            if args.dump_draws:
                with open(args.dump_draws, "w", encoding="utf-8") as fh:
                    fh.write("tau_draw\n")
                    for d in boot.draws:
                        fh.write(_fmt(float(d)) + "\n")
    else:
        raise ConfigError(f"unknown estimator {args.estimator!r}")

    if se is not None and ci is None:
        ci = confidence_interval(rep.tau_hat, se, level)
    result = {
        "schema_version": SCHEMA_VERSION,
        "method": rep.method,
        "tau_hat": rep.tau_hat,
        "se": se,
        "ci": list(ci) if ci is not None else None,
        "level": level if ci is not None else None,
        "n": w.n,
        "n0": w.n0,
        "n1": w.n1,
        "diagnostics": diagnostics,
    }
    json.dump(result, sys.stdout)
    sys.stdout.write("\n")
    return 0


# ---------------------------------------------------------------------------
# simulate


_MODELS = {
    "exogenous": ExogenousLIM,
    "equilibrium": EquilibriumLIM,
    "dynamic": DynamicLIM,
    "separate_slopes": SeparateSlopesLinear,
    "avg_aggregate": AvgAggregateNonlinear,
}


def _build_model(table: dict):
    table = dict(table)
    try:
        name = table.pop("model")
    except KeyError:
        raise ConfigError("response table needs a 'model' key") from None
    try:
        cls = _MODELS[name]
    except KeyError:
        raise ConfigError(f"unknown response model {name!r}") from None
    if cls is SeparateSlopesLinear:
        table["recipes"] = _parse_recipes(table.get("recipes", []))
        table["beta0"] = tuple(table.get("beta0", ()))
        table["beta1"] = tuple(table.get("beta1", ()))
    try:
        return cls(**table)
    except TypeError as err:
        raise ConfigError(f"bad response parameters for {name!r}: {err}") from None


def _build_graphs(tables: dict) -> dict:
    graphs = {}
    for name, tbl in tables.items():
        kind = tbl.get("kind", "edgelist")
        if kind == "ws":
            graphs[name] = watts_strogatz(
                n=int(tbl["n"]), k=int(tbl["k"]),
                p_rewire=float(tbl.get("p_rewire", 0.1)),
                seed=int(tbl.get("seed", 0)),
            )
        elif kind == "edgelist":
            try:
                graphs[name] = load_edge_list(tbl["path"])
            except KeyError:
                raise ConfigError(f"graph {name!r} needs a 'path'") from None
        else:
            raise ConfigError(f"unknown graph kind {kind!r}")
    return graphs


def _build_estimator(tbl: dict) -> EstimatorSpec:
    tbl = dict(tbl)
    known = {
        "method", "name", "q", "K", "regressor", "variance",
        "gamma_draws", "bootstrap_draws", "interval",
    }
    recipes = _parse_recipes(tbl.pop("recipes", []))
    params = {k: tbl.pop(k) for k in list(tbl) if k not in known}
    try:
        return EstimatorSpec(recipes=recipes, regressor_params=params, **tbl)
    except TypeError as err:
        raise ConfigError(f"bad estimator table: {err}") from None


def load_campaign(path: str, threads=None) -> CampaignConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as err:
        raise DataError(f"cannot read config: {err}") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"config parse error: {err}") from None
    if "graphs" not in doc or not doc["graphs"]:
        raise ConfigError("config needs a [graphs.<name>] table")
    graphs = _build_graphs(doc["graphs"])
    if "main" not in graphs:
        raise ConfigError("config needs a graph named 'main'")
    if not doc.get("estimator"):
        raise ConfigError("config needs at least one [[estimator]] table")
    estimators = [_build_estimator(t) for t in doc["estimator"]]
    base = doc.get("response")
    scenarios = []
    for s_tbl in doc.get("scenario", []) or []:
        if base is None and "response" not in s_tbl:
            raise ConfigError("scenario without a base [response] table")
        merged = dict(base or {})
        merged.update(s_tbl.get("response", {}))
        scenarios.append(Scenario(str(s_tbl.get("label", len(scenarios))),
                                  _build_model(merged)))
    if not scenarios:
        if base is None:
            raise ConfigError("config needs a [response] table or [[scenario]]s")
        scenarios = [Scenario("base", _build_model(dict(base)))]
    return CampaignConfig(
        graphs=graphs,
        estimators=estimators,
        scenarios=scenarios,
        pi=float(doc.get("pi", 0.5)),
        replications=int(doc.get("replications", 1000)),
        level=float(doc.get("level", 0.9)),
        seed=int(doc.get("seed", 0)),
        mc_truth_reps=int(doc.get("mc_truth_reps", 1000)),
        threads=int(threads if threads is not None else doc.get("threads", 1)),
    )


def cmd_simulate(args) -> int:
    config = load_campaign(args.config, threads=args.threads)
    report = run_experiment(config)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            report.write_csv(fh)
    else:
        report.write_csv(sys.stdout)
    return 0


# ---------------------------------------------------------------------------
# propensity / featdist


def cmd_propensity(args) -> int:
    g = _parse_graph_args(args.graph)["main"]
    prof = exposure_propensities(g, args.q, args.pi)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["id", "degree", "p0", "p1"])
    deg = g.degrees
    for i in range(g.n):
        writer.writerow([
            int(g.ids[i]), int(deg[i]), _fmt(float(prof.p0[i])), _fmt(float(prof.p1[i])),
        ])
    return 0


def cmd_featdist(args) -> int:
    graphs = _parse_graph_args(args.graph)
    g = graphs["main"]
    recipes = _parse_recipes(args.recipes)
    labels = [r.label for r in recipes]
    x0, x1 = counterfactual_matrices(graphs, recipes)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    header = ["draw", "unit"]
    for lab in labels:
        header += [f"{lab}:design", f"{lab}:global0", f"{lab}:global1"]
    writer.writerow(header)
    for b in range(args.draws):
        w = bernoulli_assign(g.n, args.pi, stream_rng(args.seed, b))
        xd = build_features(graphs, recipes, w)
        for i in range(g.n):
            row = [b, int(g.ids[i])]
            for j in range(len(recipes)):
                row += [
                    _fmt(float(xd.values[i, j])),
                    _fmt(float(x0.values[i, j])),
                    _fmt(float(x1.values[i, j])),
                ]
            writer.writerow(row)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netadjust",
        description="Estimate global average treatment effects on networks "
                    "under interference.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate the effect from field data")
    est.add_argument("--graph", action="append", required=True,
                     help="edge-list path, 'ws:n=..,k=..,p=..,seed=..', or name=spec")
    est.add_argument("--units", required=True, help="CSV with columns id,w,y[,covariate...]")
    est.add_argument("--recipes", nargs="*", default=[],
                     help="feature recipes like frac1 num1 frac2 num2 pow1 cov:age")
    est.add_argument("--estimator", default="ols",
                     choices=["dm", "ht", "hajek", "ols", "crossfit"])
    est.add_argument("--variance", default="default",
                     choices=["default", "none", "neyman", "plugin", "bootstrap"])
    est.add_argument("--pi", type=float, default=0.5)
    est.add_argument("--q", type=float, default=0.75)
    est.add_argument("--folds", "-K", type=int, default=2)
    est.add_argument("--regressor", default="ols")
    est.add_argument("--level", type=float, default=0.9)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--gamma-draws", type=int, default=200)
    est.add_argument("--bootstrap-draws", type=int, default=200)
    est.add_argument("--interval", default="gaussian", choices=["gaussian", "percentile"])
    est.add_argument("--dump-draws", help="write bootstrap draws to this CSV path")
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="run a simulation campaign from a TOML config")
    sim.add_argument("config")
    sim.add_argument("--output", "-o", help="report CSV path (default: stdout)")
    sim.add_argument("--threads", type=int, default=None,
                     help="worker process cap; results are thread-count invariant")
    sim.set_defaults(func=cmd_simulate)

    pro = sub.add_parser("propensity", help="dump exact exposure propensities")
    pro.add_argument("--graph", action="append", required=True)
    pro.add_argument("--q", type=float, required=True)
    pro.add_argument("--pi", type=float, required=True)
    pro.set_defaults(func=cmd_propensity)

    fea = sub.add_parser("featdist", help="dump feature samples under the design "
                                          "and both global counterfactuals")
    fea.add_argument("--graph", action="append", required=True)
    fea.add_argument("--recipes", nargs="+", required=True)
    fea.add_argument("--pi", type=float, default=0.5)
    fea.add_argument("--draws", type=int, default=1)
    fea.add_argument("--seed", type=int, default=0)
    fea.set_defaults(func=cmd_featdist)
    return parser


def _resolve_variance(args) -> None:
    if getattr(args, "variance", None) == "default":
        args.variance = {
            "dm": "neyman", "ht": "none", "hajek": "none",
            "ols": "plugin", "crossfit": "bootstrap",
        }[args.estimator]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "estimate":
        _resolve_variance(args)
    try:
        return args.func(args)
    except NetAdjustError as err:
        print(f"netadjust: error: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
