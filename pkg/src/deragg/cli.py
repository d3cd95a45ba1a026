"""Command line: validate scenarios, solve equilibria, build offer curves,
clear markets, run sweeps, and emit figure-ready CSV files.

Exit codes: 0 ok, 2 invalid scenario, 3 solver non-convergence,
4 closed-form admissibility violation.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .agents import GameScenario, linear_utility
from .capacity import DEPENDENT_UNIFORM, SQRT3, dependent_uniform
from .closedform import (
    UniformLinearParams,
    closed_form_equilibrium,
    inverse_supply_aggregated,
    inverse_supply_direct,
)
from .equilibrium import meanfield_stackelberg, stackelberg_solve
from .errors import (
    AdmissibilityError,
    MarketInfeasibleError,
    SolverError,
    ValidationError,
)
from .market import (
    MODE_AGGREGATED,
    MODE_DIRECT,
    MODE_NODER,
    MODE_SOCIAL,
    DispatchProblem,
    GeneratorSpec,
    aggregated_affine_curve,
    build_supply_curve_aggregated,
    build_supply_curve_direct,
    clear_market,
    closed_form_params,
    direct_affine_curve,
    price_of_aggregation,
)
from .penalty import penalty_shares
from .scenario import ScenarioFile, apply_sweep_value, load_scenario

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3
EXIT_ADMISSIBILITY = 4

SEED_ENV_VAR = "DERAGG_SEED"

# reference parameter set behind the figure commands
FIG_GAMMA = 2.5
FIG_MU = 10.0
FIG_SIGMA = 3.3
FIG_LAMBDA_DA = 4.0
FIG_LAMBDA_RT = 4.0
FIG_KAPPA = 3.25
FIG_DEMAND_PER_PROSUMER = 10.0
FIG_SIGMA_SWEEP = (3.30, 5.77, 26)
FIG_MU_SWEEP = (6.0, 10.0, 21)
FIG4_FIXED_QUANTITY = 3.0

FIGURE_NAMES = ("fig3", "fig4", "fig5", "fig6-left", "fig6-right")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float) or isinstance(v, np.floating):
        return f"{float(v):.10g}"
    if v is None:
        return ""
    return str(v)


def _render_csv(meta: dict, columns, rows) -> str:
    lines = [f"# {k}={_fmt(v)}" for k, v in meta.items()]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _meta(sf: ScenarioFile, seed: int, draws: int) -> dict:
    return {
        "schema_version": sf.schema_version,
        "seed": seed,
        "draws": draws,
        "tol_x": sf.solver.tol_x,
        "tol_rho": sf.solver.tol_rho,
        "build": f"deragg-{__version__}",
    }


def _resolve_seed(args, sf: ScenarioFile) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ValidationError(f"{SEED_ENV_VAR}={env!r} is not an integer") from exc
    return sf.solver.seed


def _resolve_draws(args, sf: ScenarioFile) -> int:
    return args.draws if args.draws is not None else sf.solver.draws


def _penalty_axiom_issues(seed: int, instances: int = 10_000) -> list[str]:
    """Randomized check of the five sharing axioms; returns violation notes."""
    rng = np.random.default_rng(seed)
    issues = []
    for _ in range(instances):
        n = int(rng.integers(2, 9))
        cbar = rng.uniform(1.0, 20.0)
        x = rng.uniform(0.0, cbar, size=n)
        c = rng.uniform(0.0, cbar, size=n)
        j = int(rng.integers(0, n))
        i = int(rng.integers(0, n))
        c[j] = np.clip(x[j] - (x[i] - c[i]), 0.0, cbar)  # force one matched shortfall pair
        lam = rng.uniform(0.0, 10.0)
        shares = penalty_shares(x, c, lam)
        pool = lam * max(x.sum() - c.sum(), 0.0)
        if np.any(shares < 0.0):
            issues.append("nonnegativity violated")
        if abs(shares.sum() - pool) > 1e-9 * max(pool, 1.0):
            issues.append("budget balance violated")
        if np.any(shares[(x - c) <= 0.0] != 0.0):
            issues.append("no-exploitation violated")
        order = np.argsort(x - c)
        if np.any(np.diff(shares[order]) < -1e-12):
            issues.append("monotonicity violated")
        if abs((x[i] - c[i]) - (x[j] - c[j])) <= 1e-12 and abs(shares[i] - shares[j]) > 1e-9:
            issues.append("symmetry violated")
        if issues:
            break
    return issues


def cmd_validate(args) -> int:
    sf = load_scenario(args.file)
    seed = _resolve_seed(args, sf)
    issues = _penalty_axiom_issues(seed)
    if args.closed_form:
        closed_form_params(sf.scenario)  # raises AdmissibilityError off the band
    report = [
        f"scenario: ok ({args.file})",
        f"penalty axioms: {'ok' if not issues else '; '.join(issues)}",
    ]
    print("\n".join(report))
    return EXIT_OK if not issues else EXIT_INVALID


def cmd_equilibrium(args) -> int:
    sf = load_scenario(args.file)
    seed = _resolve_seed(args, sf)
    draws = _resolve_draws(args, sf)
    if args.mean_field:
        res, sol = meanfield_stackelberg(
            sf.scenario, tol_rho=sf.solver.tol_rho, grid_points=sf.solver.rho_grid_points
        )
        columns = ["rho_star", "x_star", "aggregate_x", "leader_profit", "beta", "residual"]
        rows = [[res.rho_star, res.x_star, res.aggregate_x, res.leader_profit,
                 sol.beta, max(sol.residuals)]]
    else:
        res = stackelberg_solve(
            sf.scenario,
            tol_rho=sf.solver.tol_rho,
            tol_x=sf.solver.tol_x,
            grid_points=sf.solver.rho_grid_points,
            draws=draws,
            seed=seed,
        )
        d = res.diagnostics
        columns = [
            "rho_star", "x_star", "aggregate_x", "leader_profit",
            "follower_residual", "concavity_ok", "multiple_maxima",
        ]
        rows = [[res.rho_star, res.x_star, res.aggregate_x, res.leader_profit,
                 d.follower_residual, d.concavity_ok, d.multiple_maxima]]
    _emit(_render_csv(_meta(sf, seed, draws), columns, rows), args.out)
    print(
        f"rho_star={res.rho_star:.6g} x_star={res.x_star:.6g} profit={res.leader_profit:.6g}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_supply_curve(args) -> int:
    sf = load_scenario(args.file)
    seed = _resolve_seed(args, sf)
    draws = _resolve_draws(args, sf)
    if args.mode == "agg":
        curve = build_supply_curve_aggregated(
            sf.scenario,
            tol_rho=sf.solver.tol_rho,
            tol_x=sf.solver.tol_x,
            draws=draws,
            seed=seed,
        )
    else:
        curve = build_supply_curve_direct(sf.scenario, draws=draws, seed=seed)
    rows = [[q, p] for q, p in curve.breakpoints]
    _emit(_render_csv(_meta(sf, seed, draws), ["quantity", "price"], rows), args.out)
    return EXIT_OK


def _curves_for(sf: ScenarioFile, source: str, draws: int, seed: int):
    if source == "auto":
        source = (
            "closedform"
            if sf.scenario.capacity.kind == DEPENDENT_UNIFORM
            and sf.scenario.utility.kind == "linear"
            else "numeric"
        )
    if source == "closedform":
        params = closed_form_params(sf.scenario)
        return aggregated_affine_curve(params), direct_affine_curve(params)
    agg = build_supply_curve_aggregated(sf.scenario, draws=draws, seed=seed)
    direct = build_supply_curve_direct(sf.scenario, draws=draws, seed=seed)
    return agg, direct


def cmd_dispatch(args) -> int:
    sf = load_scenario(args.file)
    seed = _resolve_seed(args, sf)
    draws = _resolve_draws(args, sf)
    demand = sf.demand_per_prosumer * sf.scenario.n_prosumers
    mode = {"agg": MODE_AGGREGATED, "direct": MODE_DIRECT,
            "noder": MODE_NODER, "social": MODE_SOCIAL}[args.mode]
    curve = None
    if mode != MODE_NODER:
        agg, direct = _curves_for(sf, args.curve_source, draws, seed)
        curve = agg if mode == MODE_AGGREGATED else direct
    outcome = clear_market(DispatchProblem(sf.generators, demand, curve, mode))
    columns = ["mode", "clearing_price", "cleared_der", "cleared_generation", "total_cost"]
    rows = [[mode, outcome.clearing_price, outcome.cleared_der,
             sum(outcome.cleared_generator), outcome.total_cost]]
    meta = _meta(sf, seed, draws)
    meta["tie_rule"] = outcome.tie_rule
    _emit(_render_csv(meta, columns, rows), args.out)
    return EXIT_OK


def cmd_poag(args) -> int:
    sf = load_scenario(args.file)
    seed = _resolve_seed(args, sf)
    draws = _resolve_draws(args, sf)
    report = price_of_aggregation(
        sf.scenario, sf.generators, sf.demand_per_prosumer,
        curve_source=args.curve_source, draws=draws, seed=seed,
    )
    columns = [
        "cost_aggregated", "cost_direct", "cost_noder", "poag",
        "cleared_der_aggregated", "cleared_der_direct", "demand", "curve_source",
    ]
    rows = [[
        report.cost_aggregated, report.cost_direct, report.cost_noder, report.poag,
        report.outcome_aggregated.cleared_der, report.outcome_direct.cleared_der,
        report.demand, report.curve_source,
    ]]
    _emit(_render_csv(_meta(sf, seed, draws), columns, rows), args.out)
    print(f"poag={report.poag:.6g}", file=sys.stderr)
    return EXIT_OK


_SWEEP_COLUMNS = [
    "value", "rho_star", "x_star", "aggregate_x",
    "cost_aggregated", "cost_direct", "cost_noder", "poag",
    "cleared_der_aggregated", "cleared_der_direct",
    "concavity_ok", "multiple_maxima", "status",
]


def _sweep_point(sf: ScenarioFile, parameter: str, value: float, draws: int, seed: int):
    try:
        point = apply_sweep_value(sf, parameter, value)
        res = stackelberg_solve(
            point.scenario,
            tol_rho=point.solver.tol_rho,
            tol_x=point.solver.tol_x,
            grid_points=point.solver.rho_grid_points,
            draws=draws,
            seed=seed,
        )
        rep = price_of_aggregation(
            point.scenario, point.generators, point.demand_per_prosumer,
            draws=draws, seed=seed,
        )
        d = res.diagnostics
        return [
            value, res.rho_star, res.x_star, res.aggregate_x,
            rep.cost_aggregated, rep.cost_direct, rep.cost_noder, rep.poag,
            rep.outcome_aggregated.cleared_der, rep.outcome_direct.cleared_der,
            d.concavity_ok, d.multiple_maxima, "ok",
        ]
    except (ValidationError, AdmissibilityError, SolverError, MarketInfeasibleError) as exc:
        reason = str(exc).replace(",", ";").replace("\n", " ")
        return [value] + [None] * (len(_SWEEP_COLUMNS) - 2) + [f"failed: {reason}"]


def cmd_sweep(args) -> int:
    sf = load_scenario(args.file)
    if sf.sweep is None:
        raise ValidationError(f"{args.file} has no sweep block")
    seed = _resolve_seed(args, sf)
    draws = _resolve_draws(args, sf)
    values = np.linspace(sf.sweep.start, sf.sweep.stop, sf.sweep.steps)
    with ThreadPoolExecutor(max_workers=min(8, sf.sweep.steps)) as pool:
        rows = list(
            pool.map(lambda v: _sweep_point(sf, sf.sweep.parameter, float(v), draws, seed), values)
        )
    meta = _meta(sf, seed, draws)
    meta["sweep_parameter"] = sf.sweep.parameter
    _emit(_render_csv(meta, _SWEEP_COLUMNS, rows), args.out)
    n_failed = sum(1 for r in rows if r[-1] != "ok")
    print(f"sweep: {len(rows)} points, {n_failed} failed", file=sys.stderr)
    return EXIT_OK if n_failed == 0 else EXIT_SOLVER


def _figure_scenario(mu: float, sigma: float) -> GameScenario:
    cap = dependent_uniform(mu, sigma)
    return GameScenario(
        n_prosumers=1,
        d0=cap.cbar + 1.0,
        capacity=cap,
        utility=linear_utility(FIG_GAMMA),
        lambda_da=FIG_LAMBDA_DA,
        lambda_rt=FIG_LAMBDA_RT,
    )


def _figure_tables(name: str):
    """(filename, columns, rows) tables for one named reference figure."""
    sig_lo, sig_hi, sig_n = FIG_SIGMA_SWEEP
    sigmas = np.linspace(sig_lo, sig_hi, sig_n)
    if name == "fig3":
        rows_curve, rows_eq = [], []
        for sigma in (3.3, 3.9, 4.5, 5.1, 5.7):
            p = UniformLinearParams(FIG_GAMMA, FIG_MU, sigma, FIG_LAMBDA_DA, FIG_LAMBDA_RT)
            rho_star, curve = closed_form_equilibrium(p)
            for rho in np.linspace(FIG_GAMMA, FIG_GAMMA + FIG_LAMBDA_RT, 51):
                rows_curve.append([sigma, rho, curve(rho)])
            rows_eq.append([sigma, rho_star, curve(rho_star)])
        return [
            ("fig3_offer_curves.csv", ["sigma", "rho", "x_star"], rows_curve),
            ("fig3_equilibrium.csv", ["sigma", "rho_star", "x_star"], rows_eq),
        ]
    if name == "fig4":
        p = UniformLinearParams(FIG_GAMMA, FIG_MU, FIG_SIGMA, FIG_LAMBDA_DA, FIG_LAMBDA_RT)
        hi = FIG_MU + SQRT3 * FIG_SIGMA
        rows_agg = [[q, inverse_supply_aggregated(p, q)] for q in np.linspace(0.0, hi / 2.0, 41)]
        rows_dir = [[q, inverse_supply_direct(p, q)] for q in np.linspace(0.0, hi, 41)]
        rows_sigma = []
        for sigma in sigmas:
            ps = UniformLinearParams(FIG_GAMMA, FIG_MU, sigma, FIG_LAMBDA_DA, FIG_LAMBDA_RT)
            rows_sigma.append([
                sigma,
                inverse_supply_aggregated(ps, FIG4_FIXED_QUANTITY),
                inverse_supply_direct(ps, FIG4_FIXED_QUANTITY),
            ])
        return [
            ("fig4_offer_aggregated.csv", ["quantity", "price"], rows_agg),
            ("fig4_offer_direct.csv", ["quantity", "price"], rows_dir),
            ("fig4_price_vs_sigma.csv",
             ["sigma", "price_aggregated", "price_direct"], rows_sigma),
        ]
    if name in ("fig5", "fig6-left"):
        rows_cost, rows_clear, rows_poag = [], [], []
        for sigma in sigmas:
            sc = _figure_scenario(FIG_MU, sigma)
            rep = price_of_aggregation(sc, (_figure_generator(),), FIG_DEMAND_PER_PROSUMER)
            rows_cost.append([sigma, rep.cost_noder, rep.cost_aggregated, rep.cost_direct])
            rows_clear.append([
                sigma,
                rep.outcome_aggregated.cleared_der,
                rep.outcome_direct.cleared_der,
            ])
            rows_poag.append([sigma, rep.poag])
        if name == "fig5":
            return [
                ("fig5_costs.csv",
                 ["sigma", "cost_noder", "cost_aggregated", "cost_direct"], rows_cost),
                ("fig5_cleared_der.csv",
                 ["sigma", "cleared_aggregated", "cleared_direct"], rows_clear),
            ]
        return [("fig6_left_poag_vs_sigma.csv", ["sigma", "poag"], rows_poag)]
    if name == "fig6-right":
        mu_lo, mu_hi, mu_n = FIG_MU_SWEEP
        rows = []
        for mu in np.linspace(mu_lo, mu_hi, mu_n):
            sc = _figure_scenario(mu, FIG_SIGMA)
            rep = price_of_aggregation(sc, (_figure_generator(),), FIG_DEMAND_PER_PROSUMER)
            rows.append([mu, 100.0 * mu / mu_hi, rep.poag])
        return [("fig6_right_poag_vs_integration.csv",
                 ["mu", "integration_pct", "poag"], rows)]
    raise ValidationError(f"unknown figure {name!r}; choose from {FIGURE_NAMES}")


def _figure_generator():
    return GeneratorSpec(kappa=FIG_KAPPA)


def cmd_figures(args) -> int:
    seed = args.seed if args.seed is not None else int(os.environ.get(SEED_ENV_VAR, "0"))
    os.makedirs(args.out, exist_ok=True)
    meta = {
        "schema_version": "1",
        "seed": seed,
        "draws": args.draws if args.draws is not None else 0,
        "tol_x": 1e-8,
        "tol_rho": 1e-6,
        "build": f"deragg-{__version__}",
    }
    written = []
    for filename, columns, rows in _figure_tables(args.name):
        path = os.path.join(args.out, filename)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(_render_csv(meta, columns, rows))
        written.append(path)
    for path in written:
        print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=None, help="seed override (also DERAGG_SEED)")
    sub.add_argument("--draws", type=int, default=None, help="Monte-Carlo draws override")
    sub.add_argument("--out", default=None, help="output path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deragg",
        description="DER aggregation game equilibria and market clearing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a scenario file and the sharing axioms")
    p.add_argument("file")
    p.add_argument("--closed-form", action="store_true",
                   help="also require closed-form admissibility (exit 4 if violated)")
    _add_common(p)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("equilibrium", help="solve the pricing game")
    p.add_argument("file")
    p.add_argument("--mean-field", action="store_true",
                   help="solve the large-N mean-field game instead")
    _add_common(p)
    p.set_defaults(fn=cmd_equilibrium)

    p = sub.add_parser("supply-curve", help="tabulate a wholesale offer curve")
    p.add_argument("file")
    p.add_argument("--mode", choices=("agg", "direct"), required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_supply_curve)

    p = sub.add_parser("dispatch", help="clear the day-ahead market once")
    p.add_argument("file")
    p.add_argument("--mode", choices=("agg", "direct", "noder", "social"), required=True)
    p.add_argument("--curve-source", choices=("auto", "closedform", "numeric"), default="auto")
    _add_common(p)
    p.set_defaults(fn=cmd_dispatch)

    p = sub.add_parser("poag", help="price of aggregation across the three modes")
    p.add_argument("file")
    p.add_argument("--curve-source", choices=("auto", "closedform", "numeric"), default="auto")
    _add_common(p)
    p.set_defaults(fn=cmd_poag)

    p = sub.add_parser("sweep", help="run the scenario's sweep block")
    p.add_argument("file")
    _add_common(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("figures", help="emit plot-ready CSV for a named reference figure")
    p.add_argument("name", choices=FIGURE_NAMES)
    _add_common(p)
    p.set_defaults(fn=cmd_figures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except AdmissibilityError as exc:
        print(f"admissibility error: {exc}", file=sys.stderr)
        return EXIT_ADMISSIBILITY
    except (ValidationError, MarketInfeasibleError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    raise SystemExit(main())
