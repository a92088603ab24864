"""
``flat-tax`` command line.

    flat-tax [--config PATH] [--out DIR] [--seed N] [--set key=value ...]
             [--threads N] [-v] COMMAND [command options]

Commands write JSON and CSV artifacts to ``--out`` together with
``manifest.json``; ``plot`` turns those artifacts into figure tables.

Exit codes: 0 success, 1 failed verification, 2 configuration error or
missing artifact, 3 solver failure (``diagnostics.json`` is written),
4 infeasible tax mix.
"""

from __future__ import annotations

import argparse
import logging
from typing import Any

import numpy as np
import pandas as pd
from pydantic import ValidationError

from flat_tax_equilibrium import __version__
from flat_tax_equilibrium.artifacts import ArtifactStore, RunManifest
from flat_tax_equilibrium.calibration import calibrate
from flat_tax_equilibrium.comparison import changes_frame, compare_regimes
from flat_tax_equilibrium.config import RunConfig, load_config, parse_override
from flat_tax_equilibrium.constants import (
    BOTTOM_SHARE_CUTS,
    EXIT_CONFIG_ERROR,
    EXIT_INFEASIBLE_MIX,
    EXIT_OK,
    EXIT_SOLVER_ERROR,
    EXIT_VERIFY_FAILED,
    TOP_SHARE_CUTS,
)
from flat_tax_equilibrium.equilibrium import (
    StationaryEquilibrium,
    market_gap_value,
    resource_residual,
    solve_equilibrium,
    welfare_gain,
)
from flat_tax_equilibrium.exceptions import ConfigError, FlatTaxError, InfeasibleTaxMixError
from flat_tax_equilibrium.model_core import AbilityProcess, ModelParams, TaxRates
from flat_tax_equilibrium.plot_data import build_figure
from flat_tax_equilibrium.registry import CommandRegistry, FigureRegistry
from flat_tax_equilibrium.tax_optimizer import (
    TaxRegimePoint,
    optimize_consumption_only,
    optimize_full,
    optimize_no_consumption_tax,
    sweep,
)
from flat_tax_equilibrium.transition import simulate_transition, solve_transition, vote_analysis
from flat_tax_equilibrium.wealth_law import (
    WealthDistribution,
    compare_exceedance,
    empirical_checks,
    invert_distribution,
    share_table,
    simulate_panel,
    tail_extrapolate,
    top_share_slope,
    wealth_shares,
)

logger = logging.getLogger(__name__)

__all__ = ["RunContext", "build_parser", "run_command", "register_default_commands", "main"]

_TOP_SHARE_CURVE = tuple(np.geomspace(1e-9, 0.5, 60))
_COMPARISON_WEALTH = np.concatenate([np.linspace(-5.0, 10.0, 301)[:-1], np.geomspace(10.0, 1e5, 241)])
_IDENTITY_TOL = 1e-10


class RunContext:
    """Config, artifact store and command options of one run."""

    def __init__(self, manifest: RunManifest, config: RunConfig, store: ArtifactStore):
        self.manifest = manifest
        self.config = config
        self.store = store
        self.settings = config.solver
        self.args = manifest.args

    @property
    def threads(self) -> int:
        return self.manifest.threads

    def economy(self) -> tuple[ModelParams, AbilityProcess]:
        params = self.config.params()
        process = calibrate(self.config.targets(), params.upsilon).process
        return params, process

    def baseline(self) -> StationaryEquilibrium:
        """Equilibrium at the configured rates; its revenue is the target of every reform."""
        params, process = self.economy()
        baseline = solve_equilibrium(params, process, settings=self.settings)
        return baseline.model_copy(update={"revenue_target": baseline.revenue.total})

    def distribution(self, equilibrium: StationaryEquilibrium) -> WealthDistribution:
        return invert_distribution(equilibrium.mellin, self.settings.grid_spec())


def _equilibrium_of(point: TaxRegimePoint, ctx: RunContext, process: AbilityProcess, target: float) -> StationaryEquilibrium:
    if point.equilibrium is not None:
        return point.equilibrium
    params = ctx.config.params().with_rates(point.rates)
    return solve_equilibrium(params, process, target, settings=ctx.settings, initial=point.prices)


def _cmd_calibrate(ctx: RunContext) -> int:
    result = calibrate(ctx.config.targets(), ctx.config.upsilon)
    ctx.store.write_json("calibration.json", result.model_dump(mode="json"))
    return EXIT_OK


def _cmd_equilibrium(ctx: RunContext) -> int:
    baseline = ctx.baseline()
    dist = ctx.distribution(baseline)
    tail = tail_extrapolate(dist, ctx.settings.tail_s_max)
    shares = share_table(dist, TOP_SHARE_CUTS, BOTTOM_SHARE_CUTS)

    frame = tail.to_frame()
    by_occupation = pd.DataFrame({"wealth": frame["wealth"]})
    p = baseline.process.stationary_dist
    for label, mask in (("workers", baseline.process.worker_mask), ("entrepreneurs", baseline.process.entrepreneur_mask)):
        states = np.nonzero(mask)[0]
        weights = p[states] / p[states].sum()
        by_occupation[f"exceedance_{label}"] = sum(
            weight * dist.financial_exceedance(frame["wealth"].to_numpy(), state=int(n))
            for weight, n in zip(weights, states)
        )

    ctx.store.write_csv("wealth_distribution.csv", frame)
    ctx.store.write_csv("wealth_by_occupation.csv", by_occupation)
    ctx.store.write_csv("wealth_shares.csv", shares)
    ctx.store.write_csv("top_shares.csv", pd.DataFrame(wealth_shares(dist, top=_TOP_SHARE_CURVE)))
    ctx.store.write_json(
        "equilibrium.json",
        {
            **baseline.summary(),
            "distribution": dist.summary(),
            "shares": shares.to_dict(orient="records"),
            "top_share_slope": top_share_slope(dist),
            "mellin_domain": baseline.mellin.domain_description(),
            "sufficient_tail_condition": baseline.mellin.sufficient_tail_condition(),
        },
    )
    return EXIT_OK


def _cmd_frontier(ctx: RunContext) -> int:
    baseline = ctx.baseline()
    target = baseline.revenue.total
    result = optimize_no_consumption_tax(baseline.params, baseline.process, target, ctx.settings, ctx.threads)
    ctx.store.write_csv("frontier.csv", result.to_frame())
    ctx.store.write_json(
        "frontier.json",
        {
            "target_revenue": target,
            "optimum": result.optimum.row(),
            "kink_tau_K": result.kink_tau_K,
            "baseline": TaxRegimePoint.from_equilibrium(baseline, target).row(),
            "welfare_gain_vs_baseline": welfare_gain(result.optimum.welfare, baseline.welfare),
            "failures": result.failures,
        },
    )
    return EXIT_OK


def _cmd_optimize(ctx: RunContext) -> int:
    baseline = ctx.baseline()
    params, process = baseline.params, baseline.process
    target = baseline.revenue.total

    full = optimize_full(params, process, target, ctx.settings, ctx.threads)
    consumption_only = optimize_consumption_only(params, process, target, ctx.settings)
    income_only = optimize_no_consumption_tax(params, process, target, ctx.settings, ctx.threads).optimum

    optimum_eq = _equilibrium_of(full.optimum, ctx, process, target)
    income_eq = _equilibrium_of(income_only, ctx, process, target)
    consumption_eq = _equilibrium_of(consumption_only, ctx, process, target)
    comparisons = {
        "global_optimum_vs_baseline": compare_regimes(optimum_eq, baseline),
        "global_optimum_vs_consumption_only": compare_regimes(optimum_eq, consumption_eq),
        "global_optimum_vs_no_consumption_tax_optimum": compare_regimes(optimum_eq, income_eq),
        "no_consumption_tax_optimum_vs_baseline": compare_regimes(income_eq, baseline),
    }

    base_dist = ctx.distribution(baseline)
    optimum_frame, crossing = compare_exceedance(base_dist, ctx.distribution(optimum_eq), _COMPARISON_WEALTH)
    income_frame, income_crossing = compare_exceedance(base_dist, ctx.distribution(income_eq), _COMPARISON_WEALTH)
    exceedance = pd.DataFrame(
        {
            "wealth": optimum_frame["wealth"],
            "exceedance_baseline": optimum_frame["exceedance_first"],
            "exceedance_optimal": optimum_frame["exceedance_second"],
            "exceedance_optimal_no_consumption_tax": income_frame["exceedance_second"],
        }
    )

    ctx.store.write_csv("full_grid.csv", full.grid_frame())
    ctx.store.write_csv("candidates.csv", full.candidate_frame())
    ctx.store.write_csv("exceedance_comparison.csv", exceedance)
    ctx.store.write_csv("comparisons.csv", changes_frame(comparisons))
    ctx.store.write_json(
        "optimize.json",
        {
            "target_revenue": target,
            "points": {
                "global_optimum": full.optimum.row(),
                "consumption_only": consumption_only.row(),
                "no_consumption_tax_optimum": income_only.row(),
                "baseline": TaxRegimePoint.from_equilibrium(baseline, target).row(),
            },
            "comparisons": comparisons,
            "exceedance_crossing": {"global_optimum": crossing, "no_consumption_tax_optimum": income_crossing},
        },
    )
    return EXIT_OK


def _sweep_grid(start: float, stop: float, step: float) -> list[float]:
    if step <= 0.0 or stop < start:
        raise ConfigError(f"Sweep needs --from <= --to and --step > 0, got {start}, {stop}, {step}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(count)]


def _cmd_sweep(ctx: RunContext) -> int:
    parameter, mode = ctx.args["param"], ctx.args["mode"]
    grid = _sweep_grid(ctx.args["start"], ctx.args["stop"], ctx.args["step"])
    result = sweep(
        parameter,
        grid,
        ctx.config.params(),
        ctx.config.targets(),
        ctx.settings,
        mode=mode,
        threads=ctx.threads,
    )
    name = f"sweep_{mode}_{parameter}"
    ctx.store.write_csv(f"{name}.csv", result.to_frame())
    ctx.store.write_json(
        f"{name}.json",
        {
            "parameter": parameter,
            "mode": mode,
            "grid": grid,
            "regions": result.regions(),
            "boundaries": result.boundaries,
            "failures": result.failures,
        },
    )
    return EXIT_OK


def _reform_rates(ctx: RunContext) -> tuple[TaxRates, str | None]:
    if ctx.args.get("rates"):
        tau_L, tau_K, tau_C = ctx.args["rates"]
        return TaxRates(tau_L=tau_L, tau_K=tau_K, tau_C=tau_C), None
    summary = ctx.store.read_json("optimize.json")
    optimum = summary["points"]["global_optimum"]
    rates = TaxRates(tau_L=optimum["tau_L"], tau_K=optimum["tau_K"], tau_C=optimum["tau_C"])
    return rates, summary.get("manifest_hash")


def _cmd_transition(ctx: RunContext) -> int:
    rates, source_hash = _reform_rates(ctx)
    baseline = ctx.baseline()
    target = baseline.revenue.total
    new = solve_equilibrium(
        baseline.params.with_rates(rates), baseline.process, target, settings=ctx.settings
    )
    path = solve_transition(baseline, new, ctx.settings, ctx.args.get("horizon"))
    vote = vote_analysis(path, baseline, ctx.distribution(baseline))
    path = path.model_copy(update={"vote": vote})

    ctx.store.write_csv("transition.csv", path.to_frame())
    ctx.store.write_json(
        "transition.json",
        {
            **path.summary(),
            "rates": rates.model_dump(),
            "source_manifest_hash": source_hash,
            "new_equilibrium": new.summary(),
        },
    )
    return EXIT_OK


def _identity_checks(baseline: StationaryEquilibrium) -> list[dict[str, Any]]:
    mellin = baseline.mellin
    upsilon = baseline.params.upsilon
    p = mellin.stationary_dist
    conditional = sum(p[n] * mellin.mellin(1.0, state=n) for n in range(p.size) if p[n] > 0.0)
    values = [
        ("goods_market_closure", resource_residual(baseline) - market_gap_value(baseline), 0.0),
        ("spectral_radius_at_zero", mellin.spectral_radius(0.0), upsilon),
        ("mellin_normalization", float(np.real(mellin.mellin(0.0))), 1.0),
        ("conditional_mellin_aggregation", float(conditional), float(mellin.mellin(1.0))),
    ]
    return [
        {
            "name": name,
            "analytic": expected,
            "empirical": value,
            "standard_error": _IDENTITY_TOL,
            "passed": bool(abs(value - expected) <= _IDENTITY_TOL * max(1.0, abs(expected))),
        }
        for name, value, expected in values
    ]


def _transition_checks(
    ctx: RunContext, baseline: StationaryEquilibrium, horizon: int, n_sigma: float = 4.0
) -> list[dict[str, Any]]:
    """Mean total wealth along a short transition against a simulated panel."""
    rates, _ = _reform_rates(ctx)
    new = solve_equilibrium(
        baseline.params.with_rates(rates), baseline.process, baseline.revenue.total, settings=ctx.settings
    )
    path = solve_transition(baseline, new, ctx.settings, horizon)
    panel = simulate_transition(
        path,
        baseline,
        new,
        n_agents=ctx.settings.simulation_agents,
        seed=ctx.manifest.seed + 1,
        burn_in=ctx.settings.simulation_periods,
        n_streams=ctx.settings.simulation_streams,
    )
    checks = []
    for year in sorted({1, min(5, horizon), horizon}):
        analytic = float(path.moments[year].sum())
        row = panel.loc[panel["t"] == year].iloc[0]
        checks.append(
            {
                "name": f"transition_mean_wealth_t{year}",
                "analytic": analytic,
                "empirical": float(row["mean_total_wealth"]),
                "standard_error": float(row["standard_error"]),
                "passed": bool(abs(row["mean_total_wealth"] - analytic) <= n_sigma * row["standard_error"]),
            }
        )
    return checks


def _cmd_verify(ctx: RunContext) -> int:
    baseline = ctx.baseline()
    dist = ctx.distribution(baseline)
    process = baseline.process
    settings = ctx.settings
    wealth, states = simulate_panel(
        baseline.policy.growth,
        process.transition,
        process.newborn_dist,
        baseline.params.upsilon,
        baseline.h,
        settings.simulation_agents,
        settings.simulation_periods,
        ctx.manifest.seed,
        settings.simulation_streams,
    )
    checks = _identity_checks(baseline) + empirical_checks(baseline.mellin, dist, wealth, states)
    horizon = ctx.args.get("transition_horizon") or 0
    if horizon > 0:
        checks += _transition_checks(ctx, baseline, horizon)

    passed = all(check["passed"] for check in checks)
    ctx.store.write_json("verify.json", {"passed": passed, "n_samples": int(wealth.size), "checks": checks})
    for check in checks:
        if not check["passed"]:
            logger.error(f"Verification check {check['name']} failed: {check}")
    return EXIT_OK if passed else EXIT_VERIFY_FAILED


def _cmd_plot(ctx: RunContext) -> int:
    requested = ctx.args.get("figure") or ["all"]
    unknown = [name for name in requested if name != "all" and FigureRegistry.find_builder(name) is None]
    if unknown:
        raise ConfigError(f"Unknown figures: {', '.join(unknown)}")
    figure_ids = FigureRegistry.figure_ids() if "all" in requested else requested
    written = 0
    for figure_id in figure_ids:
        try:
            frame = build_figure(ctx.store, figure_id)
        except ConfigError as exc:
            if "all" not in requested:
                raise
            logger.warning(f"Skipping {figure_id}: {exc}")
            continue
        ctx.store.write_csv(f"figures/{figure_id}.csv", frame)
        written += 1
    if written == 0:
        raise ConfigError("No figure could be built; run the commands that produce the artifacts first")
    return EXIT_OK


def register_default_commands() -> None:
    CommandRegistry.register_command("calibrate", _cmd_calibrate, "Discretise productivity and build the ability process")
    CommandRegistry.register_command("equilibrium", _cmd_equilibrium, "Baseline equilibrium, wealth distribution and shares")
    CommandRegistry.register_command("frontier", _cmd_frontier, "Revenue-preserving (tau_L, tau_K) frontier without consumption tax")
    CommandRegistry.register_command("optimize", _cmd_optimize, "Welfare-maximising tax mixes and regime comparisons")
    CommandRegistry.register_command("sweep", _cmd_sweep, "Optimal taxes across gamma or sigma")
    CommandRegistry.register_command("transition", _cmd_transition, "Transition path to a reformed tax mix and vote shares")
    CommandRegistry.register_command("verify", _cmd_verify, "Analytic identities and Monte Carlo checks of the wealth law")
    CommandRegistry.register_command("plot", _cmd_plot, "Figure tables from earlier artifacts")


def _rates_triple(text: str) -> tuple[float, float, float]:
    try:
        values = tuple(float(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected tau_L,tau_K,tau_C, got '{text}'") from None
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated rates, got '{text}'")
    return values  # type: ignore[return-value]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flat-tax",
        description="Equilibria, wealth distributions and optimal flat taxes under capital-return risk.",
    )
    parser.add_argument("--config", type=str, default=None, help="TOML or YAML config file")
    parser.add_argument("--out", type=str, default="out", help="Output directory")
    parser.add_argument("--seed", type=int, default=0, help="Seed of the Monte Carlo streams")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="Override a config key, e.g. gamma=4 or solver.value_tol=1e-10 (repeatable)",
    )
    parser.add_argument("--threads", type=int, default=1, help="Worker processes for tax grids and sweeps")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    commands = parser.add_subparsers(dest="command", required=True)
    for name, help_text in CommandRegistry.commands():
        sub = commands.add_parser(name, help=help_text, description=help_text)
        if name == "sweep":
            sub.add_argument("--param", choices=["gamma", "sigma"], required=True)
            sub.add_argument("--from", dest="start", type=float, required=True)
            sub.add_argument("--to", dest="stop", type=float, required=True)
            sub.add_argument("--step", type=float, required=True)
            sub.add_argument("--mode", choices=["full", "no_consumption_tax"], default="full")
        elif name == "transition":
            sub.add_argument("--horizon", type=int, default=None, help="Years until the new steady state")
            sub.add_argument(
                "--rates", type=_rates_triple, default=None, metavar="TAU_L,TAU_K,TAU_C",
                help="Reformed rates; defaults to the global optimum in optimize.json",
            )
        elif name == "verify":
            sub.add_argument(
                "--transition-horizon", type=int, default=0,
                help="Also check a simulated transition of this many years (0 skips it)",
            )
            sub.add_argument("--rates", type=_rates_triple, default=None, metavar="TAU_L,TAU_K,TAU_C")
        elif name == "plot":
            sub.add_argument(
                "--figure", action="append", default=None,
                help="Figure id such as fig2a or fig11c, or 'all' (repeatable)",
            )
    return parser


_GLOBAL_ARGS = {"config", "out", "seed", "overrides", "threads", "verbose", "command"}


def _manifest_from_args(args: argparse.Namespace) -> RunManifest:
    options = {key: value for key, value in vars(args).items() if key not in _GLOBAL_ARGS}
    return RunManifest(
        command=args.command,
        config_path=args.config,
        output_dir=args.out,
        seed=args.seed,
        overrides=[parse_override(text) for text in args.overrides],
        version=__version__,
        threads=max(args.threads, 1),
        args=options,
    )


def _write_diagnostics(store: ArtifactStore, manifest: RunManifest, exc: FlatTaxError) -> None:
    payload = {"command": manifest.command, "error": type(exc).__name__, "message": str(exc), **exc.diagnostics()}
    try:
        store.write_json("diagnostics.json", payload)
    except ConfigError as write_error:
        logger.error(f"Could not write diagnostics: {write_error}")


def run_command(manifest: RunManifest) -> int:
    """
    Run one command and map failures to exit codes.

    Returns:
        EXIT_OK, EXIT_VERIFY_FAILED, EXIT_CONFIG_ERROR, EXIT_SOLVER_ERROR
        or EXIT_INFEASIBLE_MIX
    """
    store = ArtifactStore(manifest.output_dir, manifest)
    try:
        config = load_config(manifest.config_path, manifest.overrides)
        handler = CommandRegistry.get_handler(manifest.command)
        store.write_manifest()
        logger.info(f"Running '{manifest.command}' (manifest {store.manifest_hash[:12]})")
        return handler(RunContext(manifest, config, store))
    except (ConfigError, ValidationError) as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG_ERROR
    except InfeasibleTaxMixError as exc:
        logger.error(f"Infeasible tax mix: {exc}")
        _write_diagnostics(store, manifest, exc)
        return EXIT_INFEASIBLE_MIX
    except FlatTaxError as exc:
        logger.error(f"Solver failure: {exc}")
        _write_diagnostics(store, manifest, exc)
        return EXIT_SOLVER_ERROR


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        manifest = _manifest_from_args(args)
    except (ConfigError, ValidationError) as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG_ERROR
    return run_command(manifest)


if __name__ == "__main__":
    raise SystemExit(main())
