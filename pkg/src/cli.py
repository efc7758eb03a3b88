# src/cli.py
"""
Command-line runner: one subcommand per scenario.

Shared settings resolve as explicit flag, then the --config JSON file, then
the scenario's own default. Exit code is 0 iff every statistic passes.
"""

import inspect
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import click
from pydantic import ValidationError

from src import experiments
from src.config import MLFLOW_TRACKING_URI, OUTPUT_DIR, EnumerationLimitError, setup_logging
from src.reports import ExperimentConfig, ExperimentReport

logger = logging.getLogger(__name__)


def _parse_dims(ctx, param, value):
    if value is None:
        return None
    try:
        return [tuple(int(x) for x in entry.split("x")) for entry in value.split(",") if entry.strip()]
    except ValueError:
        raise click.BadParameter(f"expected e.g. '16x16,32x32', got {value!r}")


def _parse_numbers(cast):
    def parse(ctx, param, value):
        if value is None:
            return None
        try:
            return tuple(cast(x) for x in value.split(",") if x.strip())
        except ValueError:
            raise click.BadParameter(f"expected a comma-separated list, got {value!r}")

    return parse


def _load_json(ctx, param, value):
    if value is None:
        return None
    try:
        return json.loads(Path(value).read_text())
    except json.JSONDecodeError as err:
        raise click.BadParameter(f"{value} is not valid JSON: {err}")


@dataclass
class Settings:
    seed: Optional[int]
    trials: Optional[int]
    dims: Optional[list]
    tol_mult: Optional[float]
    out: Optional[str]
    threads: Optional[int]
    file: Optional[ExperimentConfig]
    track: bool
    timing: bool

    def shared(self) -> dict:
        """File values first, explicit flags on top."""
        values = {}
        if self.file is not None:
            fields = self.file.__fields_set__
            for name in ("seed", "trials", "tol_mult", "threads"):
                if name in fields:
                    values[name] = getattr(self.file, name)
            if "dims" in fields and self.file.dims:
                values["dims"] = [tuple(d) for d in self.file.dims]
            values.update(self.file.params)
        flags = {"seed": self.seed, "trials": self.trials, "tol_mult": self.tol_mult,
                 "threads": self.threads, "dims": self.dims}
        values.update({k: v for k, v in flags.items() if v is not None})
        return values

    @property
    def out_dir(self) -> Path:
        if self.out is not None:
            return Path(self.out)
        if self.file is not None and "out" in self.file.__fields_set__:
            return Path(self.file.out)
        return Path(OUTPUT_DIR)


def _bind(fn: Callable, values: dict) -> dict:
    """Keep the values fn accepts; a dims schedule feeds dims_schedule, dims or d."""
    accepted = inspect.signature(fn).parameters
    values = dict(values)
    dims = values.pop("dims", None)
    if dims is not None:
        if "dims_schedule" in accepted:
            values["dims_schedule"] = dims
        elif "dims" in accepted:
            values["dims"] = dims[0]
        elif "d" in accepted and "d" not in values:
            values["d"] = dims[0][0]
    kwargs = {k: v for k, v in values.items() if k in accepted}
    ignored = sorted(set(values) - set(kwargs))
    if ignored:
        logger.warning("Ignoring settings not used by %s: %s", fn.__name__, ", ".join(ignored))
    return kwargs


def _echo_report(report: ExperimentReport) -> None:
    for stat in report.statistics:
        mark = "✅" if stat.passed else "❌"
        click.echo(
            f"{mark} {stat.name}: estimate={stat.estimate:.6g} target={stat.target:.6g} "
            f"stderr={stat.stderr:.3g} (k={stat.k:.3g})"
        )
    for fit in report.decay_fits:
        mark = "✅" if fit.passed else "❌"
        ratios = ", ".join(f"{r:.3g}" for r in fit.ratios)
        click.echo(f"{mark} decay {fit.statistic}: ratios [{ratios}] >= {fit.min_factor:g}, slope {fit.slope:.3g}")
    for note in report.notes:
        click.echo(f"   note: {note}")


def _run(ctx: click.Context, fn: Callable, **options) -> None:
    settings: Settings = ctx.obj
    values = settings.shared()
    values.update({k: v for k, v in options.items() if v is not None})
    if "out_dir" in inspect.signature(fn).parameters:
        values["out_dir"] = settings.out_dir
    kwargs = _bind(fn, values)

    start = time.perf_counter()
    try:
        report = fn(**kwargs)
    except (ValueError, ValidationError) as err:
        raise click.UsageError(str(err))
    except EnumerationLimitError as err:
        raise click.ClickException(str(err))
    report.wall_time = time.perf_counter() - start
    report.config.out = str(settings.out_dir)
    logger.info("%s finished in %.2f s", report.config.scenario, report.wall_time)

    paths = report.write(settings.out_dir, timing=settings.timing)
    if settings.track:
        from src.mlflow_tracking import ExperimentTracker

        artifacts = paths + [settings.out_dir / name for name in report.artifacts]
        ExperimentTracker().log_report(report, artifacts)

    _echo_report(report)
    if report.passed:
        click.echo(f"\n✅ {report.config.scenario} passed. Report saved to {paths[0]}")
        ctx.exit(0)
    click.echo(f"\n❌ {report.config.scenario} failed: {', '.join(report.failures)}. Report saved to {paths[0]}")
    ctx.exit(1)


@click.group()
@click.option("--seed", type=int, default=None, help="Base seed for every Monte Carlo stream.")
@click.option("--trials", type=int, default=None, help="Monte Carlo trials per dims entry.")
@click.option("--dims", callback=_parse_dims, default=None, help="Dims schedule, e.g. '16x16,32x32'.")
@click.option("--tol-mult", type=float, default=None, help="k in the k·stderr pass band.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--threads", type=int, default=None, help="Worker threads for per-trial work.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON ExperimentConfig with defaults for this run.")
@click.option("--log-level", default=None, help="Root log level (default TFP_LOG_LEVEL).")
@click.option("--track/--no-track", default=None, help="Log the report to MLflow.")
@click.option("--timing", is_flag=True, help="Include wall time in the written report.")
@click.pass_context
def cli(ctx, seed, trials, dims, tol_mult, out, threads, config_path, log_level, track, timing):
    """Tensor free probability experiments."""
    setup_logging(log_level)
    file_config = None
    if config_path is not None:
        try:
            file_config = ExperimentConfig.parse_file(config_path)
        except ValidationError as err:
            raise click.BadParameter(str(err), param_hint="--config")
    if track is None:
        track = bool(MLFLOW_TRACKING_URI)
    ctx.obj = Settings(seed, trials, dims, tol_mult, out, threads, file_config, track, timing)


@cli.command("wg-table")
@click.option("--p", "p", type=int, default=None)
@click.option("--d", "d", type=int, default=None)
@click.option("--kind", type=click.Choice(["unitary", "orthogonal"]), default=None)
@click.pass_context
def wg_table(ctx, p, d, kind):
    """Weingarten table, closed forms and large-d deviation."""
    _run(ctx, experiments.run_wg_table, p=p, d=d, kind=kind)


@cli.command("twirl-check")
@click.option("--d", "d", type=int, default=None)
@click.pass_context
def twirl_check(ctx, d):
    """Monte Carlo two-fold twirls against the closed forms."""
    _run(ctx, experiments.run_twirl_check, d=d)


@cli.command("lui-freeness")
@click.option("--p-max", type=int, default=None)
@click.option(
    "--specs",
    type=click.Path(exists=True, dir_okay=False),
    callback=_load_json,
    default=None,
    help="JSON list of ensemble specs, one per matrix of the family.",
)
@click.pass_context
def lui_freeness(ctx, p_max, specs):
    """Mixed cumulant decay for independent locally invariant matrices."""
    _run(ctx, experiments.run_lui_freeness, p_max=p_max, specs=specs)


@cli.command("pt-semicircle")
@click.option("--ensemble", type=click.Choice(experiments.PT_ENSEMBLES), default=None)
@click.option("--t", "t", callback=_parse_numbers(int), default=None, help="Sign vector, e.g. '1,-1'.")
@click.option("--aspect", type=float, default=None)
@click.option("--p-max", type=int, default=None)
@click.pass_context
def pt_semicircle(ctx, ensemble, t, aspect, p_max):
    """Semicircularity of a partial transpose."""
    _run(ctx, experiments.run_pt_semicircle, ensemble=ensemble, t=t, aspect=aspect, p_max=p_max)


@cli.command("pt-freeness")
@click.option("--ensemble", type=click.Choice(experiments.PT_ENSEMBLES), default=None)
@click.option("--aspect", type=float, default=None)
@click.option("--p-max", type=int, default=None)
@click.pass_context
def pt_freeness(ctx, ensemble, aspect, p_max):
    """Mixed cumulant decay among the partial transposes of one matrix."""
    _run(ctx, experiments.run_pt_freeness, ensemble=ensemble, aspect=aspect, p_max=p_max)


@cli.command("embedding")
@click.option("--graph", type=click.Choice(sorted(experiments.GRAPHS)), default=None)
@click.option("--ensemble", type=click.Choice(experiments.PT_ENSEMBLES), default=None)
@click.option("--draws", "sharing", type=click.Choice(["identical", "independent"]), default=None,
              help="One shared draw for every edge, or independent draws.")
@click.option("--aspect", type=float, default=None)
@click.option("--p-max", type=int, default=None)
@click.pass_context
def embedding(ctx, graph, ensemble, sharing, aspect, p_max):
    """Tensor freeness of graph embeddings of bipartite matrices."""
    identical = None if sharing is None else sharing == "identical"
    _run(ctx, experiments.run_embedding, graph=graph, ensemble=ensemble, identical=identical, aspect=aspect, p_max=p_max)


@cli.command("clt")
@click.option("--lambdas", callback=_parse_numbers(float), default=None, help="Per-leg means, e.g. '1,1'.")
@click.option("--sigmas", callback=_parse_numbers(float), default=None, help="Per-leg deviations, e.g. '1,1'.")
@click.option("--n-list", callback=_parse_numbers(int), default=None, help="Partial sum sizes, e.g. '1,8,64'.")
@click.option("--d", "d", type=int, default=None)
@click.option("--p-max", type=int, default=None)
@click.option("--hist-d", type=int, default=None)
@click.option("--hist-draws", type=int, default=None, help="Matrices per limit-law histogram; 0 skips them.")
@click.pass_context
def clt(ctx, lambdas, sigmas, n_list, d, p_max, hist_d, hist_draws):
    """Central limit theorem: partial sums and limit-law histograms."""
    _run(ctx, experiments.run_clt, lambdas=lambdas, sigmas=sigmas, N_list=n_list, d=d, p_max=p_max,
         histogram_d=hist_d, histogram_draws=hist_draws)


@cli.command("axioms-check")
@click.option("--p-max", type=int, default=None)
@click.pass_context
def axioms_check(ctx, p_max):
    """Tensor probability space axioms and exact combinatorial oracles."""
    _run(ctx, experiments.run_axioms_check, p_max=p_max)


def main():
    cli()


if __name__ == "__main__":
    main()
