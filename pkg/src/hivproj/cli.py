"""Batch front door: calibrate, project, validate and compare subcommands.

A declarative TOML config names the input files and run options; a few
flags override it for one-off runs. Progress goes to standard error, data
only to files. Exit codes: 0 on success, 2 for configuration or schema
problems, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import dataio
from .e0model import McmcSettings, load_e0_model, save_e0_model
from .errors import (
    AlignmentError,
    ConfigError,
    HivprojError,
    InvalidInputError,
    SchemaError,
)
from .mlt import load_basis, save_basis
from .pipeline import (
    ProjectionSettings,
    calibrate_models,
    load_bundle,
    project_all,
    quantile_tables,
)
from .validate import HoldoutSpec, compare_to_external, run_holdout

LOGGER = logging.getLogger("hivproj.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

INPUT_KEYS = (
    "e0_history", "art_coverage", "prevalence_median", "prevalence_samples",
    "mortality", "base_population", "tfr_trajectories", "fertility_pattern",
    "migration", "observed_population", "external_projection",
)

REQUIRED_INPUTS = {
    "calibrate": ("e0_history", "art_coverage", "prevalence_median", "mortality"),
    "project": ("e0_history", "art_coverage", "prevalence_median",
                "prevalence_samples", "base_population", "tfr_trajectories",
                "fertility_pattern"),
    "validate": ("e0_history", "art_coverage", "prevalence_median",
                 "prevalence_samples", "mortality", "base_population",
                 "tfr_trajectories", "fertility_pattern"),
    "compare": ("external_projection",),
}


@dataclass
class RunConfig:
    """Validated run options merged from the config file and flags."""

    inputs: dict = field(default_factory=dict)
    countries: list | None = None
    horizon: int = 2100
    base_year: int = 2015
    trajectories: int = 1000
    seed: int = 0
    noise: bool = True
    out: str = "out"
    workers: int = 1
    emit_trajectories: bool = False
    calibration_end: int = 2015
    evaluation_period: int = 2010
    holdout_calibration_end: int = 2010
    mcmc: McmcSettings = field(default_factory=McmcSettings)
    compare_periods: list = field(default_factory=lambda: [2015, 2020, 2025])
    quantiles_path: str | None = None
    e0_model_path: str | None = None
    mlt_basis_path: str | None = None


def _load_toml(path) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as handle:
        try:
            return tomllib.load(handle)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"cannot parse {path}: {err}") from None


def build_config(args) -> RunConfig:
    raw = _load_toml(args.config) if args.config else {}
    config = RunConfig()
    config.inputs = dict(raw.get("inputs", {}))

    run = raw.get("run", {})
    config.countries = run.get("countries")
    config.horizon = int(run.get("horizon", config.horizon))
    config.base_year = int(run.get("base_year", config.base_year))
    config.trajectories = int(run.get("trajectories", config.trajectories))
    config.seed = int(run.get("seed", config.seed))
    config.noise = bool(run.get("noise", config.noise))
    config.out = run.get("out", config.out)
    config.workers = int(run.get("workers", config.workers))

    cal = raw.get("calibrate", {})
    config.calibration_end = int(cal.get("calibration_end",
                                         config.calibration_end))
    config.mcmc = McmcSettings(
        chains=int(cal.get("chains", 3)),
        iterations=int(cal.get("iterations", 20_000)),
        burn_in=int(cal.get("burn_in", 10_000)),
        target_draws=int(cal.get("target_draws", 1_000)),
    )
    val = raw.get("validate", {})
    config.holdout_calibration_end = int(val.get("calibration_end",
                                                 config.holdout_calibration_end))
    config.evaluation_period = int(val.get("evaluation_period",
                                           config.evaluation_period))
    comp = raw.get("compare", {})
    config.compare_periods = [int(p) for p in comp.get("periods",
                                                       config.compare_periods)]
    config.quantiles_path = comp.get("quantiles")
    models = raw.get("models", {})
    config.e0_model_path = models.get("e0_model")
    config.mlt_basis_path = models.get("mlt_basis")

    # flag overrides
    if args.seed is not None:
        config.seed = args.seed
    if args.trajectories is not None:
        config.trajectories = args.trajectories
    if args.countries is not None:
        config.countries = [c for c in args.countries.split(",") if c]
    if args.horizon is not None:
        config.horizon = args.horizon
    if args.out is not None:
        config.out = args.out
    if args.emit_trajectories:
        config.emit_trajectories = True
    if args.no_noise:
        config.noise = False

    if config.horizon % 5 != 0:
        raise ConfigError(f"horizon {config.horizon} is not on the 5-year grid")
    if config.trajectories < 2:
        raise ConfigError("at least 2 trajectories are required")
    if config.countries is not None and len(config.countries) == 0:
        raise ConfigError("country filter is empty: nothing to do")
    return config


def _check_inputs(config: RunConfig, command: str):
    for key in REQUIRED_INPUTS[command]:
        if key not in config.inputs:
            raise ConfigError(f"[inputs] is missing {key!r} (needed by "
                              f"{command})")
        path = config.inputs[key]
        if not os.path.exists(path):
            raise ConfigError(f"input file for {key!r} does not exist: {path}")
    for key, path in config.inputs.items():
        if key not in INPUT_KEYS:
            raise ConfigError(f"unknown [inputs] key {key!r}")


def _bundle_for(config: RunConfig, command: str):
    _check_inputs(config, command)
    wanted = set(REQUIRED_INPUTS[command]) | {"migration", "observed_population"}
    paths = {k: v for k, v in config.inputs.items()
             if k in wanted and k != "external_projection"
             and os.path.exists(v)}
    bundle = load_bundle(paths)
    if config.countries is not None:
        bundle = bundle.restricted_to(config.countries)
    return bundle


def _model_paths(config: RunConfig):
    e0_path = config.e0_model_path or os.path.join(config.out, "e0_model.txt")
    basis_path = config.mlt_basis_path or os.path.join(config.out,
                                                       "mlt_basis.txt")
    return e0_path, basis_path


def cmd_calibrate(config: RunConfig) -> int:
    bundle = _bundle_for(config, "calibrate")
    os.makedirs(config.out, exist_ok=True)
    e0_result, basis = calibrate_models(
        bundle, calibration_end=config.calibration_end,
        master_seed=config.seed, mcmc=config.mcmc)
    e0_path, basis_path = _model_paths(config)
    save_e0_model(e0_result.model, e0_path)
    save_basis(basis, basis_path)
    LOGGER.info("wrote %s and %s", e0_path, basis_path)
    acc = e0_result.acceptance
    print("calibration diagnostics")
    print(f"  countries: {len(e0_result.countries)}")
    print(f"  beta_hna posterior median: {e0_result.model.beta_hna:.6g}")
    print(f"  country-block acceptance: mean {acc.mean():.2f} "
          f"(min {acc.min():.2f}, max {acc.max():.2f})")
    for name, value in e0_result.residual_sd.items():
        print(f"  e0 residual sd, {name}: {value:.4f}")
    print(f"  life-table residual log-rate sd: mean {basis.sx.mean():.4f}, "
          f"max {basis.sx.max():.4f}")
    return EXIT_OK


def cmd_project(config: RunConfig) -> int:
    bundle = _bundle_for(config, "project")
    e0_path, basis_path = _model_paths(config)
    for path in (e0_path, basis_path):
        if not os.path.exists(path):
            raise ConfigError(f"calibrated model file not found: {path} "
                              "(run the calibrate subcommand first)")
    e0_model = load_e0_model(e0_path)
    basis = load_basis(basis_path)
    missing = [c for c in bundle.countries() if c not in e0_model.theta]
    if missing:
        raise ConfigError("calibrated e0 model does not cover: "
                          + ", ".join(missing))
    settings = ProjectionSettings(
        base_year=config.base_year, horizon=config.horizon,
        n_trajectories=config.trajectories, master_seed=config.seed,
        noise=config.noise)
    projections = project_all(bundle, e0_model, basis, settings,
                              workers=config.workers)
    os.makedirs(config.out, exist_ok=True)
    tables = quantile_tables(projections)
    quantile_path = os.path.join(config.out, "projection_quantiles.csv")
    dataio.write_quantiles(quantile_path, tables)
    prevalence_path = os.path.join(config.out, "five_year_prevalence.csv")
    dataio.write_five_year_prevalence(
        prevalence_path, {c: fy for c, (_, fy) in projections.items()})
    LOGGER.info("wrote %s", quantile_path)
    if config.emit_trajectories:
        trajectory_path = os.path.join(config.out, "trajectories.csv")
        dataio.write_trajectories(
            trajectory_path, {c: r for c, (r, _) in projections.items()})
        LOGGER.info("wrote %s", trajectory_path)
    return EXIT_OK


def cmd_validate(config: RunConfig) -> int:
    bundle = _bundle_for(config, "validate")
    spec = HoldoutSpec(calibration_end=config.holdout_calibration_end,
                       evaluation_period=config.evaluation_period)
    result = run_holdout(spec, bundle, master_seed=config.seed,
                         n_trajectories=config.trajectories, mcmc=config.mcmc,
                         noise=config.noise)
    os.makedirs(config.out, exist_ok=True)
    metrics_path = os.path.join(config.out, "metrics.csv")
    dataio.write_metrics(metrics_path, result.report.rows())
    LOGGER.info("wrote %s", metrics_path)
    print(result.report.text_summary())
    return EXIT_OK


def cmd_compare(config: RunConfig) -> int:
    _check_inputs(config, "compare")
    quantile_path = config.quantiles_path or os.path.join(
        config.out, "projection_quantiles.csv")
    if not os.path.exists(quantile_path):
        raise ConfigError(f"projection quantiles not found: {quantile_path} "
                          "(run the project subcommand first)")
    quantiles = dataio.read_quantiles(quantile_path)
    medians = {(c, p, ind): v for (c, ind, p, prob), v in quantiles.items()
               if prob == 0.5}
    external = dataio.read_external_projection(
        config.inputs["external_projection"])
    if config.countries is not None:
        keep = set(config.countries)
        medians = {k: v for k, v in medians.items() if k[0] in keep}
        external = {k: v for k, v in external.items() if k[0] in keep}
    periods = config.compare_periods
    indicators_present = {k[2] for k in external}
    md_indicators = tuple(i for i in ("prevalence", "e0_female")
                          if i in indicators_present)
    report = compare_to_external(medians, external, periods, md_indicators)
    os.makedirs(config.out, exist_ok=True)
    compare_path = os.path.join(config.out, "compare.csv")
    dataio.write_metrics(compare_path, report.rows())
    LOGGER.info("wrote %s", compare_path)

    print("period      MD prevalence   MD e0   MPD total  MPD 0-4  MPD f15-49")
    for period in periods:
        cells = [f"{period}-{period + 5}"]
        for indicator, table in (("prevalence", report.md),
                                 ("e0_female", report.md),
                                 ("total_population", report.mpd),
                                 ("population_0_4", report.mpd),
                                 ("female_15_49", report.mpd)):
            value = table.get((indicator, period))
            cells.append("   -  " if value is None else f"{value:7.2f}")
        print("  ".join(cells))
    return EXIT_OK


COMMANDS = {
    "calibrate": cmd_calibrate,
    "project": cmd_project,
    "validate": cmd_validate,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hivproj",
        description="Probabilistic population projections for countries with "
                    "generalized HIV epidemics.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="TOML run configuration")
    parser.add_argument("--seed", type=int, help="master random seed")
    parser.add_argument("--trajectories", type=int,
                        help="number of Monte Carlo trajectories")
    parser.add_argument("--countries",
                        help="comma-separated country filter")
    parser.add_argument("--horizon", type=int, help="projection horizon year")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--emit-trajectories", action="store_true",
                        help="also write the full per-trajectory store")
    parser.add_argument("--no-noise", action="store_true",
                        help="disable mortality-schedule noise")
    parser.add_argument("--verbose", action="store_true",
                        help="log progress details to stderr")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = build_config(args)
        return COMMANDS[args.command](config)
    except (ConfigError, SchemaError, InvalidInputError, AlignmentError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except HivprojError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
