"""End-to-end orchestration: bundle loading, calibration and projection.

A DataBundle groups every input the engine ingests. Calibration fits the
e0 gain model and the joint model life table from the historical slices of
the bundle; projection turns the per-trajectory prevalence, e0 and TFR
paths into population trajectories country by country. Period labels name
five-year intervals by their start year: the value labeled t covers
[t, t+5). A projection with base year 2015 and horizon 2100 therefore steps
through 17 period labels 2015..2095 and yields pyramids for 2015..2100.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ccmpp import (
    FertilityInput,
    MigrationInput,
    ProjectionResult,
    run_projection,
    summarize_quantiles,
)
from .e0model import (
    E0CalibrationResult,
    E0Model,
    HnaSeries,
    McmcSettings,
    calibrate_e0_model,
    simulate_e0_trajectories,
)
from .errors import AlignmentError, CalibrationError, InvalidInputError
from .lifetable import AConvention, PopulationPyramid
from .mlt import CalibrationMatrix, MltBasis, calibrate_mlt
from .prevalence import aggregate_five_year, scale_trajectories

LOGGER = logging.getLogger("hivproj")


@dataclass
class DataBundle:
    """Every input table, keyed by country.

    ``mortality`` maps (country, period_start) to {"female", "male"} rate
    vectors; series entries are (keys, values) pairs; sample entries are
    (trajectory_ids, grid, matrix) triples. ``observed_population`` is only
    needed by holdout evaluation.
    """

    e0_history: dict
    art: dict
    prevalence_median: dict
    prevalence_samples: dict = field(default_factory=dict)
    mortality: dict = field(default_factory=dict)
    base_population: dict = field(default_factory=dict)
    tfr: dict = field(default_factory=dict)
    fertility_pattern: dict = field(default_factory=dict)
    migration: dict = field(default_factory=dict)
    observed_population: dict = field(default_factory=dict)

    def countries(self):
        return sorted(self.e0_history)

    def restricted_to(self, countries) -> "DataBundle":
        keep = set(countries)
        missing = keep - set(self.e0_history)
        if missing:
            raise InvalidInputError(
                "no e0 history for: " + ", ".join(sorted(missing)))

        def filter_map(mapping, key=lambda k: k):
            return {k: v for k, v in mapping.items() if key(k) in keep}

        return DataBundle(
            e0_history=filter_map(self.e0_history),
            art=filter_map(self.art),
            prevalence_median=filter_map(self.prevalence_median),
            prevalence_samples=filter_map(self.prevalence_samples),
            mortality=filter_map(self.mortality, key=lambda k: k[0]),
            base_population=filter_map(self.base_population),
            tfr=filter_map(self.tfr),
            fertility_pattern=filter_map(self.fertility_pattern),
            migration=filter_map(self.migration),
            observed_population=filter_map(self.observed_population),
        )


def load_bundle(paths: dict) -> DataBundle:
    """Read a bundle from a {name: path} mapping (missing keys allowed)."""
    from . import dataio

    readers = {
        "e0_history": dataio.read_e0_history,
        "art_coverage": dataio.read_art_coverage,
        "prevalence_median": dataio.read_prevalence_median,
        "prevalence_samples": dataio.read_prevalence_samples,
        "mortality": dataio.read_mortality,
        "base_population": dataio.read_base_population,
        "tfr_trajectories": dataio.read_tfr_trajectories,
        "fertility_pattern": dataio.read_fertility_pattern,
        "migration": dataio.read_migration,
        "observed_population": dataio.read_base_population,
    }
    loaded = {name: reader(paths[name])
              for name, reader in readers.items() if name in paths}
    return DataBundle(
        e0_history=loaded.get("e0_history", {}),
        art=loaded.get("art_coverage", {}),
        prevalence_median=loaded.get("prevalence_median", {}),
        prevalence_samples=loaded.get("prevalence_samples", {}),
        mortality=loaded.get("mortality", {}),
        base_population=loaded.get("base_population", {}),
        tfr=loaded.get("tfr_trajectories", {}),
        fertility_pattern=loaded.get("fertility_pattern", {}),
        migration=loaded.get("migration", {}),
        observed_population=loaded.get("observed_population", {}),
    )


def five_year_median_prevalence(bundle: DataBundle, country: str, period_starts):
    """Five-year means of the designated median annual path."""
    years, values = bundle.prevalence_median[country]
    year_index = {int(y): i for i, y in enumerate(years)}
    out = np.empty(len(period_starts))
    for j, start in enumerate(period_starts):
        try:
            idx = [year_index[int(start) + o] for o in range(5)]
        except KeyError as missing:
            raise InvalidInputError(
                f"median prevalence for {country} is missing year {missing}"
            ) from None
        out[j] = values[idx].mean()
    return out


def hna_history(bundle: DataBundle, country: str, period_starts) -> HnaSeries:
    """Historical HnA inputs aligned to the e0 period grid."""
    period_starts = np.asarray(period_starts, dtype=int)
    hiv = five_year_median_prevalence(bundle, country, period_starts)
    art_periods, art_values = bundle.art[country]
    art_index = {int(p): v for p, v in zip(art_periods, art_values)}
    try:
        art = np.array([art_index[int(p)] for p in period_starts], dtype=float)
    except KeyError as missing:
        raise InvalidInputError(
            f"ART coverage for {country} is missing period {missing}") from None
    return HnaSeries(country=country, period_starts=period_starts, hiv=hiv, art=art)


def build_calibration_matrix(bundle: DataBundle, countries,
                             last_period_end: int) -> CalibrationMatrix:
    """Assemble the joint log-rate matrix from periods ending by a boundary."""
    columns, metadata = [], []
    for country in countries:
        e0_periods, e0_values = bundle.e0_history[country]
        e0_index = {int(p): v for p, v in zip(e0_periods, e0_values)}
        for (c, period), sexes in sorted(bundle.mortality.items()):
            if c != country or period + 5 > last_period_end:
                continue
            if period not in e0_index:
                raise CalibrationError(
                    f"no e0 value for {country} period {period} in the "
                    "mortality history")
            prev = five_year_median_prevalence(bundle, country, [period])[0]
            columns.append(np.concatenate([np.log(sexes["female"]),
                                           np.log(sexes["male"])]))
            metadata.append((country, period, e0_index[period], prev))
    if not columns:
        raise CalibrationError("no mortality tables fall inside the "
                               "calibration window")
    return CalibrationMatrix(
        log_mx=np.column_stack(columns),
        countries=tuple(m[0] for m in metadata),
        period_starts=np.array([m[1] for m in metadata]),
        e0_female=np.array([m[2] for m in metadata]),
        prevalence=np.array([m[3] for m in metadata]),
    )


def calibrate_models(bundle: DataBundle, *, calibration_end: int,
                     master_seed: int = 0,
                     mcmc: McmcSettings | None = None):
    """Fit the e0 model and the model life table from historical data.

    ``calibration_end`` is a year boundary; only periods fully before it
    contribute. Returns (E0CalibrationResult, MltBasis).
    """
    countries = bundle.countries()
    e0_truncated, hna_truncated = {}, {}
    for country in countries:
        periods, values = bundle.e0_history[country]
        keep = periods + 5 <= calibration_end
        trimmed = (periods[keep], values[keep])
        e0_truncated[country] = trimmed
        hna_truncated[country] = hna_history(bundle, country, trimmed[0])
    LOGGER.info("calibrating e0 model on %d countries", len(countries))
    e0_result = calibrate_e0_model(e0_truncated, hna_truncated,
                                   master_seed=master_seed, settings=mcmc)
    LOGGER.info("calibrating model life table")
    basis = calibrate_mlt(build_calibration_matrix(bundle, countries,
                                                   calibration_end))
    return e0_result, basis


@dataclass(frozen=True)
class ProjectionSettings:
    """Options shared by every projected country."""

    base_year: int = 2015
    horizon: int = 2100
    n_trajectories: int = 1000
    master_seed: int = 0
    noise: bool = True
    a_convention: AConvention = AConvention.COALE_DEMENY
    keep_schedules: bool = False

    def __post_init__(self):
        if self.horizon % 5 or self.base_year % 5:
            raise InvalidInputError("base year and horizon must sit on the "
                                    "5-year grid")
        if self.horizon <= self.base_year:
            raise InvalidInputError("horizon must be after the base year")
        if self.n_trajectories < 2:
            raise InvalidInputError("at least 2 trajectories are required")

    @property
    def period_starts(self):
        return np.arange(self.base_year, self.horizon, 5)


def project_country(bundle: DataBundle, country: str, e0_model: E0Model,
                    basis: MltBasis, settings: ProjectionSettings):
    """Project one country; returns (ProjectionResult, FiveYearPrevalence).

    The e0 path starts from the last observed value (the period label one
    step before the base year); per-trajectory HnA paths pair the observed
    value at that label with the trajectory's own five-year prevalence.
    When the stored fans carry more trajectories than requested, the leading
    slice is used, so smoke runs can reuse full-size input files.
    """
    starts = settings.period_starts
    n_traj = settings.n_trajectories
    start_label = settings.base_year - 5

    ids, years, raw = bundle.prevalence_samples[country]
    if ids.size < n_traj:
        raise AlignmentError(
            f"{country}: prevalence samples carry {ids.size} trajectories, "
            f"run asks for {n_traj}")
    if ids.size > n_traj:
        # smoke runs may use the leading slice of a larger stored fan
        raw = raw[:n_traj]
    med_years, med_values = bundle.prevalence_median[country]
    year_lo = int(years[0])
    year_hi = int(years[-1])
    if year_lo > settings.base_year or year_hi < settings.horizon - 1:
        raise InvalidInputError(
            f"{country}: prevalence samples cover {year_lo}..{year_hi}, "
            f"projection needs {settings.base_year}..{settings.horizon - 1}")
    med_index = {int(y): v for y, v in zip(med_years, med_values)}
    try:
        median_path = np.array([med_index[int(y)] for y in years])
    except KeyError as missing:
        raise InvalidInputError(
            f"median prevalence for {country} is missing year {missing}"
        ) from None
    scaled = scale_trajectories(country, years, median_path, raw)
    five_year = aggregate_five_year(scaled, starts)

    hna0 = hna_history(bundle, country, [start_label])
    art_periods, art_values = bundle.art[country]
    art_index = {int(p): v for p, v in zip(art_periods, art_values)}
    try:
        art_path = np.array([art_index[int(p)] for p in starts], dtype=float)
    except KeyError as missing:
        raise InvalidInputError(
            f"ART coverage for {country} is missing period {missing}") from None
    grid = np.concatenate(([start_label], starts))
    art_grid = np.concatenate(([hna0.art[0]], art_path))
    hna_paths = [
        HnaSeries(country=country, period_starts=grid,
                  hiv=np.concatenate(([hna0.hiv[0]], five_year.samples[k])),
                  art=art_grid)
        for k in range(n_traj)
    ]

    e0_periods, e0_values = bundle.e0_history[country]
    e0_index = {int(p): v for p, v in zip(e0_periods, e0_values)}
    if start_label not in e0_index:
        raise InvalidInputError(
            f"e0 history for {country} is missing period {start_label}")
    e0_set = simulate_e0_trajectories(
        e0_model, country, hna_paths, e0_index[start_label],
        settings.master_seed, n_trajectories=n_traj)

    tfr_ids, tfr_periods, tfr_values = bundle.tfr[country]
    if tfr_ids.size < n_traj:
        raise AlignmentError(
            f"{country}: TFR trajectories carry {tfr_ids.size} trajectories, "
            f"run asks for {n_traj}")
    if tfr_ids.size > n_traj:
        tfr_values = tfr_values[:n_traj]
    col_index = {int(p): i for i, p in enumerate(tfr_periods)}
    try:
        cols = [col_index[int(p)] for p in starts]
    except KeyError as missing:
        raise InvalidInputError(
            f"TFR trajectories for {country} are missing period {missing}"
        ) from None
    fertility = FertilityInput(
        country=country, period_starts=starts, tfr=tfr_values[:, cols],
        pattern=bundle.fertility_pattern[country])

    if country in bundle.migration:
        mig_periods, mig_f, mig_m = bundle.migration[country]
        mig_index = {int(p): i for i, p in enumerate(mig_periods)}
        try:
            rows = [mig_index[int(p)] for p in starts]
        except KeyError as missing:
            raise InvalidInputError(
                f"migration for {country} is missing period {missing}") from None
        migration = MigrationInput(country=country, period_starts=starts,
                                   female=mig_f[rows], male=mig_m[rows])
    else:
        zero = np.zeros((starts.size, 21))
        migration = MigrationInput(country=country, period_starts=starts,
                                   female=zero, male=zero.copy())

    female, male = bundle.base_population[country]
    base = PopulationPyramid(period=settings.base_year, female=female, male=male)

    LOGGER.info("projecting %s: %d trajectories, %d periods",
                country, n_traj, starts.size)
    result = run_projection(
        fertility, five_year, e0_set, basis, migration, base,
        master_seed=settings.master_seed, noise=settings.noise,
        a_convention=settings.a_convention,
        keep_schedules=settings.keep_schedules)
    return result, five_year


def _project_one(args):
    bundle, country, e0_model, basis, settings = args
    result, five_year = project_country(bundle, country, e0_model, basis,
                                        settings)
    return country, result, five_year


def project_all(bundle: DataBundle, e0_model: E0Model, basis: MltBasis,
                settings: ProjectionSettings, countries=None, workers: int = 1):
    """Project many countries; optional process pool, deterministic order.

    Returns {country: (ProjectionResult, FiveYearPrevalence)} sorted by
    country code regardless of scheduling.
    """
    countries = sorted(countries if countries is not None else bundle.countries())
    jobs = [(bundle.restricted_to([c]), c, e0_model, basis, settings)
            for c in countries]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_project_one, jobs))
    else:
        done = [_project_one(job) for job in jobs]
    return {country: (result, five_year)
            for country, result, five_year in sorted(done, key=lambda t: t[0])}


def quantile_tables(projections, probs=None) -> dict:
    """{country: {indicator: QuantileTable}} from project_all output."""
    from .ccmpp import QUANTILE_PROBS

    probs = probs or QUANTILE_PROBS
    return {country: summarize_quantiles(result, probs)
            for country, (result, _) in projections.items()}
