"""Out-of-sample evaluation: holdout runner, MAE, interval coverage, MD/MPD.

The holdout recalibrates both models on data before a cutoff, projects the
held-out period with the full trajectory fan, and scores the predictive
distributions against the observed values: mean absolute error of the
medians for four mortality indices, pooled coverage of age-sex-specific
mortality rates, and per-country coverage for female e0 and total
population. Comparison against an external projection export uses mean
difference and mean proportional difference of the medians.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .e0model import McmcSettings
from .errors import (
    AlignmentError,
    InvalidInputError,
    MalformedIntervalError,
)
from .lifetable import (
    FEMALE,
    MALE,
    AConvention,
    MortalitySchedule,
    build_life_table,
    summary_index,
)
from .mlt import FEMALE_ROWS, MALE_ROWS
from .pipeline import (
    DataBundle,
    ProjectionSettings,
    calibrate_models,
    project_country,
)

COVERAGE_LEVELS = (80, 90, 95)

MORTALITY_INDICES = ("e0", "q5_0", "q45_15", "q35_10")
PER_THOUSAND = ("q5_0", "q45_15", "q35_10")


@dataclass(frozen=True)
class HoldoutSpec:
    """What to hold out and score.

    ``calibration_end`` is a year boundary; only periods that end by it are
    used for calibration. ``evaluation_period`` labels the five-year period
    to predict and must start at or after the boundary.
    """

    calibration_end: int
    evaluation_period: int
    countries: tuple = ()
    indicators: tuple = MORTALITY_INDICES

    def __post_init__(self):
        if self.evaluation_period < self.calibration_end:
            raise InvalidInputError(
                "evaluation period must lie after the calibration end")


def mae(predicted: dict, observed: dict) -> float:
    """Mean absolute error over aligned country keys."""
    missing = set(predicted) ^ set(observed)
    if missing:
        raise AlignmentError(
            "prediction and observation country sets differ: "
            + ", ".join(sorted(missing)))
    keys = sorted(predicted)
    if not keys:
        raise InvalidInputError("no countries to score")
    return float(np.mean([abs(predicted[k] - observed[k]) for k in keys]))


def coverage(lower, upper, observed) -> float:
    """Percent of observations inside their closed intervals."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    observed = np.asarray(observed, dtype=float)
    if lower.shape != upper.shape or lower.shape != observed.shape:
        raise AlignmentError("interval and observation arrays differ in shape")
    if (lower > upper).any():
        i = int(np.argmax(lower > upper))
        raise MalformedIntervalError(
            f"interval {i} has lower bound {lower.flat[i]} above upper "
            f"{upper.flat[i]}")
    inside = (observed >= lower) & (observed <= upper)
    return float(100.0 * inside.mean())


def mean_difference(ours: dict, external: dict) -> float:
    """Mean of (ours - external) over aligned keys."""
    missing = set(ours) ^ set(external)
    if missing:
        raise AlignmentError("country sets differ: " + ", ".join(sorted(missing)))
    keys = sorted(ours)
    if not keys:
        raise InvalidInputError("no countries to compare")
    return float(np.mean([ours[k] - external[k] for k in keys]))


def mean_proportional_difference(ours: dict, external: dict) -> float:
    """Mean of (ours - external) / external, in percent."""
    missing = set(ours) ^ set(external)
    if missing:
        raise AlignmentError("country sets differ: " + ", ".join(sorted(missing)))
    keys = sorted(ours)
    if not keys:
        raise InvalidInputError("no countries to compare")
    for k in keys:
        if external[k] == 0.0:
            raise InvalidInputError(
                f"external value for {k} is zero; proportional difference "
                "undefined")
    return float(100.0 * np.mean([(ours[k] - external[k]) / external[k]
                                  for k in keys]))


@dataclass
class MetricReport:
    """Holdout metrics: MAE by indicator and sex, coverage by level."""

    mae: dict = field(default_factory=dict)        # (indicator, sex) -> value
    coverage: dict = field(default_factory=dict)   # (indicator, level) -> pct
    md: dict = field(default_factory=dict)         # (indicator, period) -> value
    mpd: dict = field(default_factory=dict)        # (indicator, period) -> pct

    def rows(self):
        """(metric, indicator, sex, level, value) tuples for metrics.csv."""
        out = []
        for (indicator, sex), value in sorted(self.mae.items()):
            out.append(("mae", indicator, sex, "", value))
        for (indicator, level), value in sorted(self.coverage.items()):
            out.append(("coverage", indicator, "", str(level), value))
        for (indicator, period), value in sorted(self.md.items()):
            out.append(("md", indicator, "", str(period), value))
        for (indicator, period), value in sorted(self.mpd.items()):
            out.append(("mpd", indicator, "", str(period), value))
        return out

    def text_summary(self) -> str:
        lines = ["holdout metrics", "---------------"]
        if self.mae:
            lines.append("mean absolute error of the median "
                         "(q indices per 1000):")
            for (indicator, sex), value in sorted(self.mae.items()):
                lines.append(f"  {indicator:8s} {sex:6s} {value:8.3f}")
        if self.coverage:
            lines.append("predictive interval coverage (percent):")
            for (indicator, level), value in sorted(self.coverage.items()):
                lines.append(f"  {indicator:18s} {level:3d}% PI {value:6.1f}")
        if self.md:
            lines.append("mean difference vs external projection:")
            for (indicator, period), value in sorted(self.md.items()):
                lines.append(f"  {indicator:18s} {period} {value:8.3f}")
        if self.mpd:
            lines.append("mean proportional difference vs external (percent):")
            for (indicator, period), value in sorted(self.mpd.items()):
                lines.append(f"  {indicator:18s} {period} {value:8.3f}")
        return "\n".join(lines)


@dataclass
class HoldoutResult:
    """Report plus the predictive samples it was scored from."""

    report: MetricReport
    spec: HoldoutSpec
    countries: list
    mx_samples: dict           # country -> (K, 44) rates for the held-out period
    e0_samples: dict           # country -> (K,) female e0
    population_samples: dict   # country -> (K,) total population at period end
    observed_mx: dict          # country -> (44,)
    observed_e0: dict          # country -> float
    observed_population: dict  # country -> float
    basis: object = None
    e0_calibration: object = None


def _interval(samples, level):
    alpha = (100.0 - level) / 200.0
    return (np.quantile(samples, alpha, axis=0),
            np.quantile(samples, 1.0 - alpha, axis=0))


def _index_samples(mx_samples, sex, index, a_convention):
    rows = FEMALE_ROWS if sex == FEMALE else MALE_ROWS
    values = np.empty(mx_samples.shape[0])
    for i, rates in enumerate(mx_samples):
        table = build_life_table(MortalitySchedule(sex=sex, mx=rates[rows]),
                                 a_convention)
        values[i] = summary_index(table, index)
    return values


def run_holdout(spec: HoldoutSpec, bundle: DataBundle, *, master_seed: int = 0,
                n_trajectories: int = 1000,
                mcmc: McmcSettings | None = None, noise: bool = True,
                a_convention: AConvention = AConvention.COALE_DEMENY) -> HoldoutResult:
    """Recalibrate on the truncated bundle and score the held-out period."""
    countries = sorted(spec.countries) if spec.countries else bundle.countries()
    if not countries:
        raise InvalidInputError("no countries requested for the holdout")
    bundle = bundle.restricted_to(countries)
    for country in countries:
        if (country, spec.evaluation_period) not in bundle.mortality:
            raise AlignmentError(
                f"no observed mortality for {country} in evaluation period "
                f"{spec.evaluation_period}")

    e0_result, basis = calibrate_models(
        bundle, calibration_end=spec.calibration_end,
        master_seed=master_seed, mcmc=mcmc)

    settings = ProjectionSettings(
        base_year=spec.evaluation_period,
        horizon=spec.evaluation_period + 5,
        n_trajectories=n_trajectories,
        master_seed=master_seed,
        noise=noise,
        a_convention=a_convention,
        keep_schedules=True,
    )

    mx_samples, e0_samples, pop_samples = {}, {}, {}
    observed_mx, observed_e0, observed_pop = {}, {}, {}
    for country in countries:
        result, _ = project_country(bundle, country, e0_result.model, basis,
                                    settings)
        mx_samples[country] = np.exp(result.schedules[:, 0, :])
        e0_samples[country] = result.indicators["e0_female"][:, 0]
        pop_samples[country] = result.indicators["total_population"][:, 1]
        sexes = bundle.mortality[(country, spec.evaluation_period)]
        observed_mx[country] = np.concatenate([sexes["female"], sexes["male"]])
        periods, values = bundle.e0_history[country]
        lookup = {int(p): v for p, v in zip(periods, values)}
        observed_e0[country] = float(lookup[spec.evaluation_period])
        if country in bundle.observed_population:
            female, male = bundle.observed_population[country]
            observed_pop[country] = float(female.sum() + male.sum())

    report = MetricReport()
    for index in spec.indicators:
        for sex in (FEMALE, MALE):
            predicted, observed = {}, {}
            for country in countries:
                samples = _index_samples(mx_samples[country], sex, index,
                                         a_convention)
                predicted[country] = float(np.median(samples))
                rows = FEMALE_ROWS if sex == FEMALE else MALE_ROWS
                table = build_life_table(
                    MortalitySchedule(sex=sex, mx=observed_mx[country][rows]),
                    a_convention)
                observed[country] = summary_index(table, index)
            scale = 1000.0 if index in PER_THOUSAND else 1.0
            report.mae[(index, sex)] = scale * mae(predicted, observed)

    pooled_obs = np.concatenate([observed_mx[c] for c in countries])
    pooled_samples = np.column_stack([mx_samples[c] for c in countries])
    e0_obs = np.array([observed_e0[c] for c in countries])
    e0_stack = np.column_stack([e0_samples[c] for c in countries])
    for level in COVERAGE_LEVELS:
        lo, hi = _interval(pooled_samples, level)
        report.coverage[("mx", level)] = coverage(lo, hi, pooled_obs)
        lo, hi = _interval(e0_stack, level)
        report.coverage[("e0_female", level)] = coverage(lo, hi, e0_obs)
        if observed_pop:
            pop_obs = np.array([observed_pop[c] for c in countries])
            pop_stack = np.column_stack([pop_samples[c] for c in countries])
            lo, hi = _interval(pop_stack, level)
            report.coverage[("total_population", level)] = coverage(
                lo, hi, pop_obs)

    return HoldoutResult(
        report=report,
        spec=spec,
        countries=countries,
        mx_samples=mx_samples,
        e0_samples=e0_samples,
        population_samples=pop_samples,
        observed_mx=observed_mx,
        observed_e0=observed_e0,
        observed_population=observed_pop,
        basis=basis,
        e0_calibration=e0_result,
    )


def compare_to_external(medians: dict, external: dict, periods,
                        indicators=("prevalence", "e0_female")) -> MetricReport:
    """MD for level indicators plus MPD for population indicators.

    ``medians`` and ``external`` map (country, period, indicator) to values;
    MD is reported for prevalence and e0, MPD for the population indicators.
    """
    report = MetricReport()
    mpd_indicators = ("total_population", "population_0_4", "female_15_49")
    for period in periods:
        for indicator in indicators:
            theirs = {c: v for (c, p, i), v in external.items()
                      if p == period and i == indicator}
            if not theirs:
                continue  # the external export decides what gets compared
            ours = {c: v for (c, p, i), v in medians.items()
                    if p == period and i == indicator}
            report.md[(indicator, period)] = mean_difference(ours, theirs)
        for indicator in mpd_indicators:
            theirs = {c: v for (c, p, i), v in external.items()
                      if p == period and i == indicator}
            if not theirs:
                continue
            ours = {c: v for (c, p, i), v in medians.items()
                    if p == period and i == indicator}
            report.mpd[(indicator, period)] = mean_proportional_difference(
                ours, theirs)
    return report
