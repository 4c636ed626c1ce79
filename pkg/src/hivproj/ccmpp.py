"""Cohort-component projection over five-year steps.

Each step ages the population with five-year survivorship ratios (the open
group pools survivors), adds births computed from age-specific fertility
applied to mean female exposure, splits births by the sex ratio and
survives them into the first group, and applies net migration half at the
start of the period (exposed to survival and fertility) and half at the
end. Trajectories are independent given their inputs, so the engine is
batched over a leading trajectory axis throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import seeds
from .e0model import E0TrajectorySet
from .errors import AlignmentError, InvalidInputError, ShapeError
from .lifetable import (
    FEMALE,
    MALE,
    AConvention,
    PopulationPyramid,
    REPRODUCTIVE_SLICE,
    birth_survival_from_mx,
    q_between_from_mx,
    survivorship_from_mx,
)
from .mlt import FEMALE_ROWS, MALE_ROWS, MltBasis, generate_log_rates
from .prevalence import FiveYearPrevalence, check_alignment

DEFAULT_SEX_RATIO_AT_BIRTH = 1.05

QUANTILE_PROBS = (0.025, 0.1, 0.5, 0.9, 0.975)

INDICATORS = (
    "total_population",
    "population_0_4",
    "female_15_49",
    "e0_female",
    "q35_10_female",
    "prevalence",
)


@dataclass(frozen=True)
class FertilityInput:
    """Per-trajectory TFR paths plus a fixed proportional age pattern."""

    country: str
    period_starts: np.ndarray
    tfr: np.ndarray               # (n_trajectories, n_periods)
    pattern: np.ndarray           # (7,) proportions over ages 15-19 .. 45-49
    sex_ratio_at_birth: float = DEFAULT_SEX_RATIO_AT_BIRTH
    trajectory_ids: np.ndarray = None

    def __post_init__(self):
        starts = np.asarray(self.period_starts, dtype=int)
        tfr = np.asarray(self.tfr, dtype=float)
        pattern = np.asarray(self.pattern, dtype=float)
        if tfr.ndim != 2 or tfr.shape[1] != starts.size:
            raise ShapeError("tfr must be (n_trajectories, n_periods)")
        if (tfr < 0.0).any() or not np.isfinite(tfr).all():
            raise InvalidInputError("TFR must be non-negative and finite")
        if pattern.shape != (7,):
            raise ShapeError("fertility pattern covers the 7 reproductive groups")
        if (pattern < 0.0).any() or abs(pattern.sum() - 1.0) > 1e-9:
            raise InvalidInputError("pattern proportions must be >= 0 and sum to 1")
        if self.sex_ratio_at_birth <= 0.0:
            raise InvalidInputError("sex ratio at birth must be positive")
        ids = (np.arange(tfr.shape[0]) if self.trajectory_ids is None
               else np.asarray(self.trajectory_ids, dtype=int))
        if ids.shape != (tfr.shape[0],):
            raise ShapeError("trajectory ids must match the trajectory count")
        for name, arr in (("period_starts", starts), ("tfr", tfr),
                          ("pattern", pattern), ("trajectory_ids", ids)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def asfr(self, trajectory, period):
        """Age-specific rates (births per woman-year) on the full 21-group grid."""
        rates = np.zeros(21)
        rates[REPRODUCTIVE_SLICE] = self.tfr[trajectory, period] * self.pattern / 5.0
        return rates


@dataclass(frozen=True)
class MigrationInput:
    """Deterministic net migrant counts by sex, age group and period."""

    country: str
    period_starts: np.ndarray
    female: np.ndarray            # (n_periods, 21)
    male: np.ndarray              # (n_periods, 21)

    def __post_init__(self):
        starts = np.asarray(self.period_starts, dtype=int)
        female = np.asarray(self.female, dtype=float)
        male = np.asarray(self.male, dtype=float)
        expected = (starts.size, 21)
        if female.shape != expected or male.shape != expected:
            raise ShapeError(f"migration arrays must have shape {expected}")
        if not (np.isfinite(female).all() and np.isfinite(male).all()):
            raise InvalidInputError("migration counts must be finite")
        for name, arr in (("period_starts", starts), ("female", female),
                          ("male", male)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class StepResult:
    """One projection step with its accounting components."""

    female: np.ndarray
    male: np.ndarray
    births_female: np.ndarray
    births_male: np.ndarray
    deaths_female: np.ndarray
    deaths_male: np.ndarray


def _age_forward(counts, surv):
    """Advance one 5-year step; the last survivorship entry pools the open group."""
    aged = np.zeros_like(counts)
    aged[..., 1:-1] = counts[..., :-2] * surv[..., :-1]
    aged[..., -1] = (counts[..., -2] + counts[..., -1]) * surv[..., -1]
    return aged


def project_step(pop_female, pop_male, surv_female, surv_male,
                 birth_surv_female, birth_surv_male, asfr,
                 sex_ratio_at_birth, mig_female, mig_male) -> StepResult:
    """One cohort-component step, batched over leading axes.

    Populations and migration are (..., n) counts; survivorship vectors are
    (..., n-1) with the pooled open-group ratio last; asfr is per woman-year
    on the same grid. Counts are floored at zero after the end-of-period
    migration half is added.
    """
    pop_female = np.asarray(pop_female, dtype=float)
    pop_male = np.asarray(pop_male, dtype=float)
    surv_female = np.asarray(surv_female, dtype=float)
    surv_male = np.asarray(surv_male, dtype=float)
    asfr = np.asarray(asfr, dtype=float)
    mig_female = np.asarray(mig_female, dtype=float)
    mig_male = np.asarray(mig_male, dtype=float)
    n = pop_female.shape[-1]
    if (pop_male.shape[-1] != n or asfr.shape[-1] != n
            or mig_female.shape[-1] != n or mig_male.shape[-1] != n
            or surv_female.shape[-1] != n - 1 or surv_male.shape[-1] != n - 1):
        raise ShapeError("population, fertility, migration and survivorship "
                         "arrays do not share one age grid")

    start_f = pop_female + 0.5 * mig_female
    start_m = pop_male + 0.5 * mig_male
    aged_f = _age_forward(start_f, surv_female)
    aged_m = _age_forward(start_m, surv_male)

    # mean exposure: average of period-start and period-end counts, where
    # the end counts include the end-of-period migration half
    end_f = aged_f + 0.5 * mig_female
    exposure = 2.5 * (start_f + end_f)
    births = (asfr * exposure).sum(axis=-1)
    births_f = births / (1.0 + sex_ratio_at_birth)
    births_m = births * sex_ratio_at_birth / (1.0 + sex_ratio_at_birth)
    surviving_f = births_f * birth_surv_female
    surviving_m = births_m * birth_surv_male

    next_f = end_f.copy()
    next_m = aged_m + 0.5 * mig_male
    next_f[..., 0] += surviving_f
    next_m[..., 0] += surviving_m
    deaths_f = start_f.sum(axis=-1) - aged_f.sum(axis=-1) + births_f - surviving_f
    deaths_m = start_m.sum(axis=-1) - aged_m.sum(axis=-1) + births_m - surviving_m
    return StepResult(
        female=np.maximum(next_f, 0.0),
        male=np.maximum(next_m, 0.0),
        births_female=births_f,
        births_male=births_m,
        deaths_female=deaths_f,
        deaths_male=deaths_m,
    )


@dataclass(frozen=True)
class ProjectionResult:
    """Per-trajectory pyramids and indicator streams for one country."""

    country: str
    period_starts: np.ndarray     # (P,) labels of the projection steps
    pyramid_years: np.ndarray     # (P+1,) base year plus each step end
    trajectory_ids: np.ndarray
    female: np.ndarray            # (K, P+1, 21)
    male: np.ndarray              # (K, P+1, 21)
    indicators: dict
    births: np.ndarray = field(default=None, repr=False)   # (K, P, 2) f then m
    deaths: np.ndarray = field(default=None, repr=False)   # (K, P, 2)
    schedules: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_trajectories(self) -> int:
        return self.female.shape[0]

    def pyramid(self, trajectory: int, year: int) -> PopulationPyramid:
        idx = int(np.nonzero(self.pyramid_years == year)[0][0])
        return PopulationPyramid(period=year,
                                 female=self.female[trajectory, idx],
                                 male=self.male[trajectory, idx])


def run_projection(fertility: FertilityInput, prevalence: FiveYearPrevalence,
                   e0: E0TrajectorySet, basis: MltBasis,
                   migration: MigrationInput, base: PopulationPyramid, *,
                   master_seed: int, noise: bool = True,
                   a_convention: AConvention = AConvention.COALE_DEMENY,
                   keep_schedules: bool = False) -> ProjectionResult:
    """Project one country across all trajectories and periods.

    Trajectory k pairs the k-th TFR, prevalence and e0 paths; mismatched
    trajectory indices are rejected. Mortality schedules are generated from
    (e0, prevalence) per trajectory-period; the per-trajectory noise stream
    is a pure function of (master_seed, country, trajectory id) and consumes
    44 normal draws per period when noise is on.
    """
    check_alignment(fertility.trajectory_ids, prevalence.trajectory_ids,
                    e0.trajectory_ids)
    starts = fertility.period_starts
    for name, other in (("prevalence", prevalence.period_starts),
                        ("e0", e0.period_starts),
                        ("migration", migration.period_starts)):
        if not np.array_equal(other, starts):
            raise AlignmentError(f"{name} period grid does not match fertility")
    n_traj = fertility.tfr.shape[0]
    n_periods = starts.size
    country = fertility.country

    noise_normals = None
    if noise:
        ckey = seeds.country_key(country)
        noise_normals = np.empty((n_traj, n_periods, 44))
        for j, traj in enumerate(fertility.trajectory_ids):
            rng = seeds.stream(master_seed, seeds.DOMAIN_MLT, ckey, int(traj))
            noise_normals[j] = rng.standard_normal((n_periods, 44))

    female = np.empty((n_traj, n_periods + 1, 21))
    male = np.empty((n_traj, n_periods + 1, 21))
    female[:, 0] = base.female
    male[:, 0] = base.male
    q35_10 = np.empty((n_traj, n_periods))
    births = np.empty((n_traj, n_periods, 2))
    deaths = np.empty((n_traj, n_periods, 2))
    schedules = np.empty((n_traj, n_periods, 44)) if keep_schedules else None

    for p in range(n_periods):
        log_rates, _ = generate_log_rates(
            basis, e0.e0[:, p], prevalence.samples[:, p],
            noise_normals=None if noise_normals is None else noise_normals[:, p],
            a_convention=a_convention,
        )
        if keep_schedules:
            schedules[:, p] = log_rates
        mx_f = np.exp(log_rates[:, FEMALE_ROWS])
        mx_m = np.exp(log_rates[:, MALE_ROWS])
        surv_f = survivorship_from_mx(mx_f, FEMALE, a_convention)
        surv_m = survivorship_from_mx(mx_m, MALE, a_convention)
        bs_f = birth_survival_from_mx(mx_f, FEMALE, a_convention)
        bs_m = birth_survival_from_mx(mx_m, MALE, a_convention)
        q35_10[:, p] = q_between_from_mx(mx_f, FEMALE, 10.0, 45.0, a_convention)

        asfr = np.zeros((n_traj, 21))
        asfr[:, REPRODUCTIVE_SLICE] = (
            fertility.tfr[:, p][:, None] * fertility.pattern / 5.0
        )
        step = project_step(
            female[:, p], male[:, p], surv_f, surv_m, bs_f, bs_m, asfr,
            fertility.sex_ratio_at_birth,
            migration.female[p], migration.male[p],
        )
        female[:, p + 1] = step.female
        male[:, p + 1] = step.male
        births[:, p, 0], births[:, p, 1] = step.births_female, step.births_male
        deaths[:, p, 0], deaths[:, p, 1] = step.deaths_female, step.deaths_male

    both = female + male
    indicators = {
        "total_population": both.sum(axis=2),
        "population_0_4": both[:, :, 0],
        "female_15_49": female[:, :, REPRODUCTIVE_SLICE].sum(axis=2),
        "e0_female": e0.e0,
        "q35_10_female": q35_10,
        "prevalence": prevalence.samples,
    }
    return ProjectionResult(
        country=country,
        period_starts=starts.copy(),
        pyramid_years=np.concatenate(([starts[0]], starts + 5)),
        trajectory_ids=fertility.trajectory_ids.copy(),
        female=female,
        male=male,
        indicators=indicators,
        births=births,
        deaths=deaths,
        schedules=schedules,
    )


@dataclass(frozen=True)
class QuantileTable:
    """Empirical quantiles of one indicator by period."""

    indicator: str
    labels: np.ndarray           # period starts or pyramid years
    probs: tuple
    values: np.ndarray           # (n_labels, n_probs)


def summarize_quantiles(result: ProjectionResult, probs=QUANTILE_PROBS) -> dict:
    """Per-indicator quantile tables using linear order-statistic interpolation."""
    if result.n_trajectories < 2:
        raise InvalidInputError("quantile summaries need at least 2 trajectories")
    tables = {}
    for name, values in result.indicators.items():
        labels = (result.pyramid_years if values.shape[1] == result.pyramid_years.size
                  else result.period_starts)
        q = np.quantile(values, probs, axis=0, method="linear").T
        tables[name] = QuantileTable(indicator=name, labels=labels.copy(),
                                     probs=tuple(probs), values=q)
    return tables
