"""Probabilistic HIV-prevalence trajectories on an annual grid.

A three-compartment epidemic model (not-at-risk X, at-risk susceptible Z,
infected Y) is integrated forward with fixed-step RK4. From the projection
start year the at-risk recruitment rate phi halves every 20 years and the
force of infection r halves every 30 years, both as continuous exponential
decay. Sampled raw trajectories are re-centered around a designated median
path by pointwise ratio scaling, then averaged into five-year periods.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import seeds
from .errors import (
    AlignmentError,
    IntegrationError,
    InvalidInputError,
    PeriodCoverageError,
    ScalingError,
    ShapeError,
)

PHI_HALF_LIFE_YEARS = 20.0
R_HALF_LIFE_YEARS = 30.0

PREVALENCE_CAP = 99.999


@dataclass(frozen=True)
class EppParams:
    """Epidemic-model parameters at the projection start year.

    Compartment fractions are shares of the adult population and must sum
    to one. ``entry_rate`` and ``exit_rate`` are per-year background
    demography constants; ``survival_years`` is mean survival with HIV.
    """

    r0: float
    phi0: float
    not_at_risk: float
    susceptible: float
    infected: float
    t0: int
    entry_rate: float = 0.03
    exit_rate: float = 0.02
    survival_years: float = 11.0

    def __post_init__(self):
        if not (self.r0 >= 0.0 and np.isfinite(self.r0)):
            raise InvalidInputError("r0 must be non-negative and finite")
        if not (self.phi0 >= 0.0 and np.isfinite(self.phi0)):
            raise InvalidInputError("phi0 must be non-negative and finite")
        fractions = np.array([self.not_at_risk, self.susceptible, self.infected])
        if (fractions < 0.0).any():
            raise InvalidInputError("compartment fractions must be non-negative")
        if abs(fractions.sum() - 1.0) > 1e-12:
            raise InvalidInputError("compartment fractions must sum to 1")
        if self.survival_years <= 0.0:
            raise InvalidInputError("survival_years must be positive")


def decay_parameters(params: EppParams, year):
    """(r, phi) at a calendar year; start values are returned before t0."""
    elapsed = np.maximum(np.asarray(year, dtype=float) - params.t0, 0.0)
    phi = params.phi0 * 2.0 ** (-elapsed / PHI_HALF_LIFE_YEARS)
    r = params.r0 * 2.0 ** (-elapsed / R_HALF_LIFE_YEARS)
    return r, phi


def _derivatives(params, t, state, r_shock=1.0):
    x, z, y = state
    r, phi = decay_parameters(params, t)
    r = r * r_shock
    n = x + z + y
    entrants = params.entry_rate * n
    mu = params.exit_rate
    infection = r * z * y / n if n > 0.0 else 0.0
    dx = (1.0 - phi) * entrants - mu * x
    dz = phi * entrants - infection - mu * z
    dy = infection - (mu + 1.0 / params.survival_years) * y
    return np.array([dx, dz, dy])


def _prevalence_pct(state):
    z, y = state[1], state[2]
    at_risk = z + y
    if at_risk <= 0.0:
        return 0.0
    return float(np.clip(100.0 * y / at_risk, 0.0, PREVALENCE_CAP))


def simulate_epp(params: EppParams, horizon_year: int, rng=None,
                 incidence_shock_sd: float = 0.0, dt: float = 0.1):
    """Annual prevalence path from t0 through horizon_year.

    Deterministic given parameters; the optional incidence shocks multiply
    the force of infection by a fresh lognormal factor each calendar year
    and are the only use of ``rng``. Returns (years, prevalence_pct).

    Raises IntegrationError if the state becomes non-finite.
    """
    if horizon_year <= params.t0:
        raise InvalidInputError("horizon_year must be after t0")
    if incidence_shock_sd > 0.0 and rng is None:
        raise InvalidInputError("incidence shocks need an rng stream")

    n_years = horizon_year - params.t0
    steps_per_year = int(round(1.0 / dt))
    state = np.array([params.not_at_risk, params.susceptible, params.infected])
    years = np.arange(params.t0, horizon_year + 1)
    path = np.empty(n_years + 1)
    path[0] = _prevalence_pct(state)

    # overflow is detected explicitly after each year rather than warned on
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n_years):
            shock = 1.0
            if incidence_shock_sd > 0.0:
                shock = float(rng.lognormal(mean=0.0, sigma=incidence_shock_sd))
            t = float(params.t0 + i)
            for s in range(steps_per_year):
                ts = t + s * dt
                k1 = _derivatives(params, ts, state, shock)
                k2 = _derivatives(params, ts + dt / 2.0, state + dt / 2.0 * k1, shock)
                k3 = _derivatives(params, ts + dt / 2.0, state + dt / 2.0 * k2, shock)
                k4 = _derivatives(params, ts + dt, state + dt * k3, shock)
                state = state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                state = np.maximum(state, 0.0)
            if not np.isfinite(state).all():
                raise IntegrationError(
                    f"non-finite epidemic state at year {params.t0 + i + 1}"
                )
            path[i + 1] = _prevalence_pct(state)
    return years, path


def sample_epp_fan(params: EppParams, horizon_year: int, n_trajectories: int,
                   master_seed: int, country: str = "", jitter_sd: float = 0.20,
                   incidence_shock_sd: float = 0.0):
    """Raw trajectory fan: per-trajectory lognormal jitter on r0 and phi0.

    Stream k is derived from (master_seed, prevalence domain, country, k),
    so the fan is reproducible and order-independent.
    """
    ckey = seeds.country_key(country)
    sample_paths = None
    for k in range(n_trajectories):
        rng = seeds.stream(master_seed, seeds.DOMAIN_PREVALENCE, ckey, k)
        jitter = rng.lognormal(mean=0.0, sigma=jitter_sd, size=2)
        jittered = EppParams(
            r0=params.r0 * jitter[0],
            phi0=params.phi0 * jitter[1],
            not_at_risk=params.not_at_risk,
            susceptible=params.susceptible,
            infected=params.infected,
            t0=params.t0,
            entry_rate=params.entry_rate,
            exit_rate=params.exit_rate,
            survival_years=params.survival_years,
        )
        years, path = simulate_epp(
            jittered, horizon_year, rng, incidence_shock_sd=incidence_shock_sd
        )
        if sample_paths is None:
            sample_paths = np.empty((n_trajectories, years.size))
        sample_paths[k] = path
    return years, sample_paths


def _check_prevalence(values, name):
    values = np.asarray(values, dtype=float)
    if not np.isfinite(values).all():
        raise InvalidInputError(f"{name} contains non-finite prevalence")
    if (values < 0.0).any() or (values >= 100.0).any():
        raise InvalidInputError(f"{name} must lie in [0, 100)")
    return values


@dataclass(frozen=True)
class PrevalenceTrajectorySet:
    """Sampled annual prevalence paths plus the designated median path."""

    country: str
    years: np.ndarray
    median_path: np.ndarray
    samples: np.ndarray
    trajectory_ids: np.ndarray

    def __post_init__(self):
        years = np.asarray(self.years, dtype=int)
        if years.ndim != 1 or (np.diff(years) != 1).any():
            raise ShapeError("years must be a contiguous annual grid")
        median = _check_prevalence(self.median_path, "median_path")
        samples = _check_prevalence(self.samples, "samples")
        ids = np.asarray(self.trajectory_ids, dtype=int)
        if median.shape != years.shape:
            raise ShapeError("median path and year grid differ in length")
        if samples.ndim != 2 or samples.shape[1] != years.size:
            raise ShapeError("samples must be (n_trajectories, n_years)")
        if ids.shape != (samples.shape[0],):
            raise ShapeError("trajectory ids must match the sample count")
        for name, arr in (("years", years), ("median_path", median),
                          ("samples", samples), ("trajectory_ids", ids)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_trajectories(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class FiveYearPrevalence:
    """Per-trajectory five-year mean prevalence by period start year."""

    country: str
    period_starts: np.ndarray
    samples: np.ndarray
    median: np.ndarray
    trajectory_ids: np.ndarray

    def __post_init__(self):
        starts = np.asarray(self.period_starts, dtype=int)
        samples = _check_prevalence(self.samples, "samples")
        median = _check_prevalence(self.median, "median")
        ids = np.asarray(self.trajectory_ids, dtype=int)
        if samples.ndim != 2 or samples.shape[1] != starts.size:
            raise ShapeError("samples must be (n_trajectories, n_periods)")
        if median.shape != starts.shape:
            raise ShapeError("median must match the period grid")
        if ids.shape != (samples.shape[0],):
            raise ShapeError("trajectory ids must match the sample count")
        for name, arr in (("period_starts", starts), ("samples", samples),
                          ("median", median), ("trajectory_ids", ids)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_trajectories(self) -> int:
        return self.samples.shape[0]


def scale_trajectories(country: str, years, median_path, raw_samples) -> PrevalenceTrajectorySet:
    """Re-center a raw trajectory fan around a designated median path.

    Output path k at year t is median_path[t] * raw[k, t] / raw_median[t],
    where raw_median is the pointwise median across the raw samples. Years
    where both the raw median and a sample are zero keep the designated
    median value (unit scalar); a zero raw median under a positive sample is
    an error because it signals corrupt input. Results are capped just
    below 100 to preserve the half-open prevalence range.
    """
    years = np.asarray(years, dtype=int)
    median_path = _check_prevalence(median_path, "median_path")
    raw = _check_prevalence(raw_samples, "raw_samples")
    if median_path.shape != years.shape or raw.ndim != 2 or raw.shape[1] != years.size:
        raise ShapeError("paths must share the year grid")

    raw_median = np.median(raw, axis=0)
    undefined = (raw_median == 0.0) & (raw > 0.0).any(axis=0)
    if undefined.any():
        year = int(years[np.argmax(undefined)])
        raise ScalingError(
            f"raw median prevalence is zero at year {year} with positive samples"
        )
    scalars = np.ones_like(raw)
    nonzero = raw_median > 0.0
    scalars[:, nonzero] = raw[:, nonzero] / raw_median[nonzero]
    scaled = np.clip(median_path * scalars, 0.0, PREVALENCE_CAP)
    return PrevalenceTrajectorySet(
        country=country,
        years=years,
        median_path=median_path,
        samples=scaled,
        trajectory_ids=np.arange(raw.shape[0]),
    )


def aggregate_five_year(tset: PrevalenceTrajectorySet, period_starts) -> FiveYearPrevalence:
    """Arithmetic five-year means over [start, start + 5) for each period."""
    period_starts = np.asarray(period_starts, dtype=int)
    year0 = int(tset.years[0])
    columns = []
    for start in period_starts:
        offsets = np.arange(start, start + 5) - year0
        if offsets[0] < 0 or offsets[-1] >= tset.years.size:
            raise PeriodCoverageError(
                f"period {int(start)} not fully covered by years "
                f"{year0}..{int(tset.years[-1])}"
            )
        columns.append(offsets)
    idx = np.stack(columns)  # (P, 5)
    samples = tset.samples[:, idx].mean(axis=2)
    median = tset.median_path[idx].mean(axis=1)
    return FiveYearPrevalence(
        country=tset.country,
        period_starts=period_starts,
        samples=samples,
        median=median,
        trajectory_ids=tset.trajectory_ids,
    )


def check_alignment(*id_arrays):
    """Raise unless every trajectory-id array is identical."""
    first = np.asarray(id_arrays[0])
    for other in id_arrays[1:]:
        if not np.array_equal(first, np.asarray(other)):
            raise AlignmentError("trajectory indices do not line up across inputs")
