"""Deterministic synthetic worlds for demos, smoke runs and self-tests.

Everything here is generated from a master seed through the package's
stream-derivation scheme, so a synthetic world is a pure function of its
arguments. The generators produce inputs in the same shapes the pipeline
ingests from CSV files: e0 and prevalence histories, joint mortality
matrices consistent with a known component basis, base populations,
fertility and migration.
"""

from __future__ import annotations

import numpy as np

from . import seeds
from .e0model import DoubleLogisticParams, E0Model, HnaSeries, double_logistic
from .lifetable import ABRIDGED_STARTS, ABRIDGED_WIDTHS

_TRUE_MU = np.log(np.array([13.0, 18.0, 22.0, 16.0, 3.2, 0.7]))
_TRUE_TAU = np.full(6, 0.12)
_TRUE_BETA = -1.0e-3
_TRUE_SIGMA = 0.1


def _epidemic_hiv_curve(period_starts, rng):
    """Prevalence rising after 1980 to a country-specific peak, then easing."""
    peak = rng.uniform(5.0, 25.0)
    onset = rng.uniform(1978.0, 1988.0)
    rise = rng.uniform(6.0, 12.0)
    t = np.asarray(period_starts, dtype=float)
    curve = peak / (1.0 + np.exp(-(t - onset - 2.0 * rise) / rise))
    decline = np.where(t > 2005.0, np.exp(-(t - 2005.0) / 60.0), 1.0)
    return np.clip(curve * decline, 0.0, 99.0)


def _art_curve(period_starts, rng):
    """ART coverage appearing mid-2000s and ramping up."""
    t = np.asarray(period_starts, dtype=float)
    ceiling = rng.uniform(40.0, 85.0)
    return np.clip(ceiling / (1.0 + np.exp(-(t - 2012.0) / 4.0)), 0.0, 100.0)


def synthetic_e0_world(n_countries: int, master_seed: int,
                       period_starts=None, epidemic_share: float = 0.5,
                       sigma: float = _TRUE_SIGMA):
    """Histories drawn from known gain-model parameters.

    Returns (e0_history, hna_history, truth) where truth records the
    generating world means, country parameters, HnA coefficient, noise sd
    and the epidemic country set.
    """
    if period_starts is None:
        period_starts = np.arange(1950, 2015, 5)
    period_starts = np.asarray(period_starts, dtype=int)
    countries = [f"C{i:03d}" for i in range(n_countries)]
    n_epidemic = int(round(epidemic_share * n_countries))

    e0_history, hna_history = {}, {}
    eta_true = np.empty((n_countries, 6))
    epidemic = set()
    for i, country in enumerate(countries):
        rng = seeds.stream(master_seed, seeds.DOMAIN_WORLD, i)
        eta = _TRUE_MU + _TRUE_TAU * rng.standard_normal(6)
        eta_true[i] = eta
        theta = DoubleLogisticParams.from_array(np.exp(eta))
        if i < n_epidemic:
            epidemic.add(country)
            hiv = _epidemic_hiv_curve(period_starts, rng)
            art = _art_curve(period_starts, rng)
        else:
            hiv = np.zeros(period_starts.size)
            art = np.zeros(period_starts.size)
        series = HnaSeries(country=country, period_starts=period_starts,
                           hiv=hiv, art=art)
        delta = series.delta_hna
        e0 = np.empty(period_starts.size)
        e0[0] = rng.uniform(35.0, 52.0)
        for p in range(period_starts.size - 1):
            gain = double_logistic(e0[p], theta) + _TRUE_BETA * delta[p]
            e0[p + 1] = max(e0[p] + gain + sigma * rng.standard_normal(), 20.0)
        e0_history[country] = (period_starts.copy(), e0)
        hna_history[country] = series

    truth = {
        "mu": _TRUE_MU.copy(),
        "tau": _TRUE_TAU.copy(),
        "eta": eta_true,
        "beta_hna": _TRUE_BETA,
        "sigma": sigma,
        "epidemic": epidemic,
        "countries": countries,
    }
    return e0_history, hna_history, truth


# --- joint mortality-schedule world with a known component basis ---------

_MALE_LOG_GAP = np.log(1.35)


def _age_midpoints():
    mids = ABRIDGED_STARTS + np.where(np.isfinite(ABRIDGED_WIDTHS),
                                      ABRIDGED_WIDTHS, 5.0) / 2.0
    return mids


def _baseline_log_rates():
    """Plausible female log-mortality age curve; male sits a fixed gap above."""
    x = _age_midpoints()
    m = 0.06 * np.exp(-x / 1.5) + 4.0e-4 + 2.0e-5 * np.exp(0.1 * x)
    female = np.log(m)
    return np.concatenate([female, female + _MALE_LOG_GAP])


def _orthonormalize(rows):
    basis = []
    for row in rows:
        v = row.astype(float).copy()
        for b in basis:
            v -= (v @ b) * b
        basis.append(v / np.linalg.norm(v))
    return np.stack(basis)


def synthetic_mlt_truth():
    """Known mean, components and weight laws for a joint-schedule world.

    Component 1 is a gently tilted level, component 2 an age slope with a
    weaker male echo, component 3 a bump over ages 30-44 in both sexes. The
    weight laws are linear in e0 (components 1 and 2) and in prevalence
    (component 3), so the quadratic regression family recovers them exactly.
    Score variances are well separated so the SVD returns the components in
    this order.
    """
    x = _age_midpoints()
    level = 1.0 + 0.3 * (x / 100.0)
    tilt = (x - 50.0) / 50.0
    bump = np.zeros(22)
    bump[[7, 8, 9]] = (0.5, 1.0, 0.5)
    raw = np.stack([
        np.concatenate([level, level]),
        np.concatenate([tilt, 0.8 * tilt]),
        np.concatenate([bump, 0.9 * bump]),
    ])
    components = _orthonormalize(raw)

    def weights(e0, prevalence):
        e0 = np.asarray(e0, dtype=float)
        prev = np.asarray(prevalence, dtype=float)
        w1 = 0.20 * (55.0 - e0)
        w2 = 0.004 * (e0 - 60.0) ** 2
        w3 = 0.06 * prev + np.zeros_like(w1)
        return np.stack(np.broadcast_arrays(w1, w2, w3), axis=-1)

    return {
        "mean": _baseline_log_rates(),
        "components": components,
        "weights": weights,
        "male_log_gap": _MALE_LOG_GAP,
    }


def synthetic_calibration_columns(truth=None, e0_grid=None, prev_grid=None,
                                  noise_sd: float = 0.0, master_seed: int = 0):
    """Exact (or noisy) rank-3 columns over a covariate grid.

    Returns (log_mx (44, n), e0 (n,), prevalence (n,)). Every column has
    male log rates above female ones, which the generator asserts.
    """
    truth = truth or synthetic_mlt_truth()
    e0_grid = np.linspace(34.0, 86.0, 14) if e0_grid is None else np.asarray(e0_grid)
    prev_grid = np.linspace(0.0, 31.0, 8) if prev_grid is None else np.asarray(prev_grid)
    e0, prev = [g.ravel() for g in np.meshgrid(e0_grid, prev_grid)]
    omegas = truth["weights"](e0, prev)  # (n, 3)
    log_mx = (truth["mean"][:, None]
              + truth["components"].T @ omegas.T)
    if noise_sd > 0.0:
        rng = seeds.stream(master_seed, seeds.DOMAIN_WORLD, 101)
        log_mx = log_mx + noise_sd * rng.standard_normal(log_mx.shape)
    assert (log_mx[22:] > log_mx[:22]).all(), "fixture male rates must dominate"
    return log_mx, e0, prev


# --- a complete input bundle for pipeline-level runs ----------------------

_MORTALITY_NOISE_SD = 0.02


def true_mlt_basis(noise_sd: float = _MORTALITY_NOISE_SD):
    """The generating component basis packaged as a calibrated-basis object."""
    from .mlt import MltBasis

    truth = synthetic_mlt_truth()
    coefs = np.array([
        [11.0, -0.20, 0.0, 0.0, 0.0, 0.0],
        [14.4, -0.48, 0.004, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.06, 0.0, 0.0],
    ])
    return MltBasis(
        mean=truth["mean"],
        components=truth["components"],
        weight_coefs=coefs,
        sx=np.full(44, noise_sd),
        e0_range=(34.0, 86.0),
        prev_range=(0.0, 31.0),
    )


def _hiv_annual(years, peak, onset, rise):
    t = np.asarray(years, dtype=float)
    curve = peak / (1.0 + np.exp(-(t - onset - 2.0 * rise) / rise))
    decline = np.where(t > 2005.0, np.exp(-(t - 2005.0) / 60.0), 1.0)
    return np.clip(curve * decline, 0.0, 99.0)


def _five_year_means(years, values, period_starts):
    index = {int(y): i for i, y in enumerate(years)}
    return np.array([
        values[[index[int(p) + o] for o in range(5)]].mean()
        for p in period_starts
    ])


def synthetic_bundle(n_countries: int, master_seed: int, *,
                     n_trajectories: int = 50, trajectory_seed: int | None = None,
                     base_year: int = 2015, horizon: int = 2100,
                     epidemic_share: float = 0.6, mortality_start: int = 1960,
                     mortality_noise_sd: float = _MORTALITY_NOISE_SD,
                     sigma: float = _TRUE_SIGMA):
    """A coherent input bundle plus the generating truth.

    Country-level structure (epidemic curves, gain parameters, histories,
    base populations) depends only on ``master_seed``; the trajectory fans
    for TFR and raw prevalence depend on ``trajectory_seed`` (defaulting to
    the master seed), so a second bundle with a different trajectory seed
    carries independent fan draws over the same world. The e0 history is
    generated from the same five-year HnA values the pipeline recomputes
    from the annual median prevalence, and every historical mortality table
    is intercept-matched on the true basis so its female life table
    reproduces the e0 history value before per-age noise.
    """
    from .mlt import match_intercepts
    from .pipeline import DataBundle

    if trajectory_seed is None:
        trajectory_seed = master_seed
    countries = [f"C{i:03d}" for i in range(n_countries)]
    n_epidemic = int(round(epidemic_share * n_countries))
    history_periods = np.arange(1950, base_year, 5)       # through base - 5
    mortality_periods = np.arange(mortality_start, base_year, 5)
    art_periods = np.arange(1950, horizon, 5)
    annual_years = np.arange(1950, horizon + 4)
    sample_years = np.arange(base_year - 5, horizon + 4)
    basis = true_mlt_basis(mortality_noise_sd)

    bundle = DataBundle(e0_history={}, art={}, prevalence_median={})
    truth = {
        "beta_hna": _TRUE_BETA, "sigma": sigma, "epidemic": set(),
        "theta": {}, "countries": countries, "basis": basis,
    }

    for i, country in enumerate(countries):
        rng = seeds.stream(master_seed, seeds.DOMAIN_WORLD, i)
        eta = _TRUE_MU + _TRUE_TAU * rng.standard_normal(6)
        theta = DoubleLogisticParams.from_array(np.exp(eta))
        truth["theta"][country] = theta

        if i < n_epidemic:
            truth["epidemic"].add(country)
            # the first epidemic country anchors the prevalence span
            peak = rng.uniform(15.0, 25.0) if i == 0 else rng.uniform(5.0, 25.0)
            onset = rng.uniform(1978.0, 1988.0)
            rise = rng.uniform(6.0, 12.0)
            annual = _hiv_annual(annual_years, peak, onset, rise)
            art_vals = np.clip(
                rng.uniform(40.0, 85.0)
                / (1.0 + np.exp(-(art_periods - 2012.0) / 4.0)), 0.0, 100.0)
        else:
            annual = np.zeros(annual_years.size)
            art_vals = np.zeros(art_periods.size)
        bundle.prevalence_median[country] = (annual_years.copy(), annual)
        bundle.art[country] = (art_periods.copy(), art_vals)

        art_hist = np.array([
            art_vals[np.searchsorted(art_periods, p)] for p in history_periods])
        hiv_hist = _five_year_means(annual_years, annual, history_periods)
        hna = hiv_hist * (100.0 - art_hist)
        e0 = np.empty(history_periods.size)
        # low starting levels keep the historical e0 span wide enough for
        # the life-table calibration precondition
        e0[0] = rng.uniform(33.0, 45.0)
        for p in range(history_periods.size - 1):
            gain = (double_logistic(e0[p], theta)
                    + _TRUE_BETA * (hna[p + 1] - hna[p]))
            e0[p + 1] = max(e0[p] + gain + sigma * rng.standard_normal(), 20.0)
        bundle.e0_history[country] = (history_periods.copy(), e0)

        # historical joint schedules, matched to the e0 history on the
        # true basis before adding per-age noise
        keep = np.isin(history_periods, mortality_periods)
        targets = e0[keep]
        prevs = hiv_hist[keep]
        omegas = np.stack([11.0 - 0.20 * targets,
                           14.4 - 0.48 * targets + 0.004 * targets**2,
                           0.06 * prevs], axis=-1)
        _, log_rates = match_intercepts(basis, omegas, targets)
        log_rates = log_rates + mortality_noise_sd * rng.standard_normal(
            log_rates.shape)
        for j, period in enumerate(mortality_periods):
            bundle.mortality[(country, int(period))] = {
                "female": np.exp(log_rates[j, :22]),
                "male": np.exp(log_rates[j, 22:]),
            }

        total = rng.uniform(0.5e6, 2.0e7)
        shape = 0.93 ** np.arange(21)
        shape = shape / shape.sum()
        female = 0.5 * total * shape * rng.uniform(0.95, 1.05, 21)
        bundle.base_population[country] = (female, female * 1.02)

        taper = np.concatenate([np.ones(13), np.zeros(8)])
        mig_levels = 2.0e-4 * total * taper
        proj_periods = np.arange(base_year, horizon, 5)
        all_periods = np.concatenate([history_periods, proj_periods])
        mig_f = np.outer(rng.uniform(-1.0, 1.0, all_periods.size), mig_levels)
        bundle.migration[country] = (all_periods, mig_f, mig_f * 0.9)

        bundle.fertility_pattern[country] = np.array(
            [0.10, 0.22, 0.25, 0.20, 0.13, 0.07, 0.03])

        tfr0 = rng.uniform(3.5, 6.5)
        base_curve = 2.1 + (tfr0 - 2.1) * np.exp(
            -(all_periods - 1950.0) / 45.0)
        ckey = seeds.country_key(country)
        tfr = np.empty((n_trajectories, all_periods.size))
        for k in range(n_trajectories):
            krng = seeds.stream(trajectory_seed, seeds.DOMAIN_FERTILITY, ckey, k)
            drift = krng.normal(0.0, 0.05) + krng.normal(0.0, 0.15) * (
                (all_periods - base_year) / 85.0)
            tfr[k] = np.maximum(base_curve * np.exp(drift), 0.3)
        bundle.tfr[country] = (np.arange(n_trajectories), all_periods, tfr)

        median_on_samples = annual[np.searchsorted(annual_years, sample_years)]
        raw = np.empty((n_trajectories, sample_years.size))
        for k in range(n_trajectories):
            krng = seeds.stream(trajectory_seed, seeds.DOMAIN_PREVALENCE, ckey, k)
            level = krng.normal(0.0, 0.12)
            drift = krng.normal(0.0, 0.25)
            factor = np.exp(level + drift * (sample_years - base_year) / 85.0)
            raw[k] = np.clip(median_on_samples * factor, 0.0, 99.0)
        bundle.prevalence_samples[country] = (
            np.arange(n_trajectories), sample_years.copy(), raw)

    flat_sd = float(sigma)
    truth["e0_model"] = E0Model(
        theta=truth["theta"],
        beta_hna=_TRUE_BETA,
        sd_knots=np.array([20.0, 120.0]),
        sd_values=np.array([flat_sd, flat_sd]),
        epidemic_factor=1.0,
        epidemic=frozenset(truth["epidemic"]),
    )
    return bundle, truth


def write_bundle_csvs(bundle, directory):
    """Write a bundle as the standard input CSV files; returns {key: path}."""
    import os

    from . import dataio

    os.makedirs(directory, exist_ok=True)

    def path(name):
        return os.path.join(directory, name)

    paths = {
        "e0_history": path("e0_history.csv"),
        "art_coverage": path("art_coverage.csv"),
        "prevalence_median": path("prevalence_median.csv"),
        "prevalence_samples": path("prevalence_samples.csv"),
        "mortality": path("mortality.csv"),
        "base_population": path("base_population.csv"),
        "tfr_trajectories": path("tfr_trajectories.csv"),
        "fertility_pattern": path("fertility_pattern.csv"),
        "migration": path("migration.csv"),
    }
    dataio.write_series(paths["e0_history"], dataio.E0_HISTORY_COLUMNS,
                        bundle.e0_history)
    dataio.write_series(paths["art_coverage"], dataio.ART_COLUMNS, bundle.art)
    dataio.write_series(paths["prevalence_median"],
                        dataio.PREVALENCE_MEDIAN_COLUMNS,
                        bundle.prevalence_median)
    dataio.write_prevalence_samples(paths["prevalence_samples"],
                                    bundle.prevalence_samples)
    dataio.write_mortality(paths["mortality"], bundle.mortality)
    dataio.write_base_population(paths["base_population"],
                                 bundle.base_population)
    dataio.write_tfr_trajectories(paths["tfr_trajectories"], bundle.tfr)
    dataio.write_fertility_pattern(paths["fertility_pattern"],
                                   bundle.fertility_pattern)
    dataio.write_migration(paths["migration"], bundle.migration)
    if bundle.observed_population:
        paths["observed_population"] = path("observed_population.csv")
        dataio.write_base_population(paths["observed_population"],
                                     bundle.observed_population)
    return paths
