"""Bundle orchestration: loading, calibration, multi-country projection."""

import numpy as np
import pytest

from hivproj import dataio
from hivproj.e0model import McmcSettings
from hivproj.errors import AlignmentError, CalibrationError, InvalidInputError
from hivproj.pipeline import (
    DataBundle,
    ProjectionSettings,
    calibrate_models,
    five_year_median_prevalence,
    load_bundle,
    project_all,
    project_country,
    quantile_tables,
)
from hivproj.synthetic import synthetic_bundle

FAST_MCMC = McmcSettings(chains=2, iterations=2500, burn_in=1200, target_draws=300)


@pytest.fixture(scope="module")
def small_world():
    bundle, truth = synthetic_bundle(5, master_seed=42, n_trajectories=20)
    e0_result, basis = calibrate_models(bundle, calibration_end=2015,
                                        master_seed=1, mcmc=FAST_MCMC)
    return bundle, truth, e0_result, basis


class TestBundle:
    def test_restriction(self, small_world):
        bundle = small_world[0]
        sub = bundle.restricted_to(["C001", "C003"])
        assert sub.countries() == ["C001", "C003"]
        assert all(key[0] in ("C001", "C003") for key in sub.mortality)

    def test_restriction_missing_country(self, small_world):
        with pytest.raises(InvalidInputError, match="ZZZ"):
            small_world[0].restricted_to(["ZZZ"])

    def test_five_year_median_prevalence(self, small_world):
        bundle = small_world[0]
        years, values = bundle.prevalence_median["C000"]
        got = five_year_median_prevalence(bundle, "C000", [2015])
        expect = values[(years >= 2015) & (years < 2020)].mean()
        assert got[0] == pytest.approx(expect, rel=1e-12)

    def test_csv_round_trip_through_load_bundle(self, small_world, tmp_path):
        bundle = small_world[0].restricted_to(["C000", "C001"])
        paths = {
            "e0_history": tmp_path / "e0_history.csv",
            "art_coverage": tmp_path / "art_coverage.csv",
            "prevalence_median": tmp_path / "prevalence_median.csv",
            "prevalence_samples": tmp_path / "prevalence_samples.csv",
            "mortality": tmp_path / "mortality.csv",
            "base_population": tmp_path / "base_population.csv",
            "tfr_trajectories": tmp_path / "tfr.csv",
            "fertility_pattern": tmp_path / "pattern.csv",
            "migration": tmp_path / "migration.csv",
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
        loaded = load_bundle({k: str(v) for k, v in paths.items()})
        assert loaded.countries() == ["C000", "C001"]
        np.testing.assert_allclose(loaded.e0_history["C000"][1],
                                   bundle.e0_history["C000"][1], rtol=1e-11)
        np.testing.assert_allclose(loaded.prevalence_samples["C001"][2],
                                   bundle.prevalence_samples["C001"][2],
                                   rtol=1e-11)
        np.testing.assert_allclose(
            loaded.mortality[("C000", 1990)]["male"],
            bundle.mortality[("C000", 1990)]["male"], rtol=1e-11)


class TestCalibrateModels:
    def test_models_are_plausible(self, small_world):
        _, truth, e0_result, basis = small_world
        assert e0_result.model.beta_hna <= 0.0
        assert e0_result.model.epidemic == frozenset(truth["epidemic"])
        assert basis.e0_range[1] - basis.e0_range[0] >= 20.0
        assert (basis.sx >= 0.0).all()

    def test_requires_mortality_tables(self, small_world):
        bundle = small_world[0]
        empty = DataBundle(e0_history=bundle.e0_history, art=bundle.art,
                           prevalence_median=bundle.prevalence_median)
        with pytest.raises(CalibrationError):
            calibrate_models(empty, calibration_end=2015, mcmc=FAST_MCMC)


class TestProjectCountry:
    def test_deterministic_given_seed(self, small_world):
        bundle, _, e0_result, basis = small_world
        settings = ProjectionSettings(horizon=2040, n_trajectories=20,
                                      master_seed=11)
        a, _ = project_country(bundle, "C000", e0_result.model, basis, settings)
        b, _ = project_country(bundle, "C000", e0_result.model, basis, settings)
        assert np.array_equal(a.female, b.female)
        assert np.array_equal(a.indicators["e0_female"], b.indicators["e0_female"])

    def test_master_seed_changes_draws(self, small_world):
        bundle, _, e0_result, basis = small_world
        s1 = ProjectionSettings(horizon=2040, n_trajectories=20, master_seed=11)
        s2 = ProjectionSettings(horizon=2040, n_trajectories=20, master_seed=12)
        a, _ = project_country(bundle, "C000", e0_result.model, basis, s1)
        b, _ = project_country(bundle, "C000", e0_result.model, basis, s2)
        assert not np.array_equal(a.female, b.female)

    def test_too_few_stored_trajectories_rejected(self, small_world):
        bundle, _, e0_result, basis = small_world
        settings = ProjectionSettings(horizon=2040, n_trajectories=21,
                                      master_seed=11)
        with pytest.raises(AlignmentError, match="21"):
            project_country(bundle, "C000", e0_result.model, basis, settings)

    def test_larger_stored_fan_supports_smoke_runs(self, small_world):
        # the stored fan has 20 trajectories; a smaller run takes the leading
        # slice (the raw-fan median changes, so results are not a sub-array
        # of the full run, but the run must be self-consistent)
        bundle, _, e0_result, basis = small_world
        sliced = ProjectionSettings(horizon=2040, n_trajectories=8,
                                    master_seed=11)
        a, _ = project_country(bundle, "C000", e0_result.model, basis, sliced)
        b, _ = project_country(bundle, "C000", e0_result.model, basis, sliced)
        assert a.female.shape[0] == 8
        np.testing.assert_array_equal(a.trajectory_ids, np.arange(8))
        np.testing.assert_array_equal(a.female, b.female)

    def test_settings_validation(self):
        with pytest.raises(InvalidInputError):
            ProjectionSettings(horizon=2044)
        with pytest.raises(InvalidInputError):
            ProjectionSettings(horizon=2010)
        with pytest.raises(InvalidInputError):
            ProjectionSettings(n_trajectories=1)

    def test_uncertainty_widens_with_horizon(self, small_world):
        # statistical check at full fan size: the 95% interval width of
        # total population is non-decreasing in horizon, allowing one
        # non-monotone adjacent pair
        bundle, truth, _, _ = small_world
        big, _ = synthetic_bundle(5, master_seed=42, n_trajectories=1000)
        settings = ProjectionSettings(horizon=2100, n_trajectories=1000,
                                      master_seed=5)
        result, _ = project_country(big, "C002", truth["e0_model"],
                                    truth["basis"], settings)
        total = result.indicators["total_population"]
        lo = np.quantile(total, 0.025, axis=0)
        hi = np.quantile(total, 0.975, axis=0)
        width = hi - lo
        violations = int((np.diff(width) < 0).sum())
        assert violations <= 1, f"{violations} non-monotone width steps"
        assert width[-1] > width[1]


class TestProjectAll:
    def test_parallel_matches_sequential(self, small_world):
        bundle, _, e0_result, basis = small_world
        settings = ProjectionSettings(horizon=2035, n_trajectories=20,
                                      master_seed=3)
        seq = project_all(bundle, e0_result.model, basis, settings,
                          countries=["C000", "C001", "C002"], workers=1)
        par = project_all(bundle, e0_result.model, basis, settings,
                          countries=["C000", "C001", "C002"], workers=2)
        assert list(seq) == list(par)
        for country in seq:
            np.testing.assert_array_equal(seq[country][0].female,
                                          par[country][0].female)

    def test_quantile_tables_cover_all_indicators(self, small_world):
        bundle, _, e0_result, basis = small_world
        settings = ProjectionSettings(horizon=2035, n_trajectories=20,
                                      master_seed=3)
        projections = project_all(bundle, e0_result.model, basis, settings,
                                  countries=["C000"])
        tables = quantile_tables(projections)
        assert sorted(tables["C000"]) == [
            "e0_female", "female_15_49", "population_0_4", "prevalence",
            "q35_10_female", "total_population"]
