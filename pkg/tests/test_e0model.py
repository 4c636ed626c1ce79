"""Life-expectancy gain model: closed form, stepping, simulation, calibration."""

import math

import numpy as np
import pytest

from hivproj import seeds
from hivproj.e0model import (
    DoubleLogisticParams,
    E0Model,
    HnaSeries,
    McmcSettings,
    calibrate_e0_model,
    double_logistic,
    load_e0_model,
    project_e0_step,
    save_e0_model,
    simulate_e0_trajectories,
)
from hivproj.errors import AlignmentError, CalibrationError, InvalidInputError
from hivproj.synthetic import synthetic_e0_world

THETA = DoubleLogisticParams(d1=13.0, d2=18.0, d3=22.0, d4=16.0, k=3.2, z=0.7)


def reference_double_logistic(e0, d1, d2, d3, d4, k, z):
    """Closed form re-coded with plain math, independent of the library."""
    a1 = math.log(81.0)
    t1 = k / (1.0 + math.exp(-(a1 / d2) * (e0 - d1 - 0.5 * d2)))
    t2 = (z - k) / (1.0 + math.exp(-(a1 / d4) * (e0 - (d1 + d2 + d3) - 0.5 * d4)))
    return t1 + t2


class TestDoubleLogistic:
    def test_first_midpoint_gives_half_k(self):
        theta = DoubleLogisticParams(d1=15.0, d2=20.0, d3=25.0, d4=15.0, k=3.0, z=3.0)
        e0 = theta.d1 + 0.5 * theta.d2
        # z == k kills the second term at the first midpoint check
        first_term = theta.k / 2.0
        second = 0.0
        assert double_logistic(e0, theta) == pytest.approx(first_term + second, rel=1e-12)

    def test_equal_asymptotes_reduce_to_single_logistic(self):
        theta = DoubleLogisticParams(d1=12.0, d2=16.0, d3=20.0, d4=18.0, k=2.5, z=2.5)
        a1 = math.log(81.0)
        for e0 in np.linspace(25.0, 100.0, 16):
            direct = theta.k / (
                1.0 + math.exp(-(a1 / theta.d2) * (e0 - theta.d1 - 0.5 * theta.d2))
            )
            assert double_logistic(e0, theta) == pytest.approx(direct, rel=1e-12)

    def test_matches_independent_evaluation_on_grid(self):
        rng = np.random.default_rng(17)
        for _ in range(8):
            d = rng.uniform(8.0, 30.0, size=4)
            k = rng.uniform(1.0, 5.0)
            z = rng.uniform(0.3, 1.5)
            theta = DoubleLogisticParams(d1=d[0], d2=d[1], d3=d[2], d4=d[3], k=k, z=z)
            for e0 in np.linspace(20.0, 110.0, 50):
                expect = reference_double_logistic(e0, *d, k, z)
                assert double_logistic(e0, theta) == pytest.approx(expect, rel=1e-12)

    def test_bounded_by_asymptotes(self):
        rng = np.random.default_rng(23)
        for _ in range(10):
            d = rng.uniform(5.0, 35.0, size=4)
            k = rng.uniform(0.5, 6.0)
            z = rng.uniform(0.1, 2.0)
            theta = DoubleLogisticParams(d1=d[0], d2=d[1], d3=d[2], d4=d[3], k=k, z=z)
            grid = np.linspace(-50.0, 200.0, 300)
            g = double_logistic(grid, theta)
            assert np.all(np.abs(g) <= k + abs(z - k) + 1e-12)

    def test_rejects_invalid_parameters(self):
        with pytest.raises(InvalidInputError):
            DoubleLogisticParams(d1=-1.0, d2=10.0, d3=10.0, d4=10.0, k=2.0, z=0.5)
        with pytest.raises(InvalidInputError):
            DoubleLogisticParams(d1=10.0, d2=10.0, d3=10.0, d4=10.0, k=0.0, z=0.5)
        with pytest.raises(InvalidInputError):
            DoubleLogisticParams(d1=10.0, d2=10.0, d3=10.0, d4=10.0, k=2.0, z=-0.1)


class TestProjectStep:
    def test_deterministic_core(self):
        rng = np.random.default_rng(0)
        out = project_e0_step(55.0, THETA, beta_hna=-0.001, delta_hna=0.0,
                              sigma=0.0, rng=rng)
        assert out - 55.0 == pytest.approx(double_logistic(55.0, THETA), abs=1e-15)

    def test_linear_covariate_effect(self):
        rng = np.random.default_rng(0)
        base = project_e0_step(60.0, THETA, -0.001, 0.0, 0.0, rng)
        rng = np.random.default_rng(0)
        shifted = project_e0_step(60.0, THETA, -0.001, 500.0, 0.0, rng)
        assert base - shifted == pytest.approx(0.5, abs=1e-12)

    def test_monte_carlo_moments(self):
        rng = np.random.default_rng(99)
        draws = project_e0_step(np.full(10_000, 58.0), THETA, 0.0, 0.0, 1.0, rng)
        deterministic = 58.0 + double_logistic(58.0, THETA)
        assert abs(draws.mean() - deterministic) < 3.0 / 100.0
        assert abs(draws.std(ddof=1) - 1.0) < 0.02

    def test_decomposition_is_machine_exact(self):
        rng_param = np.random.default_rng(5)
        for _ in range(50):
            d = rng_param.uniform(8.0, 30.0, size=4)
            theta = DoubleLogisticParams(d1=d[0], d2=d[1], d3=d[2], d4=d[3],
                                         k=rng_param.uniform(1, 5),
                                         z=rng_param.uniform(0.2, 1.5))
            beta = -rng_param.uniform(0.0, 0.01)
            delta = rng_param.uniform(-2000.0, 2000.0)
            e0 = rng_param.uniform(25.0, 100.0)
            out = project_e0_step(e0, theta, beta, delta, 0.0,
                                  np.random.default_rng(1))
            increment = out - e0
            assert abs(increment - double_logistic(e0, theta) - beta * delta) < 1e-12

    def test_floor_applies(self):
        out = project_e0_step(20.5, THETA, -0.01, 500.0, 0.0,
                              np.random.default_rng(0), e0_floor=20.0)
        assert out >= 20.0


def _model(beta=-0.001, factor=1.0, sd=0.0, epidemic=()):
    return E0Model(
        theta={"AAA": THETA, "BBB": THETA},
        beta_hna=beta,
        sd_knots=np.array([20.0, 120.0]),
        sd_values=np.array([sd, sd]),
        epidemic_factor=factor,
        epidemic=frozenset(epidemic),
    )


def _hna_paths(n, periods, hiv_level=10.0):
    starts = np.asarray(periods, dtype=int)
    hiv = np.full(starts.size, hiv_level)
    art = np.zeros(starts.size)
    return [HnaSeries(country="AAA", period_starts=starts, hiv=hiv, art=art)
            for _ in range(n)]


class TestSimulateTrajectories:
    PERIODS = np.arange(2010, 2055, 5)

    def test_zero_hna_zero_sigma_is_deterministic_stepping(self):
        model = _model()
        paths = _hna_paths(3, self.PERIODS, hiv_level=0.0)
        result = simulate_e0_trajectories(model, "AAA", paths, 55.0, master_seed=1)
        expect = []
        e0 = 55.0
        for _ in range(self.PERIODS.size - 1):
            e0 = e0 + double_logistic(e0, THETA)
            expect.append(e0)
        for k in range(3):
            np.testing.assert_allclose(result.e0[k], expect, rtol=1e-12)

    def test_single_period_equals_one_step(self):
        model = _model(sd=0.8)
        paths = _hna_paths(4, [2010, 2015])
        result = simulate_e0_trajectories(model, "AAA", paths, 52.0, master_seed=7)
        for k in range(4):
            rng = seeds.stream(7, seeds.DOMAIN_E0, seeds.country_key("AAA"), k)
            expect = project_e0_step(52.0, THETA, model.beta_hna,
                                     paths[k].delta_hna[0], 0.8, rng)
            assert result.e0[k, 0] == pytest.approx(expect, rel=1e-15)

    def test_seed_determinism_is_bitwise(self):
        model = _model(sd=0.5)
        paths = _hna_paths(6, self.PERIODS)
        a = simulate_e0_trajectories(model, "AAA", paths, 50.0, master_seed=3)
        b = simulate_e0_trajectories(model, "AAA", paths, 50.0, master_seed=3)
        assert np.array_equal(a.e0, b.e0)

    def test_epidemic_regime_has_larger_spread(self):
        paths = _hna_paths(10_000, self.PERIODS, hiv_level=0.0)
        quiet = _model(sd=0.4, factor=2.0)
        loud = E0Model(theta=quiet.theta, beta_hna=quiet.beta_hna,
                       sd_knots=quiet.sd_knots, sd_values=quiet.sd_values,
                       epidemic_factor=2.0, epidemic=frozenset({"AAA"}))
        a = simulate_e0_trajectories(quiet, "AAA", paths, 50.0, master_seed=11)
        b = simulate_e0_trajectories(loud, "AAA", paths, 50.0, master_seed=11)
        var_a = a.e0.var(axis=0)
        var_b = b.e0.var(axis=0)
        assert (var_b >= var_a).all()

    def test_zero_hna_matches_zero_beta_model(self):
        paths = _hna_paths(5, self.PERIODS, hiv_level=0.0)
        with_beta = simulate_e0_trajectories(_model(beta=-0.002, sd=0.3), "AAA",
                                             paths, 48.0, master_seed=2)
        without = simulate_e0_trajectories(_model(beta=0.0, sd=0.3), "AAA",
                                           paths, 48.0, master_seed=2)
        assert np.array_equal(with_beta.e0, without.e0)

    def test_alignment_error_on_count_mismatch(self):
        with pytest.raises(AlignmentError):
            simulate_e0_trajectories(_model(), "AAA", _hna_paths(3, self.PERIODS),
                                     50.0, master_seed=1, n_trajectories=4)


FAST_MCMC = McmcSettings(chains=2, iterations=4000, burn_in=2000, target_draws=500)


class TestCalibration:
    def test_recovers_beta_on_synthetic_world(self):
        e0_hist, hna_hist, truth = synthetic_e0_world(60, master_seed=101)
        result = calibrate_e0_model(e0_hist, hna_hist, master_seed=5,
                                    settings=FAST_MCMC)
        beta_hat = float(np.median(result.beta_draws))
        assert beta_hat == pytest.approx(truth["beta_hna"], rel=0.25)
        assert result.model.epidemic == frozenset(truth["epidemic"])

    def test_zero_hna_leaves_beta_at_prior(self):
        e0_hist, hna_hist, _ = synthetic_e0_world(30, master_seed=55,
                                                  epidemic_share=0.0)
        result = calibrate_e0_model(e0_hist, hna_hist, master_seed=9,
                                    settings=FAST_MCMC)
        draws = result.beta_draws
        # prior is a half-normal on the non-positive side with sd 0.01
        assert (draws <= 0.0).all()
        prior_median = -0.01 * 0.6744897501960817
        assert np.median(draws) == pytest.approx(prior_median, abs=0.002)
        assert draws.std() == pytest.approx(0.01 * 0.6028, abs=0.002)

    def test_constant_increments_fit_flat_gain_with_tiny_residual(self):
        starts = np.arange(1950, 2015, 5)
        gain = 2.0
        e0_hist, hna_hist = {}, {}
        for i in range(12):
            e0 = 40.0 + i + gain * np.arange(starts.size)
            e0_hist[f"C{i:03d}"] = (starts, e0)
            hna_hist[f"C{i:03d}"] = HnaSeries(
                country=f"C{i:03d}", period_starts=starts,
                hiv=np.zeros(starts.size), art=np.zeros(starts.size))
        result = calibrate_e0_model(e0_hist, hna_hist, master_seed=3,
                                    settings=FAST_MCMC)
        assert result.residual_sd["overall"] < 0.05
        for i in range(12):
            theta = result.model.theta[f"C{i:03d}"]
            e0_obs = e0_hist[f"C{i:03d}"][1][:-1]
            g = double_logistic(e0_obs, theta)
            np.testing.assert_allclose(g, gain, atol=0.25)

    def test_short_history_is_rejected_with_names(self):
        starts = np.arange(1990, 2015, 5)
        e0_hist = {"SHORT": (starts, np.linspace(50, 55, starts.size))}
        hna_hist = {"SHORT": HnaSeries(country="SHORT", period_starts=starts,
                                       hiv=np.zeros(starts.size),
                                       art=np.zeros(starts.size))}
        with pytest.raises(CalibrationError, match="SHORT"):
            calibrate_e0_model(e0_hist, hna_hist, settings=FAST_MCMC)

    def test_variance_regimes_dominate(self):
        e0_hist, hna_hist, _ = synthetic_e0_world(40, master_seed=77)
        result = calibrate_e0_model(e0_hist, hna_hist, master_seed=6,
                                    settings=FAST_MCMC)
        model = result.model
        grid = np.linspace(30.0, 90.0, 61)
        epi_country = next(iter(model.epidemic))
        non_country = next(c for c in result.countries if c not in model.epidemic)
        assert (model.sigma(grid, epi_country) >= model.sigma(grid, non_country)).all()


class TestPersistence:
    def test_round_trip_is_bit_exact(self, tmp_path):
        model = E0Model(
            theta={"AAA": THETA,
                   "BBB": DoubleLogisticParams(11.1, 17.3, 23.7, 15.2, 2.9, 0.55)},
            beta_hna=-0.0012345678901234567,
            sd_knots=np.array([25.0, 55.0, 85.0]),
            sd_values=np.array([0.31, 0.21, 0.11]),
            epidemic_factor=1.6180339887498949,
            epidemic=frozenset({"AAA"}),
        )
        first = tmp_path / "model.txt"
        second = tmp_path / "model2.txt"
        save_e0_model(model, first)
        loaded = load_e0_model(first)
        save_e0_model(loaded, second)
        assert first.read_bytes() == second.read_bytes()
        assert loaded.beta_hna == model.beta_hna
        assert loaded.theta["BBB"] == model.theta["BBB"]
        assert loaded.epidemic == model.epidemic
