"""CSV schema round trips and error context."""

import numpy as np
import pytest

from hivproj import dataio
from hivproj.errors import SchemaError


class TestRoundTrips:
    def test_mortality(self, tmp_path):
        rng = np.random.default_rng(1)
        cells = {("AAA", 1990): {"female": rng.uniform(0.01, 0.2, 22),
                                 "male": rng.uniform(0.01, 0.2, 22)},
                 ("BBB", 1995): {"female": rng.uniform(0.01, 0.2, 22),
                                 "male": rng.uniform(0.01, 0.2, 22)}}
        path = tmp_path / "mortality.csv"
        dataio.write_mortality(path, cells)
        loaded = dataio.read_mortality(path)
        assert set(loaded) == set(cells)
        for key in cells:
            for sex in ("female", "male"):
                np.testing.assert_allclose(loaded[key][sex], cells[key][sex],
                                           rtol=1e-11)

    def test_series_formats(self, tmp_path):
        series = {"AAA": (np.array([1990, 1995]), np.array([52.5, 54.25])),
                  "BBB": (np.array([1990, 1995]), np.array([60.0, 61.5]))}
        path = tmp_path / "e0_history.csv"
        dataio.write_series(path, dataio.E0_HISTORY_COLUMNS, series)
        loaded = dataio.read_e0_history(path)
        for country in series:
            np.testing.assert_array_equal(loaded[country][0], series[country][0])
            np.testing.assert_allclose(loaded[country][1], series[country][1])

    def test_prevalence_samples(self, tmp_path):
        rng = np.random.default_rng(3)
        samples = {"AAA": (np.arange(4), np.arange(2015, 2020),
                           rng.uniform(0.0, 30.0, size=(4, 5)))}
        path = tmp_path / "prevalence_samples.csv"
        dataio.write_prevalence_samples(path, samples)
        loaded = dataio.read_prevalence_samples(path)
        np.testing.assert_allclose(loaded["AAA"][2], samples["AAA"][2], rtol=1e-11)

    def test_base_population(self, tmp_path):
        rng = np.random.default_rng(5)
        pops = {"AAA": (rng.uniform(10.0, 100.0, 21), rng.uniform(10.0, 100.0, 21))}
        path = tmp_path / "base_population.csv"
        dataio.write_base_population(path, pops)
        loaded = dataio.read_base_population(path)
        np.testing.assert_allclose(loaded["AAA"][0], pops["AAA"][0], rtol=1e-11)
        np.testing.assert_allclose(loaded["AAA"][1], pops["AAA"][1], rtol=1e-11)

    def test_tfr_and_pattern_and_migration(self, tmp_path):
        rng = np.random.default_rng(7)
        tfr = {"AAA": (np.arange(3), np.array([2015, 2020]),
                       rng.uniform(1.0, 6.0, size=(3, 2)))}
        dataio.write_tfr_trajectories(tmp_path / "tfr.csv", tfr)
        loaded = dataio.read_tfr_trajectories(tmp_path / "tfr.csv")
        np.testing.assert_allclose(loaded["AAA"][2], tfr["AAA"][2], rtol=1e-11)

        pattern = {"AAA": np.array([0.1, 0.2, 0.25, 0.2, 0.13, 0.08, 0.04])}
        dataio.write_fertility_pattern(tmp_path / "pattern.csv", pattern)
        loaded = dataio.read_fertility_pattern(tmp_path / "pattern.csv")
        np.testing.assert_allclose(loaded["AAA"], pattern["AAA"], rtol=1e-11)

        migration = {"AAA": (np.array([2015]),
                             rng.uniform(-5.0, 5.0, size=(1, 21)),
                             rng.uniform(-5.0, 5.0, size=(1, 21)))}
        dataio.write_migration(tmp_path / "migration.csv", migration)
        loaded = dataio.read_migration(tmp_path / "migration.csv")
        np.testing.assert_allclose(loaded["AAA"][1], migration["AAA"][1],
                                   rtol=1e-11)

    def test_external_projection(self, tmp_path):
        values = {("AAA", 2015, "e0_female"): 61.25,
                  ("AAA", 2015, "total_population"): 1.5e6}
        path = tmp_path / "external.csv"
        dataio.write_external_projection(path, values)
        assert dataio.read_external_projection(path) == pytest.approx(values)


class TestSchemaErrors:
    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("country,period_start\nAAA,1990\n")
        with pytest.raises(SchemaError, match="e0_female"):
            dataio.read_e0_history(path)

    def test_bad_value_reports_line_and_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("country,period_start,e0_female\nAAA,1990,fifty\n")
        with pytest.raises(SchemaError, match=r"line 2.*e0_female"):
            dataio.read_e0_history(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(SchemaError, match="not found"):
            dataio.read_e0_history(tmp_path / "nope.csv")

    def test_incomplete_mortality(self, tmp_path):
        path = tmp_path / "mortality.csv"
        lines = ["country,period_start,sex,age_group_index,mx"]
        for idx in range(21):  # one group short
            lines.append(f"AAA,1990,female,{idx},0.01")
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError, match="missing age_group_index 21"):
            dataio.read_mortality(path)

    def test_age_index_out_of_range(self, tmp_path):
        path = tmp_path / "mortality.csv"
        path.write_text("country,period_start,sex,age_group_index,mx\n"
                        "AAA,1990,female,22,0.01\n")
        with pytest.raises(SchemaError, match="0..21"):
            dataio.read_mortality(path)

    def test_trajectory_gap_rejected(self, tmp_path):
        path = tmp_path / "samples.csv"
        path.write_text("country,trajectory,year,prevalence_pct\n"
                        "AAA,0,2015,5.0\nAAA,2,2015,6.0\n")
        with pytest.raises(SchemaError, match="0..K-1"):
            dataio.read_prevalence_samples(path)

    def test_bad_sex_value(self, tmp_path):
        path = tmp_path / "base.csv"
        path.write_text("country,sex,age_group_index,count\nAAA,other,0,10\n")
        with pytest.raises(SchemaError, match="sex"):
            dataio.read_base_population(path)


def test_emitted_quantiles_reparse(tmp_path):
    from hivproj.ccmpp import QuantileTable

    table = QuantileTable(indicator="e0_female",
                          labels=np.array([2015, 2020]),
                          probs=(0.1, 0.5, 0.9),
                          values=np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    path = tmp_path / "projection_quantiles.csv"
    dataio.write_quantiles(path, {"AAA": {"e0_female": table}})
    loaded = dataio.read_quantiles(path)
    assert loaded[("AAA", "e0_female", 2015, 0.5)] == 2.0
    assert loaded[("AAA", "e0_female", 2020, 0.9)] == 6.0
