"""CSV ingestion and emission for every external file format.

Readers validate the header, parse with per-cell error context (file, line,
column) and return plain arrays keyed by country. Writers emit the same
schemas with a fixed numeric format so identical runs produce identical
bytes and every emitted file re-parses under its own schema.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from .errors import SchemaError

FLOAT_FORMAT = ".12g"

MORTALITY_COLUMNS = ("country", "period_start", "sex", "age_group_index", "mx")
E0_HISTORY_COLUMNS = ("country", "period_start", "e0_female")
ART_COLUMNS = ("country", "period_start", "art_pct")
PREVALENCE_MEDIAN_COLUMNS = ("country", "year", "prevalence_pct")
PREVALENCE_SAMPLE_COLUMNS = ("country", "trajectory", "year", "prevalence_pct")
FIVE_YEAR_PREVALENCE_COLUMNS = ("country", "trajectory", "period_start",
                                "prevalence_pct")
BASE_POPULATION_COLUMNS = ("country", "sex", "age_group_index", "count")
TFR_COLUMNS = ("country", "trajectory", "period_start", "tfr")
FERTILITY_PATTERN_COLUMNS = ("country", "age_group_index", "proportion")
MIGRATION_COLUMNS = ("country", "period_start", "sex", "age_group_index", "count")
EXTERNAL_PROJECTION_COLUMNS = ("country", "period_start", "indicator", "value")
QUANTILE_COLUMNS = ("country", "indicator", "period_start", "quantile", "value")
TRAJECTORY_COLUMNS = ("country", "indicator", "trajectory", "period_start", "value")
METRICS_COLUMNS = ("metric", "indicator", "sex", "level", "value")


def _fmt(value) -> str:
    return format(float(value), FLOAT_FORMAT)


def read_rows(path, columns):
    """Yield (line_number, row_dict) for a CSV file with an exact header."""
    if not os.path.exists(path):
        raise SchemaError("file not found", path=path)
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file, header row required", path=path) from None
        if tuple(h.strip() for h in header) != tuple(columns):
            missing = set(columns) - {h.strip() for h in header}
            name = sorted(missing)[0] if missing else header[0]
            raise SchemaError(
                f"header must be exactly {','.join(columns)}",
                path=path, line=1, column=name,
            )
        for number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(columns):
                raise SchemaError(
                    f"expected {len(columns)} fields, got {len(row)}",
                    path=path, line=number,
                )
            yield number, dict(zip(columns, row))


def _parse(row, column, kind, path, line):
    raw = row[column].strip()
    try:
        if kind is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise SchemaError(
            f"cannot parse {raw!r} as {kind.__name__}",
            path=path, line=line, column=column,
        ) from None


def _parse_sex(row, path, line):
    sex = row["sex"].strip().lower()
    if sex not in ("female", "male"):
        raise SchemaError(f"sex must be female or male, got {row['sex']!r}",
                          path=path, line=line, column="sex")
    return sex


def _check_age_index(idx, n_groups, path, line):
    if not 0 <= idx < n_groups:
        raise SchemaError(f"age_group_index must be 0..{n_groups - 1}, got {idx}",
                          path=path, line=line, column="age_group_index")


def read_mortality(path):
    """{(country, period_start): {sex: rates(22,)}} with completeness checks."""
    cells = {}
    for line, row in read_rows(path, MORTALITY_COLUMNS):
        period = _parse(row, "period_start", int, path, line)
        sex = _parse_sex(row, path, line)
        idx = _parse(row, "age_group_index", int, path, line)
        _check_age_index(idx, 22, path, line)
        mx = _parse(row, "mx", float, path, line)
        key = (row["country"].strip(), period)
        block = cells.setdefault(key, {}).setdefault(sex, np.full(22, np.nan))
        block[idx] = mx
    for (country, period), sexes in cells.items():
        for sex, rates in sexes.items():
            if np.isnan(rates).any():
                missing = int(np.argmax(np.isnan(rates)))
                raise SchemaError(
                    f"mortality for {country} period {period} sex {sex} is "
                    f"missing age_group_index {missing}", path=path)
    return cells


def _read_series(path, columns, key_col, value_col):
    data = {}
    for line, row in read_rows(path, columns):
        key = _parse(row, key_col, int, path, line)
        value = _parse(row, value_col, float, path, line)
        data.setdefault(row["country"].strip(), {})[key] = value
    out = {}
    for country, series in data.items():
        keys = np.array(sorted(series))
        out[country] = (keys, np.array([series[k] for k in keys]))
    return out


def read_e0_history(path):
    """{country: (period_starts, e0_female)} sorted by period."""
    return _read_series(path, E0_HISTORY_COLUMNS, "period_start", "e0_female")


def read_art_coverage(path):
    """{country: (period_starts, art_pct)} sorted by period."""
    return _read_series(path, ART_COLUMNS, "period_start", "art_pct")


def read_prevalence_median(path):
    """{country: (years, prevalence_pct)} on a sorted annual grid."""
    return _read_series(path, PREVALENCE_MEDIAN_COLUMNS, "year", "prevalence_pct")


def read_prevalence_samples(path):
    """{country: (trajectory_ids, years, values (K, T))}.

    Trajectory ids must be 0..K-1 and every trajectory must cover the same
    year grid.
    """
    cells = {}
    for line, row in read_rows(path, PREVALENCE_SAMPLE_COLUMNS):
        country = row["country"].strip()
        k = _parse(row, "trajectory", int, path, line)
        year = _parse(row, "year", int, path, line)
        value = _parse(row, "prevalence_pct", float, path, line)
        cells.setdefault(country, {}).setdefault(k, {})[year] = value
    out = {}
    for country, by_traj in cells.items():
        ids = np.array(sorted(by_traj))
        if not np.array_equal(ids, np.arange(ids.size)):
            raise SchemaError(
                f"trajectory ids for {country} must be 0..K-1 without gaps",
                path=path)
        years = np.array(sorted(by_traj[0]))
        values = np.empty((ids.size, years.size))
        for k in ids:
            series = by_traj[k]
            if sorted(series) != list(years):
                raise SchemaError(
                    f"trajectory {k} of {country} does not cover the shared "
                    "year grid", path=path)
            values[k] = [series[y] for y in years]
        out[country] = (ids, years, values)
    return out


def read_base_population(path):
    """{country: (female(21,), male(21,))} with completeness checks."""
    cells = {}
    for line, row in read_rows(path, BASE_POPULATION_COLUMNS):
        sex = _parse_sex(row, path, line)
        idx = _parse(row, "age_group_index", int, path, line)
        _check_age_index(idx, 21, path, line)
        count = _parse(row, "count", float, path, line)
        block = cells.setdefault(row["country"].strip(), {}).setdefault(
            sex, np.full(21, np.nan))
        block[idx] = count
    out = {}
    for country, sexes in cells.items():
        for sex in ("female", "male"):
            if sex not in sexes or np.isnan(sexes[sex]).any():
                raise SchemaError(
                    f"base population for {country} is incomplete for {sex}",
                    path=path)
        out[country] = (sexes["female"], sexes["male"])
    return out


def read_tfr_trajectories(path):
    """{country: (trajectory_ids, period_starts, tfr (K, P))}."""
    cells = {}
    for line, row in read_rows(path, TFR_COLUMNS):
        country = row["country"].strip()
        k = _parse(row, "trajectory", int, path, line)
        period = _parse(row, "period_start", int, path, line)
        value = _parse(row, "tfr", float, path, line)
        cells.setdefault(country, {}).setdefault(k, {})[period] = value
    out = {}
    for country, by_traj in cells.items():
        ids = np.array(sorted(by_traj))
        if not np.array_equal(ids, np.arange(ids.size)):
            raise SchemaError(
                f"trajectory ids for {country} must be 0..K-1 without gaps",
                path=path)
        periods = np.array(sorted(by_traj[0]))
        values = np.empty((ids.size, periods.size))
        for k in ids:
            series = by_traj[k]
            if sorted(series) != list(periods):
                raise SchemaError(
                    f"trajectory {k} of {country} does not cover the shared "
                    "period grid", path=path)
            values[k] = [series[p] for p in periods]
        out[country] = (ids, periods, values)
    return out


def read_fertility_pattern(path):
    """{country: pattern(7,)} over 5-year groups 3..9 (ages 15-49)."""
    cells = {}
    for line, row in read_rows(path, FERTILITY_PATTERN_COLUMNS):
        idx = _parse(row, "age_group_index", int, path, line)
        if not 3 <= idx <= 9:
            raise SchemaError(
                f"fertility pattern age_group_index must be 3..9, got {idx}",
                path=path, line=line, column="age_group_index")
        value = _parse(row, "proportion", float, path, line)
        cells.setdefault(row["country"].strip(), np.full(7, np.nan))[idx - 3] = value
    out = {}
    for country, pattern in cells.items():
        if np.isnan(pattern).any():
            raise SchemaError(f"fertility pattern for {country} is incomplete",
                              path=path)
        out[country] = pattern
    return out


def read_migration(path):
    """{country: (period_starts, female (P, 21), male (P, 21))}."""
    cells = {}
    for line, row in read_rows(path, MIGRATION_COLUMNS):
        period = _parse(row, "period_start", int, path, line)
        sex = _parse_sex(row, path, line)
        idx = _parse(row, "age_group_index", int, path, line)
        _check_age_index(idx, 21, path, line)
        count = _parse(row, "count", float, path, line)
        cells.setdefault(row["country"].strip(), {}).setdefault(
            period, {}).setdefault(sex, np.zeros(21))[idx] = count
    out = {}
    for country, by_period in cells.items():
        periods = np.array(sorted(by_period))
        female = np.zeros((periods.size, 21))
        male = np.zeros((periods.size, 21))
        for i, p in enumerate(periods):
            female[i] = by_period[p].get("female", np.zeros(21))
            male[i] = by_period[p].get("male", np.zeros(21))
        out[country] = (periods, female, male)
    return out


def read_external_projection(path):
    """{(country, period_start, indicator): value}."""
    out = {}
    for line, row in read_rows(path, EXTERNAL_PROJECTION_COLUMNS):
        period = _parse(row, "period_start", int, path, line)
        value = _parse(row, "value", float, path, line)
        out[(row["country"].strip(), period, row["indicator"].strip())] = value
    return out


def _write_rows(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def write_quantiles(path, tables_by_country):
    """projection_quantiles.csv from {country: {indicator: QuantileTable}}."""
    rows = []
    for country in sorted(tables_by_country):
        for indicator in sorted(tables_by_country[country]):
            table = tables_by_country[country][indicator]
            for i, label in enumerate(table.labels):
                for j, prob in enumerate(table.probs):
                    rows.append((country, indicator, int(label), _fmt(prob),
                                 _fmt(table.values[i, j])))
    _write_rows(path, QUANTILE_COLUMNS, rows)


def read_quantiles(path):
    """{(country, indicator, period_start, quantile): value}."""
    out = {}
    for line, row in read_rows(path, QUANTILE_COLUMNS):
        period = _parse(row, "period_start", int, path, line)
        prob = _parse(row, "quantile", float, path, line)
        value = _parse(row, "value", float, path, line)
        out[(row["country"].strip(), row["indicator"].strip(), period, prob)] = value
    return out


def write_trajectories(path, results_by_country):
    """Optional full per-trajectory store from {country: ProjectionResult}."""
    rows = []
    for country in sorted(results_by_country):
        result = results_by_country[country]
        for indicator in sorted(result.indicators):
            values = result.indicators[indicator]
            labels = (result.pyramid_years if values.shape[1] ==
                      result.pyramid_years.size else result.period_starts)
            for j, traj in enumerate(result.trajectory_ids):
                for i, label in enumerate(labels):
                    rows.append((country, indicator, int(traj), int(label),
                                 _fmt(values[j, i])))
    _write_rows(path, TRAJECTORY_COLUMNS, rows)


def read_trajectories(path):
    """{(country, indicator): (trajectory_ids, labels, values (K, P))}."""
    cells = {}
    for line, row in read_rows(path, TRAJECTORY_COLUMNS):
        key = (row["country"].strip(), row["indicator"].strip())
        k = _parse(row, "trajectory", int, path, line)
        label = _parse(row, "period_start", int, path, line)
        value = _parse(row, "value", float, path, line)
        cells.setdefault(key, {}).setdefault(k, {})[label] = value
    out = {}
    for key, by_traj in cells.items():
        ids = np.array(sorted(by_traj))
        labels = np.array(sorted(by_traj[ids[0]]))
        values = np.array([[by_traj[k][l] for l in labels] for k in ids])
        out[key] = (ids, labels, values)
    return out


def write_five_year_prevalence(path, aggregates):
    """Five-year prevalence output from {country: FiveYearPrevalence}."""
    rows = []
    for country in sorted(aggregates):
        agg = aggregates[country]
        for j, traj in enumerate(agg.trajectory_ids):
            for i, period in enumerate(agg.period_starts):
                rows.append((country, int(traj), int(period),
                             _fmt(agg.samples[j, i])))
    _write_rows(path, FIVE_YEAR_PREVALENCE_COLUMNS, rows)


def read_five_year_prevalence(path):
    """{country: (trajectory_ids, period_starts, values (K, P))}."""
    cells = {}
    for line, row in read_rows(path, FIVE_YEAR_PREVALENCE_COLUMNS):
        country = row["country"].strip()
        k = _parse(row, "trajectory", int, path, line)
        period = _parse(row, "period_start", int, path, line)
        value = _parse(row, "prevalence_pct", float, path, line)
        cells.setdefault(country, {}).setdefault(k, {})[period] = value
    out = {}
    for country, by_traj in cells.items():
        ids = np.array(sorted(by_traj))
        periods = np.array(sorted(by_traj[ids[0]]))
        values = np.array([[by_traj[k][p] for p in periods] for k in ids])
        out[country] = (ids, periods, values)
    return out


def write_metrics(path, rows):
    """metrics.csv from (metric, indicator, sex, level, value) tuples."""
    formatted = [(m, i, s, l, _fmt(v)) for m, i, s, l, v in rows]
    _write_rows(path, METRICS_COLUMNS, formatted)


def write_mortality(path, cells):
    rows = []
    for (country, period) in sorted(cells):
        for sex in ("female", "male"):
            rates = cells[(country, period)][sex]
            for idx, mx in enumerate(rates):
                rows.append((country, int(period), sex, idx, _fmt(mx)))
    _write_rows(path, MORTALITY_COLUMNS, rows)


def write_series(path, columns, series_by_country):
    rows = []
    for country in sorted(series_by_country):
        keys, values = series_by_country[country]
        for k, v in zip(keys, values):
            rows.append((country, int(k), _fmt(v)))
    _write_rows(path, columns, rows)


def write_prevalence_samples(path, samples_by_country):
    rows = []
    for country in sorted(samples_by_country):
        ids, years, values = samples_by_country[country]
        for k in ids:
            for i, year in enumerate(years):
                rows.append((country, int(k), int(year), _fmt(values[k, i])))
    _write_rows(path, PREVALENCE_SAMPLE_COLUMNS, rows)


def write_base_population(path, pops_by_country):
    rows = []
    for country in sorted(pops_by_country):
        female, male = pops_by_country[country]
        for sex, counts in (("female", female), ("male", male)):
            for idx, count in enumerate(counts):
                rows.append((country, sex, idx, _fmt(count)))
    _write_rows(path, BASE_POPULATION_COLUMNS, rows)


def write_tfr_trajectories(path, tfr_by_country):
    rows = []
    for country in sorted(tfr_by_country):
        ids, periods, values = tfr_by_country[country]
        for k in ids:
            for i, period in enumerate(periods):
                rows.append((country, int(k), int(period), _fmt(values[k, i])))
    _write_rows(path, TFR_COLUMNS, rows)


def write_fertility_pattern(path, patterns_by_country):
    rows = []
    for country in sorted(patterns_by_country):
        for offset, value in enumerate(patterns_by_country[country]):
            rows.append((country, offset + 3, _fmt(value)))
    _write_rows(path, FERTILITY_PATTERN_COLUMNS, rows)


def write_migration(path, migration_by_country):
    rows = []
    for country in sorted(migration_by_country):
        periods, female, male = migration_by_country[country]
        for i, period in enumerate(periods):
            for sex, counts in (("female", female[i]), ("male", male[i])):
                for idx, count in enumerate(counts):
                    rows.append((country, int(period), sex, idx, _fmt(count)))
    _write_rows(path, MIGRATION_COLUMNS, rows)


def write_external_projection(path, values):
    rows = [(c, int(p), ind, _fmt(v))
            for (c, p, ind), v in sorted(values.items())]
    _write_rows(path, EXTERNAL_PROJECTION_COLUMNS, rows)
