"""Life-table construction against a brute-force column oracle."""

import math

import numpy as np
import pytest

from hivproj.errors import InvalidInputError
from hivproj.lifetable import (
    AConvention,
    AgeGrid,
    MortalitySchedule,
    build_life_table,
    birth_survival_from_mx,
    collapse_person_years,
    e0_from_mx,
    summary_index,
    survivorship_from_mx,
    survivorship_ratios,
)

WIDTHS = [1.0, 4.0] + [5.0] * 19 + [math.inf]
RADIX = 100_000.0


def oracle_ax(mx, sex, convention):
    """Separation factors recomputed from the published rule constants."""
    ax = [w / 2.0 for w in WIDTHS]
    if convention == "coale-demeny":
        m0 = mx[0]
        if sex == "male":
            ax[0] = 0.330 if m0 >= 0.107 else 0.045 + 2.684 * m0
            ax[1] = 1.352 if m0 >= 0.107 else 1.651 - 2.816 * m0
        else:
            ax[0] = 0.350 if m0 >= 0.107 else 0.053 + 2.800 * m0
            ax[1] = 1.361 if m0 >= 0.107 else 1.522 - 1.518 * m0
    return ax


def oracle_columns(mx, ax):
    """Spreadsheet-style single-step evaluation of every life-table column.

    Plain loops and scalars only; kept independent of the library's
    vectorized implementation on purpose.
    """
    qx, lx, dx, Lx = [], [RADIX], [], []
    for i in range(22):
        if i == 21:
            q = 1.0
        else:
            q = WIDTHS[i] * mx[i] / (1.0 + (WIDTHS[i] - ax[i]) * mx[i])
            q = min(q, 1.0 - 1e-9)
        qx.append(q)
        dx.append(lx[i] * q)
        if i < 21:
            lx.append(lx[i] - dx[i])
            Lx.append(WIDTHS[i] * lx[i + 1] + ax[i] * dx[i])
        else:
            Lx.append(lx[i] / mx[i])
    Tx = []
    running = 0.0
    for L in reversed(Lx):
        running += L
        Tx.append(running)
    Tx.reverse()
    ex = [t / l for t, l in zip(Tx, lx)]
    return {"qx": qx, "lx": lx, "dx": dx, "Lx": Lx, "Tx": Tx, "ex": ex}


def random_schedule(rng, sex="female"):
    """A demographically plausible random abridged schedule."""
    infant = rng.uniform(0.005, 0.12)
    child = rng.uniform(0.0003, 0.01)
    slope = rng.uniform(0.07, 0.11)
    adult0 = rng.uniform(0.0005, 0.01)
    mids = np.concatenate(([0.5, 3.0], np.arange(7.5, 100.0, 5.0), [102.5]))
    mx = adult0 * np.exp(slope * (mids - 10.0))
    mx[0] = infant
    mx[1] = child
    mx[2] = child * 0.6
    mx *= rng.uniform(0.85, 1.15, size=22)
    # closed-group rates above ~0.4 would force q to 1; stay in range
    mx[:-1] = np.clip(mx[:-1], 1e-6, 0.35)
    mx[-1] = np.clip(mx[-1], 0.2, 0.8)
    return MortalitySchedule(sex=sex, mx=mx)


class TestBuildLifeTable:
    def test_constant_rates_match_oracle_midpoint(self):
        mx = [0.01] * 22
        table = build_life_table(
            MortalitySchedule(sex="female", mx=np.array(mx)), AConvention.MIDPOINT
        )
        ref = oracle_columns(mx, [w / 2.0 for w in WIDTHS])
        np.testing.assert_allclose(table.e0, ref["ex"][0], rtol=1e-9)
        for name in ("qx", "lx", "dx", "Lx", "Tx", "ex"):
            np.testing.assert_allclose(getattr(table, name), ref[name], rtol=1e-9)

    @pytest.mark.parametrize("sex", ["female", "male"])
    def test_random_schedules_match_oracle_both_conventions(self, sex):
        rng = np.random.default_rng(42)
        for _ in range(25):
            sched = random_schedule(rng, sex)
            for conv in AConvention:
                table = build_life_table(sched, conv)
                ax = oracle_ax(list(sched.mx), sex, conv.value)
                ref = oracle_columns(list(sched.mx), ax)
                np.testing.assert_allclose(table.ex, ref["ex"], rtol=1e-9)
                np.testing.assert_allclose(table.Lx, ref["Lx"], rtol=1e-9)

    def test_zero_mortality_limit(self):
        mx = np.full(22, 1e-12)
        mx[-1] = 1.0
        table = build_life_table(MortalitySchedule(sex="female", mx=mx))
        np.testing.assert_allclose(table.lx, RADIX, rtol=1e-9)
        # everyone reaches 100 and then lives 1/m more years on average
        assert table.e0 == pytest.approx(101.0, abs=1e-6)

    def test_open_group_and_monotone_survivors(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            table = build_life_table(random_schedule(rng))
            assert table.qx[-1] == 1.0
            assert (np.diff(table.lx) < 0).all()
            assert table.lx[0] == RADIX

    def test_e0_equals_T0_over_l0(self):
        table = build_life_table(random_schedule(np.random.default_rng(3)))
        assert table.e0 == table.Tx[0] / table.lx[0]

    def test_rejects_bad_rates(self):
        mx = np.full(22, 0.01)
        mx[5] = -0.1
        with pytest.raises(InvalidInputError, match="20-24"):
            MortalitySchedule(sex="female", mx=mx)
        mx[5] = np.nan
        with pytest.raises(InvalidInputError, match="index 5"):
            MortalitySchedule(sex="female", mx=mx)

    def test_round_trip_rates_from_columns(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            sched = random_schedule(rng)
            table = build_life_table(sched)
            recovered = table.dx[:-1] / table.Lx[:-1]
            np.testing.assert_allclose(recovered, sched.mx[:-1], rtol=1e-9)

    def test_e0_strictly_decreasing_in_each_rate(self):
        sched = random_schedule(np.random.default_rng(5))
        base = build_life_table(sched).e0
        for i in range(22):
            bumped = sched.mx.copy()
            bumped[i] *= 1.05
            e0 = build_life_table(MortalitySchedule(sex="female", mx=bumped)).e0
            assert e0 < base, f"e0 did not fall when raising group {i}"

    def test_batched_matches_scalar(self):
        rng = np.random.default_rng(13)
        mats = np.stack([random_schedule(rng).mx for _ in range(8)])
        batched = e0_from_mx(mats, "female")
        for row, expect in zip(mats, batched):
            table = build_life_table(MortalitySchedule(sex="female", mx=row))
            assert table.e0 == pytest.approx(expect, rel=1e-12)


class TestSummaryIndices:
    def test_zero_mortality_gives_zero_q(self):
        mx = np.full(22, 1e-12)
        mx[-1] = 1.0
        table = build_life_table(MortalitySchedule(sex="female", mx=mx))
        for index in ("q5_0", "q45_15", "q35_10"):
            assert summary_index(table, index) == pytest.approx(0.0, abs=1e-9)

    def test_q5_0_is_direct_survivor_ratio(self):
        # rates solved so that q0 = 0.04 and q(1-4) = 0.0625, hence l(5) = 90000
        m0 = 0.04 / (1.0 - 0.5 * 0.04)
        m1 = 0.0625 / (4.0 - 2.0 * 0.0625)
        mx = np.full(22, 0.01)
        mx[0], mx[1] = m0, m1
        table = build_life_table(
            MortalitySchedule(sex="female", mx=mx), AConvention.MIDPOINT
        )
        assert table.survivors_at(5.0) == pytest.approx(90_000.0, rel=1e-12)
        assert summary_index(table, "q5_0") == pytest.approx(0.10, rel=1e-12)

    def test_q45_15_matches_oracle(self):
        mx = [0.01] * 22
        table = build_life_table(
            MortalitySchedule(sex="female", mx=np.array(mx)), AConvention.MIDPOINT
        )
        ref = oracle_columns(mx, [w / 2.0 for w in WIDTHS])
        # l(15) is group [15,20) at index 4, l(60) group [60,65) at index 13
        expect = 1.0 - ref["lx"][13] / ref["lx"][4]
        assert summary_index(table, "q45_15") == pytest.approx(expect, rel=1e-9)

    def test_q_indices_bounded(self):
        rng = np.random.default_rng(19)
        for _ in range(10):
            table = build_life_table(random_schedule(rng))
            for index in ("q5_0", "q45_15", "q35_10"):
                assert 0.0 <= summary_index(table, index) <= 1.0


class TestSurvivorship:
    def test_zero_mortality_closed_ratios_are_one(self):
        mx = np.full(22, 1e-13)
        mx[-1] = 1.0
        table = build_life_table(MortalitySchedule(sex="female", mx=mx))
        ratios = survivorship_ratios(table)
        np.testing.assert_allclose(ratios[:19], 1.0, rtol=1e-10)
        assert 0.0 < ratios[19] <= 1.0

    def test_constant_rates_match_oracle(self):
        mx = [0.01] * 22
        table = build_life_table(
            MortalitySchedule(sex="female", mx=np.array(mx)), AConvention.MIDPOINT
        )
        ref = oracle_columns(mx, [w / 2.0 for w in WIDTHS])
        L5 = [ref["Lx"][0] + ref["Lx"][1]] + ref["Lx"][2:]
        expect = [L5[i + 1] / L5[i] for i in range(19)]
        T95 = L5[19] + L5[20]
        expect.append(L5[20] / T95)
        np.testing.assert_allclose(survivorship_ratios(table), expect, rtol=1e-9)

    def test_ratios_in_unit_interval(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            ratios = survivorship_ratios(build_life_table(random_schedule(rng)))
            assert (ratios > 0.0).all() and (ratios <= 1.0).all()

    def test_collapse_preserves_person_years(self):
        table = build_life_table(random_schedule(np.random.default_rng(29)))
        L5 = collapse_person_years(table.Lx)
        assert L5.shape == (21,)
        assert L5.sum() == pytest.approx(table.Lx.sum(), rel=1e-9)

    def test_batched_survivorship_matches_scalar(self):
        rng = np.random.default_rng(31)
        mats = np.stack([random_schedule(rng).mx for _ in range(5)])
        batched = survivorship_from_mx(mats, "female")
        for row, expect in zip(mats, batched):
            table = build_life_table(MortalitySchedule(sex="female", mx=row))
            np.testing.assert_allclose(survivorship_ratios(table), expect, rtol=1e-12)

    def test_birth_survival_bounds(self):
        rng = np.random.default_rng(37)
        mats = np.stack([random_schedule(rng).mx for _ in range(5)])
        bs = birth_survival_from_mx(mats, "female")
        assert ((bs > 0.0) & (bs <= 1.0)).all()


def test_grid_definitions():
    assert AgeGrid.ABRIDGED_22.n_groups == 22
    assert AgeGrid.FIVE_YEAR_21.n_groups == 21
    assert AgeGrid.ABRIDGED_22.labels()[0] == "0-0"
    assert AgeGrid.ABRIDGED_22.labels()[1] == "1-4"
    assert AgeGrid.ABRIDGED_22.labels()[-1] == "100+"
    assert AgeGrid.FIVE_YEAR_21.labels()[0] == "0-4"
    w = AgeGrid.ABRIDGED_22.widths()
    assert w[0] == 1.0 and w[1] == 4.0 and math.isinf(w[-1])
