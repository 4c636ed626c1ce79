"""Abridged life tables and the age-group algebra used everywhere else.

Two fixed age grids are supported. Mortality schedules live on a 22-group
abridged grid ([0,1), [1,5), then 5-year groups up to [95,100), open-ended
at 100+). Population counts live on a 21-group 5-year grid ([0,5) through
[95,100), open-ended at 100+). The column arithmetic is vectorized over
leading axes so that batches of schedules (one per Monte Carlo trajectory)
can be processed in one call.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTableError, InvalidInputError, ShapeError

RADIX = 100_000.0

FEMALE = "female"
MALE = "male"
SEXES = (FEMALE, MALE)


class AgeGrid(enum.Enum):
    """The two supported age-group layouts."""

    ABRIDGED_22 = 22
    FIVE_YEAR_21 = 21

    @property
    def n_groups(self) -> int:
        return self.value

    def start_ages(self) -> np.ndarray:
        if self is AgeGrid.ABRIDGED_22:
            return np.concatenate(([0.0, 1.0], np.arange(5.0, 105.0, 5.0)))
        return np.arange(0.0, 105.0, 5.0)

    def widths(self) -> np.ndarray:
        """Group widths in years; the open-ended group is infinite."""
        if self is AgeGrid.ABRIDGED_22:
            w = np.concatenate(([1.0, 4.0], np.full(20, 5.0)))
        else:
            w = np.full(21, 5.0)
        w[-1] = np.inf
        return w

    def labels(self) -> list[str]:
        starts = self.start_ages().astype(int)
        out = [f"{a}-{b - 1}" for a, b in zip(starts[:-1], starts[1:])]
        out.append(f"{starts[-1]}+")
        return out


ABRIDGED_WIDTHS = AgeGrid.ABRIDGED_22.widths()
ABRIDGED_STARTS = AgeGrid.ABRIDGED_22.start_ages()

# Reproductive age groups 15-19 .. 45-49 on the 5-year grid.
REPRODUCTIVE_SLICE = slice(3, 10)
N_REPRODUCTIVE = 7


class AConvention(enum.Enum):
    """Separation-factor rule for mean person-years lived by those dying."""

    MIDPOINT = "midpoint"
    COALE_DEMENY = "coale-demeny"


def separation_factors(mx, sex: str, convention: AConvention = AConvention.COALE_DEMENY):
    """a_x per age group for a batch of abridged schedules.

    The Coale-Demeny rule keys the infant and early-childhood factors to the
    infant mortality rate; all other closed groups use half the interval.
    The open-ended factor is unused (that group is closed with L = l/m).
    """
    mx = np.asarray(mx, dtype=float)
    ax = np.broadcast_to(ABRIDGED_WIDTHS / 2.0, mx.shape).copy()
    ax[..., -1] = np.nan  # never used
    if convention is AConvention.COALE_DEMENY:
        m0 = mx[..., 0]
        if sex == MALE:
            a0 = np.where(m0 >= 0.107, 0.330, 0.045 + 2.684 * m0)
            a1 = np.where(m0 >= 0.107, 1.352, 1.651 - 2.816 * m0)
        else:
            a0 = np.where(m0 >= 0.107, 0.350, 0.053 + 2.800 * m0)
            a1 = np.where(m0 >= 0.107, 1.361, 1.522 - 1.518 * m0)
        ax[..., 0] = a0
        ax[..., 1] = a1
    return ax


@dataclass(frozen=True)
class MortalitySchedule:
    """Sex-specific mortality rates on the abridged grid, deaths per person-year."""

    sex: str
    mx: np.ndarray

    def __post_init__(self):
        if self.sex not in SEXES:
            raise InvalidInputError(f"unknown sex {self.sex!r}")
        mx = np.asarray(self.mx, dtype=float)
        if mx.shape != (22,):
            raise ShapeError(f"expected 22 abridged age groups, got shape {mx.shape}")
        bad = ~np.isfinite(mx) | (mx <= 0.0)
        if bad.any():
            idx = int(np.argmax(bad))
            label = AgeGrid.ABRIDGED_22.labels()[idx]
            raise InvalidInputError(
                f"mortality rate for age group {label} (index {idx}) "
                f"must be positive and finite, got {mx[idx]!r}"
            )
        mx.flags.writeable = False
        object.__setattr__(self, "mx", mx)


def _columns(mx, ax):
    """Life-table columns for abridged rates, vectorized over leading axes.

    Returns a dict of arrays (qx, lx, dx, Lx, Tx, ex) with the same leading
    shape as ``mx``. Closed-group q is capped just below 1 so the survivor
    column stays strictly decreasing even for rates far outside the
    demographic range.
    """
    mx = np.asarray(mx, dtype=float)
    n = ABRIDGED_WIDTHS
    qx = np.empty_like(mx)
    closed = n[:-1]
    qx[..., :-1] = closed * mx[..., :-1] / (1.0 + (closed - ax[..., :-1]) * mx[..., :-1])
    np.clip(qx[..., :-1], None, 1.0 - 1e-9, out=qx[..., :-1])
    qx[..., -1] = 1.0

    surv = np.cumprod(1.0 - qx[..., :-1], axis=-1)
    lx = np.empty_like(mx)
    lx[..., 0] = RADIX
    lx[..., 1:] = RADIX * surv
    dx = lx * qx

    Lx = np.empty_like(mx)
    Lx[..., :-1] = closed * lx[..., 1:] + ax[..., :-1] * dx[..., :-1]
    Lx[..., -1] = lx[..., -1] / mx[..., -1]
    if not np.isfinite(Lx[..., -1]).all():
        raise DegenerateTableError("open-ended person-years are not finite")

    Tx = np.flip(np.cumsum(np.flip(Lx, axis=-1), axis=-1), axis=-1)
    ex = Tx / lx
    return {"qx": qx, "lx": lx, "dx": dx, "Lx": Lx, "Tx": Tx, "ex": ex}


def e0_from_mx(mx, sex: str, convention: AConvention = AConvention.COALE_DEMENY):
    """Life expectancy at birth for a batch of abridged rate vectors."""
    ax = separation_factors(mx, sex, convention)
    cols = _columns(mx, ax)
    return cols["ex"][..., 0]


@dataclass(frozen=True)
class AbridgedLifeTable:
    """Full abridged life table derived from a mortality schedule."""

    schedule: MortalitySchedule
    ax: np.ndarray
    qx: np.ndarray = field(repr=False)
    lx: np.ndarray = field(repr=False)
    dx: np.ndarray = field(repr=False)
    Lx: np.ndarray = field(repr=False)
    Tx: np.ndarray = field(repr=False)
    ex: np.ndarray = field(repr=False)

    @property
    def e0(self) -> float:
        return float(self.ex[0])

    def survivors_at(self, age: float) -> float:
        """l(x) at an exact age that starts one of the abridged groups."""
        idx = np.nonzero(ABRIDGED_STARTS == age)[0]
        if idx.size == 0:
            raise InvalidInputError(f"age {age} does not start an abridged group")
        return float(self.lx[idx[0]])


def build_life_table(
    schedule: MortalitySchedule,
    a_convention: AConvention = AConvention.COALE_DEMENY,
) -> AbridgedLifeTable:
    """Build the standard abridged columns from a mortality schedule.

    The open-ended group is closed with L = l/m and q = 1; closed groups use
    q = n m / (1 + (n - a) m), L = n l(x+n) + a d.
    """
    ax = separation_factors(schedule.mx, schedule.sex, a_convention)
    cols = _columns(schedule.mx, ax)
    for arr in cols.values():
        arr.flags.writeable = False
    ax.flags.writeable = False
    return AbridgedLifeTable(schedule=schedule, ax=ax, **cols)


SUMMARY_INDICES = ("e0", "q5_0", "q45_15", "q35_10")


def summary_index(table: AbridgedLifeTable, index: str) -> float:
    """One of the standard mortality summary indices.

    q5_0 = 1 - l(5)/l(0), q45_15 = 1 - l(60)/l(15), q35_10 = 1 - l(45)/l(10),
    e0 = remaining life expectancy at birth.
    """
    if index == "e0":
        return table.e0
    spans = {"q5_0": (0.0, 5.0), "q45_15": (15.0, 60.0), "q35_10": (10.0, 45.0)}
    if index not in spans:
        raise InvalidInputError(f"unknown summary index {index!r}")
    lo, hi = spans[index]
    return 1.0 - table.survivors_at(hi) / table.survivors_at(lo)


def collapse_person_years(Lx):
    """Collapse abridged person-years to the 21-group 5-year grid.

    L[0,5) = L[0,1) + L[1,5); other groups map through unchanged. Total
    person-years are preserved exactly.
    """
    Lx = np.asarray(Lx, dtype=float)
    out = np.empty(Lx.shape[:-1] + (21,), dtype=float)
    out[..., 0] = Lx[..., 0] + Lx[..., 1]
    out[..., 1:] = Lx[..., 2:]
    return out


def _five_year_L_T(mx, sex, convention):
    ax = separation_factors(mx, sex, convention)
    cols = _columns(mx, ax)
    L5 = collapse_person_years(cols["Lx"])
    T5 = np.flip(np.cumsum(np.flip(L5, axis=-1), axis=-1), axis=-1)
    return cols, L5, T5


def survivorship_from_mx(mx, sex: str, convention: AConvention = AConvention.COALE_DEMENY):
    """Five-year survivorship ratios from abridged rates, batched.

    Returns an array with 20 entries on the last axis: entry i < 19 carries
    survivors from 5-year group i into group i+1 as L(i+1)/L(i); the final
    entry carries the pooled transition into the open-ended group as
    T(100)/T(95). All entries lie in (0, 1].
    """
    cols, L5, T5 = _five_year_L_T(np.asarray(mx, dtype=float), sex, convention)
    if (L5 <= 0.0).any():
        raise DegenerateTableError("zero person-years in a 5-year group")
    ratios = np.empty(L5.shape[:-1] + (20,), dtype=float)
    ratios[..., :19] = L5[..., 1:20] / L5[..., :19]
    ratios[..., 19] = T5[..., 20] / T5[..., 19]
    return ratios


def survivorship_ratios(table: AbridgedLifeTable):
    """Five-year survivorship ratios for a single life table (length 20)."""
    return survivorship_from_mx(
        table.schedule.mx, table.schedule.sex, _convention_of(table)
    )


def _convention_of(table: AbridgedLifeTable) -> AConvention:
    # The stored a_x vector identifies the convention that built the table.
    mid = ABRIDGED_WIDTHS[:2] / 2.0
    if np.allclose(table.ax[:2], mid):
        return AConvention.MIDPOINT
    return AConvention.COALE_DEMENY


def birth_survival_from_mx(mx, sex: str, convention: AConvention = AConvention.COALE_DEMENY):
    """Survival factor from birth into the 0-4 group: L[0,5) / (5 l(0)), batched."""
    _, L5, _ = _five_year_L_T(np.asarray(mx, dtype=float), sex, convention)
    return L5[..., 0] / (5.0 * RADIX)


def q_between_from_mx(mx, sex: str, age_lo: float, age_hi: float,
                      convention: AConvention = AConvention.COALE_DEMENY):
    """Probability of dying between two exact group-start ages, batched."""
    ax = separation_factors(mx, sex, convention)
    cols = _columns(np.asarray(mx, dtype=float), ax)
    ilo = int(np.nonzero(ABRIDGED_STARTS == age_lo)[0][0])
    ihi = int(np.nonzero(ABRIDGED_STARTS == age_hi)[0][0])
    return 1.0 - cols["lx"][..., ihi] / cols["lx"][..., ilo]


@dataclass(frozen=True)
class PopulationPyramid:
    """Counts by sex on the 5-year grid for one period label (start year)."""

    period: int
    female: np.ndarray
    male: np.ndarray

    def __post_init__(self):
        for name in ("female", "male"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (21,):
                raise ShapeError(f"{name} counts must have 21 groups, got {arr.shape}")
            if not np.isfinite(arr).all() or (arr < 0).any():
                raise InvalidInputError(f"{name} counts must be finite and non-negative")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def total(self) -> float:
        return float(self.female.sum() + self.male.sum())
