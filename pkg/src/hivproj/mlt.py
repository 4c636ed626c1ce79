"""HIV-calibrated model life table.

Joint female/male log-mortality schedules (44 stacked rates: female ages
then male ages) are expressed as a per-table intercept plus a weighted sum
of three fixed age components extracted by SVD from row-centered historical
log rates. The weights are quadratic-with-interaction regressions on female
e0 and HIV prevalence. Prediction matches a requested female e0 exactly by
solving for the shared intercept with bisection, applies the identical
intercept to the male block, and can add per-age Gaussian noise with the
calibration residual spread.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, InvalidInputError, MatchingError, SchemaError, ShapeError
from .lifetable import (
    FEMALE,
    MALE,
    AConvention,
    MortalitySchedule,
    e0_from_mx,
)

N_AGES = 22
N_ROWS = 44
N_COMPONENTS = 3

# female rows then male rows in every 44-vector
FEMALE_ROWS = slice(0, N_AGES)
MALE_ROWS = slice(N_AGES, N_ROWS)

# adult hump window [30,45) on the abridged grid, with interpolation
# endpoints at [25,30) and [50,55)
HUMP_INDICES = np.array([7, 8, 9])
HUMP_LEFT, HUMP_RIGHT = 6, 11

INTERCEPT_BRACKET = (-10.0, 10.0)
INTERCEPT_TOL = 1e-4
INTERCEPT_MAX_ITER = 200
E0_MATCH_TOL = 0.01


class ExtrapolationWarning(UserWarning):
    """Inputs fall outside the calibrated covariate range."""


@dataclass(frozen=True)
class CalibrationMatrix:
    """Stacked historical log rates with per-table covariates."""

    log_mx: np.ndarray          # (44, n_tables)
    countries: tuple
    period_starts: np.ndarray
    e0_female: np.ndarray
    prevalence: np.ndarray

    def __post_init__(self):
        log_mx = np.asarray(self.log_mx, dtype=float)
        if log_mx.ndim != 2 or log_mx.shape[0] != N_ROWS:
            raise ShapeError(f"calibration matrix must have {N_ROWS} rows")
        if not np.isfinite(log_mx).all():
            raise InvalidInputError("calibration matrix must be finite log rates")
        n = log_mx.shape[1]
        starts = np.asarray(self.period_starts, dtype=int)
        e0 = np.asarray(self.e0_female, dtype=float)
        prev = np.asarray(self.prevalence, dtype=float)
        if len(self.countries) != n or starts.size != n or e0.size != n or prev.size != n:
            raise ShapeError("per-table metadata must cover every column")
        for name, arr in (("log_mx", log_mx), ("period_starts", starts),
                          ("e0_female", e0), ("prevalence", prev)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "countries", tuple(self.countries))

    @property
    def n_tables(self) -> int:
        return self.log_mx.shape[1]


def _design(e0, prevalence):
    """Regression design [1, e0, e0^2, prev, prev^2, e0*prev]."""
    e0 = np.asarray(e0, dtype=float)
    prev = np.asarray(prevalence, dtype=float)
    ones = np.ones(np.broadcast(e0, prev).shape)
    return np.stack(
        [ones, e0 * ones, e0 * e0 * ones, prev * ones, prev * prev * ones, e0 * prev],
        axis=-1,
    )


@dataclass(frozen=True)
class MltBasis:
    """Calibrated component basis, weight regressions and residual spread."""

    mean: np.ndarray            # (44,) row means of the calibration matrix
    components: np.ndarray      # (3, 44) orthonormal age directions
    weight_coefs: np.ndarray    # (3, 6) regression coefficients per component
    sx: np.ndarray              # (44,) per-row residual standard deviation
    e0_range: tuple
    prev_range: tuple

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        comps = np.asarray(self.components, dtype=float)
        coefs = np.asarray(self.weight_coefs, dtype=float)
        sx = np.asarray(self.sx, dtype=float)
        if mean.shape != (N_ROWS,) or comps.shape != (N_COMPONENTS, N_ROWS):
            raise ShapeError("basis vectors must be length 44")
        if coefs.shape != (N_COMPONENTS, 6) or sx.shape != (N_ROWS,):
            raise ShapeError("coefficient or residual blocks have wrong shape")
        gram = comps @ comps.T
        if np.abs(gram - np.diag(np.diag(gram))).max() > 1e-8:
            raise InvalidInputError("components must be mutually orthogonal")
        if (sx < 0.0).any():
            raise InvalidInputError("residual standard deviations must be >= 0")
        for name, arr in (("mean", mean), ("components", comps),
                          ("weight_coefs", coefs), ("sx", sx)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "e0_range", tuple(map(float, self.e0_range)))
        object.__setattr__(self, "prev_range", tuple(map(float, self.prev_range)))


def calibrate_mlt(matrix: CalibrationMatrix) -> MltBasis:
    """Extract components and weight regressions from historical tables.

    The matrix is row-centered, the first three left singular vectors become
    the components (signs normalized for serialization stability), the
    per-column projection scores are regressed on the covariate design by
    least squares, and per-row residual spread is estimated after the
    three-component reconstruction.
    """
    if matrix.n_tables < N_ROWS:
        raise CalibrationError(
            f"need at least {N_ROWS} calibration tables, got {matrix.n_tables}"
        )
    e0_span = float(matrix.e0_female.max() - matrix.e0_female.min())
    prev_span = float(matrix.prevalence.max() - matrix.prevalence.min())
    if e0_span < 20.0:
        raise CalibrationError(f"female e0 must span >= 20 years, got {e0_span:.2f}")
    if prev_span < 10.0:
        raise CalibrationError(f"prevalence must span >= 10 points, got {prev_span:.2f}")

    mean = matrix.log_mx.mean(axis=1)
    centered = matrix.log_mx - mean[:, None]
    u, _, _ = np.linalg.svd(centered, full_matrices=False)
    components = u[:, :N_COMPONENTS].T.copy()
    # stable sign convention: the level component points up on average,
    # the others put their largest-magnitude entry on the positive side
    if components[0].mean() < 0.0:
        components[0] = -components[0]
    for i in range(1, N_COMPONENTS):
        extreme = components[i][np.argmax(np.abs(components[i]))]
        if extreme < 0.0:
            components[i] = -components[i]

    scores = components @ centered  # (3, n_tables)
    design = _design(matrix.e0_female, matrix.prevalence)
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise CalibrationError("weight regression design is rank deficient")
    coefs, *_ = np.linalg.lstsq(design, scores.T, rcond=None)
    residual = centered - components.T @ scores
    sx = residual.std(axis=1, ddof=1)
    return MltBasis(
        mean=mean,
        components=components,
        weight_coefs=coefs.T,
        sx=sx,
        e0_range=(float(matrix.e0_female.min()), float(matrix.e0_female.max())),
        prev_range=(float(matrix.prevalence.min()), float(matrix.prevalence.max())),
    )


def predict_weights(basis: MltBasis, e0_female, prevalence, guardrail_margin: float = 0.0):
    """Component weights for covariates; warns outside the calibrated range."""
    e0_arr = np.asarray(e0_female, dtype=float)
    prev_arr = np.asarray(prevalence, dtype=float)
    lo_e, hi_e = basis.e0_range
    lo_p, hi_p = basis.prev_range
    if ((e0_arr < lo_e - guardrail_margin) | (e0_arr > hi_e + guardrail_margin)).any() or (
        (prev_arr < lo_p - guardrail_margin) | (prev_arr > hi_p + guardrail_margin)
    ).any():
        warnings.warn(
            "covariates outside the calibrated range "
            f"(e0 {lo_e:.1f}..{hi_e:.1f}, prevalence {lo_p:.1f}..{hi_p:.1f})",
            ExtrapolationWarning,
            stacklevel=2,
        )
    weights = _design(e0_arr, prev_arr) @ basis.weight_coefs.T
    return weights  # (..., 3)


def _base_log_rates(basis, weights):
    """mean + sum of weighted components, shape (..., 44)."""
    return basis.mean + np.asarray(weights) @ basis.components


def match_intercepts(basis: MltBasis, weights, targets,
                     a_convention: AConvention = AConvention.COALE_DEMENY):
    """Solve for per-row intercepts so female e0 equals each target.

    ``weights`` is (..., 3) and ``targets`` broadcasts against its leading
    shape. Returns (intercepts, log_rates) where log_rates has shape
    (..., 44). Female e0 is strictly decreasing in the intercept, so a
    bracketed bisection on each element converges unconditionally; failure
    to bracket raises MatchingError.
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    targets = np.broadcast_to(np.asarray(targets, dtype=float), weights.shape[:-1]).ravel()
    flat_w = weights.reshape(-1, N_COMPONENTS)
    base_f = _base_log_rates(basis, flat_w)[:, FEMALE_ROWS]

    lo = np.full(targets.shape, INTERCEPT_BRACKET[0])
    hi = np.full(targets.shape, INTERCEPT_BRACKET[1])
    e0_lo = e0_from_mx(np.exp(base_f + lo[:, None]), FEMALE, a_convention)
    e0_hi = e0_from_mx(np.exp(base_f + hi[:, None]), FEMALE, a_convention)
    unbracketed = (e0_lo < targets) | (e0_hi > targets)
    if unbracketed.any():
        i = int(np.argmax(unbracketed))
        raise MatchingError(
            f"target e0 {targets[i]:.2f} cannot be bracketed by intercepts in "
            f"[{INTERCEPT_BRACKET[0]}, {INTERCEPT_BRACKET[1]}]"
        )
    for _ in range(INTERCEPT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        e0_mid = e0_from_mx(np.exp(base_f + mid[:, None]), FEMALE, a_convention)
        too_high = e0_mid > targets  # rates too low, push intercept up
        lo = np.where(too_high, mid, lo)
        hi = np.where(too_high, hi, mid)
        if float(np.max(hi - lo)) <= INTERCEPT_TOL:
            break
    intercepts = 0.5 * (lo + hi)
    achieved = e0_from_mx(np.exp(base_f + intercepts[:, None]), FEMALE, a_convention)
    off = np.abs(achieved - targets)
    if float(off.max()) > E0_MATCH_TOL:
        i = int(np.argmax(off))
        raise MatchingError(
            f"intercept search left |e0 - target| = {off[i]:.4f} > {E0_MATCH_TOL}"
        )
    log_rates = _base_log_rates(basis, flat_w) + intercepts[:, None]
    out_shape = weights.shape[:-1]
    return intercepts.reshape(out_shape), log_rates.reshape(out_shape + (N_ROWS,))


@dataclass(frozen=True)
class JointSchedulePair:
    """Matched female and male schedules produced from one (e0, prevalence)."""

    female: MortalitySchedule
    male: MortalitySchedule
    intercept: float
    e0_input: float
    prevalence_input: float


def match_e0(basis: MltBasis, weights, e0_target: float,
             prevalence: float = float("nan"),
             a_convention: AConvention = AConvention.COALE_DEMENY) -> JointSchedulePair:
    """Joint schedule pair whose female table reproduces the target e0.

    The male block is shifted by the identical intercept found for the
    female block.
    """
    if not 20.0 <= e0_target <= 110.0:
        raise InvalidInputError("target e0 must lie in [20, 110]")
    intercepts, log_rates = match_intercepts(basis, weights, e0_target, a_convention)
    return JointSchedulePair(
        female=MortalitySchedule(sex=FEMALE, mx=np.exp(log_rates[0, FEMALE_ROWS])),
        male=MortalitySchedule(sex=MALE, mx=np.exp(log_rates[0, MALE_ROWS])),
        intercept=float(intercepts[0]),
        e0_input=float(e0_target),
        prevalence_input=float(prevalence),
    )


def add_rate_noise(pair: JointSchedulePair, basis: MltBasis, rng) -> JointSchedulePair:
    """Perturb each log rate by an independent draw with the calibrated sd."""
    noise = rng.standard_normal(N_ROWS) * basis.sx
    return JointSchedulePair(
        female=MortalitySchedule(sex=FEMALE,
                                 mx=pair.female.mx * np.exp(noise[FEMALE_ROWS])),
        male=MortalitySchedule(sex=MALE,
                               mx=pair.male.mx * np.exp(noise[MALE_ROWS])),
        intercept=pair.intercept,
        e0_input=pair.e0_input,
        prevalence_input=pair.prevalence_input,
    )


def generate_schedule(basis: MltBasis, e0_female: float, prevalence: float,
                      rng=None, noise: bool = False,
                      a_convention: AConvention = AConvention.COALE_DEMENY) -> JointSchedulePair:
    """Weights, intercept matching and optional noise in one call."""
    weights = predict_weights(basis, e0_female, prevalence)
    pair = match_e0(basis, weights, e0_female, prevalence, a_convention)
    if noise:
        if rng is None:
            raise InvalidInputError("noise requires an rng stream")
        pair = add_rate_noise(pair, basis, rng)
    return pair


def generate_log_rates(basis: MltBasis, e0_female, prevalence,
                       noise_normals=None,
                       a_convention: AConvention = AConvention.COALE_DEMENY):
    """Batched schedule generation used by the projection engine.

    ``e0_female`` and ``prevalence`` share shape (B,), and optional
    ``noise_normals`` of shape (B, 44) are scaled by the calibrated per-row
    sd and applied after intercept matching. Returns (log_rates (B, 44),
    intercepts (B,)).
    """
    weights = predict_weights(basis, e0_female, prevalence)
    intercepts, log_rates = match_intercepts(basis, weights, e0_female, a_convention)
    if noise_normals is not None:
        log_rates = log_rates + np.asarray(noise_normals) * basis.sx
    return log_rates, intercepts


def hump_excess(female_log_mx):
    """Log-rate excess of ages 30-44 over the local monotone interpolation.

    The baseline interpolates log rates linearly between the [25,30) and
    [50,55) groups; the returned vector holds the excess for the three
    groups covering ages 30 to 44. Accepts (..., 22) arrays.
    """
    logm = np.asarray(female_log_mx, dtype=float)
    left = logm[..., HUMP_LEFT]
    right = logm[..., HUMP_RIGHT]
    frac = (HUMP_INDICES - HUMP_LEFT) / (HUMP_RIGHT - HUMP_LEFT)
    baseline = left[..., None] * (1.0 - frac) + right[..., None] * frac
    return logm[..., HUMP_INDICES] - baseline


def hump_statistic(female_log_mx):
    """Scalar hump size: total log-rate excess over the interpolation."""
    return hump_excess(female_log_mx).sum(axis=-1)


def has_adult_hump(pair: JointSchedulePair) -> bool:
    """True when every group in ages 30-44 exceeds the interpolation."""
    return bool((hump_excess(np.log(pair.female.mx)) > 0.0).all())


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _vector_line(name, values):
    return f"{name}: " + " ".join(_fmt(v) for v in values)


def save_basis(basis: MltBasis, path):
    """Write the basis to a versioned plain-text file (17 significant digits)."""
    lines = ["hivproj mlt-basis 1"]
    lines.append(_vector_line("mean", basis.mean))
    for i in range(N_COMPONENTS):
        lines.append(_vector_line(f"b{i + 1}", basis.components[i]))
        lines.append(_vector_line(f"w{i + 1}_coef", basis.weight_coefs[i]))
    lines.append(_vector_line("sx", basis.sx))
    lines.append(_vector_line("e0_range", basis.e0_range))
    lines.append(_vector_line("prev_range", basis.prev_range))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def load_basis(path) -> MltBasis:
    """Read a basis written by save_basis."""
    with open(path, encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle]
    if not lines or lines[0] != "hivproj mlt-basis 1":
        raise SchemaError("unrecognized mlt-basis file header", path=path, line=1)
    fields = {}
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        key, _, rest = line.partition(":")
        try:
            fields[key.strip()] = np.array([float(v) for v in rest.split()])
        except ValueError:
            raise SchemaError("malformed numeric field", path=path, line=number) from None
    try:
        return MltBasis(
            mean=fields["mean"],
            components=np.stack([fields["b1"], fields["b2"], fields["b3"]]),
            weight_coefs=np.stack(
                [fields["w1_coef"], fields["w2_coef"], fields["w3_coef"]]
            ),
            sx=fields["sx"],
            e0_range=tuple(fields["e0_range"]),
            prev_range=tuple(fields["prev_range"]),
        )
    except KeyError as missing:
        raise SchemaError(f"missing field {missing}", path=path) from None
