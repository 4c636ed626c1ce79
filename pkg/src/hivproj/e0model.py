"""Female life expectancy projection with an untreated-infection covariate.

The five-year gain in female e0 is the sum of a country-specific
double-logistic term in current e0, a global linear term in the change of
HnA (HIV prevalence times the untreated share, percent x percent), and a
Gaussian perturbation whose standard deviation depends on current e0 and is
inflated for countries with a generalized epidemic.

Calibration is a two-level random-walk Metropolis-within-Gibbs sampler:
country-level double-logistic parameters sit below world-level normal
means and variances on the log scale, the HnA coefficient is constrained
non-positive and drawn from its conjugate truncated-normal conditional, and
the residual variances per epidemic stratum are drawn from their conjugate
inverse-gamma conditionals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, ndtr, ndtri

from . import seeds
from .errors import AlignmentError, CalibrationError, InvalidInputError, SchemaError, ShapeError

# Each logistic segment rises from 10% to 90% of its asymptote across its
# width, with the midpoint at the segment center.
LOGISTIC_SLOPE = math.log(81.0)
LOGISTIC_MIDPOINT = 0.5

E0_FLOOR_DEFAULT = 20.0

EPIDEMIC_PREVALENCE_THRESHOLD = 2.0  # percent, at any point in history


@dataclass(frozen=True)
class DoubleLogisticParams:
    """Six-parameter double-logistic gain curve.

    d1..d4 are segment widths in years of e0; k and z are the two asymptotic
    five-year gains in years.
    """

    d1: float
    d2: float
    d3: float
    d4: float
    k: float
    z: float

    def __post_init__(self):
        widths = (self.d1, self.d2, self.d3, self.d4)
        if any(not (w > 0.0 and np.isfinite(w)) for w in widths):
            raise InvalidInputError("segment widths must be positive and finite")
        if not (self.k > 0.0 and np.isfinite(self.k)):
            raise InvalidInputError("k must be positive")
        if not (self.z >= 0.0 and np.isfinite(self.z)):
            raise InvalidInputError("z must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.d1, self.d2, self.d3, self.d4, self.k, self.z])

    @classmethod
    def from_array(cls, values) -> "DoubleLogisticParams":
        return cls(*[float(v) for v in values])


def double_logistic(e0, theta: DoubleLogisticParams):
    """Expected five-year gain at a given e0. Accepts scalars or arrays."""
    e0 = np.asarray(e0, dtype=float)
    first = theta.k * expit(
        (LOGISTIC_SLOPE / theta.d2) * (e0 - theta.d1 - LOGISTIC_MIDPOINT * theta.d2)
    )
    offset = theta.d1 + theta.d2 + theta.d3
    second = (theta.z - theta.k) * expit(
        (LOGISTIC_SLOPE / theta.d4) * (e0 - offset - LOGISTIC_MIDPOINT * theta.d4)
    )
    out = first + second
    return out if out.ndim else float(out)


def _double_logistic_gathered(e0, params):
    """double_logistic with per-observation parameter rows (N, 6)."""
    d1, d2, d3, d4, k, z = (params[:, j] for j in range(6))
    first = k * expit((LOGISTIC_SLOPE / d2) * (e0 - d1 - LOGISTIC_MIDPOINT * d2))
    second = (z - k) * expit(
        (LOGISTIC_SLOPE / d4) * (e0 - (d1 + d2 + d3) - LOGISTIC_MIDPOINT * d4)
    )
    return first + second


@dataclass(frozen=True)
class HnaSeries:
    """Per-period HIV prevalence and ART coverage for one country."""

    country: str
    period_starts: np.ndarray
    hiv: np.ndarray
    art: np.ndarray

    def __post_init__(self):
        starts = np.asarray(self.period_starts, dtype=int)
        hiv = np.asarray(self.hiv, dtype=float)
        art = np.asarray(self.art, dtype=float)
        if hiv.shape != starts.shape or art.shape != starts.shape:
            raise ShapeError("hiv and art must match the period grid")
        if ((hiv < 0.0) | (hiv >= 100.0)).any():
            raise InvalidInputError("HIV prevalence must lie in [0, 100)")
        if ((art < 0.0) | (art > 100.0)).any():
            raise InvalidInputError("ART coverage must lie in [0, 100]")
        for name, arr in (("period_starts", starts), ("hiv", hiv), ("art", art)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def hna(self) -> np.ndarray:
        return self.hiv * (100.0 - self.art)

    @property
    def delta_hna(self) -> np.ndarray:
        """Forward differences between consecutive periods."""
        return np.diff(self.hna)


@dataclass(frozen=True)
class E0Model:
    """Calibrated projection model for female e0."""

    theta: dict
    beta_hna: float
    sd_knots: np.ndarray
    sd_values: np.ndarray
    epidemic_factor: float
    epidemic: frozenset
    e0_floor: float = E0_FLOOR_DEFAULT

    def __post_init__(self):
        knots = np.asarray(self.sd_knots, dtype=float)
        values = np.asarray(self.sd_values, dtype=float)
        if knots.shape != values.shape or knots.ndim != 1:
            raise ShapeError("sd knots and values must be equal-length vectors")
        if (np.diff(knots) <= 0).any():
            raise InvalidInputError("sd knots must be strictly increasing")
        if (values < 0.0).any():
            raise InvalidInputError("sd values must be non-negative")
        if self.beta_hna > 0.0:
            raise InvalidInputError("beta_hna must be non-positive")
        if self.epidemic_factor < 1.0:
            raise InvalidInputError("epidemic variance factor must be >= 1")
        for name, arr in (("sd_knots", knots), ("sd_values", values)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "epidemic", frozenset(self.epidemic))

    def sigma(self, e0, country: str):
        """Perturbation standard deviation at e0 under the country's regime."""
        base = np.interp(np.asarray(e0, dtype=float), self.sd_knots, self.sd_values)
        if country in self.epidemic:
            base = base * self.epidemic_factor
        return base if np.ndim(e0) else float(base)


def project_e0_step(e0_prev, theta: DoubleLogisticParams, beta_hna: float,
                    delta_hna, sigma, rng, e0_floor: float = E0_FLOOR_DEFAULT):
    """One five-year update of female e0.

    Exactly one standard-normal variate is consumed per trajectory element
    regardless of sigma, so stepping composes reproducibly with the batched
    simulator.
    """
    e0_prev = np.asarray(e0_prev, dtype=float)
    if np.ndim(sigma) == 0 and float(sigma) < 0.0:
        raise InvalidInputError("sigma must be non-negative")
    draw = rng.standard_normal(size=e0_prev.shape if e0_prev.ndim else None)
    gain = double_logistic(e0_prev, theta) + beta_hna * np.asarray(delta_hna, dtype=float)
    out = np.maximum(e0_prev + gain + np.asarray(sigma) * draw, e0_floor)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class E0TrajectorySet:
    """Per-trajectory female e0 by period for one country."""

    country: str
    period_starts: np.ndarray
    e0: np.ndarray
    trajectory_ids: np.ndarray

    def __post_init__(self):
        starts = np.asarray(self.period_starts, dtype=int)
        e0 = np.asarray(self.e0, dtype=float)
        ids = np.asarray(self.trajectory_ids, dtype=int)
        if e0.ndim != 2 or e0.shape[1] != starts.size:
            raise ShapeError("e0 must be (n_trajectories, n_periods)")
        if ids.shape != (e0.shape[0],):
            raise ShapeError("trajectory ids must match the trajectory count")
        if not np.isfinite(e0).all() or (e0 <= 0.0).any() or (e0 >= 130.0).any():
            raise InvalidInputError("e0 values must be finite and inside (0, 130)")
        for name, arr in (("period_starts", starts), ("e0", e0),
                          ("trajectory_ids", ids)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_trajectories(self) -> int:
        return self.e0.shape[0]


def simulate_e0_trajectories(model: E0Model, country: str, hna_paths,
                             e0_start: float, master_seed: int,
                             n_trajectories=None) -> E0TrajectorySet:
    """Forward-simulate e0 for one country, one HnA path per trajectory.

    ``hna_paths[k]`` drives trajectory k throughout; the first period label
    carries the starting e0 and each later label receives one stochastic
    step. Noise stream k is a pure function of (master_seed, country, k).
    """
    if n_trajectories is not None and len(hna_paths) != n_trajectories:
        raise AlignmentError(
            f"{len(hna_paths)} HnA paths supplied for {n_trajectories} trajectories"
        )
    n_traj = len(hna_paths)
    if n_traj == 0:
        raise InvalidInputError("at least one HnA path is required")
    starts = hna_paths[0].period_starts
    for path in hna_paths[1:]:
        if not np.array_equal(path.period_starts, starts):
            raise AlignmentError("HnA paths disagree on the period grid")
    theta = model.theta[country]
    deltas = np.stack([path.delta_hna for path in hna_paths])  # (K, P-1)
    n_steps = deltas.shape[1]

    ckey = seeds.country_key(country)
    noise = np.empty((n_traj, n_steps))
    for k in range(n_traj):
        rng = seeds.stream(master_seed, seeds.DOMAIN_E0, ckey, k)
        noise[k] = rng.standard_normal(n_steps)

    e0 = np.empty((n_traj, n_steps))
    current = np.full(n_traj, float(e0_start))
    for p in range(n_steps):
        sigma = model.sigma(current, country)
        gain = double_logistic(current, theta) + model.beta_hna * deltas[:, p]
        current = np.maximum(current + gain + sigma * noise[:, p], model.e0_floor)
        e0[:, p] = current
    return E0TrajectorySet(
        country=country,
        period_starts=starts[1:],
        e0=e0,
        trajectory_ids=np.arange(n_traj),
    )


@dataclass(frozen=True)
class McmcSettings:
    """Sampler configuration for calibration."""

    chains: int = 3
    iterations: int = 20_000
    burn_in: int = 10_000
    target_draws: int = 1_000
    adapt_window: int = 100

    def __post_init__(self):
        if self.burn_in >= self.iterations:
            raise InvalidInputError("burn_in must be below iterations")


# Weakly informative hyperpriors on the log scale: world means m0/s0,
# inverse-gamma (a, b) on world variances and stratum residual variances,
# half-normal scale on the non-positive HnA coefficient.
_HYPER_M0 = np.log(np.array([15.0, 15.0, 15.0, 15.0, 2.0, 0.6]))
_HYPER_S0 = 2.0
_TAU_A, _TAU_B = 2.0, 0.25
_SIGMA_A, _SIGMA_B = 2.0, 0.02
_BETA_PRIOR_SD = 0.01
_BASE_STEP = np.array([0.12, 0.12, 0.12, 0.12, 0.08, 0.12])


@dataclass
class E0CalibrationResult:
    """Point estimates plus thinned posterior draws and diagnostics."""

    model: E0Model
    countries: list
    beta_draws: np.ndarray
    eta_draws: np.ndarray      # (draws, countries, 6), log scale
    mu_draws: np.ndarray       # (draws, 6)
    tau2_draws: np.ndarray     # (draws, 6)
    sigma2_draws: np.ndarray   # (draws, 2): non-epidemic, epidemic strata
    acceptance: np.ndarray     # per-country mean acceptance after burn-in
    residual_sd: dict = field(default_factory=dict)

    def theta_draws(self, country: str) -> np.ndarray:
        """Posterior draws of the natural-scale parameters for one country."""
        c = self.countries.index(country)
        return np.exp(self.eta_draws[:, c, :])


def _prepare_observations(e0_history, hna_history):
    countries = sorted(e0_history)
    too_short = [c for c in countries if len(e0_history[c][1]) < 6]
    if too_short:
        raise CalibrationError(
            "need at least 5 five-year increments per country; too short: "
            + ", ".join(too_short)
        )
    e0_prev, dy, dhna, cidx = [], [], [], []
    for c_i, country in enumerate(countries):
        starts, values = e0_history[country]
        starts = np.asarray(starts, dtype=int)
        values = np.asarray(values, dtype=float)
        if country not in hna_history:
            raise AlignmentError(f"no HnA history for {country}")
        series = hna_history[country]
        if not np.array_equal(series.period_starts, starts):
            raise AlignmentError(f"HnA periods do not match e0 periods for {country}")
        hna = series.hna
        e0_prev.append(values[:-1])
        dy.append(np.diff(values))
        dhna.append(np.diff(hna))
        cidx.append(np.full(values.size - 1, c_i, dtype=int))
    return (
        countries,
        np.concatenate(e0_prev),
        np.concatenate(dy),
        np.concatenate(dhna),
        np.concatenate(cidx),
    )


def _country_loglike(resid, cidx, n_countries, obs_sigma2):
    contrib = -0.5 * resid * resid / obs_sigma2 - 0.5 * np.log(obs_sigma2)
    return np.bincount(cidx, weights=contrib, minlength=n_countries)


def _run_chain(chain_id, master_seed, countries, e0_prev, dy, dhna, cidx,
               stratum, settings):
    rng = seeds.stream(master_seed, seeds.DOMAIN_MCMC, chain_id)
    n_c = len(countries)
    n_obs = dy.size
    obs_stratum = stratum[cidx]
    has_signal = float(np.dot(dhna, dhna)) > 0.0

    eta = np.tile(_HYPER_M0, (n_c, 1)) + 0.1 * rng.standard_normal((n_c, 6))
    mu = _HYPER_M0.copy()
    tau2 = np.full(6, 0.25)
    beta = -1e-4 if has_signal else 0.0
    sigma2 = np.full(2, 0.04)

    scales = np.ones(n_c)
    accept_count = np.zeros(n_c)
    window_accept = np.zeros(n_c)
    post_burn_accept = np.zeros(n_c)

    g = _double_logistic_gathered(e0_prev, np.exp(eta)[cidx])
    resid = dy - g - beta * dhna
    loglike = _country_loglike(resid, cidx, n_c, sigma2[obs_stratum])

    kept_eta, kept_mu, kept_tau2, kept_beta, kept_sigma2 = [], [], [], [], []
    n_kept_target = settings.iterations - settings.burn_in

    for it in range(settings.iterations):
        # country blocks, proposed and accepted in parallel
        proposal = eta + rng.standard_normal((n_c, 6)) * (scales[:, None] * _BASE_STEP)
        g_prop = _double_logistic_gathered(e0_prev, np.exp(proposal)[cidx])
        resid_prop = dy - g_prop - beta * dhna
        loglike_prop = _country_loglike(resid_prop, cidx, n_c, sigma2[obs_stratum])
        logprior = -0.5 * ((eta - mu) ** 2 / tau2).sum(axis=1)
        logprior_prop = -0.5 * ((proposal - mu) ** 2 / tau2).sum(axis=1)
        accept = np.log(rng.uniform(size=n_c)) < (
            loglike_prop + logprior_prop - loglike - logprior
        )
        eta[accept] = proposal[accept]
        loglike[accept] = loglike_prop[accept]
        obs_accept = accept[cidx]
        g = np.where(obs_accept, g_prop, g)
        window_accept += accept
        if it >= settings.burn_in:
            post_burn_accept += accept

        # world-level means and variances (conjugate)
        prec = n_c / tau2 + 1.0 / _HYPER_S0**2
        mean = (eta.sum(axis=0) / tau2 + _HYPER_M0 / _HYPER_S0**2) / prec
        mu = mean + rng.standard_normal(6) / np.sqrt(prec)
        sq = ((eta - mu) ** 2).sum(axis=0)
        tau2 = (_TAU_B + 0.5 * sq) / rng.gamma(_TAU_A + 0.5 * n_c, 1.0, size=6)

        # HnA coefficient (conjugate normal truncated to beta <= 0)
        resid0 = dy - g
        w = 1.0 / sigma2[obs_stratum]
        prec_b = float(np.sum(w * dhna * dhna)) + 1.0 / _BETA_PRIOR_SD**2
        mean_b = float(np.sum(w * dhna * resid0)) / prec_b
        sd_b = 1.0 / math.sqrt(prec_b)
        upper = max(float(ndtr((0.0 - mean_b) / sd_b)), 1e-300)
        beta = mean_b + sd_b * float(ndtri(rng.uniform(0.0, upper)))

        # stratum residual variances (conjugate inverse gamma)
        resid = resid0 - beta * dhna
        for s in (0, 1):
            mask = obs_stratum == s
            n_s = int(mask.sum())
            sse = float(np.sum(resid[mask] ** 2))
            sigma2[s] = (_SIGMA_B + 0.5 * sse) / rng.gamma(_SIGMA_A + 0.5 * n_s, 1.0)
        loglike = _country_loglike(resid, cidx, n_c, sigma2[obs_stratum])

        # proposal adaptation during burn-in only
        if it < settings.burn_in and (it + 1) % settings.adapt_window == 0:
            rate = window_accept / settings.adapt_window
            scales *= np.exp(np.clip(rate - 0.28, -0.3, 0.3))
            scales = np.clip(scales, 1e-3, 1e3)
            window_accept[:] = 0.0

        if it >= settings.burn_in:
            kept_eta.append(eta.copy())
            kept_mu.append(mu.copy())
            kept_tau2.append(tau2.copy())
            kept_beta.append(beta)
            kept_sigma2.append(sigma2.copy())

    return {
        "eta": np.array(kept_eta),
        "mu": np.array(kept_mu),
        "tau2": np.array(kept_tau2),
        "beta": np.array(kept_beta),
        "sigma2": np.array(kept_sigma2),
        "acceptance": post_burn_accept / n_kept_target,
    }


def _variance_function(resid, e0_prev, obs_stratum):
    """Piecewise-linear residual sd over e0 plus an epidemic factor >= 1."""
    non = resid[obs_stratum == 0]
    epi = resid[obs_stratum == 1]
    base_resid = non if non.size >= 10 else resid
    base_e0 = e0_prev[obs_stratum == 0] if non.size >= 10 else e0_prev
    qs = np.quantile(base_e0, [0.0, 0.25, 0.5, 0.75, 1.0])
    knots = np.unique(qs)
    if knots.size < 2:
        knots = np.array([base_e0.min() - 1.0, base_e0.max() + 1.0])
    assignment = np.argmin(np.abs(base_e0[:, None] - knots[None, :]), axis=1)
    pooled_sd = float(base_resid.std(ddof=1)) if base_resid.size > 1 else 0.0
    values = np.empty(knots.size)
    for j in range(knots.size):
        members = base_resid[assignment == j]
        values[j] = members.std(ddof=1) if members.size >= 5 else pooled_sd
    if non.size >= 2 and epi.size >= 2 and non.std(ddof=1) > 0.0:
        factor = max(1.0, float(epi.std(ddof=1) / non.std(ddof=1)))
    else:
        factor = 1.0
    return knots, values, factor


def calibrate_e0_model(e0_history, hna_history, *, master_seed: int = 0,
                       settings: McmcSettings | None = None,
                       epidemic_countries=None,
                       e0_floor: float = E0_FLOOR_DEFAULT) -> E0CalibrationResult:
    """Fit the hierarchical gain model to per-country e0 histories.

    ``e0_history`` maps country code to (period_starts, e0 values);
    ``hna_history`` maps country code to an HnaSeries on the same grid.
    Countries are assigned to the epidemic stratum when their historical
    prevalence ever exceeds 2 percent, unless an explicit set is given.
    """
    settings = settings or McmcSettings()
    countries, e0_prev, dy, dhna, cidx = _prepare_observations(e0_history, hna_history)
    if epidemic_countries is None:
        epidemic_countries = {
            c for c in countries
            if float(np.max(hna_history[c].hiv)) > EPIDEMIC_PREVALENCE_THRESHOLD
        }
    stratum = np.array([1 if c in epidemic_countries else 0 for c in countries])

    chains = [
        _run_chain(chain, master_seed, countries, e0_prev, dy, dhna, cidx,
                   stratum, settings)
        for chain in range(settings.chains)
    ]
    total = sum(c["beta"].size for c in chains)
    thin = max(1, total // settings.target_draws)
    eta_draws = np.concatenate([c["eta"] for c in chains])[::thin]
    mu_draws = np.concatenate([c["mu"] for c in chains])[::thin]
    tau2_draws = np.concatenate([c["tau2"] for c in chains])[::thin]
    beta_draws = np.concatenate([c["beta"] for c in chains])[::thin]
    sigma2_draws = np.concatenate([c["sigma2"] for c in chains])[::thin]
    acceptance = np.mean([c["acceptance"] for c in chains], axis=0)

    eta_hat = np.median(eta_draws, axis=0)
    beta_hat = min(float(np.median(beta_draws)), 0.0)
    theta = {
        c: DoubleLogisticParams.from_array(np.exp(eta_hat[i]))
        for i, c in enumerate(countries)
    }
    g_hat = _double_logistic_gathered(e0_prev, np.exp(eta_hat)[cidx])
    resid = dy - g_hat - beta_hat * dhna
    obs_stratum = stratum[cidx]
    knots, values, factor = _variance_function(resid, e0_prev, obs_stratum)

    model = E0Model(
        theta=theta,
        beta_hna=beta_hat,
        sd_knots=knots,
        sd_values=values,
        epidemic_factor=factor,
        epidemic=frozenset(epidemic_countries),
        e0_floor=e0_floor,
    )
    residual_sd = {
        "non_epidemic": float(resid[obs_stratum == 0].std(ddof=1))
        if (obs_stratum == 0).sum() > 1 else float("nan"),
        "epidemic": float(resid[obs_stratum == 1].std(ddof=1))
        if (obs_stratum == 1).sum() > 1 else float("nan"),
        "overall": float(resid.std(ddof=1)),
    }
    return E0CalibrationResult(
        model=model,
        countries=countries,
        beta_draws=beta_draws,
        eta_draws=eta_draws,
        mu_draws=mu_draws,
        tau2_draws=tau2_draws,
        sigma2_draws=sigma2_draws,
        acceptance=acceptance,
        residual_sd=residual_sd,
    )


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def save_e0_model(model: E0Model, path):
    """Write the model to a versioned plain-text parameter file."""
    lines = ["hivproj e0-model 1"]
    lines.append(f"beta_hna: {_fmt(model.beta_hna)}")
    lines.append(f"e0_floor: {_fmt(model.e0_floor)}")
    lines.append("sd_knots: " + " ".join(_fmt(v) for v in model.sd_knots))
    lines.append("sd_values: " + " ".join(_fmt(v) for v in model.sd_values))
    lines.append(f"epidemic_factor: {_fmt(model.epidemic_factor)}")
    lines.append("epidemic_countries: " + " ".join(sorted(model.epidemic)))
    for country in sorted(model.theta):
        values = " ".join(_fmt(v) for v in model.theta[country].as_array())
        lines.append(f"theta {country}: {values}")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def load_e0_model(path) -> E0Model:
    """Read a model written by save_e0_model."""
    with open(path, encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle]
    if not lines or lines[0] != "hivproj e0-model 1":
        raise SchemaError("unrecognized e0-model file header", path=path, line=1)
    fields = {}
    theta = {}
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        key, _, rest = line.partition(":")
        key = key.strip()
        if key.startswith("theta "):
            country = key.split(None, 1)[1]
            theta[country] = DoubleLogisticParams.from_array(
                [float(v) for v in rest.split()]
            )
        elif key in ("beta_hna", "e0_floor", "epidemic_factor"):
            fields[key] = float(rest)
        elif key in ("sd_knots", "sd_values"):
            fields[key] = np.array([float(v) for v in rest.split()])
        elif key == "epidemic_countries":
            fields[key] = frozenset(rest.split())
        else:
            raise SchemaError(f"unknown field {key!r}", path=path, line=number)
    try:
        return E0Model(
            theta=theta,
            beta_hna=fields["beta_hna"],
            sd_knots=fields["sd_knots"],
            sd_values=fields["sd_values"],
            epidemic_factor=fields["epidemic_factor"],
            epidemic=fields["epidemic_countries"],
            e0_floor=fields["e0_floor"],
        )
    except KeyError as missing:
        raise SchemaError(f"missing field {missing}", path=path) from None
