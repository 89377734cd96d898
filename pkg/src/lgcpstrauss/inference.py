"""Semi-automatic ABC rejection sampling, end to end.

Pipeline: a pilot run of prior-predictive simulations (with an n > m
screen), per-parameter relaxed-Lasso projections of the summary vector
onto approximate posterior means, a variance-weighted distance between
projected summaries, a tolerance at the empirical 1% percentile of the
pilot distances, and plain rejection sampling against that tolerance.
Every stage fans out over a worker pool with counter-derived seeds, so
results are reproducible and independent of the worker count.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.optimize import brentq

from .core import PARAM_NAMES, ModelParams, PriorSpec, ValidationError
from .parallel import STREAM_ABC, STREAM_FOLDS, STREAM_PILOT, parallel_map, rng_for
from .regression import ProjectionModel, RegressionData, relaxed_lasso_fit
from .summaries import SummaryVector, summary_vector

log = logging.getLogger(__name__)

DEFAULT_K_PILOT = 10_000
DEFAULT_K_ABC = 1_000
DEFAULT_M_SCREEN = 10
EPSILON_PERCENTILE = 0.01
MAX_ATTEMPTS_PER_DRAW = 1_000
SCREEN_FAILURE_LIMIT = 0.5
KDE_GRID = 512


class PilotScreenError(RuntimeError):
    """The n > m screen rejected too many prior-predictive draws."""


@dataclass(frozen=True)
class PilotSet:
    """Retained pilot draws: parameter rows, finite summary rows, and logs."""

    thetas: np.ndarray  # (k, 5)
    summaries: np.ndarray  # (k, d)
    names: tuple[str, ...]
    excluded: int  # non-finite summary rows dropped
    attempts: int  # simulations run, including screen failures

    @property
    def k(self) -> int:
        return self.thetas.shape[0]


@dataclass(frozen=True)
class ABCPosterior:
    """Accepted parameter draws plus everything needed to reproduce them."""

    samples: np.ndarray  # (k_accepted, 5)
    epsilon: float
    projections: tuple[ProjectionModel, ...]
    attempts: int  # candidate draws evaluated against epsilon
    simulations: int  # total simulations including screen retries
    shortfall: bool  # True when the attempt budget ran out early

    @property
    def k(self) -> int:
        return self.samples.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.samples[:, PARAM_NAMES.index(name)]


def _simulate_screened(prior, simulator, m, rng, max_attempts=MAX_ATTEMPTS_PER_DRAW):
    """Draw (theta, pattern) until n > m; returns (theta, pattern, attempts)."""
    for attempt in range(1, max_attempts + 1):
        theta = prior.sample(rng)
        pattern = simulator(theta, rng)
        if pattern.n > m:
            return theta, pattern, attempt
    raise PilotScreenError(
        f"no simulation exceeded n > {m} in {max_attempts} attempts; "
        "the prior and the observation scale are probably mismatched"
    )


def _pilot_task(index, prior, simulator, summary_fn, m, master_seed):
    rng = rng_for(master_seed, STREAM_PILOT, index)
    theta, pattern, attempts = _simulate_screened(prior, simulator, m, rng)
    t = summary_fn(pattern)
    return theta.as_array(), t.values, t.names, attempts


def run_pilot(
    prior: PriorSpec,
    simulator,
    k_pilot: int = DEFAULT_K_PILOT,
    m: int = DEFAULT_M_SCREEN,
    seed=0,
    summary_fn=summary_vector,
    workers: int = 1,
) -> PilotSet:
    """Prior-predictive pilot sample of (theta, summary) pairs.

    simulator(theta, rng) must return a PointPattern.  Draws are screened
    to n > m; rows with non-finite summaries are dropped with a logged
    count.  Aborts if more than half of all simulations fail the screen.
    """
    if k_pilot < 1:
        raise ValidationError(f"k_pilot must be >= 1, got {k_pilot}")
    task = partial(
        _pilot_task,
        prior=prior,
        simulator=simulator,
        summary_fn=summary_fn,
        m=m,
        master_seed=seed,
    )
    rows = parallel_map(task, range(k_pilot), workers=workers, chunksize=16)
    attempts = sum(r[3] for r in rows)
    failures = attempts - k_pilot
    if attempts > 0 and failures / attempts > SCREEN_FAILURE_LIMIT:
        raise PilotScreenError(
            f"{failures}/{attempts} simulations failed the n > {m} screen; "
            "prior/model mismatch"
        )
    names = rows[0][2]
    thetas = np.array([r[0] for r in rows])
    summaries = np.array([r[1] for r in rows])
    finite = np.all(np.isfinite(summaries), axis=1)
    excluded = int(np.count_nonzero(~finite))
    if excluded:
        log.info("excluded %d pilot draws with non-finite summaries", excluded)
    return PilotSet(thetas[finite], summaries[finite], names, excluded, attempts)


def fit_projections(pilot: PilotSet, t_obs: SummaryVector, seed=0, n_folds: int = 10):
    """One relaxed-Lasso projection per parameter, on predictors T - T_obs."""
    X = pilot.summaries - t_obs.values[None, :]
    models = []
    for j, name in enumerate(PARAM_NAMES):
        data = RegressionData(X, pilot.thetas[:, j])
        model = relaxed_lasso_fit(data, n_folds=n_folds, seed=rng_for(seed, STREAM_FOLDS, j))
        if model.degenerate:
            log.info("projection for %s is degenerate; dropped from the distance", name)
        models.append(model)
    return tuple(models)


def _values(t) -> np.ndarray:
    return np.asarray(getattr(t, "values", t), dtype=float)


def chi_distance(projections, t, t_obs) -> float:
    """Variance-weighted squared distance between projected summaries.

    Parameters with a degenerate projection (zero fitted-value variance)
    are omitted from the sum.  chi(t_obs, t_obs) is exactly 0.
    """
    delta = _values(t) - _values(t_obs)
    if not np.all(np.isfinite(delta)):
        return math.inf
    total = 0.0
    for model in projections:
        if model.degenerate:
            continue
        dev = float(model.coef @ delta)
        total += dev * dev / model.fitted_variance
    return total


def pilot_distances(projections, pilot: PilotSet, t_obs) -> np.ndarray:
    obs = _values(t_obs)
    X = pilot.summaries - obs[None, :]
    total = np.zeros(X.shape[0])
    for model in projections:
        if model.degenerate:
            continue
        dev = X @ model.coef
        total += dev * dev / model.fitted_variance
    return total


def choose_epsilon(distances, percentile: float = EPSILON_PERCENTILE) -> float:
    """Empirical percentile as a lower order statistic (no interpolation)."""
    d = np.sort(np.asarray(distances, dtype=float))
    if d.size == 0:
        raise ValidationError("cannot choose epsilon from an empty distance list")
    idx = max(1, math.ceil(percentile * d.size))
    return float(d[idx - 1])


def _abc_attempt(index, prior, simulator, summary_fn, m, master_seed):
    rng = rng_for(master_seed, STREAM_ABC, index)
    theta, pattern, attempts = _simulate_screened(prior, simulator, m, rng)
    t = summary_fn(pattern)
    return theta.as_array(), t.values, attempts


def abc_rejection(
    prior: PriorSpec,
    simulator,
    projections,
    t_obs,
    epsilon: float,
    k_abc: int = DEFAULT_K_ABC,
    m: int = DEFAULT_M_SCREEN,
    seed=0,
    summary_fn=summary_vector,
    workers: int = 1,
    budget: int | None = None,
) -> ABCPosterior:
    """Rejection sampling: keep draws with chi < epsilon until k_abc accepted.

    Candidate draws are indexed globally; the accepted sample is the first
    k_abc acceptances in index order, so the result does not depend on the
    worker count.  When the simulation budget (default 1000 * k_abc) runs
    out, the partial sample is returned with the shortfall flag set.
    """
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be > 0, got {epsilon}")
    if budget is None:
        budget = 1_000 * k_abc
    obs = _values(t_obs)
    task = partial(
        _abc_attempt,
        prior=prior,
        simulator=simulator,
        summary_fn=summary_fn,
        m=m,
        master_seed=seed,
    )
    # An attempt with global index j runs iff fewer than k_abc are already
    # accepted among indices < j and the simulation budget was not spent by
    # them.  Both conditions depend only on per-index results, so serial
    # and wave-parallel execution accept the identical sample.
    accepted: list[np.ndarray] = []
    attempts = 0
    simulations = 0
    next_index = 0
    exhausted = False
    while len(accepted) < k_abc and not exhausted:
        if workers <= 1:
            indices = range(next_index, next_index + 1)
        else:
            rate = max(len(accepted), 1) / max(attempts, 1)
            wave = int(min(max(64, 1.1 * (k_abc - len(accepted)) / rate), 50_000))
            indices = range(next_index, next_index + wave)
        next_index = indices.stop
        for theta_row, t_values, sims in parallel_map(task, indices, workers, chunksize=8):
            if len(accepted) >= k_abc:
                break
            if simulations >= budget:
                exhausted = True
                break
            attempts += 1
            simulations += sims
            if chi_distance(projections, t_values, obs) < epsilon:
                accepted.append(theta_row)
    shortfall = len(accepted) < k_abc
    if shortfall:
        log.warning(
            "attempt budget exhausted: %d/%d accepted after %d simulations",
            len(accepted),
            k_abc,
            simulations,
        )
    samples = np.array(accepted[:k_abc]) if accepted else np.empty((0, 5))
    return ABCPosterior(samples, float(epsilon), tuple(projections), attempts, simulations, shortfall)


@dataclass(frozen=True)
class ABCFit:
    posterior: ABCPosterior
    pilot: PilotSet
    projections: tuple[ProjectionModel, ...]
    t_obs: SummaryVector


def fit_abc(
    observed,
    prior: PriorSpec,
    simulator,
    k_pilot: int = DEFAULT_K_PILOT,
    k_abc: int = DEFAULT_K_ABC,
    m: int = DEFAULT_M_SCREEN,
    seed=0,
    summary_fn=summary_vector,
    workers: int = 1,
    budget: int | None = None,
) -> ABCFit:
    """Full semi-automatic ABC for one observed pattern."""
    t_obs = summary_fn(observed)
    if not t_obs.is_finite:
        raise ValidationError("observed pattern has non-finite summaries")
    pilot = run_pilot(prior, simulator, k_pilot, m, seed, summary_fn, workers)
    projections = fit_projections(pilot, t_obs, seed=seed)
    eps = choose_epsilon(pilot_distances(projections, pilot, t_obs))
    posterior = abc_rejection(
        prior, simulator, projections, t_obs, eps, k_abc, m, seed, summary_fn, workers, budget
    )
    return ABCFit(posterior, pilot, projections, t_obs)


# ---------------------------------------------------------------------------
# posterior reporting


@dataclass(frozen=True)
class KDE1D:
    x: np.ndarray
    density: np.ndarray
    bandwidth: float
    method: str


def _phi(u):
    return np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)


def silverman_bandwidth(x: np.ndarray) -> float:
    n = x.size
    sd = float(np.std(x, ddof=1))
    iqr = float(np.subtract(*np.percentile(x, [75, 25])))
    scale = min(sd, iqr / 1.349) if iqr > 0 else sd
    return 0.9 * scale * n ** (-0.2)


def sheather_jones_bandwidth(x: np.ndarray) -> float:
    """Solve-the-equation plug-in bandwidth for a Gaussian kernel.

    Raises ValueError when the root cannot be bracketed; callers fall back
    to the Silverman rule.
    """
    n = x.size
    sd = float(np.std(x, ddof=1))
    iqr = float(np.subtract(*np.percentile(x, [75, 25])))
    scale = min(sd, iqr / 1.349) if iqr > 0 else sd
    diffs = (x[:, None] - x[None, :]).ravel()
    a = 0.920 * scale * n ** (-1.0 / 7.0)
    b = 0.912 * scale * n ** (-1.0 / 9.0)

    def sd_functional(g):  # estimates the roughness of f''
        u = diffs / g
        phi4 = (u**4 - 6 * u**2 + 3) * _phi(u)
        return float(phi4.sum() / (n * (n - 1) * g**5))

    def td_functional(g):
        u = diffs / g
        phi6 = (u**6 - 15 * u**4 + 45 * u**2 - 15) * _phi(u)
        return float(-phi6.sum() / (n * (n - 1) * g**7))

    sda = sd_functional(a)
    tdb = td_functional(b)
    if sda <= 0 or tdb <= 0:
        raise ValueError("SJ preliminary functionals are not positive")
    rk = 1.0 / (2.0 * math.sqrt(math.pi))  # Gaussian kernel roughness

    def equation(h):
        gamma_h = 1.357 * (sda / tdb) ** (1.0 / 7.0) * h ** (5.0 / 7.0)
        s = sd_functional(gamma_h)
        if s <= 0:
            return math.inf
        return (rk / (n * s)) ** 0.2 - h

    h0 = silverman_bandwidth(x)
    lo, hi = h0 / 10.0, h0
    flo, fhi = equation(lo), equation(hi)
    for _ in range(10):
        if flo * fhi <= 0:
            return float(brentq(equation, lo, hi, xtol=1e-12 * h0))
        hi *= 2.0
        fhi = equation(hi)
    raise ValueError("SJ equation could not be bracketed")


def kde_1d(samples, bandwidth="sj", grid_n: int = KDE_GRID) -> KDE1D | None:
    """Gaussian-kernel density on a grid spanning the sample +- 3 bandwidths.

    bandwidth: "sj" (Sheather-Jones, Silverman fallback), "silverman", or a
    positive float.  A zero-variance sample warns and returns None.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValidationError("kde_1d needs at least two samples")
    if float(np.var(x)) == 0.0:
        warnings.warn("zero-variance sample: density is a point mass, no curve")
        return None
    method = bandwidth
    if bandwidth == "sj":
        try:
            h = sheather_jones_bandwidth(x)
        except ValueError:
            log.info("SJ bandwidth failed to bracket; using Silverman")
            h, method = silverman_bandwidth(x), "silverman"
    elif bandwidth == "silverman":
        h = silverman_bandwidth(x)
    else:
        h = float(bandwidth)
        method = "fixed"
        if h <= 0:
            raise ValidationError("bandwidth must be positive")
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, grid_n)
    dens = _phi((grid[:, None] - x[None, :]) / h).sum(axis=1) / (x.size * h)
    return KDE1D(grid, dens, float(h), str(method))


def summarize_samples(values) -> dict[str, float]:
    """Mean, median, central quantiles, and a KDE-based mode of one sample."""
    v = np.asarray(values, dtype=float)
    out = {
        "mean": float(np.mean(v)),
        "median": float(np.median(v)),
        "q025": float(np.quantile(v, 0.025)),
        "q25": float(np.quantile(v, 0.25)),
        "q75": float(np.quantile(v, 0.75)),
        "q975": float(np.quantile(v, 0.975)),
    }
    kde = kde_1d(v) if v.size >= 2 and float(np.var(v)) > 0 else None
    out["mode"] = float(kde.x[np.argmax(kde.density)]) if kde else float(v[0])
    return out


def posterior_summary(posterior: ABCPosterior) -> dict[str, dict[str, float]]:
    """Per-parameter empirical summaries of the accepted sample."""
    if posterior.k == 0:
        raise ValidationError("posterior is empty")
    return {name: summarize_samples(posterior.column(name)) for name in PARAM_NAMES}
