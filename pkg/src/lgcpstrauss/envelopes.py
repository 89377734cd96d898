"""Global envelope tests based on extreme rank lengths (ERL).

A curve's extremeness is the lexicographic position of its ascending-
sorted vector of two-sided pointwise ranks among all s+1 curves (data
first); ties share the most extreme position.  The p-value is the
fraction of curves at least as extreme as the data curve, and the
100*level% envelope is the pointwise min/max of the least extreme
ceil(level*(s+1)) curves, so lying outside the envelope anywhere and
rejecting at the level coincide.  Multiple functional summaries combine
via the two-step construction: one-sided ERL applied to the vectors of
per-set measures.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import partial

import numpy as np

from .core import PointPattern, ValidationError
from .parallel import STREAM_PREDICTIVE, parallel_map, rng_for
from .summaries import Curve

log = logging.getLogger(__name__)

DEFAULT_LEVEL = 0.95
REDRAW_LIMIT = 10


@dataclass(frozen=True)
class CurveSet:
    """One observed curve plus s simulated curves on a shared grid.

    The validity mask is the intersection of the per-curve masks; masked
    positions are excluded from every rank computation.
    """

    r: np.ndarray
    data: np.ndarray
    sims: np.ndarray  # (s, len(r))
    mask: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        data = np.asarray(self.data, dtype=float)
        sims = np.atleast_2d(np.asarray(self.sims, dtype=float))
        mask = np.asarray(self.mask, dtype=bool)
        if data.shape != r.shape or mask.shape != r.shape or sims.shape[1] != r.size:
            raise ValidationError("curve set arrays are inconsistent")
        if sims.shape[0] < 1:
            raise ValidationError("need at least one simulated curve")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "sims", sims)
        object.__setattr__(self, "mask", mask)

    @property
    def s(self) -> int:
        return self.sims.shape[0]

    @staticmethod
    def from_curves(data: Curve, sims: list[Curve]) -> "CurveSet":
        mask = data.defined.copy()
        for c in sims:
            mask &= c.defined
        return CurveSet(data.r, data.values, np.vstack([c.values for c in sims]), mask)


@dataclass(frozen=True)
class EnvelopeResult:
    r: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    data: np.ndarray
    sim_mean: np.ndarray
    mask: np.ndarray
    p_value: float
    measures: np.ndarray  # data first, then the s simulated curves
    level: float
    rejected: bool


def _pointwise_ranks(values: np.ndarray, side: str = "two-sided") -> np.ndarray:
    """Pointwise ranks of (N, m) values; rank 1 is most extreme, ties share it."""
    N = values.shape[0]
    ranks = np.empty(values.shape, dtype=np.int64)
    for col in range(values.shape[1]):
        v = values[:, col]
        order = np.sort(v)
        below = np.searchsorted(order, v, side="left") + 1
        if side == "lower":
            ranks[:, col] = below
        else:
            above = N - np.searchsorted(order, v, side="right") + 1
            ranks[:, col] = np.minimum(below, above)
    return ranks


def _erl_measures(values: np.ndarray, side: str = "two-sided") -> np.ndarray:
    """Normalized ERL position of each row; smaller = more extreme."""
    N = values.shape[0]
    sorted_ranks = np.sort(_pointwise_ranks(values, side), axis=1)
    order = np.lexsort(sorted_ranks.T[::-1])  # lexicographic over columns
    measures = np.empty(N)
    pos = 0
    i = 0
    while i < N:
        j = i
        while j + 1 < N and np.array_equal(sorted_ranks[order[j + 1]], sorted_ranks[order[i]]):
            j += 1
        measures[order[i : j + 1]] = (pos + 1) / N  # ties share the extreme slot
        pos = j + 1
        i = j + 1
    return measures


def erl_measure(curves: CurveSet) -> np.ndarray:
    """Per-curve ERL measures (data curve first); smaller = more extreme."""
    if not np.any(curves.mask):
        raise ValidationError("curve set has no defined positions")
    stacked = np.vstack([curves.data[None, :], curves.sims])[:, curves.mask]
    return _erl_measures(stacked)


def _erl_p_value(measures: np.ndarray) -> float:
    n = measures.size
    return (1 + int(np.count_nonzero(measures[1:] <= measures[0]))) / n


def _keep_indices(measures: np.ndarray, level: float) -> np.ndarray:
    """Indices of the ceil(level * N) least extreme curves (data sorts first in ties)."""
    N = measures.size
    keep = int(np.ceil(level * N))
    order = np.lexsort((np.arange(N), measures))  # by measure, then index
    return np.sort(order[N - keep :])


def _band(curves: CurveSet, kept: np.ndarray):
    stacked = np.vstack([curves.data[None, :], curves.sims])
    sub = stacked[kept]
    lo = np.where(curves.mask, sub.min(axis=0), np.nan)
    hi = np.where(curves.mask, sub.max(axis=0), np.nan)
    return lo, hi


def global_envelope(curves: CurveSet, level: float = DEFAULT_LEVEL) -> EnvelopeResult:
    """ERL global envelope and Monte Carlo test for one functional summary."""
    if not 0 < level < 1:
        raise ValidationError(f"level must be in (0, 1), got {level}")
    if curves.s < 19:
        log.warning("only %d simulations: a %g envelope is degenerate", curves.s, level)
    measures = erl_measure(curves)
    p = _erl_p_value(measures)
    kept = _keep_indices(measures, level)
    lo, hi = _band(curves, kept)
    return EnvelopeResult(
        r=curves.r,
        lo=lo,
        hi=hi,
        data=curves.data,
        sim_mean=np.where(curves.mask, curves.sims.mean(axis=0), np.nan),
        mask=curves.mask,
        p_value=p,
        measures=measures,
        level=level,
        rejected=p <= 1 - level,
    )


@dataclass(frozen=True)
class CombinedEnvelopeResult:
    envelopes: tuple[EnvelopeResult, ...]
    p_value: float
    level: float
    rejected: bool
    measures: np.ndarray  # step-2 measures, data curve first


def combined_envelope(curve_sets, level: float = DEFAULT_LEVEL) -> CombinedEnvelopeResult:
    """Two-step combined ERL envelope over several functional summaries.

    Step 1 computes ERL measures within each set; step 2 applies the
    one-sided (small is extreme) ERL construction to the per-curve vectors
    of measures.  The per-set envelopes share the joint kept set, so under
    the null all data curves stay inside simultaneously with probability
    close to the level.
    """
    curve_sets = list(curve_sets)
    if len(curve_sets) < 2:
        raise ValidationError("combined envelope needs at least two curve sets")
    s = curve_sets[0].s
    if any(cs.s != s for cs in curve_sets):
        raise ValidationError("curve sets must hold the same number of simulations")
    step1 = np.column_stack([erl_measure(cs) for cs in curve_sets])
    measures = _erl_measures(step1, side="lower")
    p = _erl_p_value(measures)
    kept = _keep_indices(measures, level)
    rejected = p <= 1 - level
    envelopes = []
    for cs in curve_sets:
        lo, hi = _band(cs, kept)
        envelopes.append(
            EnvelopeResult(
                r=cs.r,
                lo=lo,
                hi=hi,
                data=cs.data,
                sim_mean=np.where(cs.mask, cs.sims.mean(axis=0), np.nan),
                mask=cs.mask,
                p_value=p,
                measures=measures,
                level=level,
                rejected=rejected,
            )
        )
    return CombinedEnvelopeResult(tuple(envelopes), p, level, rejected, measures)


def _predictive_task(item, simulator, statistics, master_seed):
    index, theta_row = item
    from .core import ModelParams

    rng = rng_for(master_seed, STREAM_PREDICTIVE, index)
    theta = ModelParams.from_array(theta_row)
    for _ in range(REDRAW_LIMIT):
        pattern = simulator(theta, rng)
        curves = [stat(pattern) for stat in statistics]
        if all(np.any(c.defined) for c in curves):
            return curves
    return None


def posterior_predictive_curves(
    posterior,
    simulator,
    statistics,
    observed: PointPattern,
    seed=0,
    workers: int = 1,
):
    """One simulation per posterior draw, each summarized by curve statistics.

    statistics is one callable pattern -> Curve or a list of them; the same
    simulated patterns feed every statistic, so the returned CurveSets stay
    aligned.  Draws whose statistic is undefined everywhere are re-drawn up
    to 10 times, then excluded with a log entry.
    """
    single = callable(statistics)
    stats_list = [statistics] if single else list(statistics)
    samples = posterior.samples if hasattr(posterior, "samples") else np.asarray(posterior)
    if samples.shape[0] < 1:
        raise ValidationError("posterior is empty")
    task = partial(
        _predictive_task, simulator=simulator, statistics=stats_list, master_seed=seed
    )
    results = parallel_map(task, list(enumerate(samples)), workers=workers, chunksize=8)
    kept = [r for r in results if r is not None]
    excluded = len(results) - len(kept)
    if excluded:
        log.info("excluded %d posterior-predictive draws with undefined statistics", excluded)
    if not kept:
        raise ValidationError("no posterior-predictive simulation produced a defined statistic")
    data_curves = [stat(observed) for stat in stats_list]
    sets = [
        CurveSet.from_curves(data_curves[si], [r[si] for r in kept])
        for si in range(len(stats_list))
    ]
    return sets[0] if single else sets
