"""Point-pattern simulators: Poisson, LGCP, Strauss, and LGCP-Strauss.

The LGCP-Strauss and Strauss simulators run a birth-death Metropolis-
Hastings chain conditional on a field realization.  Conditional on the
field z, the target density is proportional to

    prod_i exp(z(x_i)) * gamma ** [number of R-close pairs]

and with births proposed from a density proportional to exp(z) and deaths
uniform, the acceptance probabilities reduce to

    birth of u:  min(1, gamma**t(u, x) * I_z / (n + 1))
    death of xi: min(1, n / (I_z * gamma**t(xi, x \\ xi)))

where t counts R-close neighbours and I_z integrates exp(z) over the
window (0**0 = 1, so gamma = 0 gives a hard core).  run_chain dispatches
to a compiled kernel by default; engine="python" iterates the same logic
as the public mh_step, which is the reference implementation used by the
exact-enumeration tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._chain import run_bd_chain
from .core import ModelParams, PointPattern, ValidationError, Window, as_generator, close_pair_count
from .grf import GridField, cell_probabilities, constant_field, integrate_exp, log_integrate_exp, simulate_grf

DEFAULT_GRID = (64, 64)
DEFAULT_BURNIN = 20_000
MAX_EXPECTED_COUNT = 1e8


class TraceRecord(NamedTuple):
    iteration: int
    n: int
    s_r: int


@dataclass(frozen=True)
class MHState:
    """Chain state: the pattern plus its incrementally maintained close-pair count."""

    pattern: PointPattern
    s_r: int

    @property
    def n(self) -> int:
        return self.pattern.n


def initial_state(pattern: PointPattern, R: float) -> MHState:
    return MHState(pattern, close_pair_count(pattern, R))


class _ChainContext:
    """Per-field quantities shared by every step of one chain."""

    def __init__(self, field: GridField, gamma: float, R: float):
        if not (0 <= gamma <= 1):
            raise ValidationError(f"gamma must be in [0, 1], got {gamma}")
        if R <= 0:
            raise ValidationError(f"R must be > 0, got {R}")
        self.field = field
        self.gamma = gamma
        self.R = R
        self.log_iz = log_integrate_exp(field)
        cum = np.cumsum(cell_probabilities(field))
        cum[-1] = 1.0
        self.cum_prob = cum


def _count_within(pts: np.ndarray, x: float, y: float, R: float, exclude: int = -1) -> int:
    if pts.shape[0] == 0:
        return 0
    d2 = (pts[:, 0] - x) ** 2 + (pts[:, 1] - y) ** 2
    hit = d2 <= R * R
    if 0 <= exclude < pts.shape[0]:
        hit[exclude] = False
    return int(np.count_nonzero(hit))


def _python_step(pts: np.ndarray, s_r: int, ctx: _ChainContext, rng) -> tuple[np.ndarray, int]:
    """One birth-death transition; same draw order as the compiled kernel."""
    n = pts.shape[0]
    w = ctx.field.window
    if rng.random() < 0.5:
        cell = int(np.searchsorted(ctx.cum_prob, rng.random(), side="right"))
        ci, cj = divmod(cell, ctx.field.ny)
        ux = w.xmin + (ci + rng.random()) * ctx.field.dx
        uy = w.ymin + (cj + rng.random()) * ctx.field.dy
        u_acc = rng.random()
        t = _count_within(pts, ux, uy, ctx.R)
        if ctx.gamma == 0.0:
            log_r = ctx.log_iz - math.log(n + 1.0) if t == 0 else -math.inf
        else:
            log_r = t * math.log(ctx.gamma) + ctx.log_iz - math.log(n + 1.0)
        if log_r >= 0.0 or u_acc < math.exp(log_r):
            return np.vstack([pts, [ux, uy]]), s_r + t
        return pts, s_r
    if n == 0:
        return pts, s_r  # automatic rejection, iteration still consumed
    k = min(int(rng.random() * n), n - 1)
    u_acc = rng.random()
    t = _count_within(pts, pts[k, 0], pts[k, 1], ctx.R, exclude=k)
    if ctx.gamma == 0.0:
        accept = t >= 1 or u_acc < math.exp(math.log(n) - ctx.log_iz)
    else:
        log_r = math.log(n) - ctx.log_iz - t * math.log(ctx.gamma)
        accept = log_r >= 0.0 or u_acc < math.exp(log_r)
    if accept:
        return np.delete(pts, k, axis=0), s_r - t
    return pts, s_r


def mh_step(state: MHState, field: GridField, gamma: float, R: float, seed) -> MHState:
    """One birth-death MH transition targeting the conditional density."""
    ctx = _ChainContext(field, gamma, R)
    pts, s_r = _python_step(np.asarray(state.pattern.points), state.s_r, ctx, as_generator(seed))
    return MHState(PointPattern(pts, field.window), s_r)


def _kernel_seed(seed) -> int:
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(2**32))
    return int(np.random.SeedSequence(seed).generate_state(1, np.uint32)[0])


def run_chain(
    field: GridField,
    gamma: float,
    R: float,
    n_iters: int,
    init: PointPattern,
    seed,
    record_trace: bool = False,
    engine: str = "numba",
    check_every: int = 0,
) -> tuple[PointPattern, list[TraceRecord]]:
    """Apply n_iters birth-death steps from init; optionally record (n, sR).

    Traces include iteration 0 (the initial state).  check_every > 0
    recomputes the close-pair count from scratch every that many steps and
    raises if the incremental bookkeeping diverged.
    """
    if init.window != field.window:
        raise ValidationError("init pattern window does not match the field window")
    ctx = _ChainContext(field, gamma, R)
    w = field.window
    if engine == "numba":
        xs, ys, s_r, n_tr, s_tr = run_bd_chain(
            np.ascontiguousarray(init.points[:, 0]),
            np.ascontiguousarray(init.points[:, 1]),
            ctx.cum_prob,
            field.nx,
            field.ny,
            field.dx,
            field.dy,
            w.xmin,
            w.ymin,
            w.width,
            w.height,
            ctx.log_iz,
            float(gamma),
            float(R),
            int(n_iters),
            _kernel_seed(seed),
            bool(record_trace),
            int(check_every),
        )
        pattern = PointPattern(np.column_stack([xs, ys]), w)
        trace = (
            [TraceRecord(i, int(n_tr[i]), int(s_tr[i])) for i in range(n_iters + 1)]
            if record_trace
            else []
        )
        return pattern, trace
    if engine != "python":
        raise ValidationError(f"unknown chain engine {engine!r}")
    rng = as_generator(seed)
    pts = np.asarray(init.points, dtype=float)
    s_r = close_pair_count(init, R)
    trace = [TraceRecord(0, pts.shape[0], s_r)] if record_trace else []
    for it in range(1, n_iters + 1):
        pts, s_r = _python_step(pts, s_r, ctx, rng)
        if record_trace:
            trace.append(TraceRecord(it, pts.shape[0], s_r))
        if check_every > 0 and it % check_every == 0:
            if close_pair_count(PointPattern(pts, w), R) != s_r:
                raise RuntimeError("incremental close-pair count diverged")
    return PointPattern(pts, w), trace


def simulate_poisson(window: Window, log_intensity: GridField, seed) -> PointPattern:
    """Poisson pattern with intensity exp(field): N ~ Poisson(I_z), iid points."""
    rng = as_generator(seed)
    lam = integrate_exp(log_intensity)
    if not math.isfinite(lam) or lam > MAX_EXPECTED_COUNT:
        raise ValidationError(f"expected count {lam} is too large to simulate")
    n = int(rng.poisson(lam))
    if n == 0:
        return PointPattern.empty(window)
    from .grf import sample_from_exp_density

    return PointPattern(sample_from_exp_density(log_intensity, rng, size=n), window)


def _split_seed(seed, k: int) -> list:
    """k independent sub-seeds from an int seed or a Generator."""
    if isinstance(seed, np.random.Generator):
        return [int(seed.integers(2**63)) for _ in range(k)]
    ss = np.random.SeedSequence(seed)
    return list(ss.spawn(k))


def simulate_lgcp_strauss(
    theta: ModelParams,
    window: Window,
    grid: tuple[int, int] = DEFAULT_GRID,
    burnin: int = DEFAULT_BURNIN,
    seed=None,
    engine: str = "numba",
    grf_method: str = "auto",
) -> PointPattern:
    """Field realization, then iteration burnin+1 of the chain from empty."""
    field_seed, chain_seed = _split_seed(seed, 2)
    field = simulate_grf(
        window, grid[0], grid[1], theta.mu, theta.sigma2, theta.s, field_seed, method=grf_method
    )
    pattern, _ = run_chain(
        field,
        theta.gamma,
        theta.R,
        burnin + 1,
        PointPattern.empty(window),
        chain_seed,
        engine=engine,
    )
    return pattern


def simulate_lgcp(
    mu: float,
    sigma2: float,
    s: float,
    window: Window,
    grid: tuple[int, int] = DEFAULT_GRID,
    seed=None,
    grf_method: str = "auto",
) -> PointPattern:
    """Exact LGCP draw: simulate the field, then a Poisson pattern given it."""
    field_seed, pts_seed = _split_seed(seed, 2)
    field = simulate_grf(window, grid[0], grid[1], mu, sigma2, s, field_seed, method=grf_method)
    return simulate_poisson(window, field, pts_seed)


def simulate_strauss(
    mu: float,
    gamma: float,
    R: float,
    window: Window,
    burnin: int = DEFAULT_BURNIN,
    seed=None,
    engine: str = "numba",
) -> PointPattern:
    """Strauss process: the chain on the constant field mu."""
    field = constant_field(window, mu)
    pattern, _ = run_chain(
        field, gamma, R, burnin + 1, PointPattern.empty(window), seed, engine=engine
    )
    return pattern
