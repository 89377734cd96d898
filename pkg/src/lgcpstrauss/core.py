"""Geometry, parameters, and priors shared by every other module.

All types here are immutable values: safe to share across worker processes.
Nothing in this module touches a global random state; every random draw
takes an explicit seed or ``numpy.random.Generator``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

PARAM_NAMES = ("mu", "sigma2", "s", "gamma", "R")

MAX_TRUNCATION_DRAWS = 1_000_000


class ValidationError(ValueError):
    """Raised when a domain object violates its invariants."""


class TruncationError(RuntimeError):
    """Raised when a truncated prior marginal has (numerically) zero mass."""


@dataclass(frozen=True)
class Window:
    """Rectangular observation window. Boundary points count as inside."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValidationError(
                f"degenerate window [{self.xmin},{self.xmax}]x[{self.ymin},{self.ymax}]"
            )

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def shorter_side(self) -> float:
        return min(self.width, self.height)

    def contains(self, x, y):
        """Closed-window membership; works on scalars or arrays."""
        return (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)


UNIT_SQUARE = Window(0.0, 1.0, 0.0, 1.0)


@dataclass(frozen=True)
class PointPattern:
    """Finite planar point pattern inside a rectangular window.

    ``points`` is an (n, 2) float array; the empty pattern (n = 0) is valid.
    The array is frozen after construction.
    """

    points: np.ndarray
    window: Window

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 2)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValidationError(f"points must have shape (n, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("points contain non-finite coordinates")
        inside = self.window.contains(pts[:, 0], pts[:, 1])
        if not np.all(inside):
            bad = np.flatnonzero(~inside)
            raise ValidationError(f"points outside window at indices {bad.tolist()}")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @staticmethod
    def empty(window: Window) -> "PointPattern":
        return PointPattern(np.empty((0, 2)), window)


@dataclass(frozen=True)
class ModelParams:
    """Parameter vector (mu, sigma2, s, gamma, R) of the LGCP-Strauss model."""

    mu: float
    sigma2: float
    s: float
    gamma: float
    R: float

    def __post_init__(self):
        if not (self.sigma2 >= 0):
            raise ValidationError(f"sigma2 must be >= 0, got {self.sigma2}")
        if not (self.s > 0):
            raise ValidationError(f"s must be > 0, got {self.s}")
        if not (0 <= self.gamma <= 1):
            raise ValidationError(f"gamma must be in [0, 1], got {self.gamma}")
        if not (self.R > 0):
            raise ValidationError(f"R must be > 0, got {self.R}")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.sigma2, self.s, self.gamma, self.R])

    @staticmethod
    def from_array(a) -> "ModelParams":
        return ModelParams(*(float(v) for v in a))


# ---------------------------------------------------------------------------
# distances and close-pair counting


def pairwise_distances(pattern: PointPattern) -> np.ndarray:
    """Full symmetric Euclidean distance matrix (zero diagonal)."""
    pts = pattern.points
    if pattern.n == 0:
        return np.zeros((0, 0))
    dx = pts[:, 0][:, None] - pts[:, 0][None, :]
    dy = pts[:, 1][:, None] - pts[:, 1][None, :]
    return np.hypot(dx, dy)


class _CellGrid:
    """Uniform grid spatial index with cell size >= r over a window."""

    def __init__(self, window: Window, r: float):
        self.window = window
        self.ncx = max(1, int(window.width / r))
        self.ncy = max(1, int(window.height / r))
        self.wx = window.width / self.ncx
        self.wy = window.height / self.ncy
        self.cells: dict[tuple[int, int], list[int]] = {}

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        cx = min(int((x - self.window.xmin) / self.wx), self.ncx - 1)
        cy = min(int((y - self.window.ymin) / self.wy), self.ncy - 1)
        return cx, cy

    def insert(self, idx: int, x: float, y: float) -> None:
        self.cells.setdefault(self.cell_of(x, y), []).append(idx)

    def neighbourhood(self, x: float, y: float):
        """Indices stored in the 3x3 block of cells around (x, y)."""
        cx, cy = self.cell_of(x, y)
        out: list[int] = []
        for i in range(max(0, cx - 1), min(self.ncx, cx + 2)):
            for j in range(max(0, cy - 1), min(self.ncy, cy + 2)):
                got = self.cells.get((i, j))
                if got:
                    out.extend(got)
        return out


def close_pair_count(pattern: PointPattern, R: float) -> int:
    """Number of unordered point pairs at distance <= R (ties count).

    Uses a cell-grid index for O(n) expected cost; the exhaustive scan lives
    in the test suite as the oracle.
    """
    if R <= 0:
        raise ValidationError(f"R must be > 0, got {R}")
    n = pattern.n
    if n < 2:
        return 0
    pts = pattern.points
    grid = _CellGrid(pattern.window, R)
    r2 = R * R
    count = 0
    for i in range(n):
        x, y = pts[i, 0], pts[i, 1]
        for j in grid.neighbourhood(x, y):
            dx = x - pts[j, 0]
            dy = y - pts[j, 1]
            if dx * dx + dy * dy <= r2:
                count += 1
        grid.insert(i, x, y)
    return count


def neighbour_count(u, pattern: PointPattern, R: float) -> int:
    """Number of pattern points within distance R of u.

    If u coincides exactly with a pattern point, that one copy is excluded,
    so the result is the Papangelou-style count t(u, x \\ u).
    """
    if R <= 0:
        raise ValidationError(f"R must be > 0, got {R}")
    ux, uy = float(u[0]), float(u[1])
    if not pattern.window.contains(ux, uy):
        raise ValidationError(f"u={u!r} lies outside the window")
    if pattern.n == 0:
        return 0
    pts = pattern.points
    d2 = (pts[:, 0] - ux) ** 2 + (pts[:, 1] - uy) ** 2
    within = int(np.count_nonzero(d2 <= R * R))
    if np.any((pts[:, 0] == ux) & (pts[:, 1] == uy)):
        within -= 1
    return within


# ---------------------------------------------------------------------------
# priors


@dataclass(frozen=True)
class Marginal:
    """One prior marginal: a named family truncated to [lo, hi].

    Families and their (a, b) meaning:
      uniform: support (a, b)
      normal:  mean a, variance b
      gamma:   shape a, rate b
      beta:    shape parameters a, b
    """

    family: str
    a: float
    b: float
    lo: float
    hi: float

    def __post_init__(self):
        if self.family not in ("uniform", "normal", "gamma", "beta"):
            raise ValidationError(f"unknown marginal family {self.family!r}")
        if not self.hi > self.lo:
            raise ValidationError("truncation interval must satisfy hi > lo")

    def _frozen(self):
        if self.family == "uniform":
            return stats.uniform(loc=self.a, scale=self.b - self.a)
        if self.family == "normal":
            return stats.norm(loc=self.a, scale=math.sqrt(self.b))
        if self.family == "gamma":
            return stats.gamma(self.a, scale=1.0 / self.b)
        return stats.beta(self.a, self.b)

    def sample(self, rng: np.random.Generator) -> float:
        """Rejection sample from the truncated marginal."""
        lo, hi = self.lo, self.hi
        if self.family == "uniform":
            # rejection would loop forever on disjoint intervals; detect it
            left, right = max(lo, self.a), min(hi, self.b)
            if right <= left:
                raise TruncationError(
                    f"uniform({self.a},{self.b}) has no mass inside [{lo},{hi}]"
                )
            return float(rng.uniform(left, right))
        drawn = 0
        while drawn < MAX_TRUNCATION_DRAWS:
            batch = min(1024, MAX_TRUNCATION_DRAWS - drawn)
            if self.family == "normal":
                x = rng.normal(self.a, math.sqrt(self.b), size=batch)
            elif self.family == "gamma":
                x = rng.gamma(self.a, 1.0 / self.b, size=batch)
            else:
                x = rng.beta(self.a, self.b, size=batch)
            ok = x[(x >= lo) & (x <= hi)]
            if ok.size:
                return float(ok[0])
            drawn += batch
        raise TruncationError(
            f"{self.family} marginal produced no draw inside [{lo},{hi}] "
            f"after {MAX_TRUNCATION_DRAWS} rejections"
        )

    def cdf(self, x) -> np.ndarray:
        """CDF of the truncated marginal (0 below lo, 1 above hi)."""
        d = self._frozen()
        flo, fhi = d.cdf(self.lo), d.cdf(self.hi)
        mass = fhi - flo
        if mass <= 0:
            raise TruncationError("truncation interval has zero prior mass")
        out = (d.cdf(np.asarray(x, dtype=float)) - flo) / mass
        return np.clip(out, 0.0, 1.0)

    def pdf(self, x) -> np.ndarray:
        """Density of the truncated marginal."""
        d = self._frozen()
        mass = d.cdf(self.hi) - d.cdf(self.lo)
        if mass <= 0:
            raise TruncationError("truncation interval has zero prior mass")
        x = np.asarray(x, dtype=float)
        out = d.pdf(x) / mass
        out = np.where((x < self.lo) | (x > self.hi), 0.0, out)
        return out


@dataclass(frozen=True)
class PriorSpec:
    """Independent truncated marginals for (mu, sigma2, s, gamma, R)."""

    mu: Marginal
    sigma2: Marginal
    s: Marginal
    gamma: Marginal
    R: Marginal

    def marginal(self, name: str) -> Marginal:
        return getattr(self, name)

    def sample(self, rng: np.random.Generator) -> ModelParams:
        return ModelParams(
            mu=self.mu.sample(rng),
            sigma2=self.sigma2.sample(rng),
            s=self.s.sample(rng),
            gamma=self.gamma.sample(rng),
            R=self.R.sample(rng),
        )


def as_generator(seed) -> np.random.Generator:
    """Normalize an int seed / SeedSequence / Generator to a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_prior(prior: PriorSpec, seed) -> ModelParams:
    """Draw one parameter vector, each component from its truncated marginal."""
    return prior.sample(as_generator(seed))


# The simulation-study priors; everything truncated to the P1 boxes.
_P1_BOX = {
    "mu": (3.0, 6.0),
    "sigma2": (0.0, 4.0),
    "s": (0.01, 0.5),
    "gamma": (0.0, 1.0),
    "R": (0.0, 0.05),
}


def _boxed(name, family, a, b) -> Marginal:
    lo, hi = _P1_BOX[name]
    return Marginal(family, a, b, lo, hi)


def prior_p1() -> PriorSpec:
    return PriorSpec(
        mu=_boxed("mu", "uniform", 3.0, 6.0),
        sigma2=_boxed("sigma2", "uniform", 0.0, 4.0),
        s=_boxed("s", "uniform", 0.01, 0.5),
        gamma=_boxed("gamma", "uniform", 0.0, 1.0),
        R=_boxed("R", "uniform", 0.0, 0.05),
    )


def prior_p2() -> PriorSpec:
    return PriorSpec(
        mu=_boxed("mu", "normal", 3.5, 1.0),
        sigma2=_boxed("sigma2", "gamma", 1.0, 1.0),
        s=_boxed("s", "gamma", 1.0, 6.0),
        gamma=_boxed("gamma", "beta", 1.0, 2.0),
        R=_boxed("R", "gamma", 1.0, 50.0),
    )


def prior_p3() -> PriorSpec:
    return PriorSpec(
        mu=_boxed("mu", "normal", 5.0, 1.0),
        sigma2=_boxed("sigma2", "gamma", 10.0, 4.0),
        s=_boxed("s", "gamma", 7.0, 20.0),
        gamma=_boxed("gamma", "beta", 2.0, 1.0),
        R=_boxed("R", "gamma", 10.0, 250.0),
    )


def oak_prior_preset() -> PriorSpec:
    """Uniform priors rescaled for the 125x188 m oak window."""

    def u(a, b):
        return Marginal("uniform", a, b, a, b)

    return PriorSpec(
        mu=u(-7.0, -3.0),
        sigma2=u(0.0, 4.0),
        s=u(1.25, 62.5),
        gamma=u(0.0, 1.0),
        R=u(0.0, 6.25),
    )


PRIOR_PRESETS = {
    "p1": prior_p1,
    "p2": prior_p2,
    "p3": prior_p3,
    "oak": oak_prior_preset,
}
