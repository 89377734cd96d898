"""Functional summary statistics and the ABC summary vector.

K/L use Ripley's isotropic edge correction (closed-form rectangle
geometry); F and G use border (reduced-sample) correction; J = (1-G)/(1-F)
is masked wherever it cannot be estimated.  The ABC summary vector packs
log n, three L-curve features, the L-curve itself on a 40-point grid, and
quadrat-count statistics for q = 2..5 into 56 named entries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import PointPattern, ValidationError, Window

DEFAULT_L_POINTS = 40
DEFAULT_L_FRACTION = 0.2
DEFAULT_QUADRATS = (2, 3, 4, 5)
F_GRID_N = 128


@dataclass(frozen=True)
class Curve:
    """Function values on an r grid with a per-entry defined mask."""

    r: np.ndarray
    values: np.ndarray
    defined: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.values, dtype=float)
        d = np.asarray(self.defined, dtype=bool)
        if not (r.ndim == 1 and v.shape == r.shape and d.shape == r.shape):
            raise ValidationError("curve arrays must be 1-d and equally long")
        if r.size and (np.any(np.diff(r) <= 0) or r[0] < 0):
            raise ValidationError("r grid must be nonnegative and strictly increasing")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "defined", d)


def _undefined_curve(r_grid) -> Curve:
    r = np.asarray(r_grid, dtype=float)
    return Curve(r, np.full(r.shape, np.nan), np.zeros(r.shape, dtype=bool))


def default_r_grid(window: Window, m: int = DEFAULT_L_POINTS, fraction: float = DEFAULT_L_FRACTION) -> np.ndarray:
    """m equally spaced values in (0, fraction * shorter side]."""
    h = window.shorter_side
    return fraction * h * np.arange(1, m + 1) / m


# ---------------------------------------------------------------------------
# Ripley's isotropic edge correction on a rectangle


def _isotropic_weights(x, y, d, window: Window):
    """Vectorized reciprocal circle-fraction weights; NaN where fraction <= 0.

    The exterior arc is the inclusion-exclusion of the four per-edge arcs
    minus the four corner overlaps; arcs of opposite edges never overlap
    because each half-angle stays below pi/2.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    dl = x - window.xmin
    dr = window.xmax - x
    db = y - window.ymin
    dt = window.ymax - y
    with np.errstate(divide="ignore", invalid="ignore"):
        al = np.arccos(np.minimum(dl / d, 1.0))
        ar = np.arccos(np.minimum(dr / d, 1.0))
        ab = np.arccos(np.minimum(db / d, 1.0))
        at = np.arccos(np.minimum(dt / d, 1.0))
    exterior = 2.0 * (al + ar + ab + at)
    half_pi = 0.5 * math.pi
    for ax, ay in ((al, ab), (al, at), (ar, ab), (ar, at)):
        exterior = exterior - np.maximum(0.0, ax + ay - half_pi)
    fraction = 1.0 - exterior / (2.0 * math.pi)
    return np.where(fraction > 1e-12, 1.0 / fraction, np.nan)


def ripley_weight(xi, d: float, window: Window) -> float:
    """Edge-correction weight for a circle of radius d centered at xi.

    Returns NaN (flagged undefined) when the circumference lies entirely
    outside the window.
    """
    if d <= 0:
        raise ValidationError(f"d must be > 0, got {d}")
    x, y = float(xi[0]), float(xi[1])
    if not window.contains(x, y):
        raise ValidationError(f"point {xi!r} lies outside the window")
    return float(_isotropic_weights(x, y, d, window))


# ---------------------------------------------------------------------------
# K and L


def k_function(pattern: PointPattern, r_grid) -> Curve:
    """Ripley's K with isotropic correction; undefined everywhere if n < 2."""
    r = np.asarray(r_grid, dtype=float)
    n = pattern.n
    if n < 2:
        return _undefined_curve(r)
    w = pattern.window
    pts = pattern.points
    r_max = float(r[-1])
    dx = pts[:, 0][:, None] - pts[:, 0][None, :]
    dy = pts[:, 1][:, None] - pts[:, 1][None, :]
    d = np.hypot(dx, dy)
    np.fill_diagonal(d, np.inf)
    ii, jj = np.nonzero(d <= r_max)
    dij = d[ii, jj]
    wij = _isotropic_weights(pts[ii, 0], pts[ii, 1], dij, w)
    order = np.argsort(dij, kind="stable")
    dij = dij[order]
    wij = wij[order]
    defined = np.ones(r.shape, dtype=bool)
    bad = ~np.isfinite(wij)
    if np.any(bad):
        # cannot correct pairs this far out; mask the curve from there on
        defined &= r < dij[bad].min()
        wij = np.where(bad, 0.0, wij)
    csum = np.concatenate([[0.0], np.cumsum(wij)])
    idx = np.searchsorted(dij, r, side="right")
    k_vals = w.area / (n * (n - 1)) * csum[idx]
    return Curve(r, np.where(defined, k_vals, np.nan), defined)


def l_function(pattern: PointPattern, r_grid) -> Curve:
    """Variance-stabilized K: L(r) = sqrt(K(r) / pi)."""
    k = k_function(pattern, r_grid)
    with np.errstate(invalid="ignore"):
        vals = np.sqrt(k.values / math.pi)
    return Curve(k.r, vals, k.defined)


def l_centred(pattern: PointPattern, r_grid) -> Curve:
    """L(r) - r, the working statistic (0 under Poisson)."""
    l = l_function(pattern, r_grid)
    return Curve(l.r, l.values - l.r, l.defined)


# ---------------------------------------------------------------------------
# F, G, J with border (reduced-sample) correction


def _border_distance(x, y, window: Window):
    return np.minimum.reduce(
        [x - window.xmin, window.xmax - x, y - window.ymin, window.ymax - y]
    )


def empty_space_F(pattern: PointPattern, r_grid, grid_n: int = F_GRID_N) -> Curve:
    """Empty-space function on a grid_n x grid_n lattice of test locations."""
    r = np.asarray(r_grid, dtype=float)
    w = pattern.window
    gx = w.xmin + (np.arange(grid_n) + 0.5) * (w.width / grid_n)
    gy = w.ymin + (np.arange(grid_n) + 0.5) * (w.height / grid_n)
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    locs = np.column_stack([X.ravel(), Y.ravel()])
    if pattern.n == 0:
        nnd = np.full(locs.shape[0], np.inf)
    else:
        nnd, _ = cKDTree(pattern.points).query(locs)
    border = _border_distance(locs[:, 0], locs[:, 1], w)
    return _reduced_sample(r, nnd, border)


def nearest_neighbour_G(pattern: PointPattern, r_grid) -> Curve:
    """Nearest-neighbour distance distribution over the data points."""
    r = np.asarray(r_grid, dtype=float)
    if pattern.n < 1:
        raise ValidationError("G requires at least one point")
    if pattern.n == 1:
        return _undefined_curve(r)
    nnd, _ = cKDTree(pattern.points).query(pattern.points, k=2)
    nnd = nnd[:, 1]
    border = _border_distance(pattern.points[:, 0], pattern.points[:, 1], pattern.window)
    return _reduced_sample(r, nnd, border)


def _reduced_sample(r, nnd, border) -> Curve:
    eligible = border[None, :] >= r[:, None]
    denom = eligible.sum(axis=1)
    hits = (eligible & (nnd[None, :] <= r[:, None])).sum(axis=1)
    defined = denom > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = hits / denom
    return Curve(r, np.where(defined, vals, np.nan), defined)


def j_function(f: Curve, g: Curve) -> Curve:
    """J = (1 - G) / (1 - F), defined only where 1 - F > 0."""
    if f.r.shape != g.r.shape or np.any(f.r != g.r):
        raise ValidationError("F and G must share the r grid")
    defined = f.defined & g.defined & (1.0 - f.values > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = (1.0 - g.values) / (1.0 - f.values)
    return Curve(f.r, np.where(defined, vals, np.nan), defined)


def j_curve(pattern: PointPattern, r_grid, grid_n: int = F_GRID_N) -> Curve:
    return j_function(empty_space_F(pattern, r_grid, grid_n), nearest_neighbour_G(pattern, r_grid))


# ---------------------------------------------------------------------------
# quadrat statistics


def quadrat_counts(pattern: PointPattern, q: int) -> np.ndarray:
    """Point counts over the q x q partition into congruent rectangles."""
    if q < 2:
        raise ValidationError(f"q must be >= 2, got {q}")
    w = pattern.window
    pts = pattern.points
    ix = np.minimum(((pts[:, 0] - w.xmin) / w.width * q).astype(int), q - 1)
    iy = np.minimum(((pts[:, 1] - w.ymin) / w.height * q).astype(int), q - 1)
    counts = np.zeros((q, q), dtype=int)
    np.add.at(counts, (ix, iy), 1)
    return counts


def quadrat_stats(pattern: PointPattern, q: int) -> tuple[float, float, float]:
    """(C_max, C_min, C_logvar) of the cell-count fractions n_ij / n.

    Equal counts in every cell give zero variance and C_logvar = -inf,
    which downstream code treats as a non-finite summary.
    """
    if pattern.n < 1:
        raise ValidationError("quadrat statistics require at least one point")
    frac = quadrat_counts(pattern, q).ravel() / pattern.n
    var = float(np.var(frac, ddof=1))
    with np.errstate(divide="ignore"):
        logvar = float(np.log(var)) if var > 0 else -math.inf
    return float(frac.max()), float(frac.min()), logvar


# ---------------------------------------------------------------------------
# the ABC summary vector


def summary_names(m: int = DEFAULT_L_POINTS, q_values=DEFAULT_QUADRATS) -> tuple[str, ...]:
    names = ["n_log", "L_max", "L_min", "L_argmin"]
    names += [f"L_{k}" for k in range(1, m + 1)]
    for q in q_values:
        names += [f"C_max_{q}", f"C_min_{q}", f"C_logvar_{q}"]
    return tuple(names)


@dataclass(frozen=True)
class SummaryVector:
    """Named summary statistics of one pattern; 56 entries at the defaults."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.names),):
            raise ValidationError("summary names/values length mismatch")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def as_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in zip(self.names, self.values)}

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])


def summary_vector(
    pattern: PointPattern,
    m: int = DEFAULT_L_POINTS,
    fraction: float = DEFAULT_L_FRACTION,
    q_values=DEFAULT_QUADRATS,
) -> SummaryVector:
    """Assemble the ABC summary statistics of one point pattern.

    Entries: log n; max, min, and argmin of L(r) - r over the r grid; the
    m values of L(r) - r; and (C_max, C_min, C_logvar) per quadrat order.
    A pattern with n < 2 yields NaN L statistics (non-finite vector).
    """
    if pattern.n < 1:
        raise ValidationError("summary vector requires at least one point")
    r_grid = default_r_grid(pattern.window, m, fraction)
    t = l_centred(pattern, r_grid)
    vals = [math.log(pattern.n)]
    if np.all(t.defined):
        k = int(np.argmin(t.values))
        vals += [float(t.values.max()), float(t.values.min()), float(t.r[k])]
        vals += [float(v) for v in t.values]
    else:
        vals += [math.nan] * (3 + m)
    for q in q_values:
        vals += list(quadrat_stats(pattern, q))
    return SummaryVector(summary_names(m, q_values), np.array(vals))
