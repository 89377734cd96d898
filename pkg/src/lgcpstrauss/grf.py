"""Stationary Gaussian random field with exponential covariance on a grid.

Fields are simulated on cell centers of a regular nx x ny grid over the
window, either by dense Cholesky factorization (small grids) or circulant
embedding on the torus (larger grids).  Field evaluation is nearest-cell
(piecewise constant) so that the exp-density sampler and field_at are
exactly consistent.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import ValidationError, Window, as_generator

log = logging.getLogger(__name__)

# auto method switches to circulant embedding above this cell count
CHOLESKY_MAX_CELLS = 1024
CHOLESKY_JITTER = 1e-10
LOGSUMEXP_THRESHOLD = 500.0


@dataclass(frozen=True)
class GridField:
    """Realization of the field: values[i, j] at cell center (i, j).

    Index i runs over x (nx cells), j over y (ny cells).
    """

    window: Window
    nx: int
    ny: int
    values: np.ndarray

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValidationError("grid must be at least 2x2")
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.nx, self.ny):
            raise ValidationError(f"values shape {v.shape} != ({self.nx}, {self.ny})")
        if not np.all(np.isfinite(v)):
            raise ValidationError("field values must be finite")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def dx(self) -> float:
        return self.window.width / self.nx

    @property
    def dy(self) -> float:
        return self.window.height / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        cx = self.window.xmin + (np.arange(self.nx) + 0.5) * self.dx
        cy = self.window.ymin + (np.arange(self.ny) + 0.5) * self.dy
        return cx, cy


def constant_field(window: Window, value: float, nx: int = 2, ny: int = 2) -> GridField:
    return GridField(window, nx, ny, np.full((nx, ny), float(value)))


def _center_coords(window: Window, nx: int, ny: int) -> np.ndarray:
    cx = window.xmin + (np.arange(nx) + 0.5) * (window.width / nx)
    cy = window.ymin + (np.arange(ny) + 0.5) * (window.height / ny)
    X, Y = np.meshgrid(cx, cy, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def _simulate_cholesky(window, nx, ny, mu, sigma2, s, rng) -> np.ndarray:
    pts = _center_coords(window, nx, ny)
    d = np.hypot(pts[:, 0, None] - pts[None, :, 0], pts[:, 1, None] - pts[None, :, 1])
    cov = sigma2 * np.exp(-d / s)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        jitter = CHOLESKY_JITTER * sigma2
        log.info("covariance factorization needed jitter %.3e on the diagonal", jitter)
        cov[np.diag_indices_from(cov)] += jitter
        L = np.linalg.cholesky(cov)
    z = mu + L @ rng.standard_normal(nx * ny)
    return z.reshape(nx, ny)


def _circulant_eigenvalues(window, nx, ny, sigma2, s, pad):
    mx, my = pad * nx, pad * ny
    dx, dy = window.width / nx, window.height / ny
    kx = np.minimum(np.arange(mx), mx - np.arange(mx)) * dx
    ky = np.minimum(np.arange(my), my - np.arange(my)) * dy
    d = np.hypot(kx[:, None], ky[None, :])
    base = sigma2 * np.exp(-d / s)
    lam = np.fft.fft2(base).real
    return lam, mx, my


EMBED_CLIP_TOL = 1e-5  # relative eigenvalue mass that may be clipped to zero


def _simulate_circulant(window, nx, ny, mu, sigma2, s, rng) -> np.ndarray | None:
    """Draw via torus embedding; None if no embedding is close enough to NND.

    Exponential covariance embeds nonnegative-definitely up to tiny
    truncation negatives; eigenvalues above -EMBED_CLIP_TOL * max are
    clipped, anything worse escalates the padding and then gives up.
    """
    pads = (4,) if s >= 0.15 * window.shorter_side else (2, 4)
    for pad in pads:
        lam, mx, my = _circulant_eigenvalues(window, nx, ny, sigma2, s, pad)
        if lam.min() < -EMBED_CLIP_TOL * lam.max():
            continue
        lam = np.clip(lam, 0.0, None)
        w = rng.standard_normal((mx, my)) + 1j * rng.standard_normal((mx, my))
        f = np.fft.fft2(w * np.sqrt(lam)) / math.sqrt(mx * my)
        return mu + f.real[:nx, :ny]
    return None


def simulate_grf(
    window: Window,
    nx: int,
    ny: int,
    mu: float,
    sigma2: float,
    s: float,
    seed,
    method: str = "auto",
) -> GridField:
    """Draw the field at cell centers: N(mu, sigma2 * exp(-d/s)).

    method: "auto" (Cholesky up to 1024 cells, circulant embedding above),
    "cholesky", or "circulant".  sigma2 = 0 returns the constant field mu.
    """
    if nx < 2 or ny < 2:
        raise ValidationError("grid must be at least 2x2")
    if sigma2 < 0:
        raise ValidationError(f"sigma2 must be >= 0, got {sigma2}")
    if s <= 0:
        raise ValidationError(f"s must be > 0, got {s}")
    if sigma2 == 0.0:
        return GridField(window, nx, ny, np.full((nx, ny), float(mu)))
    rng = as_generator(seed)
    if method == "auto":
        method = "cholesky" if nx * ny <= CHOLESKY_MAX_CELLS else "circulant"
    if method == "circulant":
        z = _simulate_circulant(window, nx, ny, mu, sigma2, s, rng)
        if z is None:
            log.info("circulant embedding not NND; falling back to Cholesky")
            z = _simulate_cholesky(window, nx, ny, mu, sigma2, s, rng)
    elif method == "cholesky":
        z = _simulate_cholesky(window, nx, ny, mu, sigma2, s, rng)
    else:
        raise ValidationError(f"unknown GRF method {method!r}")
    return GridField(window, nx, ny, z)


def cell_index(field: GridField, u) -> tuple[int, int]:
    x, y = float(u[0]), float(u[1])
    if not field.window.contains(x, y):
        raise ValidationError(f"point {u!r} lies outside the window")
    i = min(int((x - field.window.xmin) / field.dx), field.nx - 1)
    j = min(int((y - field.window.ymin) / field.dy), field.ny - 1)
    return i, j


def field_at(field: GridField, u) -> float:
    """Value of the cell containing u (nearest-cell-center lookup)."""
    i, j = cell_index(field, u)
    return float(field.values[i, j])


def log_integrate_exp(field: GridField) -> float:
    """log of integral of exp(field) over the window (always safe)."""
    v = field.values.ravel()
    vmax = float(v.max())
    return vmax + math.log(float(np.exp(v - vmax).sum())) + math.log(field.cell_area)


def integrate_exp(field: GridField) -> float:
    """Riemann integral of exp(field): sum of exp(value) * cell_area.

    Computed in log-sum-exp form when max value > 500 to dodge overflow of
    the intermediate exponentials.
    """
    v = field.values.ravel()
    if float(v.max()) > LOGSUMEXP_THRESHOLD:
        return math.exp(log_integrate_exp(field))
    return float(np.exp(v).sum()) * field.cell_area


def cell_probabilities(field: GridField) -> np.ndarray:
    """P(cell) proportional to exp(value) * cell_area, flattened C-order."""
    v = field.values.ravel()
    p = np.exp(v - v.max())
    return p / p.sum()


def sample_from_exp_density(field: GridField, seed, size: int | None = None):
    """Sample point(s) with density proportional to exp(field).

    The cell is chosen with probability exp(value) * cell_area / I_z and the
    point is then uniform within that cell.  Returns a single (x, y) array
    when size is None, else an (size, 2) array.
    """
    rng = as_generator(seed)
    probs = cell_probabilities(field)
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    m = 1 if size is None else int(size)
    flat = np.searchsorted(cum, rng.random(m), side="right")
    i, j = np.unravel_index(flat, (field.nx, field.ny))
    x = field.window.xmin + (i + rng.random(m)) * field.dx
    y = field.window.ymin + (j + rng.random(m)) * field.dy
    out = np.column_stack([x, y])
    return out[0] if size is None else out
