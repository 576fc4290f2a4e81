"""The degenerate pair equation ``u_t = G(u_y, u_xx)`` and the self-normalized
limit built on it.

``u(x, y, t)`` is the sublinear expectation of ``phi(x + W_t, y + <W>_t)``
for a G-Brownian motion ``W`` and its quadratic variation.  The scheme splits
each time step per control value ``v``: an explicit diffusion step in ``x``
followed by an exact transport of ``v * dt`` in ``y``, then takes the
pointwise max over the two endpoint variances.  Each branch is monotone, so
the max is too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import TERMINAL, TERMINAL_QV, TestFunctional, VolBand
from .exceptions import (
    CflViolation,
    DomainTooSmall,
    NoConvergence,
    UnboundedFunctional,
    ValidationError,
)
from .pde_gheat import DOMAIN_SIGMAS, RefinedValue
from .validation import check_band, check_functional, check_points, check_positive_int

CFL_MAX = 1.0


@dataclass(frozen=True)
class Grid2D:
    x_min: float
    x_max: float
    nx: int
    y_min: float
    y_max: float
    ny: int
    T: float
    nt: int

    def __post_init__(self):
        if not (self.x_min < 0.0 < self.x_max):
            raise ValidationError("x-grid must straddle the origin")
        if self.y_min > 0.0 or self.y_max <= self.y_min:
            raise ValidationError("y-grid must start at or below 0")
        if self.nx < 3 or self.ny < 2 or self.nt < 1 or self.T <= 0:
            raise ValidationError("degenerate grid")

    @property
    def dx(self):
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dy(self):
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def dt(self):
        return self.T / self.nt

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def y(self):
        return np.linspace(self.y_min, self.y_max, self.ny)

    def cfl(self, band: VolBand) -> float:
        return self.dt * band.sigma_hi_sq / self.dx**2

    @classmethod
    def for_band(cls, band: VolBand, T: float = 1.0, h: float = 0.05, halfwidth=None,
                 y_max=None, substeps: int = 1) -> "Grid2D":
        """Grid with ``dx = h * sigma_hi`` and ``dy = sigma_lo^2 dt / substeps``.

        The low-variance transport then moves an integer number of rows per
        step, and tying ``dx`` to ``sigma_hi`` makes the discrete problem
        invariant under rescaling the band.
        """
        dx = h * band.sigma_hi
        if halfwidth is None:
            halfwidth = DOMAIN_SIGMAS * band.sigma_hi * math.sqrt(T)
        half = int(math.ceil(halfwidth / dx - 1e-9))
        nt = int(math.ceil(T * band.sigma_hi_sq / (CFL_MAX * dx * dx) - 1e-9))
        dt = T / nt
        dy = band.sigma_lo_sq * dt / substeps
        if y_max is None:
            # rows above this cannot influence u(., 0, T): the high branch
            # moves at most ceil(shift) rows per step
            y_max = (band.sigma_hi_sq + band.sigma_lo_sq) * T
        ny = int(math.ceil(y_max / dy - 1e-9)) + 3
        return cls(-half * dx, half * dx, 2 * half + 1, 0.0, (ny - 1) * dy, ny, T, nt)


@dataclass
class PairSolution:
    grid: Grid2D
    times: np.ndarray
    values: np.ndarray  # (n_saved, ny, nx)
    band: VolBand
    valid_rows: int
    meta: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.values[-1]

    def at(self, x, y):
        """Bilinear interpolation of the final slice."""
        g = self.grid
        ys = g.y[: self.valid_rows]
        if np.any(np.asarray(y) > ys[-1] + 1e-12):
            raise ValidationError("query above the rows this solution kept valid")
        interp = RegularGridInterpolator((ys, g.x), self.final[: self.valid_rows],
                                         bounds_error=True)
        pts = np.column_stack(np.broadcast_arrays(np.ravel(y), np.ravel(x)))
        out = interp(pts)
        return float(out[0]) if np.ndim(x) == 0 and np.ndim(y) == 0 else out

    def origin_value(self) -> float:
        g = self.grid
        j = int(round(-g.y_min / g.dy))
        i = (g.nx - 1) // 2
        if abs(g.x[i]) > 1e-12 or abs(g.y[j]) > 1e-9 * max(1.0, g.dy):
            return self.at(0.0, 0.0)
        return float(self.final[j, i])


def _shift_rows(a, s, out):
    """``out[j] = a(j + s)`` with linear interpolation; rows past the top
    repeat the top row."""
    ny = a.shape[0]
    k = int(math.floor(s + 1e-12))
    f = s - k
    if f < 1e-12:
        f = 0.0
    if k >= ny:
        out[:] = a[-1]
        return out
    out[: ny - k] = a[k:]
    out[ny - k:] = a[-1]
    if f > 0.0:
        nxt = np.empty_like(a)
        k1 = k + 1
        if k1 < ny:
            nxt[: ny - k1] = a[k1:]
            nxt[ny - k1:] = a[-1]
        else:
            nxt[:] = a[-1]
        out *= 1.0 - f
        out += f * nxt
    return out


def _step_numpy(u, best, rows, lams, offs):
    src = u[:rows]
    work = np.empty_like(src)
    branch = np.empty_like(src)
    for b in range(len(lams)):
        work[:] = src
        work[:, 1:-1] += lams[b] * (src[:, 2:] - 2.0 * src[:, 1:-1] + src[:, :-2])
        target = best[:rows] if b == 0 else branch
        _shift_rows(work, offs[b], target)
        if b > 0:
            np.maximum(best[:rows], target, out=best[:rows])
    best[:rows, 0] = u[:rows, 0]
    best[:rows, -1] = u[:rows, -1]
    best[rows:] = u[rows:]


def _step_fused(u, best, rows, lams, offs):
    ny, nx = u.shape
    for j in range(rows):
        best[j, 0] = u[j, 0]
        best[j, nx - 1] = u[j, nx - 1]
        for i in range(1, nx - 1):
            top = -np.inf
            for b in range(lams.shape[0]):
                lam = lams[b]
                s = offs[b]
                k = int(np.floor(s + 1e-12))
                f = s - k
                if f < 1e-12:
                    f = 0.0
                r0 = min(j + k, ny - 1)
                val = u[r0, i] + lam * (u[r0, i + 1] - 2.0 * u[r0, i] + u[r0, i - 1])
                if f > 0.0:
                    r1 = min(j + k + 1, ny - 1)
                    v1 = u[r1, i] + lam * (u[r1, i + 1] - 2.0 * u[r1, i] + u[r1, i - 1])
                    val = (1.0 - f) * val + f * v1
                if val > top:
                    top = val
            best[j, i] = top
    for j in range(rows, ny):
        for i in range(nx):
            best[j, i] = u[j, i]


try:
    from numba import njit

    _step_numba = njit(cache=True)(_step_fused)
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _step_numba = _step_fused
    _HAVE_NUMBA = False


def solve_pair(phi2, band, T: float = 1.0, grid: Grid2D | None = None,
               keep_every: int | None = None, origin_only: bool = False,
               kernel: str = "numba") -> PairSolution:
    """March ``u_t = G(u_y, u_xx)`` from ``u(., ., 0) = phi2``.

    ``x``-boundary columns stay at their initial values.  With
    ``origin_only`` the rows that cannot reach ``y = 0`` are skipped as time
    advances, which roughly halves the work when only ``u(x, 0, T)`` is
    wanted; rows above ``valid_rows`` are then stale.  ``kernel="numpy"``
    selects the slower array-expression stepper.
    """
    band = check_band(band)
    phi2 = check_functional(phi2, TERMINAL_QV)
    if grid is None:
        grid = Grid2D.for_band(band, T)
    if abs(grid.T - T) > 1e-12 * T:
        raise ValidationError("grid horizon does not match T")
    cfl = grid.cfl(band)
    if cfl > CFL_MAX * (1 + 1e-9):
        raise CflViolation(f"dt*sigma_hi^2/dx^2 = {cfl:.4g} exceeds {CFL_MAX}")
    need_x = DOMAIN_SIGMAS * band.sigma_hi * math.sqrt(T)
    if min(-grid.x_min, grid.x_max) < need_x * (1 - 1e-9):
        raise DomainTooSmall(f"x half-width must be at least {need_x:.4g}")
    if grid.y_max < band.sigma_hi_sq * T * (1 - 1e-12):
        raise DomainTooSmall(f"y_max must reach sigma_hi^2 T = {band.sigma_hi_sq * T:.4g}")

    X, Y = np.meshgrid(grid.x, grid.y)
    u = np.asarray(phi2(X, Y), dtype=float)
    u = np.array(np.broadcast_to(u, X.shape), dtype=float)
    dt, dx, dy = grid.dt, grid.dx, grid.dy
    shifts = [(0.5 * v * dt / dx**2, v * dt / dy) for v in band.endpoints()]
    max_shift = max(s for _, s in shifts)

    saved_t, saved = [0.0], [u.copy()]
    ny = grid.ny
    j0 = int(round(-grid.y_min / dy))
    best = np.empty_like(u)
    step = _step_numba if (kernel == "numba" and _HAVE_NUMBA) else _step_numpy
    lams = np.array([lam for lam, _ in shifts])
    offs = np.array([s for _, s in shifts])
    for m in range(grid.nt):
        rows = ny
        if origin_only:
            rows = min(ny, j0 + int(math.ceil(max_shift)) * (grid.nt - m) + 2)
        step(u, best, rows, lams, offs)
        u, best = best, u
        if keep_every and (m + 1) % keep_every == 0 and m + 1 < grid.nt:
            saved_t.append((m + 1) * dt)
            saved.append(u.copy())
    saved_t.append(T)
    saved.append(u.copy())
    valid = ny
    if origin_only:
        valid = min(ny, int(round(-grid.y_min / dy)) + 2)
    return PairSolution(grid, np.array(saved_t), np.array(saved), band, valid,
                        {"cfl": cfl, "shifts": [s for _, s in shifts], "phi": phi2.name})


def clamp_functional(phi: TestFunctional, band: VolBand, widen: float = 1.0) -> TestFunctional:
    """``psi(x, y) = phi(x / sqrt(a v y ^ b))`` with ``a = sigma_lo^2 / 2`` and
    ``b = 2 sigma_hi^2``; ``widen`` divides ``a`` and multiplies ``b``."""
    a = band.sigma_lo_sq / 2.0 / widen
    b = 2.0 * band.sigma_hi_sq * widen

    def psi(x, y):
        return phi(np.asarray(x) / np.sqrt(np.clip(y, a, b)))

    lip = phi.lipschitz_bound / math.sqrt(a) if math.isfinite(phi.lipschitz_bound) else math.inf
    return TestFunctional(psi, TERMINAL_QV, lip, phi.sup_bound, f"clamp[{phi.name}]")


def selfnorm_limit(phi, band, tol: float = 1e-3, T: float = 1.0, h0: float = 0.2,
                   max_refinements: int = 4, widen: float = 1.0) -> RefinedValue:
    """Limit ``E[phi(W_1 / sqrt(<W>_1))]`` through the clamp construction,
    refined by halving ``h`` until successive values differ by less than
    ``tol``."""
    band = check_band(band)
    max_refinements = check_positive_int(max_refinements, "max_refinements")
    phi = check_functional(phi, TERMINAL)
    if not phi.bounded:
        raise UnboundedFunctional(f"{phi.name or phi!r} has no finite sup bound")
    psi = clamp_functional(phi, band, widen)
    # clamp must not bind inside the rows that reach the origin
    y_top = (band.sigma_hi_sq + band.sigma_lo_sq) * T
    history = []
    h, prev = h0, None
    for level in range(max_refinements + 1):
        grid = Grid2D.for_band(band, T, h, y_max=y_top)
        sol = solve_pair(psi, band, T, grid, origin_only=True)
        val = sol.origin_value()
        history.append((h, val))
        if prev is not None and abs(val - prev) < tol:
            a = band.sigma_lo_sq / 2.0 / widen
            b = 2.0 * band.sigma_hi_sq * widen
            lip_psi = phi.lipschitz_bound * max(a**-0.5, b**-1.5 * grid.x_max)
            return RefinedValue(val, abs(val - prev), tuple(history),
                                {"clamp": (a, b), "levels": level + 1, "psi_lipschitz": lip_psi,
                                 "nt": grid.nt, "nx": grid.nx, "ny": grid.ny})
        prev = val
        h /= 2.0
    raise NoConvergence(
        f"self-normalized limit still moving by {abs(history[-1][1] - history[-2][1]):.3g} "
        f"after {max_refinements} refinements"
    )


class PairPdeSolver(BaseEstimator):
    """``fit`` solves the pair equation for ``phi2(x, y)``; ``predict``
    interpolates ``u(x, y, T)`` at rows ``(x, y)`` of ``X``."""

    def __init__(self, phi2=None, band=(1.0, 4.0), T=1.0, h=0.05):
        self.phi2 = phi2
        self.band = band
        self.T = T
        self.h = h

    def fit(self, X=None, y=None):
        if self.phi2 is None:
            raise ValidationError("phi2 is required")
        band = check_band(self.band)
        grid = Grid2D.for_band(band, self.T, self.h)
        self.solution_ = solve_pair(self.phi2, band, self.T, grid)
        self.value_ = self.solution_.origin_value()
        return self

    def predict(self, X):
        check_is_fitted(self, "solution_")
        X = check_points(X, 2)
        return np.asarray(self.solution_.at(X[:, 0], X[:, 1]), dtype=float)


class SelfNormalizedLimit(BaseEstimator):
    """``fit`` computes ``E[phi(W_1 / sqrt(<W>_1))]`` into ``value_``.

    ``transform`` maps a list of bands (rows ``(lo, hi)``) to their limits,
    reusing the other parameters.
    """

    def __init__(self, phi="cos", band=(1.0, 4.0), tol=1e-3, h0=0.2, max_refinements=4,
                 widen=1.0):
        self.phi = phi
        self.band = band
        self.tol = tol
        self.h0 = h0
        self.max_refinements = max_refinements
        self.widen = widen

    def _limit(self, band):
        return selfnorm_limit(self.phi, band, tol=self.tol, h0=self.h0,
                              max_refinements=self.max_refinements, widen=self.widen)

    def fit(self, X=None, y=None):
        self.result_ = self._limit(check_band(self.band))
        self.value_ = self.result_.value
        return self

    def transform(self, X):
        X = check_points(X, 2)
        return np.array([self._limit(VolBand(lo, hi)).value for lo, hi in X])
