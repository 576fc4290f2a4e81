"""Explicit monotone finite differences for the G-heat equation.

Solves ``u_t = G(u_xx)`` with ``u(., 0) = phi`` on a bounded interval.  The
value ``u(x, t)`` is the sublinear expectation ``E[phi(x + sqrt(t) xi)]`` of
a G-normal ``xi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import TERMINAL, VolBand, g_scalar
from .exceptions import CflViolation, DomainTooSmall, NoConvergence, ValidationError
from .validation import check_band, check_functional, check_points, check_positive_int

CFL_MAX = 0.5
DOMAIN_SIGMAS = 6.0


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    nx: int
    T: float
    nt: int

    def __post_init__(self):
        if not (self.x_min < 0.0 < self.x_max):
            raise ValidationError("grid must straddle the origin")
        if self.nx < 3 or self.nt < 1:
            raise ValidationError("need nx >= 3 and nt >= 1")
        if self.T <= 0:
            raise ValidationError("horizon T must be positive")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    def cfl(self, band: VolBand) -> float:
        return self.dt * band.sigma_hi_sq / self.dx**2

    @classmethod
    def for_band(cls, band: VolBand, T: float = 1.0, dx: float = 0.05, halfwidth=None,
                 cfl: float = CFL_MAX) -> "Grid1D":
        """Symmetric grid of half-width ``6 sigma_hi sqrt(T)`` (or ``halfwidth``)
        with the largest time step allowed by ``cfl``."""
        if halfwidth is None:
            halfwidth = DOMAIN_SIGMAS * band.sigma_hi * math.sqrt(T)
        half_nodes = int(math.ceil(halfwidth / dx))
        nt = int(math.ceil(T * band.sigma_hi_sq / (cfl * dx * dx)))
        return cls(-half_nodes * dx, half_nodes * dx, 2 * half_nodes + 1, T, nt)


@dataclass
class PdeSolution:
    grid: Grid1D
    times: np.ndarray
    values: np.ndarray
    band: VolBand
    meta: dict = field(default_factory=dict)

    @property
    def x(self):
        return self.grid.x

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def at(self, x, t=None):
        """Linear interpolation of ``u(x, t)``; ``t`` must be a stored time."""
        if t is None:
            row = self.values[-1]
        else:
            k = int(np.argmin(np.abs(self.times - t)))
            if abs(self.times[k] - t) > 1e-12 * max(1.0, abs(t)):
                raise ValidationError(f"time {t} is not stored in this solution")
            row = self.values[k]
        out = np.interp(x, self.x, row)
        return float(out) if np.ndim(out) == 0 else out


def _step(u, band, dt, dx, out):
    d2 = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (dx * dx)
    out[1:-1] = u[1:-1] + dt * g_scalar(d2, band)
    out[0] = u[0]
    out[-1] = u[-1]
    return out


def solve_gheat(phi, band, T: float = 1.0, grid: Grid1D | None = None, clip=None,
                keep_history: bool = True) -> PdeSolution:
    """March ``u_t = G(u_xx)`` explicitly from ``u(., 0) = phi``.

    Boundary nodes stay at their initial values.  With ``clip`` set, the
    initial data is clipped to ``[-clip, clip]`` first.
    """
    band = check_band(band)
    phi = check_functional(phi, TERMINAL)
    if grid is None:
        grid = Grid1D.for_band(band, T)
    if abs(grid.T - T) > 1e-12 * T:
        raise ValidationError("grid horizon does not match T")
    cfl = grid.cfl(band)
    if cfl > CFL_MAX * (1 + 1e-12):
        raise CflViolation(f"dt*sigma_hi^2/dx^2 = {cfl:.4g} exceeds {CFL_MAX}")
    need = DOMAIN_SIGMAS * band.sigma_hi * math.sqrt(T)
    if min(-grid.x_min, grid.x_max) < need * (1 - 1e-9):
        raise DomainTooSmall(f"domain half-width must be at least {need:.4g}")

    x = grid.x
    u = np.asarray(phi(x), dtype=float).copy()
    if clip is not None:
        u = np.clip(u, -clip, clip)
    dt, dx = grid.dt, grid.dx
    history = [u.copy()]
    buf = np.empty_like(u)
    for _ in range(grid.nt):
        buf = _step(u, band, dt, dx, buf)
        u, buf = buf, u
        if keep_history:
            history.append(u.copy())
    if keep_history:
        times = np.linspace(0.0, T, grid.nt + 1)
        values = np.array(history)
    else:
        times = np.array([0.0, T])
        values = np.array([history[0], u.copy()])
    return PdeSolution(grid, times, values, band, {"cfl": cfl, "clip": clip, "phi": phi.name})


@dataclass(frozen=True)
class RefinedValue:
    """A PDE value obtained by successive grid halving.

    ``delta`` is the change between the last two refinement levels and
    ``history`` the ``(dx, value)`` pair of every level.
    """

    value: float
    delta: float
    history: tuple
    meta: dict = field(default_factory=dict, compare=False)

    def __float__(self):
        return self.value


def gnormal_expectation(phi, band, tol: float = 1e-3, T: float = 1.0, x: float = 0.0,
                        dx0: float | None = None, max_refinements: int = 8, clip=1e3,
                        x_pad: float = 0.0) -> RefinedValue:
    """``E[phi(x + sqrt(T) xi)]`` for G-normal ``xi``, refined to ``tol``.

    Unbounded ``phi`` is clipped at ``clip``; the level is recorded in
    ``meta`` so callers can see whether the clip ever bit.
    """
    band = check_band(band)
    max_refinements = check_positive_int(max_refinements, "max_refinements")
    phi = check_functional(phi, TERMINAL)
    if dx0 is None:
        dx0 = 0.4 * band.sigma_hi * math.sqrt(T)
    halfwidth = DOMAIN_SIGMAS * band.sigma_hi * math.sqrt(T) + abs(x) + x_pad
    history = []
    dx = dx0
    prev = None
    for level in range(max_refinements + 1):
        grid = Grid1D.for_band(band, T, dx=dx, halfwidth=halfwidth)
        sol = solve_gheat(phi, band, T, grid, clip=clip, keep_history=False)
        val = sol.at(x)
        history.append((dx, val))
        if prev is not None and abs(val - prev) < tol:
            clipped = clip is not None and bool(np.any(np.abs(phi(grid.x)) > clip))
            return RefinedValue(val, abs(val - prev), tuple(history),
                                {"clip": clip, "clip_active": clipped, "levels": level + 1})
        prev = val
        dx /= 2.0
    raise NoConvergence(
        f"G-heat value still moving by {abs(history[-1][1] - history[-2][1]):.3g} "
        f"after {max_refinements} refinements"
    )


class GHeatSolver(BaseEstimator):
    """Estimator wrapper: ``fit`` solves the G-heat equation for ``phi``,
    ``predict`` interpolates ``u(x, T)`` at query points.

    Parameters
    ----------
    phi : TestFunctional, callable or registry name
    band : VolBand or (lo, hi)
    T : float
    tol : float
        Refinement tolerance; ``value_`` carries the last level's delta.
    clip : float or None
    """

    def __init__(self, phi="cos", band=(1.0, 4.0), T=1.0, tol=1e-3, clip=1e3, max_refinements=8):
        self.phi = phi
        self.band = band
        self.T = T
        self.tol = tol
        self.clip = clip
        self.max_refinements = max_refinements

    def fit(self, X=None, y=None):
        band = check_band(self.band)
        phi = check_functional(self.phi, TERMINAL)
        self.result_ = gnormal_expectation(phi, band, tol=self.tol, T=self.T, clip=self.clip,
                                           max_refinements=self.max_refinements)
        dx = self.result_.history[-1][0]
        grid = Grid1D.for_band(band, self.T, dx=dx)
        self.solution_ = solve_gheat(phi, band, self.T, grid, clip=self.clip, keep_history=False)
        self.value_ = self.result_.value
        return self

    def predict(self, X):
        check_is_fitted(self, "solution_")
        X = check_points(X, 1)
        return np.asarray(self.solution_.at(X[:, 0]), dtype=float)
