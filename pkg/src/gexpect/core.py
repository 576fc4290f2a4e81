"""Volatility bands, G-functions and finite increment families.

A sublinear expectation over a finite family of laws is the upper envelope of
the ordinary expectations under each law.  Everything else in the package is
built on the objects in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import EmptyFamily, InvalidLaw, ValidationError

PROB_TOL = 1e-12

TERMINAL = "terminal"
TERMINAL_QV = "terminal_qv"
PATH_MAX = "path_max"
_KINDS = (TERMINAL, TERMINAL_QV, PATH_MAX)


@dataclass(frozen=True)
class VolBand:
    """Variance interval ``[sigma_lo_sq, sigma_hi_sq]``."""

    sigma_lo_sq: float
    sigma_hi_sq: float

    def __post_init__(self):
        lo, hi = float(self.sigma_lo_sq), float(self.sigma_hi_sq)
        if not (0.0 < lo <= hi < math.inf):
            raise ValidationError(
                f"need 0 < sigma_lo_sq <= sigma_hi_sq < inf, got ({lo}, {hi})"
            )
        object.__setattr__(self, "sigma_lo_sq", lo)
        object.__setattr__(self, "sigma_hi_sq", hi)

    @property
    def sigma_lo(self) -> float:
        return math.sqrt(self.sigma_lo_sq)

    @property
    def sigma_hi(self) -> float:
        return math.sqrt(self.sigma_hi_sq)

    def ratio_r_sq(self) -> float:
        return self.sigma_hi_sq / self.sigma_lo_sq

    def normalized(self) -> "VolBand":
        """The band ``[1/r^2, 1]`` with the same ratio."""
        return VolBand(1.0 / self.ratio_r_sq(), 1.0)

    def is_degenerate(self) -> bool:
        return self.sigma_lo_sq == self.sigma_hi_sq

    def endpoints(self):
        if self.is_degenerate():
            return (self.sigma_lo_sq,)
        return (self.sigma_lo_sq, self.sigma_hi_sq)

    @classmethod
    def parse(cls, text: str) -> "VolBand":
        """Parse ``"lo,hi"`` (variances)."""
        try:
            lo, hi = (float(t) for t in text.split(","))
        except ValueError as exc:
            raise ValidationError(f"band must look like 'lo,hi', got {text!r}") from exc
        return cls(lo, hi)


def g_scalar(alpha, band: VolBand):
    """``G(a) = (sigma_hi^2 a^+ - sigma_lo^2 a^-) / 2``; vectorized in ``alpha``."""
    a = np.asarray(alpha, dtype=float)
    out = 0.5 * (band.sigma_hi_sq * np.maximum(a, 0.0) - band.sigma_lo_sq * np.maximum(-a, 0.0))
    return float(out) if out.ndim == 0 else out


def g_pair(p, q, band: VolBand):
    """``G(p, q) = max_v v * (q/2 + p)`` over ``v`` in the band."""
    c = 0.5 * np.asarray(q, dtype=float) + np.asarray(p, dtype=float)
    out = band.sigma_hi_sq * np.maximum(c, 0.0) - band.sigma_lo_sq * np.maximum(-c, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class IncrementLaw:
    """A finitely supported, mean-zero law."""

    values: tuple
    probs: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        probs = tuple(float(p) for p in self.probs)
        if len(vals) == 0 or len(vals) != len(probs):
            raise InvalidLaw("values and probs must be nonempty and of equal length")
        if any(p < 0.0 or p > 1.0 for p in probs):
            raise InvalidLaw(f"probabilities must lie in [0, 1]: {probs}")
        if abs(math.fsum(probs) - 1.0) > PROB_TOL:
            raise InvalidLaw(f"probabilities sum to {math.fsum(probs)!r}, not 1")
        mean = math.fsum(v * p for v, p in zip(vals, probs))
        if abs(mean) > PROB_TOL:
            raise InvalidLaw(f"law is not mean-zero (mean={mean!r})")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probs", probs)

    @property
    def atoms(self):
        return list(zip(self.values, self.probs))

    def expect(self, payoff: Callable) -> float:
        vals = np.asarray(self.values)
        return float(np.dot(np.asarray(payoff(vals), dtype=float), self.probs))

    def moment(self, p: float = 2.0) -> float:
        return math.fsum(abs(v) ** p * q for v, q in zip(self.values, self.probs))

    @property
    def second_moment(self) -> float:
        return math.fsum(v * v * q for v, q in zip(self.values, self.probs))

    @classmethod
    def symmetric(cls, sigma: float) -> "IncrementLaw":
        """``+-sigma`` with probability one half each."""
        return cls((-sigma, sigma), (0.5, 0.5))

    @classmethod
    def three_point(cls, left: float, right: float, variance: float) -> "IncrementLaw":
        """Mean-zero law on ``{-left, 0, right}`` with the given variance.

        The outer weights are fixed by the mean and variance constraints; the
        remainder sits at zero, which requires ``variance <= left * right``.
        """
        if left <= 0 or right <= 0:
            raise InvalidLaw("left and right must be positive")
        p_right = variance / (right * (left + right))
        p_left = variance / (left * (left + right))
        p_zero = 1.0 - p_left - p_right
        if p_zero < -PROB_TOL:
            raise InvalidLaw(f"variance {variance} exceeds left*right={left * right}")
        p_zero = max(p_zero, 0.0)
        return cls((-left, 0.0, right), (p_left, p_zero, p_right))


@dataclass(frozen=True)
class IncrementFamily:
    """The adversary's per-step choice set of increment laws."""

    laws: tuple
    band: VolBand = field(default=None)

    def __post_init__(self):
        laws = tuple(self.laws)
        if len(laws) == 0:
            raise EmptyFamily("an increment family needs at least one law")
        object.__setattr__(self, "laws", laws)
        moments = [law.second_moment for law in laws]
        lo, hi = min(moments), max(moments)
        if self.band is None:
            object.__setattr__(self, "band", VolBand(lo, hi))
        elif abs(lo - self.band.sigma_lo_sq) > PROB_TOL or abs(hi - self.band.sigma_hi_sq) > PROB_TOL:
            raise ValidationError(
                f"law second moments span [{lo}, {hi}], band says "
                f"[{self.band.sigma_lo_sq}, {self.band.sigma_hi_sq}]"
            )

    def __len__(self):
        return len(self.laws)

    @classmethod
    def two_point(cls, sigmas: Sequence[float]) -> "IncrementFamily":
        return cls(tuple(IncrementLaw.symmetric(s) for s in sigmas))

    @classmethod
    def from_band(cls, band: VolBand, n_interior: int = 0) -> "IncrementFamily":
        """Symmetric two-point laws at the band endpoints plus interior points
        equally spaced in variance."""
        variances = np.linspace(band.sigma_lo_sq, band.sigma_hi_sq, n_interior + 2)
        if band.is_degenerate():
            variances = variances[:1]
        return cls(tuple(IncrementLaw.symmetric(math.sqrt(v)) for v in variances), band)

    @classmethod
    def parse(cls, text: str) -> "IncrementFamily":
        """Parse ``twopoint:1,2`` (standard deviations) or
        ``threepoint:left,right,var1,var2,...``."""
        kind, _, rest = text.partition(":")
        try:
            nums = [float(t) for t in rest.split(",") if t.strip()]
        except ValueError as exc:
            raise ValidationError(f"bad family spec {text!r}") from exc
        if kind == "twopoint" and nums:
            return cls.two_point(nums)
        if kind == "threepoint" and len(nums) >= 3:
            left, right, *variances = nums
            return cls(tuple(IncrementLaw.three_point(left, right, v) for v in variances))
        raise ValidationError(f"unknown family spec {text!r}")

    def atom_values(self):
        return sorted({v for law in self.laws for v in law.values})

    def max_moment(self, p: float = 2.0) -> float:
        return max(law.moment(p) for law in self.laws)


@dataclass(frozen=True)
class TestFunctional:
    """A test function together with the bounds the solvers rely on.

    ``evaluator`` must be vectorized: ``f(x)`` for ``terminal``, ``f(x, y)``
    for ``terminal_qv`` and ``f(x, m)`` (terminal value, running max of
    ``|x|``) for ``path_max``.
    """

    __test__ = False  # not a pytest class

    evaluator: Callable
    kind: str = TERMINAL
    lipschitz_bound: float = math.inf
    sup_bound: float = math.inf
    name: str = ""
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"kind must be one of {_KINDS}, got {self.kind!r}")

    def __call__(self, *args):
        return self.evaluator(*args)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.sup_bound)

    def check_bounds(self, n_probe: int = 256, radius: float = 10.0, seed: int = 0) -> bool:
        """Probe ``|f| <= sup_bound`` and the Lipschitz bound on random points."""
        rng = np.random.default_rng(seed)
        n_args = {TERMINAL: 1, TERMINAL_QV: 2, PATH_MAX: 2}[self.kind]
        pts = rng.uniform(-radius, radius, size=(n_probe, n_args))
        if self.kind != TERMINAL:
            pts[:, 1] = np.abs(pts[:, 1])
        vals = np.asarray(self.evaluator(*pts.T), dtype=float)
        if np.any(np.abs(vals) > self.sup_bound * (1 + 1e-12)):
            return False
        if math.isfinite(self.lipschitz_bound):
            other = pts + rng.normal(scale=0.1, size=pts.shape)
            if self.kind != TERMINAL:
                other[:, 1] = np.abs(other[:, 1])
            ovals = np.asarray(self.evaluator(*other.T), dtype=float)
            dist = np.linalg.norm(pts - other, axis=1)
            if np.any(np.abs(vals - ovals) > self.lipschitz_bound * dist * (1 + 1e-9) + 1e-12):
                return False
        return True


def _law_expectations(family: IncrementFamily, payoff: Callable) -> np.ndarray:
    return np.array([law.expect(payoff) for law in family.laws])


def sup_expectation(family: IncrementFamily, payoff: Callable) -> float:
    """Upper expectation of ``payoff(X)`` for a single increment."""
    if len(family.laws) == 0:
        raise EmptyFamily("empty family")
    return float(np.max(_law_expectations(family, payoff)))


def conjugate_expectation(family: IncrementFamily, payoff: Callable) -> float:
    return -sup_expectation(family, lambda x: -np.asarray(payoff(x), dtype=float))


def upper_capacity(family: IncrementFamily, event: Callable) -> float:
    return sup_expectation(family, lambda x: np.asarray(event(x), dtype=float))


def lower_capacity(family: IncrementFamily, event: Callable) -> float:
    """``1 - V(A^c)``."""
    return 1.0 - upper_capacity(family, lambda x: ~np.asarray(event(x), dtype=bool))


def argmax_law(family: IncrementFamily, payoff: Callable) -> int:
    """Index of the maximizing law; lowest index wins ties."""
    return int(np.argmax(_law_expectations(family, payoff)))
