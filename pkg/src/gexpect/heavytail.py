"""Heavy-tailed increment families and the normalizer ``d_n``.

A spec is a finite set of symmetric laws, each described by the law of
``|X|`` on a ladder of magnitudes (the rest of the mass sits at 0).  The
truncated second moment ``l(x) = max_law E[X^2 ^ x^2]`` is piecewise
``A + C x^2`` between magnitudes, so ``d_n`` (the root of ``x^2 = n l(x)``)
has a closed form once the bracketing piece is found.

Deep ladders stand in for unbounded support.  The condition checks skip the
last ``guard`` rungs, where truncation bends the tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import IncrementFamily, IncrementLaw
from .exceptions import ConditionViolated, NoRoot, ValidationError
from .validation import check_positive_int


@dataclass(frozen=True)
class HeavyTailSpec:
    """``magnitudes[i]`` and ``probs[i]`` give ``P(|X| = m)`` for law ``i``.

    ``bounded`` marks specs whose ladder is the true support (no truncation),
    so condition checks may probe beyond the last rung.  ``r_sq`` is the
    designed band ratio, if any.
    """

    magnitudes: tuple
    probs: tuple
    name: str = "custom"
    bounded: bool = False
    r_sq: float | None = None
    guard: int = 5

    def __post_init__(self):
        if len(self.magnitudes) == 0 or len(self.magnitudes) != len(self.probs):
            raise ValidationError("need one probability vector per magnitude vector")
        mags, probs = [], []
        for m, p in zip(self.magnitudes, self.probs):
            m = np.asarray(m, dtype=float)
            p = np.asarray(p, dtype=float)
            if m.shape != p.shape or m.ndim != 1:
                raise ValidationError("magnitudes and probabilities must be matching vectors")
            if np.any(m <= 0) or np.any(np.diff(m) <= 0):
                raise ValidationError("magnitudes must be positive and increasing")
            if np.any(p < 0) or p.sum() > 1 + 1e-12:
                raise ValidationError("probabilities must be nonnegative with total <= 1")
            mags.append(m)
            probs.append(p)
        object.__setattr__(self, "magnitudes", tuple(mags))
        object.__setattr__(self, "probs", tuple(probs))

    @classmethod
    def log_profile(cls, r_sq: float = 2.0, depth: int = 40) -> "HeavyTailSpec":
        """``P(|X| = 2^j) = 4^-j`` for ``j = 1..depth`` and a copy scaled by
        ``1/r``.  Each rung adds the same amount to ``l``, so ``l(x)`` grows
        like ``log x``."""
        j = np.arange(1, depth + 1, dtype=float)
        mags = 2.0**j
        p = 4.0**-j
        r = math.sqrt(r_sq)
        return cls((mags, mags / r), (p, p), f"log-profile(r2={r_sq:g})", r_sq=r_sq)

    @classmethod
    def power_tail(cls, alpha: float = 1.5, depth: int = 40) -> "HeavyTailSpec":
        """``P(|X| = 2^j) ~ 2^(-alpha j)``.  For ``alpha < 2`` the tail term
        ``x^2 P(|X| >= x)`` keeps pace with ``l(x)``."""
        j = np.arange(1, depth + 1, dtype=float)
        p = 2.0 ** (-alpha * j)
        p = p / p.sum() * 0.5
        return cls((2.0**j,), (p,), f"power-tail(alpha={alpha:g})")

    @classmethod
    def from_family(cls, family: IncrementFamily) -> "HeavyTailSpec":
        """A bounded family as a spec; each law is folded onto ``|X|``."""
        mags, probs = [], []
        for law in family.laws:
            a = np.abs(np.asarray(law.values))
            keep = a > 0
            m, inv = np.unique(a[keep], return_inverse=True)
            p = np.zeros(len(m))
            np.add.at(p, inv, np.asarray(law.probs)[keep])
            mags.append(m)
            probs.append(p)
        return cls(tuple(mags), tuple(probs), "bounded", bounded=True,
                   r_sq=family.band.ratio_r_sq())

    @classmethod
    def parse(cls, text: str) -> "HeavyTailSpec":
        """``log:<r_sq>[,<depth>]``, ``power:<alpha>[,<depth>]`` or a family
        spec such as ``twopoint:1,2``."""
        kind, _, rest = text.partition(":")
        try:
            nums = [float(t) for t in rest.split(",") if t.strip()]
        except ValueError as exc:
            raise ValidationError(f"bad heavy-tail spec {text!r}") from exc
        if kind == "log" and 1 <= len(nums) <= 2:
            return cls.log_profile(nums[0], int(nums[1]) if len(nums) > 1 else 40)
        if kind == "power" and 1 <= len(nums) <= 2:
            return cls.power_tail(nums[0], int(nums[1]) if len(nums) > 1 else 40)
        return cls.from_family(IncrementFamily.parse(text))

    @property
    def breakpoints(self) -> np.ndarray:
        return np.unique(np.concatenate(self.magnitudes))

    def window(self) -> np.ndarray:
        """Rungs the condition checks look at: the upper half of the ladder
        below the guard, or the whole support plus one point past it for a
        bounded spec."""
        b = self.breakpoints
        if self.bounded:
            return np.append(b, 2.0 * b[-1])
        if len(b) <= self.guard + 4:
            raise ValidationError("ladder too short for the truncation guard")
        b = b[: len(b) - self.guard]
        return b[len(b) // 2:]

    def to_family(self) -> IncrementFamily:
        """Symmetric laws with atoms ``0, +-m``."""
        laws = []
        for m, p in zip(self.magnitudes, self.probs):
            p0 = max(0.0, 1.0 - math.fsum(p))
            values = np.concatenate(([0.0], -m[::-1], m)) if p0 > 0 else np.concatenate((-m[::-1], m))
            probs = np.concatenate(([p0], p[::-1] / 2, p / 2)) if p0 > 0 else np.concatenate((p[::-1] / 2, p / 2))
            laws.append(IncrementLaw(tuple(values), tuple(probs)))
        return IncrementFamily(tuple(laws))

    # per-law truncated moments, shape (n_laws, len(x))

    def truncated_second(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty((len(self.magnitudes), len(x)))
        for i, (m, p) in enumerate(zip(self.magnitudes, self.probs)):
            below = m[None, :] <= x[:, None]
            out[i] = np.where(below, m**2 * p, 0.0).sum(1) + x**2 * np.where(below, 0.0, p).sum(1)
        return out

    def tail_prob(self, x) -> np.ndarray:
        """``P(|X| >= x)`` per law."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.stack([np.where(m[None, :] >= x[:, None], p, 0.0).sum(1)
                         for m, p in zip(self.magnitudes, self.probs)])

    def first_tail(self, x) -> np.ndarray:
        """``E[(|X| - x)^+]`` per law."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.stack([(np.maximum(m[None, :] - x[:, None], 0.0) * p).sum(1)
                         for m, p in zip(self.magnitudes, self.probs)])

    def l(self, x):
        out = self.truncated_second(x).max(axis=0)
        return float(out[0]) if np.ndim(x) == 0 else out


def compute_l_and_dn(spec: HeavyTailSpec, n) -> tuple[float, float]:
    """Solve ``x^2 = n l(x)`` for its smallest positive root ``d_n``.

    ``l(x) / x^2`` is nonincreasing, so bisection over the breakpoints finds
    the piece holding the root; there ``l = max_i (A_i + C_i x^2)`` and the
    root is ``max_i sqrt(n A_i / (1 - n C_i))``.  Returns ``(l(d_n), d_n)``.
    """
    n = check_positive_int(n, "n")
    b = spec.breakpoints
    h = spec.l(b) / b**2
    inv_n = 1.0 / n
    # h(0+) is the largest mass off zero; the root needs it above 1/n
    h0 = max(float(np.sum(p)) for p in spec.probs)
    if h0 <= inv_n:
        raise NoRoot(f"l(x)/x^2 never exceeds 1/n = {inv_n:g}; mass off zero is {h0:g}")
    i = int(np.searchsorted(-h, -inv_n, side="left"))  # first rung with h <= 1/n
    lower = b[i - 1] if i > 0 else 0.0
    best = 0.0
    for m, p in zip(spec.magnitudes, spec.probs):
        below = m <= lower
        A = math.fsum(m[below] ** 2 * p[below])
        C = math.fsum(p[~below])
        if n * C >= 1.0:
            if A > 0 or n * C > 1.0:
                raise NoRoot("bracketing piece has no root")
            continue
        best = max(best, n * A / (1.0 - n * C))
    d = math.sqrt(best)
    if d <= 0:
        raise NoRoot("degenerate spec: d_n would be 0")
    l_d = spec.l(d)
    if abs(n * l_d / d**2 - 1.0) > 1e-9:
        raise NoRoot(f"closed-form root misses by {abs(n * l_d / d**2 - 1.0):.3g}")
    return l_d, d


@dataclass
class ConditionReport:
    """Ratios behind the three tail conditions, evaluated on the rungs in
    ``x``.  ``passed`` maps ``"I"``, ``"II"``, ``"III"`` to booleans."""

    x: np.ndarray
    tail_ratio: np.ndarray
    band_ratio: np.ndarray
    first_tail: np.ndarray
    passed: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    @property
    def r_sq(self) -> float:
        return float(self.band_ratio[-1])

    def lines(self):
        for key, arr in (("I", self.tail_ratio), ("II", self.band_ratio), ("III", self.first_tail)):
            status = "pass" if self.passed[key] else f"FAIL at x={self.failures[key][0]:g}"
            yield f"({key}) first={arr[0]:.6g} last={arr[-1]:.6g} {status}"


def _vanishes(x, arr, slope_max):
    """Already 0 at the end of the window, or falling at least like
    ``(log x)^slope_max`` (least-squares slope of ``log arr`` on
    ``log log x``)."""
    if arr[-1] == 0.0:
        return True, None
    if np.any(arr <= 0):
        return False, int(np.nonzero(arr <= 0)[0][0])
    slope = np.polyfit(np.log(np.log(x)), np.log(arr), 1)[0]
    return bool(slope <= slope_max), float(slope)


def check_conditions(spec: HeavyTailSpec, slope_max: float = -0.5, ratio_tol: float = 0.02,
                     raise_on_fail: bool = True) -> ConditionReport:
    """Empirical checks of the tail conditions along the ladder.

    (I) ``x^2 V(|X| >= x) / l(x)`` must vanish: it ends at 0 or decays at
    least like ``(log x)^slope_max`` across the window.  (II) the ratio of
    upper to lower truncated second moments must settle: its last step is
    below ``ratio_tol`` relative.  (III) ``E[(|X| - x)^+]`` must vanish in
    the same sense as (I).  These are heuristics on a finite ladder.
    """
    x = spec.window()
    trunc = spec.truncated_second(x)
    l_up, l_lo = trunc.max(0), trunc.min(0)
    tail = spec.tail_prob(x).max(0)
    rep = ConditionReport(x, x**2 * tail / l_up, l_up / l_lo, spec.first_tail(x).max(0))
    probe = np.maximum(x, math.e * 1.0001)  # keeps log log x finite

    ok, slope = _vanishes(probe, rep.tail_ratio, slope_max)
    rep.passed["I"] = ok
    if not ok:
        rep.failures["I"] = (float(x[-1]), f"tail ratio {rep.tail_ratio[-1]:.4g} is not vanishing "
                                           f"(log-log slope {slope:.3g})")

    br = rep.band_ratio
    rel = np.abs(np.diff(br)) / br[1:]
    ok = len(rel) == 0 or rel[-1] <= ratio_tol
    rep.passed["II"] = bool(ok)
    if not ok:
        rep.failures["II"] = (float(x[-1]), f"band ratio still moving by {rel[-1]:.3g}")

    ok, slope = _vanishes(probe, rep.first_tail, slope_max)
    rep.passed["III"] = ok
    if not ok:
        rep.failures["III"] = (float(x[-1]), f"first-moment tail {rep.first_tail[-1]:.4g} "
                                             f"is not vanishing (log-log slope {slope:.3g})")

    if raise_on_fail:
        for key in ("I", "II", "III"):
            if not rep.passed[key]:
                atom, detail = rep.failures[key]
                raise ConditionViolated(key, atom, detail)
    return rep
