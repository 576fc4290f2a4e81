"""Monte Carlo over controlled diffusions ``W_theta = int theta dB``.

The sublinear expectation of a path functional is the supremum over adapted
volatility controls of ordinary expectations.  Simulating a given feedback
policy therefore yields a lower bound; ``policy_search`` improves the bound
by coordinate ascent over bang-bang feedback tables.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import rng
from .core import VolBand
from .exceptions import ValidationError
from .validation import check_band, check_points, check_positive_int

log = logging.getLogger(__name__)

DEFAULT_STEPS = 512
DEFAULT_PATHS = 100_000
CHUNK = 16_384
# allowance per unit dt for the time discretization of the control, used in
# one-sided comparisons against PDE values
DT_ALLOWANCE = 1.0


@dataclass(frozen=True)
class Policy:
    """Volatility control read from the current ``(t, W, <W>)``.

    A ``constant`` policy emits ``table`` (a scalar variance).  A
    ``feedback`` policy looks up ``table[i_t, i_w, i_q]``: time bins split
    ``[0, T)`` evenly, ``w_edges`` bin ``W`` and ``q_edges`` bin the
    running average ``<W>_t / t``.
    """

    kind: str
    table: np.ndarray
    w_edges: tuple = ()
    q_edges: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "feedback"):
            raise ValidationError(f"unknown policy kind {self.kind!r}")
        table = np.asarray(self.table, dtype=float)
        if self.kind == "feedback":
            want = (len(self.w_edges) + 1, len(self.q_edges) + 1)
            if table.ndim != 3 or table.shape[1:] != want:
                raise ValidationError(f"table shape {table.shape} does not match edges {want}")
        object.__setattr__(self, "table", table)

    @classmethod
    def constant(cls, variance: float) -> "Policy":
        return cls("constant", np.asarray(float(variance)))

    @classmethod
    def feedback(cls, table, w_edges=(), q_edges=()) -> "Policy":
        return cls("feedback", np.asarray(table, dtype=float), tuple(w_edges), tuple(q_edges))

    def check(self, band: VolBand):
        lo, hi = band.sigma_lo_sq, band.sigma_hi_sq
        if np.any(self.table < lo - 1e-12) or np.any(self.table > hi + 1e-12):
            raise ValidationError("policy emits variances outside the band")

    def emit(self, t: float, T: float, w: np.ndarray, qv: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full(w.shape, float(self.table))
        n_t = self.table.shape[0]
        i_t = min(int(t / T * n_t), n_t - 1)
        i_w = np.searchsorted(self.w_edges, w, side="right")
        avg = qv / t if t > 0 else np.full(w.shape, -np.inf)
        i_q = np.searchsorted(self.q_edges, avg, side="right")
        return self.table[i_t][i_w, i_q]


@dataclass
class PathBundle:
    """Simulated paths.  ``w``/``qv`` hold full trajectories only when the
    bundle was simulated with ``keep_paths=True``; the terminal values and
    the running max of ``|W|`` are always kept."""

    n_paths: int
    n_steps: int
    dt: float
    seed: int
    w_end: np.ndarray
    qv_end: np.ndarray
    w_absmax: np.ndarray
    w: np.ndarray | None = None
    qv: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_paths: int

    def upper(self, k: float = 3.0) -> float:
        return self.mean + k * self.stderr

    def lower(self, k: float = 3.0) -> float:
        return self.mean - k * self.stderr


def simulate_paths(policy: Policy, band, n_steps: int = DEFAULT_STEPS,
                   n_paths: int = DEFAULT_PATHS, seed: int = 0, T: float = 1.0,
                   keep_paths: bool = False, chunk: int = CHUNK, normals=None) -> PathBundle:
    """Euler scheme ``W += theta sqrt(dt) Z``, ``<W> += theta^2 dt``.

    ``Z`` for path ``p`` at step ``k`` depends only on ``(seed, k, p)``, so
    equal arguments give bit-identical bundles whatever the chunk size.
    ``normals`` (shape ``(n_steps, n_paths)``, see :func:`draw_normals`)
    replaces the generator, which is how searches share random numbers.
    """
    band = check_band(band)
    n_steps = check_positive_int(n_steps, "n_steps")
    n_paths = check_positive_int(n_paths, "n_paths")
    policy.check(band)
    dt = T / n_steps
    sq = math.sqrt(dt)
    w_end = np.empty(n_paths)
    qv_end = np.empty(n_paths)
    w_max = np.empty(n_paths)
    w_all = np.zeros((n_paths, n_steps + 1)) if keep_paths else None
    qv_all = np.zeros((n_paths, n_steps + 1)) if keep_paths else None
    for start in range(0, n_paths, chunk):
        cnt = min(chunk, n_paths - start)
        w = np.zeros(cnt)
        qv = np.zeros(cnt)
        wmax = np.zeros(cnt)
        for k in range(n_steps):
            var = policy.emit(k * dt, T, w, qv)
            if normals is None:
                z = rng.normals(seed, k, start, cnt)
            else:
                z = normals[k, start:start + cnt]
            w = w + np.sqrt(var) * sq * z
            qv = qv + var * dt
            np.maximum(wmax, np.abs(w), out=wmax)
            if keep_paths:
                w_all[start:start + cnt, k + 1] = w
                qv_all[start:start + cnt, k + 1] = qv
        w_end[start:start + cnt] = w
        qv_end[start:start + cnt] = qv
        w_max[start:start + cnt] = wmax
    return PathBundle(n_paths, n_steps, dt, seed, w_end, qv_end, w_max, w_all, qv_all,
                      {"policy": policy.kind, "T": T})


def draw_normals(seed: int, n_steps: int, n_paths: int) -> np.ndarray:
    return np.stack([rng.normals(seed, k, 0, n_paths) for k in range(n_steps)])


def mc_expectation(bundle: PathBundle, functional) -> McEstimate:
    vals = np.asarray(functional(bundle), dtype=float)
    if vals.shape != (bundle.n_paths,):
        raise ValidationError("functional must return one value per path")
    if not np.all(np.isfinite(vals)):
        raise ValidationError("functional is not finite on every path")
    mean = float(np.mean(vals))
    std = float(np.std(vals, ddof=1)) if bundle.n_paths > 1 else 0.0
    return McEstimate(mean, std / math.sqrt(bundle.n_paths), bundle.n_paths)


def terminal(phi):
    """Path functional ``phi(W_T)``."""
    return lambda b: phi(b.w_end)


def selfnormalized(phi):
    """Path functional ``phi(W_T / sqrt(<W>_T))``."""
    return lambda b: phi(b.w_end / np.sqrt(b.qv_end))


@dataclass(frozen=True)
class SearchGrid:
    n_time: int = 4
    w_edges: tuple = (-0.5, 0.5)  # in units of sigma_hi * sqrt(T)
    q_fracs: tuple = (1 / 3, 2 / 3)  # positions inside [sigma_lo^2, sigma_hi^2]

    def edges(self, band: VolBand, T: float):
        w = tuple(e * band.sigma_hi * math.sqrt(T) for e in self.w_edges)
        span = band.sigma_hi_sq - band.sigma_lo_sq
        q = tuple(band.sigma_lo_sq + f * span for f in self.q_fracs) if span > 0 else ()
        return w, q


def policy_search(functional, band, grid: SearchGrid | None = None, budget: int = 1,
                  n_steps: int = DEFAULT_STEPS, n_paths_search: int = 10_000,
                  n_paths_eval: int = DEFAULT_PATHS, seed: int = 0, T: float = 1.0):
    """Coordinate ascent over bang-bang feedback tables.

    Candidates are compared on common random numbers (``seed``); the winner
    is re-estimated on an independent stream (``seed + 1``) so the returned
    mean is an unbiased estimate of a policy's value, hence of a lower bound
    on the sublinear expectation.  ``budget`` is the number of full sweeps.
    """
    band = check_band(band)
    grid = grid or SearchGrid()
    w_edges, q_edges = grid.edges(band, T)
    shape = (grid.n_time, len(w_edges) + 1, len(q_edges) + 1)

    z = draw_normals(seed, n_steps, n_paths_search)

    def score(pol):
        b = simulate_paths(pol, band, n_steps, n_paths_search, seed, T, normals=z)
        return mc_expectation(b, functional).mean

    levels = band.endpoints()
    scores = {v: score(Policy.constant(v)) for v in levels}
    start = max(levels, key=lambda v: (scores[v], -v))
    table = np.full(shape, start)
    best = Policy.feedback(table, w_edges, q_edges)
    best_score = scores[start]
    n_eval = len(levels)
    if len(levels) > 1:
        for sweep in range(budget):
            improved = False
            for cell in itertools.product(*(range(s) for s in shape)):
                trial = best.table.copy()
                trial[cell] = levels[1] if trial[cell] == levels[0] else levels[0]
                cand = replace(best, table=trial)
                sc = score(cand)
                n_eval += 1
                if sc > best_score + 1e-12:
                    best, best_score, improved = cand, sc, True
            log.debug("sweep %d: best %.6f after %d evaluations", sweep, best_score, n_eval)
            if not improved:
                break
    if np.all(best.table == best.table.flat[0]):
        best = Policy.constant(float(best.table.flat[0]))
    final = simulate_paths(best, band, n_steps, n_paths_eval, seed + 1, T)
    est = mc_expectation(final, functional)
    return best, est


class PolicySearch(BaseEstimator):
    """``fit`` searches a bang-bang policy for ``functional`` (a callable on
    :class:`PathBundle`); ``predict`` emits the policy's variance for rows
    ``(t, w, qv)``.  ``estimate_`` is the lower-bound estimate."""

    def __init__(self, functional=None, band=(1.0, 4.0), budget=1, n_steps=DEFAULT_STEPS,
                 n_paths_search=10_000, n_paths_eval=DEFAULT_PATHS, seed=0):
        self.functional = functional
        self.band = band
        self.budget = budget
        self.n_steps = n_steps
        self.n_paths_search = n_paths_search
        self.n_paths_eval = n_paths_eval
        self.seed = seed

    def fit(self, X=None, y=None):
        if self.functional is None:
            raise ValidationError("functional is required")
        self.policy_, self.estimate_ = policy_search(
            self.functional, self.band, budget=self.budget, n_steps=self.n_steps,
            n_paths_search=self.n_paths_search, n_paths_eval=self.n_paths_eval, seed=self.seed)
        return self

    def predict(self, X):
        check_is_fitted(self, "policy_")
        X = check_points(X, 3)
        out = np.empty(len(X))
        for i, (t, w, q) in enumerate(X):
            out[i] = self.policy_.emit(t, 1.0, np.array([w]), np.array([q]))[0]
        return out


# Discrete sums: the n-step game itself, played by a feedback law choice.

@dataclass(frozen=True)
class StepPolicy:
    """Law choice for ``S_n = X_1 + ... + X_n``.

    ``table[i_t, i_r]`` is a law index; time bins split the ``n`` steps
    evenly and ``r_edges`` bin the running ratio ``S_k / sqrt(V_k)``.
    """

    table: np.ndarray
    r_edges: tuple = ()

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.int64)
        if table.ndim != 2 or table.shape[1] != len(self.r_edges) + 1:
            raise ValidationError("step policy table does not match its edges")
        object.__setattr__(self, "table", table)

    def choose(self, k: int, n: int, ratio: np.ndarray) -> np.ndarray:
        n_t = self.table.shape[0]
        i_t = min(k * n_t // n, n_t - 1)
        return self.table[i_t][np.searchsorted(self.r_edges, ratio, side="right")]


def _atom_tables(family):
    width = max(len(lw.values) for lw in family.laws)
    vals = np.zeros((len(family.laws), width))
    cum = np.ones((len(family.laws), width))
    for i, lw in enumerate(family.laws):
        vals[i, : len(lw.values)] = lw.values
        cum[i, : len(lw.probs)] = np.cumsum(lw.probs)
    cum[:, -1] = 1.0
    return vals, cum


def simulate_sums(family, n: int, policy: StepPolicy, n_paths: int = 20_000, seed: int = 0,
                  chunk: int = CHUNK, uniforms=None):
    """Terminal ``(S_n, V_n)`` of ``n_paths`` plays of the game.

    Step ``k`` of path ``p`` draws its atom by inverse CDF from the uniform
    addressed by ``(seed, k, p)``, so results do not depend on ``chunk``.
    """
    n = check_positive_int(n, "n")
    n_paths = check_positive_int(n_paths, "n_paths")
    if policy.table.max() >= len(family.laws) or policy.table.min() < 0:
        raise ValidationError("policy names a law outside the family")
    vals, cum = _atom_tables(family)
    S = np.empty(n_paths)
    V = np.empty(n_paths)
    for start in range(0, n_paths, chunk):
        cnt = min(chunk, n_paths - start)
        s = np.zeros(cnt)
        v = np.zeros(cnt)
        for k in range(n):
            ratio = np.divide(s, np.sqrt(v), out=np.zeros(cnt), where=v > 0)
            law = policy.choose(k, n, ratio)
            u = rng.uniforms(seed, k, start, cnt) if uniforms is None else uniforms[k, start:start + cnt]
            idx = (u[:, None] > cum[law]).sum(axis=1)
            x = vals[law, idx]
            s += x
            v += x * x
        S[start:start + cnt] = s
        V[start:start + cnt] = v
    return S, V


def _estimate(vals) -> McEstimate:
    vals = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValidationError("functional is not finite on every path")
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return McEstimate(float(np.mean(vals)), std / math.sqrt(len(vals)), len(vals))


def sums_search(family, n: int, functional, n_time: int = 4, r_edges=(-0.5, 0.5),
                budget: int = 1, n_paths_search: int = 5_000, n_paths_eval: int = 20_000,
                seed: int = 0):
    """Coordinate ascent over bang-bang step policies.

    ``functional(S, V)`` maps terminal sums to payoffs.  The two laws with
    the smallest and largest second moment are the only choices.  As in
    :func:`policy_search` the winner is re-estimated on ``seed + 1``, so the
    estimate is a lower bound on the game value.
    """
    moments = [lw.second_moment for lw in family.laws]
    choices = sorted({int(np.argmin(moments)), int(np.argmax(moments))})
    shape = (n_time, len(r_edges) + 1)
    cached = None
    if n * n_paths_search <= 2 * 10**7:
        cached = np.stack([rng.uniforms(seed, k, 0, n_paths_search) for k in range(n)])

    def score(pol):
        S, V = simulate_sums(family, n, pol, n_paths_search, seed, uniforms=cached)
        return float(np.mean(functional(S, V)))

    scores = {c: score(StepPolicy(np.full(shape, c), tuple(r_edges))) for c in choices}
    start = max(choices, key=lambda c: scores[c])
    best = StepPolicy(np.full(shape, start), tuple(r_edges))
    best_score = scores[start]
    if len(choices) > 1:
        for _ in range(budget):
            improved = False
            for cell in itertools.product(*(range(s) for s in shape)):
                trial = best.table.copy()
                trial[cell] = choices[1] if trial[cell] == choices[0] else choices[0]
                cand = StepPolicy(trial, best.r_edges)
                sc = score(cand)
                if sc > best_score + 1e-12:
                    best, best_score, improved = cand, sc, True
            if not improved:
                break
    S, V = simulate_sums(family, n, best, n_paths_eval, seed + 1)
    return best, _estimate(functional(S, V))
