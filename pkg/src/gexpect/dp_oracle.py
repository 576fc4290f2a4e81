"""Exact sublinear expectations of functionals of ``(S_k, V_k)`` by backward
induction.

Under Peng's IID semantics the nested evaluation
``E[phi(X_1, ..., X_n)] = E[x -> E[phi(x, X_n)]](X_1..X_{n-1})`` is a game in
which the adversary picks the law of each new increment after seeing the
past.  With finitely many atoms the game tree collapses onto a lattice of
``(s, v[, aux])`` states and the value is computed layer by layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import IncrementFamily, TestFunctional
from .exceptions import StateExplosion, ValidationError
from .validation import check_functional, check_points, check_positive_int

DEFAULT_CAP = 10**7
_QUANT = 1e-9

ABSMAX = "absmax"  # running max of |S_k|
MIN = "min"  # running min of S_k over k >= 1


class DpState(NamedTuple):
    """Vectorized states of one layer: step ``k``, partial sums ``s``, sums
    of squares ``v`` and the optional path statistic ``m``."""

    k: int
    s: np.ndarray
    v: np.ndarray
    m: Optional[np.ndarray]


@dataclass
class _Layers:
    states: list  # per layer (N_k, 3) float array of (s, v, aux)
    children: list  # per layer (N_k, B) int array into next layer
    branch_law: np.ndarray
    branch_val: np.ndarray
    branch_prob: np.ndarray
    n_laws: int
    track: Optional[str]


@dataclass
class DpResult:
    """Value of the game plus the optimal law choice at every reachable state.

    ``policy[k]`` holds the chosen law index for each state of
    ``layers.states[k]``; ``values[k]`` the value-to-go there.
    """

    value: float
    policy: list
    values: list
    reachable_count: int
    layers: _Layers = field(repr=False)
    meta: dict = field(default_factory=dict)

    def state(self, k) -> DpState:
        st = self.layers.states[k]
        aux = st[:, 2] if self.layers.track else None
        return DpState(k, st[:, 0], st[:, 1], aux)

    def replay(self, functional: Callable) -> float:
        """Forward pass of the stored policy: the ordinary expectation of
        ``functional`` under the adversary's chosen laws."""
        lay = self.layers
        mass = np.ones(1)
        for k, kids in enumerate(lay.children):
            nxt = np.zeros(len(lay.states[k + 1]))
            chosen = self.policy[k]
            for b in range(kids.shape[1]):
                w = mass * lay.branch_prob[b] * (lay.branch_law[b] == chosen)
                np.add.at(nxt, kids[:, b], w)
            mass = nxt
        n = len(lay.children)
        terminal = np.asarray(functional(self.state(n)), dtype=float)
        return float(np.dot(mass, terminal))

    def lookup(self, k, s, v, m=None):
        """Value-to-go at explicit states; NaN where a state is unreachable."""
        st = self.layers.states[k]
        q = np.column_stack([s, v, m if m is not None else np.zeros_like(np.asarray(s, float))])
        keys = _keys(st)
        want = _keys(q)
        order = np.argsort(keys)
        pos = np.searchsorted(keys[order], want)
        pos = np.clip(pos, 0, len(keys) - 1)
        hit = keys[order][pos] == want
        out = np.full(len(q), np.nan)
        out[hit] = self.values[k][order[pos[hit]]]
        return out


def _keys(states):
    # exact integer keys after quantization, packed as a void scalar per row
    q = np.round(np.asarray(states, dtype=float) / _QUANT).astype(np.int64)
    q = np.ascontiguousarray(q)
    return q.view(np.dtype((np.void, q.dtype.itemsize * q.shape[1]))).ravel()


def _quantum(values):
    """Common lattice spacing of the atoms, or None if they are not
    commensurable with small denominators."""
    fr = []
    for v in values:
        f = Fraction(v).limit_denominator(10**6)
        if abs(float(f) - v) > 1e-12:
            return None
        fr.append(abs(f))
    fr = [f for f in fr if f != 0]
    if not fr:
        return None
    den = math.lcm(*(f.denominator for f in fr))
    num = math.gcd(*(int(f * den) for f in fr))
    return num / den


def _branches(family: IncrementFamily):
    law, val, prob = [], [], []
    for i, lw in enumerate(family.laws):
        for x, p in lw.atoms:
            law.append(i)
            val.append(x)
            prob.append(p)
    return np.array(law), np.array(val), np.array(prob)


def _snap(states, quantum):
    # pin lattice coordinates exactly so sums of atoms do not drift; off
    # the lattice only the keys are quantized and rows keep their real values
    if quantum is None:
        return states
    out = states.copy()
    out[:, 0] = np.round(states[:, 0] / quantum) * quantum
    out[:, 1] = np.round(states[:, 1] / quantum**2) * quantum**2
    out[:, 2] = np.round(states[:, 2] / quantum) * quantum
    return out


def _build(family: IncrementFamily, n: int, track, cap: int, project=None) -> _Layers:
    law, val, prob = _branches(family)
    quantum = None if project is not None else _quantum(family.atom_values())
    states = [np.zeros((1, 3))]
    children = []
    total = 1
    for k in range(n):
        st = states[-1]
        s = st[:, 0:1] + val[None, :]
        v = st[:, 1:2] + val[None, :] ** 2
        if track == ABSMAX:
            aux = np.maximum(st[:, 2:3], np.abs(s))
        elif track == MIN:
            aux = s if k == 0 else np.minimum(st[:, 2:3], s)
        else:
            aux = np.zeros_like(s)
        kids = np.stack([s, v, np.broadcast_to(aux, s.shape)], axis=-1).reshape(-1, 3)
        kids = project(kids) if project is not None else _snap(kids, quantum)
        uniq, inverse = _unique_rows(kids)
        total += len(uniq)
        if total > cap:
            raise StateExplosion(
                f"more than {cap} reachable states by step {k + 1}; use dp_binned"
            )
        states.append(uniq)
        children.append(inverse.reshape(st.shape[0], len(val)))
    return _Layers(states, children, law, val, prob, len(family.laws), track)


def _unique_rows(rows):
    keys = _keys(rows)
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    return rows[first], inverse.ravel()


def _backward(layers: _Layers, functional: Callable):
    n = len(layers.children)
    st = layers.states[n]
    aux = st[:, 2] if layers.track else None
    vals = np.asarray(functional(DpState(n, st[:, 0], st[:, 1], aux)), dtype=float)
    vals = np.broadcast_to(vals, (len(st),)).astype(float)
    if not np.all(np.isfinite(vals)):
        raise ValidationError("functional is not finite on every reachable state")
    values = [None] * (n + 1)
    policy = [None] * n
    values[n] = vals
    n_laws = layers.n_laws
    for k in range(n - 1, -1, -1):
        child = values[k + 1][layers.children[k]]  # (N_k, B)
        per_law = np.zeros((child.shape[0], n_laws))
        for lw in range(n_laws):
            sel = layers.branch_law == lw
            per_law[:, lw] = child[:, sel] @ layers.branch_prob[sel]
        choice = np.argmax(per_law, axis=1)  # first max: lowest index wins ties
        values[k] = per_law[np.arange(len(choice)), choice]
        policy[k] = choice
    return values, policy


def dp_exact(family: IncrementFamily, n: int, functional: Callable, track=None,
             cap: int = DEFAULT_CAP) -> DpResult:
    """Sublinear expectation of ``functional(final state)`` over ``n`` IID
    increments drawn from ``family``.

    ``functional`` receives a :class:`DpState` of arrays.  ``track`` adds a
    path statistic: ``"absmax"`` (running max of ``|S_k|``) or ``"min"``
    (running min of ``S_k``, ``k >= 1``).
    """
    n = check_positive_int(n, "n")
    if track not in (None, ABSMAX, MIN):
        raise ValidationError(f"unknown track {track!r}")
    layers = _build(family, n, track, cap)
    values, policy = _backward(layers, functional)
    count = sum(len(s) for s in layers.states)
    return DpResult(float(values[0][0]), policy, values, count, layers)


def selfnorm_ratio(s, v):
    """``s / sqrt(v)`` with ``0/0 := 0``."""
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    out = np.zeros(np.broadcast(s, v).shape)
    pos = v > 0
    np.divide(s, np.sqrt(np.where(pos, v, 1.0)), out=out, where=pos)
    return out


def selfnorm_functional(phi: TestFunctional) -> Callable:
    def f(state: DpState):
        return phi(selfnorm_ratio(state.s, state.v))

    return f


def _cauchy_schwarz_guard(result: DpResult):
    for k in range(1, len(result.layers.states)):
        st = result.layers.states[k]
        if np.any(st[:, 0] ** 2 > k * st[:, 1] * (1 + 1e-9) + 1e-9):
            raise AssertionError(f"|S_k| > sqrt(k V_k) at step {k}")


def dp_selfnorm(family: IncrementFamily, n: int, phi, cap: int = DEFAULT_CAP) -> DpResult:
    """``E[phi(S_n / sqrt(V_n))]`` exactly."""
    phi = check_functional(phi)
    res = dp_exact(family, n, selfnorm_functional(phi), cap=cap)
    _cauchy_schwarz_guard(res)
    return res


class InteriorCheck(NamedTuple):
    endpoint_value: float
    interior_value: float
    gain: float
    interior_states: int  # states where the optimal law is not an endpoint

    @property
    def interior_wins(self) -> bool:
        return self.gain > 1e-12


def interior_law_check(band, n: int, phi, n_interior: int = 2,
                       cap: int = DEFAULT_CAP) -> InteriorCheck:
    """Self-normalized DP with endpoint laws only vs. with ``n_interior``
    extra variances in between.  Ties go to the lower law index, so
    ``interior_states`` only counts strict improvements somewhere."""
    n_interior = check_positive_int(n_interior, "n_interior")
    ends = dp_selfnorm(IncrementFamily.from_band(band, 0), n, phi, cap)
    full = dp_selfnorm(IncrementFamily.from_band(band, n_interior), n, phi, cap)
    last = n_interior + 1
    used = sum(int(((p > 0) & (p < last)).sum()) for p in full.policy)
    return InteriorCheck(ends.value, full.value, full.value - ends.value, used)


def dp_binned(family: IncrementFamily, n: int, functional: Callable, bins, track=None,
              cap: int = DEFAULT_CAP, bracket: bool = True) -> DpResult:
    """Backward induction on an ``(s, v)`` lattice with spacing ``bins``.

    Children are projected to the nearest lattice node.  With ``bracket``
    the run is repeated at twice and half the spacing; the two values land
    in ``meta["bracket"]`` (``None`` for a run that exceeded ``cap``).
    """
    n = check_positive_int(n, "n")
    ds, dv = (float(b) for b in bins)
    if ds <= 0 or dv <= 0:
        raise ValidationError("bins must be positive")

    def run(ds_, dv_):
        def project(rows):
            out = rows.copy()
            out[:, 0] = np.round(rows[:, 0] / ds_) * ds_
            out[:, 1] = np.round(rows[:, 1] / dv_) * dv_
            out[:, 2] = np.round(rows[:, 2] / ds_) * ds_
            return out

        layers = _build(family, n, track, cap, project=project)
        values, policy = _backward(layers, functional)
        count = sum(len(s) for s in layers.states)
        return DpResult(float(values[0][0]), policy, values, count, layers,
                        {"bins": (ds_, dv_)})

    res = run(ds, dv)
    if bracket:
        pair = []
        for scale in (2.0, 0.5):
            try:
                pair.append(run(ds * scale, dv * scale).value)
            except StateExplosion:
                pair.append(None)
        res.meta["bracket"] = tuple(pair)
    return res


def enumerate_exhaustive(family: IncrementFamily, n: int, path_functional: Callable) -> float:
    """Brute-force value over the full history tree, no state merging.

    ``path_functional`` gets the increments as an ``(N, n)`` array.  Every
    sequence of (law, atom) choices is listed explicitly; the tree is then
    contracted one depth at a time (expectation over atoms, max over laws).
    Memory grows as ``(laws * atoms)^n``.
    """
    n = check_positive_int(n, "n")
    n_laws = len(family.laws)
    width = max(len(lw.values) for lw in family.laws)
    vals = np.zeros((n_laws, width))
    probs = np.zeros((n_laws, width))
    for i, lw in enumerate(family.laws):
        vals[i, : len(lw.values)] = lw.values
        probs[i, : len(lw.probs)] = lw.probs
    B = n_laws * width
    if B**n > 5 * 10**7:
        raise StateExplosion(f"{B}^{n} histories is too many to enumerate")
    idx = np.indices((B,) * n).reshape(n, -1).T  # (B^n, n), last axis fastest
    incr = vals.ravel()[idx]
    table = np.asarray(path_functional(incr), dtype=float).reshape((B,) * n)
    flat_p = probs.ravel()
    for _ in range(n):
        table = table.reshape(table.shape[:-1] + (n_laws, width))
        table = (table * flat_p.reshape(n_laws, width)).sum(axis=-1).max(axis=-1)
    return float(table)


def rosenthal_p2_check(family: IncrementFamily, n: int, p: float = 2.0, cap: int = DEFAULT_CAP):
    """Check ``E[|max_k (S_n - S_k)|^p] <= 2^(2-p) sum_k E[|X_k|^p]``, ``1 <= p <= 2``.

    Returns ``(lhs, rhs, holds)``; the max runs over ``k = 1..n``.
    """
    if not 1.0 <= p <= 2.0:
        raise ValidationError("the explicit-constant bound needs 1 <= p <= 2")
    for lw in family.laws:
        if lw.expect(lambda x: x) > 1e-12:
            raise ValidationError("every law must have mean <= 0")

    def drawup(state):
        return np.abs(state.s - state.m) ** p

    lhs = dp_exact(family, n, drawup, track=MIN, cap=cap).value
    rhs = 2.0 ** (2.0 - p) * n * family.max_moment(p)
    return lhs, rhs, bool(lhs <= rhs + 1e-9)


def rosenthal_ratio(family: IncrementFamily, n: int, p: float, cap: int = DEFAULT_CAP) -> float:
    """``E[max_k |S_k|^p]`` over ``sum E|X|^p + (sum E X^2)^(p/2)``.

    The constant in front of the bound is unspecified, so this is reported
    for inspection across ``n`` and ``p`` only.
    """
    lhs = dp_exact(family, n, lambda st: st.m**p, track=ABSMAX, cap=cap).value
    return lhs / (n * family.max_moment(p) + (n * family.max_moment(2.0)) ** (p / 2.0))


def maxsum_moment(family: IncrementFamily, n: int, p: float = 2.0, cap: int = DEFAULT_CAP) -> float:
    """``E[max_{k<=n} |S_k / sqrt(n)|^p]``."""
    if p < 2:
        raise ValidationError("p must be >= 2")
    res = dp_exact(family, n, lambda st: st.m**p / n ** (p / 2.0), track=ABSMAX, cap=cap)
    return res.value


class SublinearDP(BaseEstimator):
    """Estimator over the DP oracle.

    ``fit`` solves the game for ``n`` increments from ``family``;
    ``predict`` returns the value-to-go at rows ``(k, s, v)`` (NaN when the
    state is unreachable).  ``functional`` is either a callable on
    :class:`DpState` or a test function name, which is applied to
    ``S_n / sqrt(V_n)``.
    """

    def __init__(self, family="twopoint:1,2", n=4, functional="cos", bins=None):
        self.family = family
        self.n = n
        self.functional = functional
        self.bins = bins

    def _family(self):
        if isinstance(self.family, IncrementFamily):
            return self.family
        return IncrementFamily.parse(self.family)

    def fit(self, X=None, y=None):
        fam = self._family()
        if isinstance(self.functional, (str, TestFunctional)):
            func = selfnorm_functional(check_functional(self.functional))
        else:
            func = self.functional
        if self.bins is None:
            self.result_ = dp_exact(fam, self.n, func)
        else:
            self.result_ = dp_binned(fam, self.n, func, self.bins, bracket=False)
        self.value_ = self.result_.value
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        X = check_points(X, 3)
        out = np.full(len(X), np.nan)
        ks = X[:, 0].astype(int)
        for k in np.unique(ks):
            if 0 <= k < len(self.result_.values):
                sel = ks == k
                out[sel] = self.result_.lookup(k, X[sel, 1], X[sel, 2])
        return out
