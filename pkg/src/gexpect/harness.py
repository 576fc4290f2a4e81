"""Experiment configs, convergence runs and CSV reports.

Config grammar, one entry per line::

    # comment
    section.key = value

Sections are ``experiment``, ``band``, ``mc`` and ``heavy``.  Lists are
comma separated.  Unknown keys are errors, so a typo never silently falls
back to a default.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import time
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .core import IncrementFamily, VolBand
from .dp_oracle import dp_binned, dp_selfnorm, selfnorm_functional, selfnorm_ratio
from .exceptions import GExpectError, StateExplosion, ValidationError
from .functionals import resolve
from .heavytail import HeavyTailSpec, check_conditions, compute_l_and_dn
from .mc_engine import DT_ALLOWANCE, policy_search, selfnormalized, sums_search
from .pde_pair import selfnorm_limit

log = logging.getLogger(__name__)

COLUMNS = ("n", "method", "value", "mc_mean", "mc_stderr", "limit", "delta", "flag")


def _floats(text):
    return tuple(float(t) for t in str(text).split(",") if t.strip())


def _ints(text):
    return tuple(int(t) for t in str(text).split(",") if t.strip())


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (attribute, parser)
_KEYS = {
    "experiment.name": ("name", str),
    "experiment.phi": ("phi", str),
    "experiment.family": ("family", str),
    "experiment.n_list": ("n_list", _ints),
    "experiment.pde_tol": ("pde_tol", float),
    "experiment.tol": ("tol", float),
    "experiment.bins": ("bins", _floats),
    "experiment.dp_cap": ("dp_cap", int),
    "experiment.seed": ("seed", int),
    "experiment.out": ("out", str),
    "band.lo": ("band_lo", float),
    "band.hi": ("band_hi", float),
    "mc.enabled": ("mc_enabled", _bool),
    "mc.paths": ("mc_paths", int),
    "mc.search_paths": ("mc_search_paths", int),
    "mc.budget": ("mc_budget", int),
    "mc.limit": ("mc_limit", _bool),
    "mc.steps": ("mc_steps", int),
    "heavy.spec": ("heavy_spec", str),
}


@dataclass
class ExperimentConfig:
    name: str = "converge"
    phi: str = "cos"
    family: str = ""  # empty: symmetric two-point laws at the band endpoints
    n_list: tuple = (2, 4, 8, 16)
    pde_tol: float = 1e-3
    tol: float = 0.05
    bins: tuple = (0.25, 0.25)
    dp_cap: int = 5_000_000
    seed: int = 0
    out: str = ""
    band_lo: float = 1.0
    band_hi: float = 4.0
    mc_enabled: bool = False
    mc_paths: int = 20_000
    mc_search_paths: int = 5_000
    mc_budget: int = 1
    mc_limit: bool = False
    mc_steps: int = 512
    heavy_spec: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        if len(self.n_list) == 0 or any(n < 1 for n in self.n_list):
            raise ValidationError("n_list needs positive counts")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValidationError("n_list must be strictly increasing")
        VolBand(self.band_lo, self.band_hi)
        resolve(self.phi)
        if self.family:
            IncrementFamily.parse(self.family)
        if self.heavy_spec:
            HeavyTailSpec.parse(self.heavy_spec)
        if len(self.bins) != 2 or min(self.bins) <= 0:
            raise ValidationError("bins must be two positive spacings")
        for name in ("pde_tol", "tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")

    @property
    def band(self) -> VolBand:
        return VolBand(self.band_lo, self.band_hi)

    def increment_family(self) -> IncrementFamily:
        if self.family:
            return IncrementFamily.parse(self.family)
        return IncrementFamily.from_band(self.band)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep:
                raise ValidationError(f"line {lineno}: expected key = value")
            if key not in _KEYS:
                raise ValidationError(f"line {lineno}: unknown key {key!r}")
            attr, parse = _KEYS[key]
            try:
                values[attr] = parse(value.strip())
            except ValueError as exc:
                raise ValidationError(f"line {lineno}: {exc}") from exc
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        lines = []
        for key, (attr, _) in _KEYS.items():
            val = getattr(self, attr)
            if isinstance(val, tuple):
                val = ",".join(repr(v) for v in val)
            elif isinstance(val, bool):
                val = "true" if val else "false"
            elif isinstance(val, float):
                val = repr(val)
            lines.append(f"{key} = {val}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update(changes)
        return type(self)(**vals)


@dataclass
class Row:
    n: int
    method: str
    value: float
    mc_mean: float
    mc_stderr: float
    limit: float
    delta: float
    flag: str = ""


def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


@dataclass
class ConvergenceReport:
    """Rows of ``(n, value, mc, limit, delta)`` plus run metadata.

    ``body()`` is the deterministic part of the CSV; ``header()`` adds the
    config hash, versions and the (nondeterministic) runtime.
    """

    rows: list
    config: ExperimentConfig
    limit: float
    limit_delta: float
    notes: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    runtime: float = 0.0
    extra: dict = field(default_factory=dict)

    def deltas_consistent(self, tol: float = 1e-12) -> bool:
        for r in self.rows:
            ref = r.value if not math.isnan(r.value) else r.mc_mean
            if not math.isnan(r.delta) and abs(abs(ref - r.limit) - r.delta) > tol:
                return False
        return True

    def header(self) -> str:
        return (f"# meta: config_hash={self.config.config_hash()} gexpect={__version__} "
                f"numpy={np.__version__}\n"
                f"# run: finished={time.strftime('%Y-%m-%dT%H:%M:%S')} runtime_s={self.runtime:.3f}\n")

    def body(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
        for note in self.notes:
            buf.write(f"# note: {note}\n")
        return buf.getvalue()

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.header() + self.body())
        return path


def csv_body(path) -> str:
    """The part of a report file below the ``#`` header lines."""
    lines = Path(path).read_text().splitlines(keepends=True)
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        i += 1
    return "".join(lines[i:])


def _trend_warning(rows, report):
    d = [r.delta for r in rows if not math.isnan(r.delta)]
    if len(d) >= 3 and not (d[-3] > d[-2] > d[-1]):
        msg = "delta_n is not decreasing over the last three n"
        report.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)


def _dp_value(family, n, phi, cfg):
    try:
        return dp_selfnorm(family, n, phi, cap=cfg.dp_cap).value, "exact"
    except StateExplosion:
        res = dp_binned(family, n, selfnorm_functional(phi), cfg.bins, cap=cfg.dp_cap, bracket=False)
        return res.value, "binned"


def _selfnorm_payoff(phi):
    return lambda S, V: phi(selfnorm_ratio(S, V))


def run_convergence(config: ExperimentConfig, out=None) -> ConvergenceReport:
    """DP self-normalized values for each ``n`` against the PDE limit.

    A failing ``n`` becomes a row flagged ``error:<kind>`` and the run goes
    on.  The report is written to ``out`` (a file) when given.
    """
    t0 = time.perf_counter()
    cfg = config
    phi = resolve(cfg.phi)
    family = cfg.increment_family()
    band = family.band
    lim = selfnorm_limit(phi, band, tol=cfg.pde_tol)
    rows = []
    for n in cfg.n_list:
        value, method, flag = math.nan, "dp", ""
        mc_mean = mc_se = math.nan
        try:
            value, method = _dp_value(family, n, phi, cfg)
            if cfg.mc_enabled:
                _, est = sums_search(family, n, _selfnorm_payoff(phi), budget=cfg.mc_budget,
                                     n_paths_search=cfg.mc_search_paths,
                                     n_paths_eval=cfg.mc_paths, seed=cfg.seed)
                mc_mean, mc_se = est.mean, est.stderr
                if est.lower() > value + 1e-12:
                    flag = "mc_above_dp"
        except GExpectError as exc:
            flag = f"error:{type(exc).__name__}"
            log.warning("n=%d failed: %s", n, exc)
        delta = abs(value - lim.value) if not math.isnan(value) else math.nan
        rows.append(Row(n, method, value, mc_mean, mc_se, lim.value, delta, flag))
    last = rows[-1]
    if not math.isnan(last.delta) and last.delta > cfg.tol and not last.flag:
        last.flag = "dp_gap"
    rep = ConvergenceReport(rows, cfg, lim.value, lim.delta)
    rep.notes.append(f"limit refinement delta {lim.delta!r}")
    if cfg.mc_limit:
        _, est = policy_search(selfnormalized(phi), band, n_steps=cfg.mc_steps,
                               n_paths_search=cfg.mc_search_paths, n_paths_eval=cfg.mc_paths,
                               seed=cfg.seed, budget=cfg.mc_budget)
        slack = cfg.pde_tol + 3 * est.stderr + DT_ALLOWANCE / cfg.mc_steps
        ok = est.mean <= lim.value + slack
        rep.extra["mc_limit"] = est
        rep.notes.append(f"mc limit lower bound {est.mean!r} +- {est.stderr!r} "
                         f"{'coherent' if ok else 'INCOHERENT'} with pde limit")
    _trend_warning(rows, rep)
    rep.runtime = time.perf_counter() - t0
    if out is not None:
        rep.to_csv(out)
    return rep


def run_heavytail(config: ExperimentConfig, out=None) -> ConvergenceReport:
    """MC self-normalized values of a heavy-tailed family against the limit
    on the band ``(1/r^2, 1)``.

    Raises :class:`~gexpect.exceptions.ConditionViolated` before any
    simulation when the spec fails a tail condition.
    """
    t0 = time.perf_counter()
    cfg = config
    if not cfg.heavy_spec:
        raise ValidationError("heavy.spec is required")
    spec = HeavyTailSpec.parse(cfg.heavy_spec)
    cond = check_conditions(spec)
    r_sq = spec.r_sq if spec.r_sq is not None else cond.r_sq
    band = VolBand(1.0 / r_sq, 1.0)
    phi = resolve(cfg.phi)
    lim = selfnorm_limit(phi, band, tol=cfg.pde_tol)
    family = spec.to_family()
    rows = []
    for n in cfg.n_list:
        _, est = sums_search(family, n, _selfnorm_payoff(phi), budget=cfg.mc_budget,
                             n_paths_search=cfg.mc_search_paths, n_paths_eval=cfg.mc_paths,
                             seed=cfg.seed)
        delta = abs(est.mean - lim.value)
        flag = "mc_gap" if delta > cfg.tol else ""
        rows.append(Row(n, "mc", math.nan, est.mean, est.stderr, lim.value, delta, flag))
    rep = ConvergenceReport(rows, cfg, lim.value, lim.delta)
    for line in cond.lines():
        rep.notes.append(f"condition {line}")
    for n in cfg.n_list:
        l_d, d = compute_l_and_dn(spec, n)
        rep.notes.append(f"n={n} d_n={d!r} l(d_n)={l_d!r}")
    rep.notes.append("MC values are lower bounds; no exact DP exists for unbounded atom sets")
    _trend_warning(rows, rep)
    rep.runtime = time.perf_counter() - t0
    if out is not None:
        rep.to_csv(out)
    return rep
