"""Command line entry point.

Exit status is 0 on success, 2 for invalid input and 3 when a numerical
routine fails (no convergence, state explosion, no root).  ``GX_THREADS``
sets the numba and BLAS thread-pool sizes.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def _thread_cap():
    raw = os.environ.get("GX_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise SystemExit(f"GX_THREADS must be a positive integer, got {raw!r}")
    for var in ("NUMBA_NUM_THREADS", "OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    return n


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="key=value experiment file")
    p.add_argument("--seed", type=int, help="RNG seed (u64)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--tol", type=float, help="refinement / experiment tolerance")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="gexpect", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gheat", parents=[common], help="G-normal expectation")
    p.add_argument("--band", default="1,4")
    p.add_argument("--phi", default="cos")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--x", type=float, default=0.0)
    p.add_argument("--max-refinements", type=int, default=8)

    p = sub.add_parser("pair", parents=[common], help="pair PDE at the origin")
    p.add_argument("--band", default="1,4")
    p.add_argument("--phi2", default="y", help="y, neg-y, or clamp:<phi>")
    p.add_argument("--h", type=float, default=0.05)

    p = sub.add_parser("selfnorm-limit", parents=[common], help="limit of phi(S_n/sqrt(V_n))")
    p.add_argument("--band", default="1,4")
    p.add_argument("--phi", default="cos")
    p.add_argument("--max-refinements", type=int, default=4)

    p = sub.add_parser("dp", parents=[common], help="exact sublinear expectation of a sum")
    p.add_argument("--family", default="twopoint:1,2")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--phi", default="square-selfnorm",
                   help="<name> for phi(S_n), <name>-selfnorm for phi(S_n/sqrt(V_n))")
    p.add_argument("--bins", default=None, help="ds,dv for the binned variant")

    p = sub.add_parser("mc", parents=[common], help="Monte Carlo lower bound by policy search")
    p.add_argument("--band", default="1,4")
    p.add_argument("--phi", default="square")
    p.add_argument("--selfnorm", action="store_true", help="apply phi to W/sqrt(<W>)")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--steps", type=int, default=512)
    p.add_argument("--budget", type=int, default=1)

    sub.add_parser("converge", parents=[common], help="DP vs PDE convergence study")
    sub.add_parser("heavytail", parents=[common], help="heavy-tailed convergence study")

    p = sub.add_parser("rosenthal", parents=[common], help="p=2 Rosenthal check")
    p.add_argument("--family", default="twopoint:1,2")
    p.add_argument("--n", type=int, default=8)
    return parser


def _phi2(spec, band):
    from .core import TERMINAL_QV, TestFunctional
    from .functionals import resolve
    from .pde_pair import clamp_functional

    if spec == "y":
        return TestFunctional(lambda x, y: y + 0.0 * x, TERMINAL_QV, 1.0, name="y")
    if spec == "neg-y":
        return TestFunctional(lambda x, y: -y + 0.0 * x, TERMINAL_QV, 1.0, name="-y")
    if spec.startswith("clamp:"):
        return clamp_functional(resolve(spec[len("clamp:"):]), band)
    from .exceptions import ValidationError

    raise ValidationError(f"unknown pair functional {spec!r}")


def _report_path(args, cfg, default_name):
    out = args.out or (Path(cfg.out) if cfg.out else None)
    if out is None:
        return None
    return out / f"{cfg.name or default_name}.csv"


def _load_config(args, **overrides):
    from .harness import ExperimentConfig

    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig(**overrides)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.tol is not None:
        changes["tol"] = args.tol
    return cfg.replace(**changes) if changes else cfg


def _run(args) -> int:
    from .core import IncrementFamily, VolBand
    from .functionals import resolve

    cmd = args.command
    if cmd == "gheat":
        from .pde_gheat import gnormal_expectation

        res = gnormal_expectation(resolve(args.phi), VolBand.parse(args.band), tol=args.tol or 1e-3,
                                  T=args.T, x=args.x, max_refinements=args.max_refinements)
        print(f"value {res.value!r}\ndelta {res.delta!r}")
    elif cmd == "pair":
        from .pde_pair import Grid2D, solve_pair

        band = VolBand.parse(args.band)
        sol = solve_pair(_phi2(args.phi2, band), band, 1.0, Grid2D.for_band(band, 1.0, args.h))
        print(f"value {sol.origin_value()!r}")
    elif cmd == "selfnorm-limit":
        from .pde_pair import selfnorm_limit

        res = selfnorm_limit(resolve(args.phi), VolBand.parse(args.band), tol=args.tol or 1e-3,
                             max_refinements=args.max_refinements)
        print(f"value {res.value!r}\ndelta {res.delta!r}")
    elif cmd == "dp":
        from .dp_oracle import dp_binned, dp_exact, dp_selfnorm, selfnorm_functional

        family = IncrementFamily.parse(args.family)
        name, selfnorm = args.phi, args.phi.endswith("-selfnorm")
        if selfnorm:
            name = name[: -len("-selfnorm")]
        phi = resolve(name)
        if args.bins:
            bins = tuple(float(t) for t in args.bins.split(","))
            func = selfnorm_functional(phi) if selfnorm else (lambda st: phi(st.s))
            res = dp_binned(family, args.n, func, bins)
        elif selfnorm:
            res = dp_selfnorm(family, args.n, phi)
        else:
            res = dp_exact(family, args.n, lambda st: phi(st.s))
        print(repr(res.value))
    elif cmd == "mc":
        from .mc_engine import policy_search, selfnormalized, terminal

        phi = resolve(args.phi)
        functional = selfnormalized(phi) if args.selfnorm else terminal(phi)
        pol, est = policy_search(functional, VolBand.parse(args.band), budget=args.budget,
                                 n_steps=args.steps, n_paths_eval=args.paths, seed=args.seed or 0)
        print(f"mean {est.mean!r}\nstderr {est.stderr!r}\npolicy {pol.kind}")
    elif cmd in ("converge", "heavytail"):
        from .harness import run_convergence, run_heavytail

        if cmd == "heavytail":
            cfg = _load_config(args, name="heavytail", heavy_spec="log:2", n_list=(256, 1024, 4096))
            rep = run_heavytail(cfg, _report_path(args, cfg, "heavytail"))
        else:
            cfg = _load_config(args)
            rep = run_convergence(cfg, _report_path(args, cfg, "converge"))
        sys.stdout.write(rep.header() + rep.body())
        for w in rep.warnings:
            print(f"warning: {w}", file=sys.stderr)
    elif cmd == "rosenthal":
        from .dp_oracle import rosenthal_p2_check

        lhs, rhs, holds = rosenthal_p2_check(IncrementFamily.parse(args.family), args.n)
        print(f"lhs {lhs!r}\nrhs {rhs!r}\n{'HOLDS' if holds else 'FAILS'}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        _thread_cap()
    except SystemExit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .exceptions import NumericalError, ValidationError

    try:
        return _run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, AssertionError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
