"""Named test functions, so experiments can be declared in config files."""

from __future__ import annotations

import math

import numpy as np

from .core import TERMINAL, TestFunctional
from .exceptions import ValidationError


def cos_fn() -> TestFunctional:
    return TestFunctional(np.cos, TERMINAL, 1.0, 1.0, "cos")


def square(clip: float = math.inf) -> TestFunctional:
    def f(x):
        return np.minimum(np.square(x), clip)

    return TestFunctional(f, TERMINAL, math.inf, clip, "square", scale=1.0)


def neg_square(clip: float = math.inf) -> TestFunctional:
    def f(x):
        return -np.minimum(np.square(x), clip)

    return TestFunctional(f, TERMINAL, math.inf, clip, "neg-square")


def cube(clip: float = 50.0) -> TestFunctional:
    def f(x):
        return np.clip(np.power(x, 3), -clip, clip)

    return TestFunctional(f, TERMINAL, math.inf, clip, "cube")


def identity(clip: float = 10.0) -> TestFunctional:
    def f(x):
        return np.clip(x, -clip, clip)

    return TestFunctional(f, TERMINAL, 1.0, clip, "identity")


def relu_clipped(cap: float = 10.0) -> TestFunctional:
    def f(x):
        return np.clip(x, 0.0, cap)

    return TestFunctional(f, TERMINAL, 1.0, cap, "relu-clipped")


def indicator_smoothed(a: float = 0.0, c: float = 0.5) -> TestFunctional:
    """Ramp from 1 (``x <= a``) down to 0 (``x >= a + c``)."""
    if c <= 0:
        raise ValidationError("ramp width c must be positive")

    def f(x):
        return np.clip((a + c - np.asarray(x, dtype=float)) / c, 0.0, 1.0)

    return TestFunctional(f, TERMINAL, 1.0 / c, 1.0, f"indicator-smoothed({a},{c})")


_REGISTRY = {
    "cos": cos_fn,
    "square": square,
    "neg-square": neg_square,
    "cube": cube,
    "identity": identity,
    "relu-clipped": relu_clipped,
    "indicator-smoothed": indicator_smoothed,
}


def available():
    return sorted(_REGISTRY)


def resolve(spec: str) -> TestFunctional:
    """``"cos"``, ``"relu-clipped"``, ``"indicator-smoothed(0,0.5)"``, ..."""
    spec = spec.strip()
    name, args = spec, []
    if "(" in spec:
        if not spec.endswith(")"):
            raise ValidationError(f"malformed functional spec {spec!r}")
        name, _, inner = spec[:-1].partition("(")
        try:
            args = [float(t) for t in inner.split(",") if t.strip()]
        except ValueError as exc:
            raise ValidationError(f"bad arguments in {spec!r}") from exc
    try:
        factory = _REGISTRY[name.strip()]
    except KeyError:
        raise ValidationError(f"unknown functional {name!r}; known: {available()}") from None
    return factory(*args)


def gaussian_expectation(phi, sigma_sq: float = 1.0) -> float:
    """``E[phi(sqrt(sigma_sq) Z)]`` by adaptive quadrature."""
    from scipy import integrate

    s = math.sqrt(sigma_sq)

    def integrand(z):
        return float(phi(np.asarray(s * z))) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)

    # split at zero so kinks of the usual test functions fall on a breakpoint
    left, _ = integrate.quad(integrand, -np.inf, 0.0, limit=200, epsabs=1e-12)
    right, _ = integrate.quad(integrand, 0.0, np.inf, limit=200, epsabs=1e-12)
    return left + right
