"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .core import TERMINAL, TestFunctional, VolBand
from .exceptions import ValidationError


def check_band(band) -> VolBand:
    """Accept a ``VolBand``, a ``(lo, hi)`` pair or a ``"lo,hi"`` string."""
    if isinstance(band, VolBand):
        return band
    if isinstance(band, str):
        return VolBand.parse(band)
    try:
        lo, hi = band
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"cannot interpret {band!r} as a variance band") from exc
    return VolBand(lo, hi)


def check_functional(phi, kind=TERMINAL) -> TestFunctional:
    if isinstance(phi, str):
        from .functionals import resolve

        phi = resolve(phi)
    if isinstance(phi, TestFunctional):
        if phi.kind != kind:
            raise ValidationError(f"expected a {kind!r} functional, got {phi.kind!r}")
        return phi
    if callable(phi):
        return TestFunctional(phi, kind)
    raise ValidationError(f"{phi!r} is not a test functional")


def check_positive_int(value, name, minimum=1) -> int:
    if not isinstance(value, numbers.Integral) or isinstance(value, bool) or value < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_positive(value, name) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValidationError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_points(X, n_features):
    """2-D float array of query points with ``n_features`` columns.

    A 1-D input is read as a column when ``n_features == 1``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and n_features == 1:
        X = X[:, None]
    X = check_array(X, ensure_2d=True, dtype=float)
    if X.shape[1] != n_features:
        raise ValidationError(f"expected {n_features} columns, got {X.shape[1]}")
    return X
