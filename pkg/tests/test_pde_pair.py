import math

import numpy as np
import pytest

from gexpect.core import TERMINAL_QV, TestFunctional, VolBand
from gexpect.exceptions import UnboundedFunctional, ValidationError
from gexpect.functionals import cos_fn, square
from gexpect.pde_pair import (
    Grid2D,
    PairPdeSolver,
    SelfNormalizedLimit,
    clamp_functional,
    selfnorm_limit,
    solve_pair,
)

BAND = VolBand(1.0, 4.0)
Y = TestFunctional(lambda x, y: y + 0.0 * x, TERMINAL_QV, 1.0, name="y")
NEG_Y = TestFunctional(lambda x, y: -y + 0.0 * x, TERMINAL_QV, 1.0, name="-y")


def test_maximal_distribution_endpoints():
    grid = Grid2D.for_band(BAND, 1.0, 0.1)
    assert solve_pair(Y, BAND, 1.0, grid).origin_value() == pytest.approx(4.0, abs=1e-3)
    assert solve_pair(NEG_Y, BAND, 1.0, grid).origin_value() == pytest.approx(-1.0, abs=1e-3)


def test_fused_kernel_matches_numpy():
    psi = clamp_functional(cos_fn(), BAND)
    grid = Grid2D.for_band(BAND, 1.0, 0.2)
    a = solve_pair(psi, BAND, 1.0, grid, kernel="numba").final
    b = solve_pair(psi, BAND, 1.0, grid, kernel="numpy").final
    assert np.max(np.abs(a - b)) == 0.0


def test_degenerate_selfnorm_is_gaussian():
    res = selfnorm_limit(cos_fn(), VolBand(1.0, 1.0))
    assert res.value == pytest.approx(math.exp(-0.5), abs=2e-3)


def test_clamp_widening_does_not_move_value():
    b = selfnorm_limit(cos_fn(), BAND, h0=0.2, widen=2.0, tol=1.0, max_refinements=1)
    a = selfnorm_limit(cos_fn(), BAND, h0=0.2, tol=1.0, max_refinements=1)
    assert a.history[0][1] == pytest.approx(b.history[0][1], abs=1e-12)


def test_refinement_count_validated():
    with pytest.raises(ValidationError):
        selfnorm_limit(cos_fn(), BAND, max_refinements=0)


def test_unbounded_phi_rejected():
    with pytest.raises(UnboundedFunctional):
        selfnorm_limit(square(), BAND)


def test_estimators():
    est = PairPdeSolver(phi2=Y, band=(1, 4), h=0.1).fit()
    assert est.value_ == pytest.approx(4.0, abs=1e-3)
    assert est.predict(np.array([[0.0, 0.5]]))[0] == pytest.approx(4.5, abs=1e-3)
    snl = SelfNormalizedLimit(phi="cos", band=(1, 1))
    vals = snl.transform(np.array([[2.0, 2.0]]))
    assert vals[0] == pytest.approx(math.exp(-0.5), abs=2e-3)
