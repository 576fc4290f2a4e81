import math

import numpy as np
import pytest

from gexpect.core import VolBand
from gexpect.exceptions import CflViolation, DomainTooSmall, NoConvergence
from gexpect.functionals import cos_fn, neg_square, square
from gexpect.pde_gheat import GHeatSolver, Grid1D, gnormal_expectation, solve_gheat

BAND = VolBand(1.0, 4.0)


def test_convex_and_concave_endpoints():
    assert gnormal_expectation(square(), BAND).value == pytest.approx(4.0, abs=1e-3)
    assert gnormal_expectation(neg_square(), BAND).value == pytest.approx(-1.0, abs=1e-3)


def test_degenerate_band_is_gaussian():
    res = gnormal_expectation(cos_fn(), VolBand(1.0, 1.0))
    assert res.value == pytest.approx(math.exp(-0.5), abs=1e-3)
    assert res.delta < 1e-3


def test_cfl_and_domain_guards():
    g = Grid1D.for_band(BAND, 1.0, dx=0.1)
    bad = Grid1D(g.x_min, g.x_max, g.nx, 1.0, g.nt // 3)
    with pytest.raises(CflViolation):
        solve_gheat(cos_fn(), BAND, 1.0, bad)
    with pytest.raises(DomainTooSmall):
        solve_gheat(cos_fn(), BAND, 1.0, Grid1D.for_band(BAND, 1.0, dx=0.1, halfwidth=3.0))


def test_refinement_failure_is_reported():
    with pytest.raises(NoConvergence):
        gnormal_expectation(cos_fn(), BAND, tol=1e-14, max_refinements=1)


def test_scheme_is_monotone():
    # phi <= psi pointwise must give u_phi <= u_psi everywhere
    g = Grid1D.for_band(BAND, 1.0, dx=0.1)
    lo = solve_gheat(cos_fn(), BAND, 1.0, g, keep_history=False).final
    hi = solve_gheat(lambda x: np.cos(x) + 0.1 * np.exp(-x * x), BAND, 1.0, g,
                     keep_history=False).final
    assert np.all(lo <= hi + 1e-14)


def test_history_and_interpolation():
    g = Grid1D.for_band(BAND, 1.0, dx=0.2)
    sol = solve_gheat(cos_fn(), BAND, 1.0, g)
    assert sol.values.shape == (g.nt + 1, g.nx)
    assert sol.at(0.0, 0.0) == pytest.approx(1.0)
    assert sol.at(0.0) == pytest.approx(sol.final[g.nx // 2])


def test_estimator_api():
    est = GHeatSolver(phi="square", band=(1, 4)).fit()
    assert est.get_params()["band"] == (1, 4)
    assert est.value_ == pytest.approx(4.0, abs=1e-3)
    pred = est.predict(np.array([[0.0], [1.0]]))
    # convex payoff: u(x) = x^2 + 4, up to linear interpolation between nodes
    assert pred == pytest.approx([4.0, 5.0], abs=0.05)
