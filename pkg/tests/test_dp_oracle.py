import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gexpect.core import IncrementFamily, IncrementLaw, VolBand
from gexpect.dp_oracle import (
    ABSMAX,
    SublinearDP,
    dp_binned,
    dp_exact,
    dp_selfnorm,
    enumerate_exhaustive,
    interior_law_check,
    maxsum_moment,
    rosenthal_p2_check,
    rosenthal_ratio,
    selfnorm_functional,
    selfnorm_ratio,
)
from gexpect.exceptions import StateExplosion, ValidationError
from gexpect.functionals import cos_fn, identity, square

FAM = IncrementFamily.two_point([1.0, 2.0])
UNIT = IncrementFamily.two_point([1.0])


def s_sq(st_):
    return st_.s**2


def test_dp_exact_examples():
    assert dp_exact(FAM, 1, s_sq).value == 4.0
    assert dp_exact(FAM, 2, s_sq).value == 8.0
    assert dp_exact(FAM, 2, lambda st_: st_.m**2 / 2, track=ABSMAX).value == 5.0


def test_dp_selfnorm_examples():
    assert dp_selfnorm(FAM, 1, square()).value == 1.0
    assert dp_selfnorm(FAM, 2, square()).value == 1.0
    assert dp_selfnorm(FAM, 1, identity()).value == 0.0


def test_zero_over_zero_is_zero():
    assert selfnorm_ratio(0.0, 0.0) == 0.0
    assert selfnorm_ratio(3.0, 9.0) == 1.0


def test_policy_replay_reproduces_value():
    res = dp_selfnorm(FAM, 5, cos_fn())
    assert abs(res.replay(selfnorm_functional(cos_fn())) - res.value) <= 1e-12
    res = dp_exact(FAM, 4, lambda st_: np.cos(st_.m), track=ABSMAX)
    assert abs(res.replay(lambda st_: np.cos(st_.m)) - res.value) <= 1e-12


def test_matches_exhaustive_with_interior_law():
    fam = IncrementFamily((IncrementLaw.symmetric(1.0), IncrementLaw.three_point(1.0, 2.0, 1.5),
                           IncrementLaw.symmetric(math.sqrt(2.0))))
    for n in (1, 2, 3, 4):
        got = dp_selfnorm(fam, n, cos_fn()).value
        want = enumerate_exhaustive(
            fam, n, lambda x: np.cos(selfnorm_ratio(x.sum(1), (x**2).sum(1))))
        assert abs(got - want) <= 1e-12


def test_binned_equals_exact_on_fine_bins():
    f = selfnorm_functional(cos_fn())
    assert dp_binned(FAM, 2, f, (0.5, 0.5)).value == dp_exact(FAM, 2, f).value


def test_binned_brackets_recorded():
    res = dp_binned(FAM, 6, selfnorm_functional(square()), (1.0, 1.0))
    assert len(res.meta["bracket"]) == 2


def test_state_explosion():
    with pytest.raises(StateExplosion):
        dp_exact(IncrementFamily.two_point([1.0, math.sqrt(2), math.sqrt(3)]), 12, s_sq, cap=1000)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.lists(st.floats(-2, 2), min_size=3, max_size=3),
       st.integers(1, 4))
def test_sublinear_in_functional(a, b, n):
    f = lambda st_: a[0] * np.cos(a[1] * st_.s) + a[2] * st_.v  # noqa: E731
    g = lambda st_: b[0] * np.sin(b[1] * st_.s) + b[2] * st_.v  # noqa: E731
    fg = dp_exact(FAM, n, lambda st_: f(st_) + g(st_)).value
    assert fg <= dp_exact(FAM, n, f).value + dp_exact(FAM, n, g).value + 1e-12


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_odd_functional_symmetry(n):
    odd = lambda st_: st_.s**3  # noqa: E731
    up = dp_exact(FAM, n, odd).value
    down = -dp_exact(FAM, n, lambda st_: -odd(st_)).value
    assert up == pytest.approx(-down, abs=1e-12)
    assert down <= 0.0 <= up


def test_selfnorm_stays_in_range():
    for n in range(1, 8):
        v = dp_selfnorm(FAM, n, cos_fn()).value
        assert math.cos(math.sqrt(n)) - 1e-12 <= v <= 1.0 + 1e-12 or n > 9


def test_rosenthal_examples():
    assert rosenthal_p2_check(FAM, 2) == (2.0, 8.0, True)
    assert rosenthal_p2_check(UNIT, 1) == (0.0, 1.0, True)
    assert rosenthal_p2_check(FAM, 8)[2]


def test_rosenthal_rejects_bad_p():
    with pytest.raises(ValidationError):
        rosenthal_p2_check(FAM, 2, p=3.0)


def test_maxsum_moment():
    assert maxsum_moment(FAM, 1) == 4.0
    assert maxsum_moment(FAM, 2) == 5.0
    assert maxsum_moment(UNIT, 4) <= 4.0
    scaled = [maxsum_moment(FAM, n) * n for n in range(1, 7)]
    assert all(b >= a for a, b in zip(scaled, scaled[1:]))


def test_rosenthal_ratio_is_finite():
    for p in (2.0, 3.0, 4.0):
        assert 0 < rosenthal_ratio(FAM, 6, p) < 10


def test_estimator_api():
    est = SublinearDP(family="twopoint:1,2", n=2, functional="square").fit()
    assert est.value_ == 1.0
    assert est.get_params()["n"] == 2
    vals = est.predict(np.array([[0, 0.0, 0.0], [1, 2.0, 4.0], [1, 7.0, 1.0]]))
    assert vals[0] == 1.0
    assert vals[1] == 1.0  # S_2^2/V_2 averages to 1 from any state
    assert math.isnan(vals[2])


def test_binned_n16_square_selfnorm_within_bracket():
    f = selfnorm_functional(square())
    exact = dp_exact(FAM, 16, f).value
    res = dp_binned(FAM, 16, f, (1.0, 1.0))
    lo, hi = sorted(res.meta["bracket"])
    assert lo - 1e-12 <= exact <= hi + 1e-12
    assert lo - 1e-12 <= res.value <= hi + 1e-12


def test_interior_law_flagged_for_selfnorm_cos():
    # an interior variance beats both endpoints somewhere at n=4
    chk = interior_law_check(VolBand(1.0, 4.0), 4, cos_fn())
    assert chk.interior_wins and chk.interior_states > 0
    assert chk.gain == pytest.approx(0.0072049, abs=1e-6)


def test_interior_law_not_flagged_for_linear_functional():
    chk = interior_law_check(VolBand(1.0, 4.0), 3, identity())
    assert not chk.interior_wins
