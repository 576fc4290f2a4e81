import math

import pytest

from gexpect.exceptions import ConditionViolated, ValidationError
from gexpect.harness import ExperimentConfig, csv_body, run_convergence, run_heavytail

CFG = """
# quick study
experiment.name = quick
experiment.phi = cos
experiment.n_list = 2, 4, 8
band.lo = 1
band.hi = 4
mc.enabled = true
mc.paths = 4000
mc.search_paths = 1000
"""


def test_config_round_trip():
    cfg = ExperimentConfig.from_text(CFG)
    assert cfg.n_list == (2, 4, 8) and cfg.mc_enabled
    again = ExperimentConfig.from_text(cfg.to_text())
    assert again == cfg and again.config_hash() == cfg.config_hash()
    assert cfg.replace(seed=1).config_hash() != cfg.config_hash()


@pytest.mark.parametrize("text", [
    "experiment.n_list = 4, 2",
    "experiment.bogus = 1",
    "band.lo 1",
    "experiment.phi = nonsense",
    "band.lo = 5\nband.hi = 1",
    "mc.enabled = maybe",
])
def test_config_errors(text):
    with pytest.raises(ValidationError):
        ExperimentConfig.from_text(text)


def test_convergence_report(tmp_path):
    cfg = ExperimentConfig.from_text(CFG)
    rep = run_convergence(cfg, tmp_path / "a.csv")
    assert rep.deltas_consistent()
    assert [r.n for r in rep.rows] == [2, 4, 8]
    assert all(r.mc_mean - 3 * r.mc_stderr <= r.value for r in rep.rows)
    text = (tmp_path / "a.csv").read_text()
    assert text.startswith("# meta: config_hash=" + cfg.config_hash())
    again = run_convergence(cfg, tmp_path / "b.csv")
    assert csv_body(tmp_path / "a.csv") == csv_body(tmp_path / "b.csv")
    assert again.rows == rep.rows


def test_degenerate_band_cos():
    cfg = ExperimentConfig(phi="cos", band_lo=1.0, band_hi=1.0, n_list=(4, 16, 64))
    rep = run_convergence(cfg)
    d = [r.delta for r in rep.rows]
    assert d[-1] < d[0] and d[-1] <= 0.02
    assert abs(rep.limit - math.exp(-0.5)) <= 2e-3


def test_monotone_trend_no_warning():
    rep = run_convergence(ExperimentConfig(phi="cos", n_list=(2, 4, 8, 16)))
    assert rep.warnings == []


def test_trend_warning_emitted():
    # x^2/V on a clipped square grows with n while the limit is fixed
    cfg = ExperimentConfig(phi="square(1.5)", n_list=(2, 3, 4), band_lo=1.0, band_hi=4.0)
    with pytest.warns(RuntimeWarning):
        rep = run_convergence(cfg)
    assert rep.warnings


def test_square_selfnorm_at_two_steps_is_one():
    from gexpect.core import IncrementFamily
    from gexpect.dp_oracle import dp_selfnorm
    from gexpect.functionals import square

    assert dp_selfnorm(IncrementFamily.two_point([1, 2]), 2, square()).value == 1.0


def test_square_selfnorm_limit_is_above_one():
    # the n=2 identity does not survive the limit: a feedback policy already
    # pushes E[W^2/<W>] well above 1 on the (1,4) band
    import numpy as np

    from gexpect.mc_engine import policy_search, selfnormalized

    _, est = policy_search(selfnormalized(np.square), (1, 4), n_steps=128, n_paths_search=4000,
                           n_paths_eval=40_000, seed=9)
    assert est.lower(5.0) > 1.0


def test_heavytail_rejects_condition_violation():
    cfg = ExperimentConfig(heavy_spec="power:1.5", n_list=(16,))
    with pytest.raises(ConditionViolated):
        run_heavytail(cfg)


def test_heavytail_small_run():
    cfg = ExperimentConfig(heavy_spec="log:2", n_list=(16, 64), mc_paths=4000, mc_search_paths=1000)
    rep = run_heavytail(cfg)
    assert rep.deltas_consistent()
    assert any(n.startswith("condition (I)") for n in rep.notes)
    assert any("d_n=" in n for n in rep.notes)
