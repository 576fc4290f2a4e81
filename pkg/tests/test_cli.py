import pytest

from gexpect.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_dp_square_selfnorm(capsys):
    code, out = run(capsys, "dp", "--family", "twopoint:1,2", "--n", "2", "--phi", "square-selfnorm")
    assert code == 0 and out.out.strip() == "1.0"


def test_rosenthal(capsys):
    code, out = run(capsys, "rosenthal", "--family", "twopoint:1,2", "--n", "8")
    lines = out.out.split()
    assert code == 0 and lines[0] == "lhs" and lines[2] == "rhs" and lines[-1] == "HOLDS"


def test_selfnorm_limit(capsys):
    code, out = run(capsys, "selfnorm-limit", "--band", "1,4", "--phi", "cos", "--tol", "1e-3")
    assert code == 0
    fields = dict(line.split() for line in out.out.strip().splitlines())
    assert abs(float(fields["value"]) - 0.7263) < 2e-3 and float(fields["delta"]) < 1e-3


def test_gheat_and_pair(capsys):
    code, out = run(capsys, "gheat", "--band", "1,4", "--phi", "square")
    assert code == 0 and abs(float(out.out.split()[1]) - 4.0) < 1e-3
    code, out = run(capsys, "pair", "--band", "1,4", "--phi2", "neg-y", "--h", "0.1")
    assert code == 0 and abs(float(out.out.split()[1]) + 1.0) < 1e-3


def test_validation_exit_code(capsys):
    code, out = run(capsys, "dp", "--family", "nonsense")
    assert code == 2 and "error" in out.err


def test_bad_config_exit_code(capsys, tmp_path):
    cfg = tmp_path / "x.cfg"
    cfg.write_text("experiment.n_list = 3,1\n")
    code, _ = run(capsys, "converge", "--config", str(cfg))
    assert code == 2


def test_numerical_exit_code(capsys):
    code, out = run(capsys, "gheat", "--phi", "cos", "--tol", "1e-15", "--max-refinements", "1")
    assert code == 3 and "numerical" in out.err


def test_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_thread_cap_validated(capsys, monkeypatch):
    monkeypatch.setenv("GX_THREADS", "zero")
    code, _ = run(capsys, "dp")
    assert code == 2


def test_converge_writes_csv(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("experiment.name = small\nexperiment.n_list = 2,4\n")
    code, out = run(capsys, "converge", "--config", str(cfg), "--out", str(tmp_path), "--seed", "5")
    assert code == 0
    text = (tmp_path / "small.csv").read_text()
    assert text.splitlines()[0].startswith("# meta: config_hash=")
    assert "n,method,value" in out.out
