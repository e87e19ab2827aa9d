import io
import json
import subprocess
import sys

import pytest

from fourier_accountant import AtomicPLD, write_pld_csv
from fourier_accountant.cli import run

JSON_KEYS = {"delta_lower", "delta_upper", "err_total", "err_tail", "err_trunc", "err_period", "lambda", "grid", "k", "wall_ms"}


def call(*argv):
    buf = io.StringIO()
    code = run(list(argv), out=buf)
    return code, buf.getvalue()


def test_rr_bracket_and_schema():
    code, out = call("rr", "--p", "0.75", "--eps", "0.5", "--k", "1", "--L", "20", "--n-grid", "65536")
    assert code == 0
    rep = json.loads(out)
    assert JSON_KEYS <= rep.keys()
    assert rep["grid"] == {"L": 20.0, "n": 65536}
    assert rep["delta_lower"] <= 0.33781968232496796 <= rep["delta_upper"]
    assert set(rep["error_budget"]["upper"]) == {"tail", "truncation", "periodisation", "total", "lambda"}


def test_binomial_delta_inf_only():
    code, out = call("binomial", "--n-trials", "2", "--p", "0.5", "--shift", "1", "--eps", "10", "--k", "1")
    rep = json.loads(out)
    assert code == 0
    assert rep["delta_lower"] == pytest.approx(0.25, abs=1e-12)
    assert rep["delta_upper"] == pytest.approx(0.25, abs=1e-12)


def test_subsampled_gaussian_verify():
    code, out = call(
        "subsampled-gaussian", "--q", "0.02", "--sigma", "2.0", "--eps", "1.0",
        "--L", "8.0", "--k", "1", "--n-grid", "100000", "--verify",
    )
    rep = json.loads(out)
    assert code == 0
    assert rep["verify"][0]["method"] == "quadrature" and rep["verify"][0]["ok"]


def test_curve_csv_monotone():
    code, out = call("rr", "--p", "0.75", "--k", "3", "--curve", "0:2:3", "--format", "csv")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "eps,delta_lower,delta_upper"
    rows = [list(map(float, ln.split(","))) for ln in lines[1:]]
    assert len(rows) == 3
    for col in (1, 2):
        assert all(b[col] <= a[col] for a, b in zip(rows, rows[1:]))


def test_curve_beyond_L_is_delta_inf():
    code, out = call("binomial", "--n-trials", "2", "--shift", "1", "--k", "2", "--L", "20", "--n-grid", "1024",
                     "--curve", "20:26:3")
    rep = json.loads(out)
    for row in rep["curve"]:
        assert row["delta_lower"] == pytest.approx(0.4375, abs=1e-12)
        assert row["delta_upper"] == pytest.approx(0.4375, abs=1e-12)


def test_curve_respects_thread_cap(monkeypatch):
    monkeypatch.setenv("PLD_ACCT_THREADS", "1")
    code, _ = call("exp-count", "--curve", "0:0.1:4", "--k", "20")
    assert code == 0


def test_delta_inversion():
    code, out = call("rr", "--p", "0.75", "--delta", "0.2", "--k", "2", "--n-grid", "65536", "--verify")
    rep = json.loads(out)
    assert code == 0
    assert rep["eps_lower"] <= rep["eps_upper"]
    assert rep["delta_upper"] <= 0.2
    assert all(v["ok"] for v in rep["verify"])


def test_compose_reads_grid_header(tmp_path):
    path = tmp_path / "atoms.csv"
    write_pld_csv(AtomicPLD.from_pairs([(-0.4, 0.5), (0.4, 0.5)]), path, grid=(10.0, 4096))
    code, out = call("compose", "--pld-file", str(path), "--eps", "0.2", "--k", "4", "--verify")
    rep = json.loads(out)
    assert code == 0
    assert rep["grid"] == {"L": 10.0, "n": 4096}
    assert rep["verify"][0]["method"] == "exact_atom_convolution"


def test_verify_mismatch_exit_code(tmp_path, monkeypatch):
    import fourier_accountant.cli as cli

    monkeypatch.setattr(cli, "reference_delta", lambda spec, k, eps: (2.0, "fake"))
    code, _ = call("rr", "--p", "0.75", "--eps", "0.5", "--verify")
    assert code == 3


@pytest.mark.parametrize(
    "argv,needle",
    [
        (["rr", "--p", "0.75", "--eps", "1", "--lambda", "1e9"], "lambda < 1/dx"),
        (["rr", "--p", "1.5", "--eps", "1"], "p must lie in (0, 1)"),
        (["rr", "--p", "0.75", "--eps", "1", "--n-grid", "1001"], "even"),
        (["rr", "--p", "0.75", "--eps", "1", "--L", "1", "--n-grid", "64"], "increase L"),
        (["compose", "--pld-file", "/nonexistent.csv", "--eps", "1"], "No such file"),
    ],
)
def test_precondition_failures(argv, needle, capsys):
    code, _ = call(*argv)
    assert code == 2
    assert needle in capsys.readouterr().err


def test_requires_a_target():
    with pytest.raises(SystemExit):
        call("rr", "--p", "0.75")
    with pytest.raises(SystemExit):
        call("rr", "--p", "0.75", "--eps", "1", "--delta", "0.1")


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "fourier_accountant", "rr", "--p", "0.6", "--eps", "0.1", "--format", "csv"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    header, row = proc.stdout.strip().splitlines()
    assert "delta_lower" in header.split(",")
    assert row.startswith("rr,")
