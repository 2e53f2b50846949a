import csv
import io
import json

import pytest
from mpmath import mpf

from pjacobi.cli import main

CONFIG = """
[weight]
alpha = 0.5
beta = 0.25
t = 1.5

[sweep]
s_values = [0.5]
n_values = [4, 8]

[precision]
bits = 192
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(CONFIG)
    return p


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_hankel_direct_matches(capsys):
    assert main(["hankel", "--alpha", "0", "--beta", "0", "--t", "1", "--n", "3", "--direct", "--digits", "25"]) == 0
    header, row = _rows(capsys.readouterr().out)
    assert header == ["n", "log_Dn", "log_Dn_direct"]
    assert abs(mpf(row[1]) - mpf(row[2])) < mpf("1e-22")


def test_recurrence_and_moments_from_config(cfg, capsys):
    assert main(["recurrence", "--config", str(cfg), "--n", "4"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert rows[0] == ["k", "h_k", "b2_k", "gamma_k"] and len(rows) == 5
    assert main(["moments", "--config", str(cfg), "--count", "4"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert rows[0] == ["k", "mu_k"] and mpf(rows[2][1]) == 0


def test_sigma_writes_trajectory(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert main(["sigma", "--s-min", "0.01", "--s-max", "2", "--tol", "1e-25", "--out", str(out)]) == 0
    assert capsys.readouterr().out.startswith("steps")
    rows = _rows(out.read_text())
    assert rows[0] == ["s", "sigma", "dsigma", "d2sigma", "residual"]
    assert abs(mpf(rows[1][0]) - mpf("0.01")) < mpf("1e-15")
    assert all(abs(mpf(r[4])) <= mpf("1e-25") for r in rows[1:])


def test_predict_json(cfg, tmp_path, capsys):
    assert main(["predict", "--config", str(cfg), "--n", "16", "--s", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out["parts"]) >= {"Vk_sum", "sigma_integral_part"}
    traj = tmp_path / "traj.csv"
    main(["sigma", "--s-min", "0.05", "--s-max", "1", "--out", str(traj), "--digits", "30"])
    capsys.readouterr()
    assert main(["predict", "--config", str(cfg), "--n", "16", "--s", "1", "--traj", str(traj)]) == 0
    again = json.loads(capsys.readouterr().out)
    assert again["ln_Dn_pred"] == out["ln_Dn_pred"]


def test_verify_reports_and_exit_code(cfg, tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = main(["verify", "--config", str(cfg), "--out", str(out)])
    text = capsys.readouterr().out
    assert code == 0 and "err1 decreasing in n" in text
    assert _rows(out.read_text())[0][0] == "n"


def test_errors_exit_2(cfg, capsys):
    assert main(["hankel", "--alpha", "0", "--beta", "-1", "--n", "3"]) == 2
    assert main(["predict", "--config", str(cfg), "--n", "4", "--s", "1", "--traj", "missing.csv"]) == 2
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["nonsense"])
