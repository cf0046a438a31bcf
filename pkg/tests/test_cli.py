import csv
import io
import subprocess
import sys
from pathlib import Path

import pytest

from risre import ao, cli
from risre.exceptions import SolverError

ROOT = Path(__file__).resolve().parents[1]
CONFIG = str(ROOT / "configs" / "default.yaml")


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def run(argv, capsys):
    code = cli.run(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_grid():
    assert cli.parse_grid("0:5:40") == [0, 5, 10, 15, 20, 25, 30, 35, 40]
    assert cli.parse_grid("12.5") == [12.5]
    for bad in ("0:5", "a:b:c", "10:5:0", "0:0:10"):
        with pytest.raises(ValueError):
            cli.parse_grid(bad)


def test_solve_is_byte_identical(tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        p = tmp_path / name
        r = subprocess.run([sys.executable, "-m", "risre", "solve", "--config", CONFIG,
                            "--seed", "7", "--draws", "100", "--out", str(p)],
                           capture_output=True, text=True)
        assert r.returncode == 0, r.stderr
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]
    (row,) = rows(outs[0].decode())
    assert list(row) == list(cli.COLUMNS)
    assert row["experiment_id"] == "solve-re" and row["wall_ms"] == "" and row["converged"] == "1"
    assert float(row["grid_value"]) == pytest.approx(20.0)


def test_timing_fills_wall_ms(capsys):
    code, out, _ = run(["solve", "--pmax", "10", "--draws", "0", "--timing"], capsys)
    assert code == 0 and float(rows(out)[0]["wall_ms"]) > 0


def test_bad_config_reports_line_and_field(tmp_path, capsys):
    text = Path(CONFIG).read_text().replace("M: 8", "M: eight")
    bad = tmp_path / "bad.yaml"
    bad.write_text(text)
    code, out, err = run(["solve", "--config", str(bad)], capsys)
    assert code == 2 and out == ""
    assert "'M'" in err and "line 5" in err


@pytest.mark.parametrize("argv", [
    ["solve", "--config", "/nonexistent.yaml"],
    ["sweep", "--pmax", "10:5"],
    ["solve", "--pmax", "0:5:10"],
    ["solve", "--phase", "dps", "--bits", "7"],
    ["solve", "--jobs", "0"],
])
def test_bad_arguments_exit_2(argv, capsys):
    assert run(argv, capsys)[0] == 2


def test_sweep_rows(capsys):
    code, out, _ = run(["sweep", "--pmax", "0:10:20", "--draws", "0", "--mode", "ee"], capsys)
    r = rows(out)
    assert code == 0 and [float(x["grid_value"]) for x in r] == [0, 10, 20]
    assert {x["experiment_id"] for x in r} == {"sweep-ee"}
    assert all(x["se_mc"] == "nan" for x in r)


def test_convergence_rows(capsys):
    code, out, _ = run(["convergence", "--draws", "0"], capsys)
    r = rows(out)
    assert code == 0 and [int(x["grid_value"]) for x in r] == list(range(1, len(r) + 1))
    assert r[-1]["converged"] == "1"


def test_tradeoff_ids(capsys):
    code, out, _ = run(["tradeoff", "--betas", "0.01,100", "--pmax", "30", "--draws", "0"], capsys)
    assert code == 0
    assert [x["experiment_id"] for x in rows(out)] == ["tradeoff-beta0.01", "tradeoff-beta100"]


def test_validate_de(capsys):
    code, out, err = run(["validate-de", "--draws", "300", "--pmax", "0:20:40"], capsys)
    r = rows(out)
    assert code == 0 and len(r) == 3
    assert "max DE-vs-MC relative error" in err
    for x in r:
        assert abs(float(x["se_de"]) - float(x["se_mc"])) <= 0.05 * float(x["se_mc"])


def test_solver_failure_exit_3(monkeypatch, capsys):
    calls = {"n": 0}
    real = ao.wmmse_bcd

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] > 1:
            raise SolverError("boom")
        return real(*a, **k)

    monkeypatch.setattr(ao, "wmmse_bcd", flaky)
    code, out, err = run(["solve", "--draws", "0", "--max-outer", "50"], capsys)
    assert code == 3 and "boom" in err
    r = rows(out)
    assert len(r) == 1 and r[0]["experiment_id"] == "solve-partial"
    monkeypatch.setattr(ao, "wmmse_bcd", lambda *a, **k: (_ for _ in ()).throw(SolverError("x")))
    code, out, _ = run(["sweep", "--pmax", "0:10:10", "--draws", "0"], capsys)
    assert code == 3 and all(x["converged"] == "0" for x in rows(out))
