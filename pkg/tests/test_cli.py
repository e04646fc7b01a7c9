import csv
import json
import math

import pytest

from kreinsolve.cli import METRICS, main, run, solution_columns
from kreinsolve.problem import parse_spec

TEMPLATE = """
solver = "{solver}"
grids = {grids}

[interval]
a = {a}
b = {b}

[kernel]
{kernel}

[rhs]
f = {f}
"""


def _write(tmp_path, solver="krein_34", grids="[9, 17, 33]", a=0.0, b=1.0, kernel='name = "constant_scalar"\nc = 0.5', f='"1"'):
    path = tmp_path / "problem.toml"
    path.write_text(TEMPLATE.format(solver=solver, grids=grids, a=a, b=b, kernel=kernel, f=f))
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_scalar_csv_on_five_nodes(tmp_path):
    spec = _write(tmp_path, grids="[5]")
    assert main(["solve", str(spec), "--out", str(tmp_path / "o"), "--format", "csv"]) == 0
    rows = _rows(tmp_path / "o" / "solution.csv")
    assert rows[0] == ["grid_size", "t", "re_phi_1", "im_phi_1"]
    assert len(rows) == 6
    summary = _rows(tmp_path / "o" / "summary.csv")
    assert len(summary) == 2 and summary[1][2] == "ok"


def test_block_csv_columns(tmp_path):
    spec = _write(tmp_path, grids="[9]", kernel='name = "antidiag_block"\nh1 = "0.5"\nh2 = "0.5"', f='["1", "t"]', b=0.5)
    assert main(["solve", str(spec), "--out", str(tmp_path / "o"), "--format", "csv"]) == 0
    header = _rows(tmp_path / "o" / "solution.csv")[0]
    assert header[1:] == ["t", "re_phi_1", "im_phi_1", "re_phi_2", "im_phi_2"]
    assert header == solution_columns(2)


def test_json_report(tmp_path):
    spec = _write(tmp_path)
    assert main(["solve", str(spec), "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "report.json").read_text())
    assert math.isfinite(doc["condition_37_min"]) and doc["condition_37_min"] == pytest.approx(1.0)
    assert doc["status"] == "ok"
    assert [g["grid_size"] for g in doc["grids"]] == [9, 17, 33]
    assert list(doc["grids"][0]["metrics"]) == list(METRICS)
    gaps = [g["metrics"]["krein_vs_oracle_gap"] for g in doc["grids"]]
    assert gaps[0] > gaps[1] > gaps[2]
    assert min(doc["orders"]["krein_vs_oracle_gap"]) >= 1.5


def test_reported_metrics_finite_nonnegative(tmp_path):
    for solver in ("nystrom", "resolvent_35", "krein_34"):
        report = run(parse_spec(_write(tmp_path, solver=solver, grids="[9, 17]").read_text()))
        for r in report.records:
            for v in r.metrics.values():
                assert math.isfinite(v) and v >= 0


def test_deterministic_output(tmp_path):
    spec = _write(tmp_path, kernel='name = "separable_scalar"', f='"exp(t)"')
    blobs = []
    for k, fmt in enumerate(["csv", "csv", "json", "json"]):
        out = tmp_path / f"o{k}"
        assert main(["solve", str(spec), "--out", str(out), "--format", fmt]) == 0
        blobs.append(b"".join(p.read_bytes() for p in sorted(out.iterdir())))
    assert blobs[0] == blobs[1] and blobs[2] == blobs[3]


@pytest.mark.parametrize("solver", ["nystrom", "resolvent_35", "krein_34", "theorem_4_1", "theorem_4_2"])
def test_zero_kernel_linear_rhs_all_residuals_small(tmp_path, solver):
    spec = parse_spec(_write(tmp_path, solver=solver, grids="[9, 17]", kernel='name = "zero"', f='"2 - 3*t"').read_text())
    report = run(spec)
    assert not report.failed
    for r in report.records:
        for key, v in r.metrics.items():
            if key == "condition_37_min":
                assert v == pytest.approx(1.0)
            elif key != "resolvent_tolerance":
                assert v <= 1e-10, key


def test_inapplicable_exit_and_partial_output(tmp_path, capsys):
    spec = _write(tmp_path, kernel='name = "constant_scalar"\nc = 2.0', grids="[9, 16, 33]")
    code = main(["solve", str(spec), "--out", str(tmp_path / "o")])
    assert code == 3
    assert "Krein formula inapplicable" in capsys.readouterr().err
    doc = json.loads((tmp_path / "o" / "report.json").read_text())
    assert doc["status"] == "inapplicable"
    for g in doc["grids"]:
        assert g["status"] == "inapplicable"
        assert abs(g["error_xi"] - 0.5) <= g["h"]
        # the oracle still ran before the failure
        assert g["metrics"]["oracle_relative_residual"] is not None


def test_grid_and_solver_overrides(tmp_path):
    spec = _write(tmp_path)
    assert main(["solve", str(spec), "--out", str(tmp_path / "o"), "--grids", "5,9", "--solver", "nystrom"]) == 0
    doc = json.loads((tmp_path / "o" / "report.json").read_text())
    assert doc["solver"] == "nystrom" and [g["grid_size"] for g in doc["grids"]] == [5, 9]


def test_spec_error_exit(tmp_path, capsys):
    spec = _write(tmp_path, solver="magic")
    assert main(["solve", str(spec), "--out", str(tmp_path / "o")]) == 2
    assert "solver" in capsys.readouterr().err
    assert main(["solve", str(_write(tmp_path)), "--solver", "theorem_4_2"]) == 2


def test_io_error_exits(tmp_path):
    assert main(["solve", str(tmp_path / "missing.toml")]) == 4
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["solve", str(_write(tmp_path)), "--out", str(blocker / "sub")]) == 4
