import json

import pytest

from wotlab.cli import EXIT_NEGATIVE, EXIT_OK, EXIT_USAGE, main

DELTA0 = '{"points": [0.0]}'
DELTA1 = '{"points": [1.0]}'
SYMMETRIC = '{"points": [-1.0, 1.0], "weights": [0.5, 0.5]}'


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip().startswith("{") else out)


def test_check_order(capsys):
    code, report = _run(capsys, "check-order", DELTA0, SYMMETRIC)
    assert code == EXIT_OK
    assert report["ok"] is True
    assert report["values"]["verdict"] is True
    assert report["witnesses"]["revalidated"] is True

    code, report = _run(capsys, "check-order", SYMMETRIC, DELTA0)
    assert code == EXIT_NEGATIVE
    assert report["values"]["margin"] > 0


def test_check_order_icx(capsys):
    code, _ = _run(capsys, "check-order", DELTA0, DELTA1, "--order", "icx")
    assert code == EXIT_OK
    code, _ = _run(capsys, "check-order", DELTA0, DELTA1, "--order", "cx")
    assert code == EXIT_NEGATIVE


def test_usage_errors(capsys, tmp_path):
    assert main(["check-order", DELTA0, SYMMETRIC, "--order", "lattice"]) == EXIT_USAGE
    assert main(["check-order", DELTA0, '{"points": [[0.0, 0.0]]}']) == EXIT_USAGE
    assert main(["solve", str(tmp_path / "missing.json")]) == EXIT_USAGE
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema": "wotlab/0", "mu": DELTA0, "nu": DELTA0, "cost": {"cost": "martingale"}}))
    assert main(["solve", str(bad)]) == EXIT_USAGE
    assert capsys.readouterr().out == ""
    with pytest.raises(SystemExit):
        main(["transport"])


def test_solve_strassen(capsys):
    code, report = _run(capsys, "solve", "strassen_feasible")
    assert code == EXIT_OK
    assert report["schema"] == "wotlab/1"
    assert report["instance"] == "strassen_feasible"
    assert report["values"]["primal"] == pytest.approx(0.0, abs=1e-9)
    assert abs(report["values"]["gap"]) <= 1e-6
    assert report["values"]["monotone"] is True
    assert "timings" not in report


def test_solve_converse_gap(capsys):
    code, report = _run(capsys, "solve", "converse_gap")
    assert code == EXIT_NEGATIVE
    assert report["values"]["primal"] == pytest.approx(1.0)
    assert report["values"]["dual"] <= 1e-8
    assert report["values"]["gap"] >= 0.999999
    assert report["values"]["monotone"] is False


def test_solve_primal_side_only(capsys):
    code, report = _run(capsys, "solve", "kr_1d", "--side", "primal", "--timings")
    assert code == EXIT_OK
    assert report["values"]["primal"] == pytest.approx(1.0, abs=1e-7)
    assert "dual" not in report["values"]
    assert "primal" in report["timings"]


def test_solve_infinite_primal(capsys, tmp_path):
    path = tmp_path / "shifted.json"
    path.write_text(json.dumps({"mu": json.loads(DELTA1), "nu": json.loads(DELTA0), "cost": {"cost": "martingale"}}))
    code, report = _run(capsys, "solve", str(path))
    assert code == EXIT_NEGATIVE
    assert report["instance"] == "shifted"
    assert report["values"]["primal"] == "inf"
    assert report["values"]["dual"] == "inf"
    assert report["values"]["gap"] == 0.0
    assert report["certificates"]["primal_infeasible"]["verdict"] is False


def test_project(capsys):
    code, report = _run(capsys, "project", "brenier_strassen")
    assert code == EXIT_OK
    assert report["values"]["lhs"] == pytest.approx(4.0, abs=1e-6)
    assert report["values"]["max_discrepancy"] <= 1e-5
    assert report["details"]["projection"]["eta"]["points"] == [[0.0]]


def test_verify(capsys):
    code, report = _run(capsys, "verify", "--suite", "hulls", "--n", "2", "--seed", "5")
    assert code == EXIT_OK
    assert report["values"] == {"failed": 0, "passed": 2}
    assert report["config"]["seed"] == 5
    assert main(["verify", "--suite", "hulls", "--n", "0"]) == EXIT_USAGE


def test_scenarios_and_output_options(capsys, tmp_path):
    code, report = _run(capsys, "scenarios")
    assert code == EXIT_OK
    names = [entry["name"] for entry in report["details"]["scenarios"]]
    assert names == sorted(names)
    assert "brenier_strassen" in names

    out = tmp_path / "report.json"
    assert main(["solve", "strassen_feasible", "--out", str(out)]) == EXIT_OK
    assert capsys.readouterr().out == ""
    assert json.loads(out.read_text())["command"] == "solve"

    code, table = _run(capsys, "scenarios", "--format", "table")
    assert code == EXIT_OK
    assert "details.scenarios[0].name" in table


def test_reports_are_deterministic(capsys):
    _, first = _run(capsys, "solve", "kr_1d")
    _, second = _run(capsys, "solve", "kr_1d")
    assert first == second


def test_solve_martingale_benamou_brenier(capsys):
    code, report = _run(capsys, "solve", "martingale_bb")
    assert code == EXIT_OK
    values = report["values"]
    assert values["primal"] == pytest.approx(-0.81886624279, abs=1e-6)
    assert abs(values["gap"]) <= 1e-4 * (1.0 + abs(values["primal"]))
    assert report["config"]["cost"]["params"]["gauss_nodes"] == 16


def test_solve_monopolist(capsys):
    code, report = _run(capsys, "solve", "monopolist_1d")
    assert code == EXIT_OK
    assert report["values"]["monotone"] is True
    assert abs(report["values"]["gap"]) <= 1e-5


def test_project_icx(capsys):
    code, report = _run(capsys, "project", "icx_projection")
    assert code == EXIT_OK
    assert report["values"]["max_discrepancy"] <= 1e-5
    assert report["config"]["cone"]["family"] == "icx"
