import io
import json
import subprocess
import sys

import pytest

from wamsplan import load_case, plan_from_notation
from wamsplan.cli import EXIT_CAPPED, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, main

from test_contingency import SOLUTION_1, SOLUTION_4

TOY = {"buses": [1, 2, 3, 4], "branches": [[1, 2], [1, 3], [1, 4]], "controller_bus": 1,
       "parameters": {"channel_limit": 1}, "name": "star4"}


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


@pytest.fixture
def toy_file(tmp_path):
    path = tmp_path / "star4.json"
    path.write_text(json.dumps(TOY))
    return str(path)


def _plan_file(tmp_path, rows, name="plan.json"):
    net = load_case("ieee9").network
    path = tmp_path / name
    path.write_text(plan_from_notation(net, *rows).dumps())
    return str(path)


def test_plan_min_cost(tmp_path):
    target = tmp_path / "p.json"
    code, text = run("plan", "ieee9", "--objective", "cost", "--out", str(target))
    assert code == EXIT_OK
    assert "C = 169,648.99" in text
    assert "status optimal" in text
    for label in ("PMUs", "DULRs", "PDCs"):
        assert label in text
    doc = json.loads(target.read_text())
    assert set(doc) == {"pmus", "dulrs", "pdcs", "assignments"}


def test_plan_with_prohibited_bus(tmp_path):
    target = tmp_path / "p.json"
    code, text = run("plan", "ieee9", "--prohibit-bus", "6", "--out", str(target))
    assert code == EXIT_OK
    assert "C = 169,648.99" in text
    doc = json.loads(target.read_text())
    assert 6 not in [p["bus"] for p in doc["pmus"]] + [d["bus"] for d in doc["dulrs"]]


def test_plan_with_existing_pmu():
    code, text = run("plan", "ieee9", "--prohibit-bus", "6", "--existing-pmu", "7:5,8", "--lexicographic")
    assert code == EXIT_OK
    assert "C = 124,502.12" in text


def test_impossible_budget_exits_2():
    code, _ = run("plan", "ieee9", "--objective", "cost", "--max-budget", "1")
    assert code == EXIT_INFEASIBLE


def test_plan_is_deterministic():
    assert run("plan", "ieee9", "--objective", "cost=1,traffic=0.5") == \
        run("plan", "ieee9", "--objective", "cost=1,traffic=0.5")


def test_evaluate_solution4_has_zero_unreliability(tmp_path):
    code, text = run("evaluate", "ieee9", _plan_file(tmp_path, SOLUTION_4))
    assert code == EXIT_OK
    assert "U = 0.000000e+00" in text
    assert "C = 218,468.45" in text
    assert text.count("\n") >= 9 + 4


def test_evaluate_reports_per_bus_unreliability(tmp_path):
    code, text = run("evaluate", "ieee9", _plan_file(tmp_path, SOLUTION_1))
    assert code == EXIT_OK
    lines = text.splitlines()
    table = lines[lines.index("bus  U_i") + 1:]
    assert len(table) == 9
    assert table[5].startswith("6 ")
    assert float(table[5].split()[1]) > 0


def test_evaluate_names_channel_limit_violation(tmp_path):
    net = load_case("ieee9").network
    plan = plan_from_notation(net, "1(1)->9, 2(2)->9, 3(3)->9, 4(4,1,5,6)->9", "7(5)->9, 9(8)->9", "9")
    path = tmp_path / "bad.json"
    path.write_text(plan.dumps())
    code, text = run("evaluate", "ieee9", "--transformer-observability", str(path))
    assert code == EXIT_INFEASIBLE
    assert "violation channel-limit" in text


def test_evaluate_names_missing_assignment(tmp_path):
    doc = json.loads(open(_plan_file(tmp_path, SOLUTION_1)).read())
    del doc["assignments"]["4"]
    path = tmp_path / "unassigned.json"
    path.write_text(json.dumps(doc))
    code, text = run("evaluate", "ieee9", str(path))
    assert code == EXIT_INFEASIBLE
    assert "violation single-pdc-assignment" in text


def test_frontier_exact_on_a_case_file(toy_file, tmp_path):
    out_dir = tmp_path / "front"
    code, text = run("frontier", toy_file, "--method", "exact", "--out", str(out_dir))
    assert code == EXIT_OK
    rows = text.strip().splitlines()
    assert rows[0].startswith("point,cost,unreliability,traffic")
    assert len(rows) == 1 + 9
    assert (out_dir / "frontier.json").exists()
    assert run("frontier", toy_file, "--method", "exact") == (code, text)


def test_weighted_frontier_is_a_subset(toy_file):
    _, exact = run("frontier", toy_file, "--method", "exact")
    code, weighted = run("frontier", toy_file, "--method", "weighted", "--grid", "3")
    assert code == EXIT_OK
    cols = lambda text: {tuple(r.split(",")[1:4]) for r in text.strip().splitlines()[1:]}
    assert cols(weighted) <= cols(exact)


def test_capped_frontier_exits_3(toy_file):
    code, _ = run("frontier", toy_file, "--method", "epsilon", "--resolution", "2", "--max-nodes", "0")
    assert code == EXIT_CAPPED


def test_export_lp(tmp_path):
    target = tmp_path / "m.lp"
    code, _ = run("export-lp", "ieee9", "--objective", "traffic", "--out", str(target))
    assert code == EXIT_OK
    text = target.read_text()
    assert "objective: traffic" in text
    assert run("export-lp", "ieee9", "--objective", "traffic")[1] == text


def test_usage_errors(tmp_path):
    assert run()[0] == EXIT_USAGE
    assert run("plan", str(tmp_path / "missing.json"))[0] == EXIT_USAGE
    assert run("plan", "ieee9", "--objective", "speed")[0] == EXIT_USAGE
    assert run("plan", "ieee9", "--existing-pmu", "7:x")[0] == EXIT_USAGE
    assert run("plan", "ieee9", "--prohibit-bus", "99")[0] == EXIT_USAGE
    assert run("plan", "ieee9", "--delegate", "no-such-solver {lp} {sol}")[0] == EXIT_USAGE


def test_delegate_without_template(monkeypatch):
    monkeypatch.delenv("WAMSPLAN_SOLVER_TEMPLATE", raising=False)
    assert run("plan", "ieee9", "--delegate")[0] == EXIT_USAGE


def test_hidden_oracle_command(toy_file):
    code, text = run("oracle", toy_file)
    assert code == EXIT_OK
    assert json.loads(text)["cost_cents"] == 6319061


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "wamsplan.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "{plan,frontier,evaluate,export-lp}" in proc.stdout
    assert "oracle" not in proc.stdout
