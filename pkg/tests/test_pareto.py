import csv
import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from wamsplan import check_plan, enumerate_states, hop_distances
from wamsplan.milp import OBJECTIVES, build_model, extract_plan
from wamsplan.objectives import evaluate
from wamsplan.pareto import (PROJECTIONS, dominates, epsilon_scan, exact_epsilon, frontier_csv, frontier_json,
                             non_dominated_filter, weight_grid, weighted_sum_scan, write_frontier)
from wamsplan.solver import solve

from conftest import TOY_CASES, toy_case

# published 9-bus frontier rows (cost, unreliability, traffic)
TABLE2_ROWS = [
    (1.70e5, 2.88e-4, 3.44e5),
    (1.77e5, 9.61e-5, 3.44e5),
    (1.85e5, 2.88e-4, 3.54e4),
    (2.18e5, 0.0, 4.10e5),
    (2.35e5, 3.84e-4, 2.48e4),
    (2.42e5, 0.0, 4.60e4),
    (2.84e5, 1.92e-4, 2.48e4),
]

RICH_TOYS = ["path3-double-outages", "path4-transformer", "star4-one-channel", "path3-existing"]


def test_filter_drops_strictly_dominated():
    assert non_dominated_filter([(1, 1, 1), (2, 2, 2)]) == [(1, 1, 1)]


def test_filter_keeps_incomparable():
    assert non_dominated_filter([(1, 2, 3), (3, 2, 1)]) == [(1, 2, 3), (3, 2, 1)]


def test_filter_dedupes_keeping_first():
    a, b = [1, 2, 3], [1, 2, 3]
    out = non_dominated_filter([a, b, (0, 5, 5)])
    assert out == [a, (0, 5, 5)] and out[0] is a


def test_table2_rows_are_mutually_non_dominated():
    assert non_dominated_filter(TABLE2_ROWS) == TABLE2_ROWS


def test_weak_dominance_needs_a_strict_coordinate():
    assert dominates((1, 2, 3), (1, 2, 4))
    assert not dominates((1, 2, 3), (1, 2, 3))
    assert not dominates((1, 3, 3), (2, 2, 3))


vectors = st.lists(st.tuples(*[st.integers(0, 6)] * 3), max_size=25)


@given(vectors)
def test_filter_properties(vecs):
    kept = non_dominated_filter(vecs)
    assert len(set(kept)) == len(kept)
    assert not any(dominates(a, b) for a in kept for b in kept)
    for v in vecs:
        assert v in kept or any(dominates(k, v) for k in kept)
    # stable: kept points appear in input order
    firsts = [vecs.index(k) for k in kept]
    assert firsts == sorted(firsts)
    assert non_dominated_filter(kept) == kept


def test_weight_grid():
    grid = weight_grid(2)
    assert len(grid) == 6
    assert all(abs(sum(w) - 1) < 1e-12 for w in grid)
    with pytest.raises(ValueError):
        weight_grid(0)


def _frontier_ok(case, frontier):
    states = enumerate_states(case.network, case.params, case.contingency)
    dist = hop_distances(case.network)
    vecs = frontier.vectors()
    assert not any(dominates(a, b) for a in vecs for b in vecs)
    assert vecs == sorted(vecs)
    for p in frontier:
        assert check_plan(p.plan, case.network, case.params, case.options, states, dist) == []
        assert evaluate(p.plan, case.network, case.params, states, dist, case.options) == p.objectives


def test_resolution_one_gives_the_ideal_points(ieee9):
    f = epsilon_scan(ieee9, resolution=1)
    _frontier_ok(ieee9, f)
    assert 1 <= len(f) <= 3
    assert {p.provenance["method"] for p in f} == {"ideal"}
    costs = sorted(v[0] for v in f.vectors())
    assert costs[0] == 16964899
    assert min(v[1] for v in f.vectors()) == 0.0


def test_weighted_extremes_on_ieee9(ieee9):
    f = weighted_sum_scan(ieee9, weights=[(1, 0, 0), (0, 1, 0)])
    vecs = f.vectors()
    assert min(v[0] for v in vecs) == 16964899
    assert any(v[1] == 0.0 for v in vecs)
    _frontier_ok(ieee9, f)


@pytest.mark.parametrize("name", sorted(TOY_CASES))
def test_scans_agree_with_exact_frontier(name):
    case = toy_case(name)
    exact = exact_epsilon(case)
    _frontier_ok(case, exact)
    eps = epsilon_scan(case, resolution=8, refine=True)
    weighted = weighted_sum_scan(case, steps=4)
    assert set(weighted.vectors()) <= set(exact.vectors())
    assert set(eps.vectors()) <= set(exact.vectors())
    assert not exact.partial


def _two_objective_frontier(case, a, b):
    """Exact (a, b) frontier by stepping an upper bound on b, lexicographic in (a, b)."""
    states = enumerate_states(case.network, case.params, case.contingency)
    problem = build_model(case.network, case.params, case.options, states, hop_distances(case.network))
    out = []
    bound = None
    while True:
        prob = problem if bound is None else problem.with_upper_bounds({b: bound})
        res = solve(prob.scalarize({a: 1}))
        if res.status == "infeasible":
            return out
        va = problem.objectives[a].value(res.assignment)
        res = solve(prob.with_upper_bounds({a: va + 1e-9 * max(1, abs(va))}).scalarize({b: 1}))
        plan = extract_plan(problem, res.assignment)
        vec = evaluate(plan, case.network, case.params, states, hop_distances(case.network), case.options)
        out.append((getattr(vec, a), getattr(vec, b)))
        vb = getattr(vec, b)
        bound = vb - max(1e-3 if b != "unreliability" else 1e-9, 1e-6 * abs(vb))
        if b == "cost":
            bound = vb - 1


@pytest.mark.parametrize("name", RICH_TOYS)
@pytest.mark.parametrize("pair", PROJECTIONS, ids=lambda p: "-".join(p))
def test_two_objective_frontiers_are_projections(name, pair):
    case = toy_case(name)
    three = exact_epsilon(case)
    axis = {k: i for i, k in enumerate(OBJECTIVES)}
    projected = {(v[axis[pair[0]]], v[axis[pair[1]]]) for v in three.vectors()}
    two = _two_objective_frontier(case, *pair)
    assert two
    for point in two:
        assert point in projected


@pytest.mark.parametrize("name", RICH_TOYS)
def test_frontier_is_deterministic(name):
    case = toy_case(name)
    a = epsilon_scan(case, resolution=6)
    b = epsilon_scan(case, resolution=6)
    assert frontier_csv(a) == frontier_csv(b)
    assert frontier_json(a, name) == frontier_json(b, name)
    assert frontier_csv(exact_epsilon(case)) == frontier_csv(exact_epsilon(case))


def test_prohibition_never_lowers_min_cost(ieee9):
    base = weighted_sum_scan(ieee9, weights=[(1, 0, 0)]).vectors()[0][0]
    banned = ieee9.replace(options=ieee9.options.replace(prohibited_buses={6}))
    assert weighted_sum_scan(banned, weights=[(1, 0, 0)]).vectors()[0][0] >= base
    existing = banned.replace(options=banned.options.replace(existing_pmus={7: {5, 8}}))
    assert weighted_sum_scan(existing, weights=[(1, 0, 0)]).vectors()[0][0] < base


def test_capped_cells_flag_the_frontier_partial(ieee9):
    f = epsilon_scan(ieee9, resolution=2, max_nodes=1)
    assert f.partial
    assert f.points


def test_infeasible_case_gives_empty_frontier(ieee9):
    broke = ieee9.replace(options=ieee9.options.replace(max_budget=100))
    for f in (epsilon_scan(broke, resolution=2), exact_epsilon(broke), weighted_sum_scan(broke, steps=1)):
        assert len(f) == 0 and not f.partial


def test_argument_checks(ieee9):
    with pytest.raises(ValueError, match="permutation"):
        epsilon_scan(ieee9, order=("cost", "cost", "traffic"))
    with pytest.raises(ValueError, match="resolution"):
        epsilon_scan(ieee9, resolution=0)
    with pytest.raises(ValueError, match="weight"):
        weighted_sum_scan(toy_case("two-bus"), weights=[(0, 0, 0)])


def test_exports(tmp_path):
    case = toy_case("path3-double-outages")
    f = exact_epsilon(case)
    rows = list(csv.DictReader(io.StringIO(frontier_csv(f))))
    assert len(rows) == len(f)
    assert rows[0]["plan_id"] == "plan-001"
    doc = json.loads(frontier_json(f, "toy"))
    assert doc["case"] == "toy" and doc["method"] == "exact" and len(doc["points"]) == len(f)
    assert doc["points"][0]["cost_cents"] == f.points[0].objectives.cost
    paths = write_frontier(f, tmp_path / "out", "toy")
    names = sorted(p.split("/")[-1] for p in paths)
    assert names == sorted(["frontier.csv", "frontier.json"] + [f"projection_{x}_{y}.csv" for x, y in PROJECTIONS])
    proj = (tmp_path / "out" / "projection_unreliability_traffic.csv").read_text().splitlines()
    assert proj[0] == "point,unreliability,traffic" and len(proj) == len(f) + 1
