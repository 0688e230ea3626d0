import numpy as np
import pytest
from hypothesis import assume, given, reject, settings
from hypothesis import strategies as st

from wamsplan import PlacementPlan, check_plan, enumerate_states, evaluate, hop_distances, plan_from_notation
from wamsplan.contingency import ContingencyConfig, unreliability
from wamsplan.milp import build_model, extract_plan
from wamsplan.oracle import OracleSpaceError, brute_force_plan, brute_force_unreliability
from wamsplan.solver import solve

from conftest import TOY_CASES, WEIGHTS, make_case, toy_case
from test_contingency import SOLUTION_1, networks

PMU, DULR, PDC, OUTAGE = 881946, 514687, 775000, 4000000


def _oracle(case, weights=None, **kw):
    return brute_force_plan(case.network, case.params, case.options, weights, case.contingency, **kw)


def _solve(case, weights):
    states = enumerate_states(case.network, case.params, case.contingency)
    dist = hop_distances(case.network)
    problem = build_model(case.network, case.params, case.options, states, dist)
    res = solve(problem.scalarize(weights))
    return res, problem, states, dist


def test_fixture_set_is_large_enough():
    assert len(TOY_CASES) >= 10


@pytest.mark.parametrize("name", sorted(TOY_CASES))
@pytest.mark.parametrize("weights", WEIGHTS, ids=lambda w: ",".join(w))
def test_solver_matches_oracle(name, weights):
    case = toy_case(name)
    ref = _oracle(case, weights)
    res, problem, states, dist = _solve(case, weights)
    if ref is None:
        assert res.status == "infeasible"
        return
    assert res.status == "optimal"
    assert res.objective_value == pytest.approx(ref.value, rel=1e-9, abs=1e-12)
    if weights == {"cost": 1.0}:
        assert res.objective_value == ref.cost


@pytest.mark.parametrize("name", sorted(TOY_CASES))
def test_oracle_plan_agrees_with_production_evaluators(name):
    # the oracle computes its own objectives; production code must reproduce them on the oracle's plan
    case = toy_case(name)
    ref = _oracle(case, {"cost": 1.0, "traffic": 10.0})
    states = enumerate_states(case.network, case.params, case.contingency)
    dist = hop_distances(case.network)
    assert check_plan(ref.plan, case.network, case.params, case.options, states, dist) == []
    vec = evaluate(ref.plan, case.network, case.params, states, dist, case.options)
    assert vec.cost == ref.cost
    assert vec.unreliability == pytest.approx(ref.unreliability, rel=1e-12, abs=1e-15)
    assert vec.traffic == pytest.approx(ref.traffic, rel=1e-12, abs=1e-9)


def test_triangle_needs_one_pmu():
    ref = _oracle(toy_case("triangle"))
    assert ref.cost == PMU + PDC + OUTAGE == 5656946
    assert len(ref.plan.pmus()) == 1
    assert not ref.plan.dulrs()


def test_two_bus_prefers_a_dulr():
    # a DULR observes both ends of its branch and is cheaper than a PMU
    ref = _oracle(toy_case("two-bus"))
    assert ref.cost == DULR + PDC + OUTAGE
    assert len(ref.plan.dulrs()) == 1 and not ref.plan.pmus()
    pricey = make_case([1, 2], [[1, 2]], params={"cost_dulr": 10000.0})
    ref = _oracle(pricey)
    assert ref.cost == PMU + PDC + OUTAGE
    assert len(ref.plan.pmus()) == 1


def test_single_bus_takes_a_pmu():
    ref = _oracle(toy_case("single-bus"))
    assert ref.cost == PMU + PDC + OUTAGE
    assert ref.plan.pmus()[0][0] == 1


def test_infeasible_case_returns_none():
    case = make_case([1, 2], [[1, 2]], options={"max_budget": 1.0})
    assert _oracle(case) is None


def test_space_guard():
    case = make_case(list(range(1, 7)), [[i, i + 1] for i in range(1, 6)])
    with pytest.raises(OracleSpaceError):
        _oracle(case, max_space=1000)


def test_unreliability_guard():
    buses = list(range(1, 23))
    case = make_case(buses, [[i, i + 1] for i in range(1, 22)])
    plan = PlacementPlan.empty(case.network.buses)
    with pytest.raises(OracleSpaceError, match="21 failable"):
        brute_force_unreliability(plan, case.network, "all", case.params)


def test_empty_plan_is_unobservable_everywhere():
    case = make_case([1, 2, 3], [[1, 2], [2, 3]])
    plan = PlacementPlan.empty(case.network.buses)
    assert brute_force_unreliability(plan, case.network, "all", case.params) == pytest.approx(3.0, rel=1e-15)


def test_self_dulrs_give_zero_unreliability():
    case = make_case([1, 2, 3], [[1, 2], [2, 3]])
    n = 3
    dulr = np.zeros((n, n), dtype=np.uint8)
    dulr[0, 1] = dulr[1, 2] = dulr[2, 1] = 1
    plan = PlacementPlan(case.network.buses, np.zeros((n, n)), dulr, np.zeros(n), np.zeros((n, n)))
    assert brute_force_unreliability(plan, case.network, "all", case.params) == 0.0


def test_solution1_full_enumeration(ieee9):
    plan = plan_from_notation(ieee9.network, *SOLUTION_1)
    full = brute_force_unreliability(plan, ieee9.network, None, ieee9.params)
    assert full == 0.030000000000000023
    cs = enumerate_states(ieee9.network, ieee9.params, ContingencyConfig("non_transformer", 6))
    assert unreliability(plan, cs)[1] == full


@settings(max_examples=25, deadline=None, derandomize=True)
@given(st.data())
def test_random_small_networks_match_exactly(data):
    case = data.draw(networks(max_buses=5))
    assume(len(case.network.branches) <= 6)
    try:
        ref = _oracle(case)
    except OracleSpaceError:
        reject()  # outside the brute force's reach, not a comparison
    res, problem, states, dist = _solve(case, {"cost": 1.0})
    if ref is None:
        assert res.status == "infeasible"
        return
    assert res.objective_value == ref.cost
    plan = extract_plan(problem, res.assignment)
    assert evaluate(plan, case.network, case.params, states, dist, case.options).cost == ref.cost


def test_tight_traffic_bound_is_not_rounded_over():
    # traffic 40320 must not slip under a bound 0.04 below it
    case = toy_case("star4-one-channel")
    case = case.replace(options=case.options.replace(max_unreliability=0.0294, max_traffic=40319.96))
    ref = _oracle(case)
    res = _solve(case, {"cost": 1.0})[0]
    assert ref.cost == res.objective_value == 11094061
    assert ref.traffic == 3536.064


@pytest.mark.parametrize("name", ["path3-double-outages", "path4-transformer", "star4-one-channel"])
def test_capped_solves_match_oracle_along_the_frontier(name):
    from wamsplan.pareto import exact_epsilon
    case = toy_case(name)
    for point in exact_epsilon(case):
        v = point.objectives
        capped = case.replace(options=case.options.replace(max_unreliability=v.unreliability, max_traffic=v.traffic))
        ref = _oracle(capped)
        res = _solve(capped, {"cost": 1.0})[0]
        assert res.objective_value == ref.cost == v.cost
