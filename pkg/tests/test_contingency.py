import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wamsplan import (CaseError, ContingencyConfig, PlacementPlan, enumerate_states, observability,
                      plan_from_notation, unreliability)
from wamsplan.contingency import observability_matrix
from wamsplan.kernels import observed_states_numba, observed_states_numpy
from wamsplan.oracle import brute_force_unreliability

from conftest import make_case

SOLUTION_1 = ("1(1)->9, 2(2)->9, 3(3)->9", "4(6)->9, 7(5)->9, 9(8)->9", "9")
SOLUTION_4 = ("1(1)->2, 2(2)->2, 3(3)->2, 9(6,8,9)->2", "4(6)->2, 5(7)->2, 7(8)->2", "2")


def _product(factors):
    p = 1.0
    for f in factors:
        p *= f
    return p


def test_base_state_only_all_lines(ieee9):
    cs = enumerate_states(ieee9.network, ieee9.params, ContingencyConfig("all", 0))
    assert len(cs) == 1
    assert cs.states[0].outages == ()
    assert cs.states[0].probability == _product([0.99] * 9)
    assert cs.states[0].probability == pytest.approx(0.913517, abs=5e-7)


def test_single_outages_over_lines(ieee9):
    cs = enumerate_states(ieee9.network, ieee9.params)
    assert len(cs) == 7
    assert cs.states[0].probability == _product([0.99] * 6)
    single = _product([0.99] * 5 + [0.01])
    for st_ in cs.states[1:]:
        assert len(st_.outages) == 1
        assert st_.probability == pytest.approx(single, rel=1e-15)
        assert st_.probability == pytest.approx(9.5099e-3, rel=1e-4)
    # transformer branches never fail by default
    failed = {ieee9.network.branches[k] for s in cs.states for k in s.outages}
    assert not any(br.transformer for br in failed)


def test_states_sorted_by_outage_set(ieee9):
    cs = enumerate_states(ieee9.network, ieee9.params, ContingencyConfig("non_transformer", 2))
    keys = [[ieee9.network.branches[k].key for k in s.outages] for s in cs.states]
    assert keys == sorted(keys)
    assert len(cs) == 1 + 6 + 15


def test_state_cap_refuses():
    case = make_case([1, 2, 3, 4], [[1, 2], [2, 3], [3, 4], [1, 4]])
    with pytest.raises(CaseError, match="cap"):
        enumerate_states(case.network, case.params, ContingencyConfig("all", 4, state_cap=10))
    with pytest.raises(CaseError, match="exceeds"):
        ContingencyConfig("all", 5).failable_branches(case.network)


def test_state_adjacency(ieee9):
    cs = enumerate_states(ieee9.network, ieee9.params)
    st_ = next(s for s in cs.states if s.outages and ieee9.network.branches[s.outages[0]].key == (4, 6))
    a = st_.adjacency(ieee9.network)
    i, j = ieee9.network.index(4), ieee9.network.index(6)
    assert not a[i, j] and not a[j, i]
    assert a[i, ieee9.network.index(5)]
    assert np.diag(a).all()


def test_solution1_observability(ieee9):
    net = ieee9.network
    plan = plan_from_notation(net, *SOLUTION_1)
    cs = enumerate_states(net, ieee9.params)
    assert observability(plan, cs.states[0], net).all()
    st_ = next(s for s in cs.states if s.outages and net.branches[s.outages[0]].key == (4, 6))
    obs = observability(plan, st_, net)
    assert [b for b, o in zip(net.buses, obs) if not o] == [6]


def test_empty_plan_unobservable(ieee9):
    net = ieee9.network
    cs = enumerate_states(net, ieee9.params)
    empty = PlacementPlan.empty(net.buses)
    assert not observability_matrix(empty, cs).any()
    base_only = enumerate_states(net, ieee9.params, ContingencyConfig("non_transformer", 0))
    # single state of probability 0.99**6 rather than 1; the total scales with it
    assert unreliability(empty, base_only)[1] == pytest.approx(9 * base_only.states[0].probability)


def test_empty_plan_full_enumeration_counts_every_bus(ieee9):
    net = ieee9.network
    empty = PlacementPlan.empty(net.buses)
    assert brute_force_unreliability(empty, net, None, ieee9.params) == pytest.approx(9, abs=1e-12)


def test_solution4_fully_reliable_under_single_outages(ieee9):
    plan = plan_from_notation(ieee9.network, *SOLUTION_4)
    cs = enumerate_states(ieee9.network, ieee9.params)
    per_bus, total = unreliability(plan, cs)
    assert total == 0.0
    assert not per_bus.any()


def test_solution1_unreliability_single_outages(ieee9):
    plan = plan_from_notation(ieee9.network, *SOLUTION_1)
    per_bus, total = unreliability(plan, enumerate_states(ieee9.network, ieee9.params))
    single = _product([0.99] * 5 + [0.01])
    assert total == pytest.approx(3 * single, rel=1e-15)
    assert {b for b, u in zip(ieee9.network.buses, per_bus) if u} == {5, 6, 8}


def test_solution1_full_enumeration_constant(ieee9):
    # frozen from the brute-force oracle: buses 5, 6, 8 each hang on one line
    plan = plan_from_notation(ieee9.network, *SOLUTION_1)
    u_full = brute_force_unreliability(plan, ieee9.network, None, ieee9.params)
    assert u_full == 0.030000000000000023
    # truncations approach it from below
    prev = 0.0
    for k in range(7):
        u = unreliability(plan, enumerate_states(ieee9.network, ieee9.params,
                                                 ContingencyConfig("non_transformer", k)))[1]
        assert prev <= u <= u_full
        prev = u
    assert prev == u_full


@pytest.mark.parametrize("plan", [SOLUTION_1, SOLUTION_4])
def test_full_enumeration_matches_oracle_exactly(ieee9, plan):
    p = plan_from_notation(ieee9.network, *plan)
    cs = enumerate_states(ieee9.network, ieee9.params, ContingencyConfig("non_transformer", 6))
    assert unreliability(p, cs)[1] == brute_force_unreliability(p, ieee9.network, None, ieee9.params)


# -- properties on random small networks -----------------------------------------

@st.composite
def networks(draw, max_buses=6):
    n = draw(st.integers(2, max_buses))
    edges = set()
    for i in range(2, n + 1):
        edges.add((draw(st.integers(1, i - 1)), i))
    extra = draw(st.lists(st.tuples(st.integers(1, n), st.integers(1, n)), max_size=n))
    for a, b in extra:
        if a != b:
            edges.add((min(a, b), max(a, b)))
    rel = draw(st.lists(st.floats(0.5, 1.0), min_size=len(edges), max_size=len(edges)))
    xf = draw(st.lists(st.booleans(), min_size=len(edges), max_size=len(edges)))
    branches = [{"from": a, "to": b, "reliability": r, "transformer": t}
                for (a, b), r, t in zip(sorted(edges), rel, xf)]
    return make_case(list(range(1, n + 1)), branches, options={"contingency": {"failable": "all"}})


@st.composite
def plans(draw, case):
    net = case.network
    n = net.n_buses
    pmu = np.zeros((n, n), dtype=np.uint8)
    dulr = np.zeros((n, n), dtype=np.uint8)
    for br in net.branches:
        i, j = net.index(br.i), net.index(br.j)
        for a, b in ((i, j), (j, i)):
            if draw(st.booleans()):
                pmu[a, a] = pmu[a, b] = 1
            if draw(st.integers(0, 3)) == 0:
                dulr[a, b] = 1
    for i in range(n):
        if draw(st.integers(0, 3)) == 0:
            pmu[i, i] = 1
    return PlacementPlan(net.buses, pmu, dulr, np.zeros(n), np.zeros((n, n)))


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_probabilities_sum_to_one(data):
    case = data.draw(networks())
    k = len(case.network.branches)
    cs = enumerate_states(case.network, case.params, ContingencyConfig("all", k))
    assert len(cs) == 2 ** k
    assert abs(math.fsum(cs.probabilities) - 1.0) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_full_enumeration_equals_oracle(data):
    case = data.draw(networks())
    plan = data.draw(plans(case))
    net = case.network
    k = len(net.branches)
    cs = enumerate_states(net, case.params, ContingencyConfig("all", k))
    assert unreliability(plan, cs)[1] == brute_force_unreliability(plan, net, "all", case.params)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_adding_a_device_never_hurts(data):
    case = data.draw(networks())
    plan = data.draw(plans(case))
    net = case.network
    n = net.n_buses
    cs = enumerate_states(net, case.params, ContingencyConfig("all", min(2, len(net.branches))))
    before = observability_matrix(plan, cs)
    which = data.draw(st.sampled_from(["pmu", "dulr"]))
    i = data.draw(st.integers(0, n - 1))
    j = data.draw(st.integers(0, n - 1))
    arr = getattr(plan, which).copy()
    if which == "dulr" and i == j:
        return
    arr[i, j] = 1
    if which == "pmu":
        arr[i, i] = 1
    bigger = plan.with_changes(**{which: arr})
    after = observability_matrix(bigger, cs)
    assert (after >= before).all()
    assert unreliability(bigger, cs)[1] <= unreliability(plan, cs)[1]


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_self_dulr_is_state_independent(data):
    case = data.draw(networks())
    plan = data.draw(plans(case))
    net = case.network
    cs = enumerate_states(net, case.params, ContingencyConfig("all", min(2, len(net.branches))))
    obs = observability_matrix(plan, cs)
    hosts = plan.dulr.any(axis=1)
    assert obs[:, hosts].all()


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_shrinking_failable_set_never_increases_u_at_full_order(data):
    case = data.draw(networks())
    plan = data.draw(plans(case))
    net = case.network
    keys = [br.key for br in net.branches]
    drop = data.draw(st.integers(0, len(keys) - 1))
    fewer = keys[:drop] + keys[drop + 1:]
    u_all = unreliability(plan, enumerate_states(net, case.params, ContingencyConfig(tuple(keys), len(keys))))[1]
    u_less = unreliability(plan, enumerate_states(net, case.params,
                                                  ContingencyConfig(tuple(fewer), len(fewer))))[1]
    assert u_less <= u_all + 1e-12


def test_shrinking_failable_set_can_increase_truncated_u():
    # with one outage allowed, dropping a branch from the failable set removes its
    # failure states but also its failure factor from every remaining state
    case = make_case([1, 2, 3], [[1, 2], [2, 3]])
    net = case.network
    plan = plan_from_notation(net, "2(1,2,3)->2", "", "2")
    both = unreliability(plan, enumerate_states(net, case.params, ContingencyConfig(((1, 2), (2, 3)), 1)))[1]
    one = unreliability(plan, enumerate_states(net, case.params, ContingencyConfig(((2, 3),), 1)))[1]
    assert both == pytest.approx(2 * 0.01 * 0.99)
    assert one == pytest.approx(0.01)
    assert one < both  # here it drops
    plan = plan_from_notation(net, "1(1,2)->1", "2(3)->1", "1")
    both = unreliability(plan, enumerate_states(net, case.params, ContingencyConfig(((1, 2), (2, 3)), 1)))[1]
    # bus 3 is seen only across (2, 3)
    one = unreliability(plan, enumerate_states(net, case.params, ContingencyConfig(((2, 3),), 1)))[1]
    assert both == pytest.approx(0.01 * 0.99)
    assert one == pytest.approx(0.01)
    assert one > both  # and here it rises


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_observability_kernels_agree(data):
    case = data.draw(networks())
    plan = data.draw(plans(case))
    net = case.network
    cs = enumerate_states(net, case.params, ContingencyConfig("all", len(net.branches)))
    from wamsplan.contingency import _measured_edges

    self_obs = (np.diag(plan.pmu) > 0) | plan.dulr.any(axis=1)
    dst, brs = _measured_edges(plan, net)
    out = cs.outage_matrix()
    assert np.array_equal(observed_states_numpy(self_obs, dst, brs, out),
                          observed_states_numba(self_obs, dst, brs, out))
