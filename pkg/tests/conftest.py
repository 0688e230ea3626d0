import functools

import pytest

from wamsplan import enumerate_states, hop_distances, load_case
from wamsplan.milp import build_model
from wamsplan.network import parse_case


def make_case(buses, branches, controller=None, substations=None, params=None, options=None, ci=None):
    doc = {"buses": list(buses), "branches": list(branches), "controller_bus": controller or buses[0]}
    if substations is not None:
        doc["substations"] = substations
    if params:
        doc["parameters"] = params
    if options:
        doc["options"] = options
    if ci is not None:
        doc["ci_topology"] = ci
    return parse_case(doc)


def xf(i, j):
    return {"from": i, "to": j, "transformer": True}


# small cases with known structure; every one is within the brute-force oracle's reach
TOY_CASES = {
    "single-bus": dict(buses=[1], branches=[], options={"contingency": {"max_order": 0}}),
    "two-bus": dict(buses=[1, 2], branches=[[1, 2]]),
    "path3": dict(buses=[1, 2, 3], branches=[[1, 2], [2, 3]]),
    "triangle": dict(buses=[1, 2, 3], branches=[[1, 2], [2, 3], [1, 3]]),
    "triangle-shared-sub": dict(buses=[1, 2, 3], branches=[[1, 2], [2, 3], [1, 3]], substations=[[1, 2], [3]]),
    "star4-one-channel": dict(buses=[1, 2, 3, 4], branches=[[1, 2], [1, 3], [1, 4]],
                              params={"channel_limit": 1}),
    "path4-transformer": dict(buses=[1, 2, 3, 4], branches=[[1, 2], xf(2, 3), [3, 4]],
                              params={"channel_limit": 1}),
    "path3-redundant-middle": dict(buses=[1, 2, 3], branches=[[1, 2], [2, 3]],
                                   params={"redundancy_degree": {"2": 1}}),
    "triangle-prohibited": dict(buses=[1, 2, 3], branches=[[1, 2], [2, 3], [1, 3]],
                                options={"prohibited_buses": [2]}),
    "path3-existing": dict(buses=[1, 2, 3], branches=[[1, 2], [2, 3]], options={"existing_pmus": {"2": [1]}}),
    "path3-double-outages": dict(buses=[1, 2, 3], branches=[[1, 2], [2, 3]],
                                 params={"line_reliability_default": 0.9},
                                 options={"contingency": {"max_order": 2}}),
    "path3-ci-and-overrides": dict(buses=[1, 2, 3], branches=[[1, 2], [2, 3]], controller=3,
                                   ci=[[1, 3], [2, 3]],
                                   params={"pdc_cost_overrides": {"1": 100.0}, "pmu_cost_overrides": {"2": 6000.0},
                                           "interrupt_cost_overrides": {"3": 1000.0}}),
    "path3-traffic-cap": dict(buses=[1, 2, 3], branches=[[1, 2], [2, 3]],
                              options={"traffic_caps": [{"from": 2, "to": 2, "max_bps": 1.0},
                                                        {"from": 1, "to": 1, "max_bps": 1.0}]}),
    "path3-transformer-observable": dict(buses=[1, 2, 3], branches=[[1, 2], xf(2, 3)],
                                         options={"transformer_observability": True}),
}

# objective weights exercised against the oracle; cost is in cents
WEIGHTS = (
    {"cost": 1.0},
    {"cost": 1.0, "unreliability": 1e9},
    {"cost": 1.0, "traffic": 10.0},
    {"unreliability": 1.0, "cost": 1e-9},
)


def toy_case(name):
    return make_case(**TOY_CASES[name])


@pytest.fixture(scope="session")
def ieee9():
    return load_case("ieee9")


@pytest.fixture(scope="session")
def ieee57():
    return load_case("ieee57")


@functools.lru_cache(maxsize=None)
def _model(name):
    case = load_case(name)
    states = enumerate_states(case.network, case.params, case.contingency)
    dist = hop_distances(case.network)
    return case, states, dist, build_model(case.network, case.params, case.options, states, dist)


@pytest.fixture(scope="session")
def ieee9_model():
    """(case, contingencies, distances, problem) for the default 9-bus case."""
    return _model("ieee9")


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
