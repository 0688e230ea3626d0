"""Direct feasibility check of a plan against every planning constraint.

This walks the plan matrices constraint by constraint and shares nothing with
the MILP builder, so it can audit solver output.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import CaseParameters, PowerNetwork, neighbors
from .plan import PlacementPlan, PlanningOptions

# constraint names, in the order they are checked
CONSTRAINTS = (
    "pmu-branch-measurement",
    "dulr-placement",
    "pmu-host-voltage",
    "pdc-assignment-target",
    "single-pdc-assignment",
    "observability-redundancy",
    "channel-limit",
    "prohibited-bus",
    "existing-pmu",
    "traffic-cap",
    "budget-cap",
    "unreliability-cap",
    "traffic-total-cap",
)


@dataclass(frozen=True)
class Violation:
    constraint: str
    message: str

    def __str__(self):
        return f"{self.constraint}: {self.message}"


class InfeasiblePlanError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


def check_plan(plan: PlacementPlan, network: PowerNetwork, params: CaseParameters,
               options: PlanningOptions | None = None, contingencies=None, distances=None) -> list:
    """Return every constraint violation of ``plan`` (empty list if feasible).

    Cap constraints on unreliability and total traffic are only checked when
    ``contingencies`` / ``distances`` are supplied.
    """
    options = options or PlanningOptions()
    out = []
    buses = network.buses
    n = len(buses)
    M, D, P, L = plan.pmu, plan.dulr, plan.pdc, plan.assign

    def usable(i, j):
        a, b = buses[i], buses[j]
        if not network.has_branch(a, b):
            return False
        return options.transformer_observability or not network.branch(a, b).transformer

    for i in range(n):
        for j in range(n):
            if i != j and M[i, j] and not usable(i, j):
                out.append(Violation("pmu-branch-measurement",
                                     f"PMU at bus {buses[i]} measures branch to {buses[j]}, "
                                     "which is not a measurable line"))
            if D[i, j] and (i == j or not usable(i, j)):
                out.append(Violation("dulr-placement",
                                     f"DULR at bus {buses[i]} on branch to {buses[j]}, which is not a line"))
        if M[i].any() and not M[i, i]:
            out.append(Violation("pmu-host-voltage",
                                 f"bus {buses[i]} has PMU channels but no PMU measuring its own voltage"))

    hosting = M.any(axis=1) | D.any(axis=1)
    for i in range(n):
        for j in np.flatnonzero(L[i]):
            if not P[j]:
                out.append(Violation("pdc-assignment-target",
                                     f"bus {buses[i]} reports to bus {buses[j]}, which has no PDC"))
        want = 1 if hosting[i] else 0
        if int(L[i].sum()) != want:
            out.append(Violation("single-pdc-assignment",
                                 f"bus {buses[i]} has {int(L[i].sum())} PDC assignments, expected {want}"))

    for i in range(n):
        count = int(M[i, i]) + int(D[i].sum())
        for j in range(n):
            if j != i and network.has_branch(buses[i], buses[j]):
                count += int(M[j, i]) + int(D[j, i])
        need = options.redundancy(params, buses[i]) + 1
        if count < need:
            out.append(Violation("observability-redundancy",
                                 f"bus {buses[i]} observed by {count} device(s), needs {need}"))

    limit = options.channels(params)
    for i in range(n):
        channels = int(M[i].sum()) - int(M[i, i])
        if channels > limit:
            out.append(Violation("channel-limit",
                                 f"PMU at bus {buses[i]} uses {channels} channels, limit {limit}"))

    for b in sorted(options.prohibited_buses):
        i = network.index(b)
        if M[i].any() or D[i].any():
            out.append(Violation("prohibited-bus", f"devices planned at prohibited bus {b}"))

    for b, observed in sorted(options.existing_pmus.items()):
        i = network.index(b)
        for o in sorted(observed):
            if not M[i, network.index(o)]:
                out.append(Violation("existing-pmu",
                                     f"existing PMU at bus {b} must keep observing bus {o}"))

    for (a, b), cap in sorted(options.traffic_caps.items()):
        i, j = network.index(a), network.index(b)
        rate = params.message_rate * (len(neighbors(network, a)) + 1)
        if L[i, j] and rate > cap:
            out.append(Violation("traffic-cap",
                                 f"bus {a} -> PDC {b} carries {rate:g} bit/s, cap {cap:g}"))

    if options.max_budget is not None:
        from .objectives import construction_cost

        cost = construction_cost(plan, network, params, options)
        if cost > options.max_budget:
            out.append(Violation("budget-cap", f"cost {cost / 100:.2f} exceeds budget {options.max_budget / 100:.2f}"))
    if options.max_unreliability is not None and contingencies is not None:
        from .contingency import unreliability

        u = unreliability(plan, contingencies)[1]
        if u > options.max_unreliability * (1 + 1e-9) + 1e-12:
            out.append(Violation("unreliability-cap", f"unreliability {u:.6e} exceeds {options.max_unreliability:.6e}"))
    if options.max_traffic is not None and distances is not None and not any(
            v.constraint in ("single-pdc-assignment", "pdc-assignment-target") for v in out):
        from .objectives import data_traffic

        d = data_traffic(plan, distances, network, params)
        if d > options.max_traffic * (1 + 1e-9):
            out.append(Violation("traffic-total-cap", f"traffic {d:.6e} exceeds {options.max_traffic:.6e}"))
    return out
