"""Solver-independent evaluation of cost, unreliability and data traffic."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .contingency import ContingencySet, unreliability
from .network import CaseParameters, DistanceMatrix, PowerNetwork, cents_to_str, neighbors
from .plan import PlacementPlan, PlanningOptions, substation_interrupt_cost


class AssignmentError(ValueError):
    """Bus-to-PDC assignment does not match the installed devices."""


@dataclass(frozen=True)
class ObjectiveVector:
    cost: int  # cents
    unreliability: float
    traffic: float  # bit-hops per second

    def as_tuple(self):
        return (self.cost, self.unreliability, self.traffic)

    @property
    def cost_money(self) -> float:
        return self.cost / 100

    def __str__(self):
        return f"C={cents_to_str(self.cost)} U={self.unreliability:.6e} D={self.traffic:.6e}"


def construction_cost(plan: PlacementPlan, network: PowerNetwork, params: CaseParameters,
                      options: PlanningOptions | None = None) -> int:
    """Total construction cost in cents.

    PMU, DULR and interruption indicators are re-derived from the plan
    matrices. Pre-installed PMUs carry no PMU cost.
    """
    existing = options.existing_pmus if options is not None else {}
    total = 0
    for i, bus in enumerate(network.buses):
        if plan.pmu[i].any() and bus not in existing:
            total += params.pmu_cost(bus)
        for j in np.flatnonzero(plan.dulr[i]):
            total += params.dulr_cost(bus, network.buses[j])
        if plan.pdc[i]:
            total += params.pdc_cost(bus)
    for k in plan.interrupted_substations(network):
        total += substation_interrupt_cost(network, params, options, k)
    return total


def traffic_coefficients(network: PowerNetwork, params: CaseParameters, distances: DistanceMatrix) -> np.ndarray:
    """Per (device bus, PDC bus) traffic if that assignment is made."""
    n = network.n_buses
    c = network.index(network.controller_bus)
    q = distances.hops
    coef = np.empty((n, n))
    for i, bus in enumerate(network.buses):
        rate = params.message_rate * (len(neighbors(network, bus)) + 1)
        for j in range(n):
            coef[i, j] = (q[i, j] + q[j, c] * params.compression_ratio) * rate
    return coef


def data_traffic(plan: PlacementPlan, distances: DistanceMatrix, network: PowerNetwork,
                 params: CaseParameters) -> float:
    """Maximum data traffic rate from devices to PDCs and on to the controller."""
    hosting = plan.device_mask()
    rows = plan.assign.sum(axis=1)
    for i, bus in enumerate(network.buses):
        want = 1 if hosting[i] else 0
        if rows[i] != want:
            raise AssignmentError(
                f"bus {bus}: {int(rows[i])} PDC assignments, expected {want}")
    for i, j in zip(*np.nonzero(plan.assign)):
        if not plan.pdc[j]:
            raise AssignmentError(
                f"bus {network.buses[i]} assigned to bus {network.buses[j]} which has no PDC")
    coef = traffic_coefficients(network, params, distances)
    return math.fsum(coef[i, j] for i, j in zip(*np.nonzero(plan.assign)))


def evaluate(plan: PlacementPlan, network: PowerNetwork, params: CaseParameters,
             contingencies: ContingencySet, distances: DistanceMatrix,
             options: PlanningOptions | None = None) -> ObjectiveVector:
    return ObjectiveVector(
        construction_cost(plan, network, params, options),
        unreliability(plan, contingencies)[1],
        data_traffic(plan, distances, network, params),
    )
