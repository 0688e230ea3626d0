"""Placement plans, planning options and the plan-file format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .network import CaseError, CaseParameters, PowerNetwork, to_cents


@dataclass(frozen=True)
class PlanningOptions:
    """Practical requirements layered on top of a case.

    ``existing_pmus`` maps a bus to the buses its pre-installed PMU observes
    (the host bus itself included). ``transformer_observability`` controls
    whether a measured current through a transformer branch makes the far bus
    observable; it is off by default because tap ratios are treated as
    unknown, and DULRs are line relays so they are never placed on
    transformer branches while it is off.
    """

    prohibited_buses: frozenset = frozenset()
    existing_pmus: Mapping = field(default_factory=dict)
    redundancy_degree: Mapping = field(default_factory=dict)
    channel_limit: int | None = None
    traffic_caps: Mapping = field(default_factory=dict)  # (bus, pdc_bus) -> bits/s
    max_budget: int | None = None  # cents
    max_unreliability: float | None = None
    max_traffic: float | None = None
    transformer_observability: bool = False
    waive_existing_interruption: bool = True

    def __post_init__(self):
        object.__setattr__(self, "prohibited_buses", frozenset(self.prohibited_buses))
        object.__setattr__(self, "existing_pmus", MappingProxyType(
            {b: frozenset(obs) | {b} for b, obs in self.existing_pmus.items()}))
        for name in ("redundancy_degree", "traffic_caps"):
            object.__setattr__(self, name, MappingProxyType(dict(getattr(self, name))))
        clash = self.prohibited_buses & set(self.existing_pmus)
        if clash:
            raise CaseError(f"options: buses {sorted(clash)} are both prohibited and have existing PMUs")
        if self.channel_limit is not None and self.channel_limit < 0:
            raise CaseError("options.channel_limit must be >= 0")
        if any(t < 0 for t in self.redundancy_degree.values()):
            raise CaseError("options.redundancy_degree values must be >= 0")

    def validate(self, network: PowerNetwork) -> None:
        for b in self.prohibited_buses:
            network.index(b)
        for b, obs in self.existing_pmus.items():
            network.index(b)
            for o in obs:
                if o != b and not network.has_branch(b, o):
                    raise CaseError(f"options.existing_pmus[{b}]: bus {o} is not a neighbor")
        for b in self.redundancy_degree:
            network.index(b)
        for (i, j) in self.traffic_caps:
            network.index(i)
            network.index(j)

    def redundancy(self, params: CaseParameters, bus) -> int:
        return self.redundancy_degree.get(bus, params.redundancy(bus))

    def channels(self, params: CaseParameters) -> int:
        return params.channel_limit if self.channel_limit is None else self.channel_limit

    def measurable(self, network: PowerNetwork, i, j) -> bool:
        """Whether a measured current on branch (i, j) can reveal the far bus."""
        if i == j or not network.has_branch(i, j):
            return False
        return self.transformer_observability or not network.branch(i, j).transformer

    def replace(self, **changes) -> "PlanningOptions":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return PlanningOptions(**d)

    @classmethod
    def from_dict(cls, doc: dict | None, network: PowerNetwork | None = None) -> "PlanningOptions":
        doc = doc or {}
        known = {"prohibited_buses", "existing_pmus", "redundancy_degree", "channel_limit", "traffic_caps",
                 "max_budget", "max_unreliability", "max_traffic", "transformer_observability",
                 "waive_existing_interruption", "contingency"}
        unknown = set(doc) - known
        if unknown:
            raise CaseError(f"options: unknown keys {sorted(unknown)}")
        caps = {}
        for pos, cap in enumerate(doc.get("traffic_caps") or []):
            try:
                caps[(int(cap["from"]), int(cap["to"]))] = float(cap["max_bps"])
            except (KeyError, TypeError, ValueError):
                raise CaseError(f"options.traffic_caps[{pos}]: expected {{from, to, max_bps}}") from None
        opts = cls(
            prohibited_buses=frozenset(int(b) for b in doc.get("prohibited_buses") or ()),
            existing_pmus={int(k): frozenset(int(x) for x in v) for k, v in (doc.get("existing_pmus") or {}).items()},
            redundancy_degree={int(k): int(v) for k, v in (doc.get("redundancy_degree") or {}).items()},
            channel_limit=None if doc.get("channel_limit") is None else int(doc["channel_limit"]),
            traffic_caps=caps,
            max_budget=None if doc.get("max_budget") is None else to_cents(doc["max_budget"]),
            max_unreliability=None if doc.get("max_unreliability") is None else float(doc["max_unreliability"]),
            max_traffic=None if doc.get("max_traffic") is None else float(doc["max_traffic"]),
            transformer_observability=bool(doc.get("transformer_observability", False)),
            waive_existing_interruption=bool(doc.get("waive_existing_interruption", True)),
        )
        if network is not None:
            opts.validate(network)
        return opts

    def to_dict(self) -> dict:
        d = {
            "prohibited_buses": sorted(self.prohibited_buses),
            "existing_pmus": {str(b): sorted(obs) for b, obs in sorted(self.existing_pmus.items())},
            "redundancy_degree": {str(b): t for b, t in sorted(self.redundancy_degree.items())},
            "transformer_observability": self.transformer_observability,
            "waive_existing_interruption": self.waive_existing_interruption,
        }
        if self.channel_limit is not None:
            d["channel_limit"] = self.channel_limit
        if self.traffic_caps:
            d["traffic_caps"] = [{"from": i, "to": j, "max_bps": v} for (i, j), v in sorted(self.traffic_caps.items())]
        if self.max_budget is not None:
            d["max_budget"] = self.max_budget / 100
        if self.max_unreliability is not None:
            d["max_unreliability"] = self.max_unreliability
        if self.max_traffic is not None:
            d["max_traffic"] = self.max_traffic
        return d


def substation_interrupt_cost(network: PowerNetwork, params: CaseParameters,
                              options: PlanningOptions | None, k: int) -> int:
    """Interruption cost of substation ``k``; waived where an existing PMU sits."""
    if options is not None and options.waive_existing_interruption:
        if any(b in options.existing_pmus for b in network.substations[k]):
            return 0
    return params.interrupt_cost(network, k)


def _frozen(a, dtype=np.uint8):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PlacementPlan:
    """PMU, DULR and PDC placement with bus-to-PDC assignment.

    Matrices are indexed by bus position in ``buses``. ``pmu[i, i]`` marks a
    PMU at bus i and ``pmu[i, j]`` a channel on branch (i, j); ``dulr[i, j]`` a
    DULR at the i end of (i, j); ``assign[i, j]`` sends bus i's streams to the
    PDC at j.
    """

    buses: tuple
    pmu: np.ndarray
    dulr: np.ndarray
    pdc: np.ndarray
    assign: np.ndarray

    def __post_init__(self):
        n = len(self.buses)
        for name, shape in (("pmu", (n, n)), ("dulr", (n, n)), ("pdc", (n,)), ("assign", (n, n))):
            arr = _frozen(getattr(self, name))
            if arr.shape != shape:
                raise ValueError(f"plan.{name} has shape {arr.shape}, expected {shape}")
            if ((arr != 0) & (arr != 1)).any():
                raise ValueError(f"plan.{name} must be binary")
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls, buses) -> "PlacementPlan":
        n = len(buses)
        return cls(tuple(buses), np.zeros((n, n)), np.zeros((n, n)), np.zeros(n), np.zeros((n, n)))

    def __eq__(self, other):
        if not isinstance(other, PlacementPlan):
            return NotImplemented
        return self.buses == other.buses and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in ("pmu", "dulr", "pdc", "assign"))

    def __hash__(self):
        return hash((self.buses, self.pmu.tobytes(), self.dulr.tobytes(), self.pdc.tobytes(), self.assign.tobytes()))

    def _idx(self, bus):
        return self.buses.index(bus)

    def has_pmu(self, bus) -> bool:
        i = self._idx(bus)
        return bool(self.pmu[i].any())

    def device_mask(self) -> np.ndarray:
        """Buses hosting a PMU or at least one DULR."""
        return (self.pmu.any(axis=1) | self.dulr.any(axis=1))

    def device_buses(self) -> list:
        return [b for b, f in zip(self.buses, self.device_mask()) if f]

    def pdc_buses(self) -> list:
        return [b for b, f in zip(self.buses, self.pdc) if f]

    def pmus(self) -> list:
        """``(bus, observed buses)`` per PMU, observed set including the host."""
        out = []
        for i, b in enumerate(self.buses):
            if self.pmu[i].any():
                out.append((b, [self.buses[j] for j in np.flatnonzero(self.pmu[i])]))
        return out

    def dulrs(self) -> list:
        return [(self.buses[i], self.buses[j]) for i, j in zip(*np.nonzero(self.dulr))]

    def assignment(self) -> dict:
        return {self.buses[i]: self.buses[j] for i, j in zip(*np.nonzero(self.assign))}

    def interrupted_substations(self, network: PowerNetwork) -> list:
        mask = self.device_mask()
        return [k for k, group in enumerate(network.substations)
                if any(mask[network.index(b)] for b in group)]

    def with_changes(self, **arrays) -> "PlacementPlan":
        d = {f: getattr(self, f) for f in ("pmu", "dulr", "pdc", "assign")}
        d.update(arrays)
        return PlacementPlan(self.buses, **d)

    # -- plan files ------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "pmus": [{"bus": b, "observes": obs} for b, obs in self.pmus()],
            "dulrs": [{"bus": b, "to": t} for b, t in self.dulrs()],
            "pdcs": self.pdc_buses(),
            "assignments": {str(b): p for b, p in sorted(self.assignment().items())},
        }

    @classmethod
    def from_dict(cls, doc: dict, network: PowerNetwork) -> "PlacementPlan":
        n = network.n_buses
        pmu = np.zeros((n, n), dtype=np.uint8)
        dulr = np.zeros((n, n), dtype=np.uint8)
        pdc = np.zeros(n, dtype=np.uint8)
        assign = np.zeros((n, n), dtype=np.uint8)
        for pos, rec in enumerate(doc.get("pmus", [])):
            try:
                i = network.index(int(rec["bus"]))
                pmu[i, i] = 1
                for o in rec.get("observes", []):
                    pmu[i, network.index(int(o))] = 1
            except (KeyError, TypeError, ValueError) as exc:
                raise CaseError(f"plan.pmus[{pos}]: {exc}") from None
        for pos, rec in enumerate(doc.get("dulrs", [])):
            try:
                dulr[network.index(int(rec["bus"])), network.index(int(rec["to"]))] = 1
            except (KeyError, TypeError, ValueError) as exc:
                raise CaseError(f"plan.dulrs[{pos}]: {exc}") from None
        for b in doc.get("pdcs", []):
            pdc[network.index(int(b))] = 1
        for b, p in (doc.get("assignments") or {}).items():
            assign[network.index(int(b)), network.index(int(p))] = 1
        return cls(network.buses, pmu, dulr, pdc, assign)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def load_plan(path, network: PowerNetwork) -> PlacementPlan:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CaseError(f"plan file is not valid JSON: {exc.msg} (line {exc.lineno})") from None
    return PlacementPlan.from_dict(doc, network)


def notation(plan: PlacementPlan) -> dict:
    """Render the plan the way the planning tables do: ``i(a,b,...)->j``."""
    assigned = plan.assignment()

    def dest(bus):
        return f"->{assigned[bus]}" if bus in assigned else ""

    pmus = [f"{b}({','.join(str(o) for o in obs)}){dest(b)}" for b, obs in plan.pmus()]
    dulrs = [f"{b}({t}){dest(b)}" for b, t in plan.dulrs()]
    return {
        "PMUs": ", ".join(pmus) or "N/A",
        "DULRs": ", ".join(dulrs) or "N/A",
        "PDCs": ",".join(str(b) for b in plan.pdc_buses()) or "N/A",
    }


def plan_from_notation(network: PowerNetwork, pmus: str, dulrs: str, pdcs: str) -> PlacementPlan:
    """Parse the table notation back into a plan (handy for fixtures)."""
    import re

    doc = {"pmus": [], "dulrs": [], "pdcs": [], "assignments": {}}
    token = re.compile(r"(\d+)\(([\d,\s]*)\)(?:\s*(?:->|→)\s*(\d+))?")
    for m in token.finditer(pmus or ""):
        bus = int(m.group(1))
        doc["pmus"].append({"bus": bus, "observes": [int(x) for x in m.group(2).split(",") if x.strip()]})
        if m.group(3):
            doc["assignments"][str(bus)] = int(m.group(3))
    for m in token.finditer(dulrs or ""):
        bus = int(m.group(1))
        for far in m.group(2).split(","):
            doc["dulrs"].append({"bus": bus, "to": int(far)})
        if m.group(3):
            doc["assignments"][str(bus)] = int(m.group(3))
    doc["pdcs"] = [int(x) for x in re.findall(r"\d+", pdcs or "")]
    return PlacementPlan.from_dict(doc, network)
