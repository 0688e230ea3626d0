"""Power network, case parameters, communication hop distances and case files."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_EVEN
from importlib import resources
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .kernels import bfs_hops


class CaseError(ValueError):
    """Raised when a case file or network definition is invalid."""


def to_cents(amount) -> int:
    """Convert a money amount (str, int, float or Decimal) to integer cents."""
    try:
        value = Decimal(str(amount))
    except Exception as exc:  # decimal raises several types
        raise CaseError(f"not a money amount: {amount!r}") from exc
    return int((value * 100).quantize(Decimal(1), rounding=ROUND_HALF_EVEN))


def cents_to_str(cents: int) -> str:
    sign = "-" if cents < 0 else ""
    cents = abs(cents)
    return f"{sign}{cents // 100:,}.{cents % 100:02d}"


def branch_key(i, j) -> tuple:
    return (i, j) if i <= j else (j, i)


@dataclass(frozen=True)
class Branch:
    i: int
    j: int
    transformer: bool = False
    reliability: float | None = None  # None -> parameters.line_reliability_default

    @property
    def key(self):
        return branch_key(self.i, self.j)


@dataclass(frozen=True)
class PowerNetwork:
    """Undirected bus/branch graph with a substation partition.

    Branches are stored with ``i < j`` in a deterministic order (sorted by bus
    pair), which is also the order used everywhere a per-branch product or sum
    is formed.
    """

    buses: tuple
    branches: tuple
    substations: tuple
    controller_bus: int
    name: str = "case"
    ci_edges: tuple | None = None

    def __post_init__(self):
        _validate_network(self)
        index = {b: k for k, b in enumerate(self.buses)}
        object.__setattr__(self, "_index", MappingProxyType(index))
        bmap = {br.key: k for k, br in enumerate(self.branches)}
        object.__setattr__(self, "_branch_index", MappingProxyType(bmap))
        nbrs = {b: set() for b in self.buses}
        for br in self.branches:
            nbrs[br.i].add(br.j)
            nbrs[br.j].add(br.i)
        object.__setattr__(self, "_neighbors", MappingProxyType({b: frozenset(s) for b, s in nbrs.items()}))
        sub_of = {}
        for k, group in enumerate(self.substations):
            for b in group:
                sub_of[b] = k
        object.__setattr__(self, "_substation_of", MappingProxyType(sub_of))

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def n_substations(self) -> int:
        return len(self.substations)

    def index(self, bus) -> int:
        try:
            return self._index[bus]
        except KeyError:
            raise CaseError(f"unknown bus {bus!r}") from None

    def branch_index(self, i, j) -> int:
        try:
            return self._branch_index[branch_key(i, j)]
        except KeyError:
            raise CaseError(f"no branch between buses {i} and {j}") from None

    def has_branch(self, i, j) -> bool:
        return branch_key(i, j) in self._branch_index

    def branch(self, i, j) -> Branch:
        return self.branches[self.branch_index(i, j)]

    def substation_of(self, bus) -> int:
        self.index(bus)
        return self._substation_of[bus]

    def adjacency(self, edges: Iterable | None = None) -> np.ndarray:
        """Boolean bus adjacency matrix (no self loops)."""
        n = self.n_buses
        adj = np.zeros((n, n), dtype=bool)
        pairs = [(br.i, br.j) for br in self.branches] if edges is None else edges
        for i, j in pairs:
            a, b = self.index(i), self.index(j)
            adj[a, b] = adj[b, a] = True
        return adj


def neighbors(network: PowerNetwork, bus) -> frozenset:
    """Buses sharing a branch with ``bus``."""
    network.index(bus)
    return network._neighbors[bus]


def _validate_network(net: PowerNetwork) -> None:
    if not net.buses:
        raise CaseError("network has no buses")
    if len(set(net.buses)) != len(net.buses):
        raise CaseError("duplicate bus ids")
    declared = set(net.buses)
    seen = set()
    for pos, br in enumerate(net.branches):
        for end in (br.i, br.j):
            if end not in declared:
                raise CaseError(f"branches[{pos}]: unknown bus {end!r}")
        if br.i == br.j:
            raise CaseError(f"branches[{pos}]: self-loop at bus {br.i}")
        if br.key in seen:
            raise CaseError(f"branches[{pos}]: duplicate branch {br.key}")
        seen.add(br.key)
        if br.reliability is not None and not (0.0 < br.reliability <= 1.0):
            raise CaseError(f"branches[{pos}]: reliability must be in (0, 1]")
    covered = []
    for k, group in enumerate(net.substations):
        if not group:
            raise CaseError(f"substations[{k}] is empty")
        for b in group:
            if b not in declared:
                raise CaseError(f"substations[{k}]: unknown bus {b!r}")
        covered.extend(group)
    if len(covered) != len(set(covered)):
        raise CaseError("substations overlap: a bus appears in more than one group")
    if set(covered) != declared:
        missing = sorted(declared - set(covered))
        raise CaseError(f"substations do not cover buses {missing}")
    if net.controller_bus not in declared:
        raise CaseError(f"controller_bus: unknown bus {net.controller_bus!r}")
    if not _connected(net.buses, [(br.i, br.j) for br in net.branches]):
        raise CaseError("power network graph is disconnected")
    if net.ci_edges is not None:
        for pos, (a, b) in enumerate(net.ci_edges):
            if a not in declared or b not in declared:
                raise CaseError(f"ci_topology[{pos}]: unknown bus in ({a}, {b})")
        if not _connected(net.buses, net.ci_edges):
            raise CaseError("communication topology is disconnected")


def _connected(nodes, edges) -> bool:
    nodes = list(nodes)
    adj = {v: [] for v in nodes}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {nodes[0]}
    stack = [nodes[0]]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(nodes)


def group_substations(buses: Iterable, branches: Iterable[Branch]) -> tuple:
    """Partition buses so transformer-connected buses share a substation.

    Groups are sorted internally and ordered by their smallest bus, so the
    result does not depend on input order.
    """
    parent = {b: b for b in buses}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for br in branches:
        if br.transformer:
            ra, rb = find(br.i), find(br.j)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    groups: dict = {}
    for b in parent:
        groups.setdefault(find(b), []).append(b)
    return tuple(sorted(tuple(sorted(g)) for g in groups.values()))


@dataclass(frozen=True)
class DistanceMatrix:
    """Hop counts between buses over the communication topology."""

    buses: tuple
    hops: np.ndarray

    def __post_init__(self):
        self.hops.setflags(write=False)
        object.__setattr__(self, "_index", {b: k for k, b in enumerate(self.buses)})

    def q(self, i, j) -> int:
        return int(self.hops[self._index[i], self._index[j]])


def hop_distances(network: PowerNetwork, edges: Iterable | None = None) -> DistanceMatrix:
    """All-pairs shortest-path hop counts over the CI topology.

    ``edges`` overrides the topology; otherwise the case's ``ci_edges`` is
    used, falling back to the power graph itself.
    """
    if edges is None:
        edges = network.ci_edges
    adj = network.adjacency(edges)
    hops = np.asarray(bfs_hops(adj), dtype=np.int64)
    if (hops < 0).any():
        raise CaseError("communication topology is disconnected")
    return DistanceMatrix(network.buses, hops)


@dataclass(frozen=True)
class CaseParameters:
    """Cost, reliability and communication parameters. Money is integer cents."""

    cost_pmu: int = 881946
    cost_dulr: int = 514687
    cost_pdc: int = 775000
    cost_interrupt: int = 4000000
    line_reliability_default: float = 0.99
    compression_ratio: float = 0.0877
    message_rate: float = 20160.0
    channel_limit: int = 2
    redundancy_degree: Mapping = field(default_factory=dict)
    pmu_cost_overrides: Mapping = field(default_factory=dict)
    dulr_cost_overrides: Mapping = field(default_factory=dict)  # (bus, far_bus) -> cents
    pdc_cost_overrides: Mapping = field(default_factory=dict)
    interrupt_cost_overrides: Mapping = field(default_factory=dict)  # member bus -> cents

    def __post_init__(self):
        for name in ("cost_pmu", "cost_dulr", "cost_pdc", "cost_interrupt"):
            if getattr(self, name) < 0:
                raise CaseError(f"parameters.{name} must be >= 0")
        for name in ("pmu_cost_overrides", "dulr_cost_overrides", "pdc_cost_overrides", "interrupt_cost_overrides"):
            if any(v < 0 for v in getattr(self, name).values()):
                raise CaseError(f"parameters.{name}: costs must be >= 0")
        if not (0.0 < self.line_reliability_default <= 1.0):
            raise CaseError("parameters.line_reliability_default must be in (0, 1]")
        if not (0.0 < self.compression_ratio <= 1.0):
            raise CaseError("parameters.compression_ratio must be in (0, 1]")
        if not self.message_rate > 0:
            raise CaseError("parameters.message_rate must be > 0")
        if self.channel_limit < 0 or int(self.channel_limit) != self.channel_limit:
            raise CaseError("parameters.channel_limit must be a nonnegative integer")
        if any(t < 0 for t in self.redundancy_degree.values()):
            raise CaseError("parameters.redundancy_degree values must be >= 0")
        for name in ("redundancy_degree", "pmu_cost_overrides", "dulr_cost_overrides",
                     "pdc_cost_overrides", "interrupt_cost_overrides"):
            object.__setattr__(self, name, MappingProxyType(dict(getattr(self, name))))

    def pmu_cost(self, bus) -> int:
        return self.pmu_cost_overrides.get(bus, self.cost_pmu)

    def dulr_cost(self, bus, far_bus) -> int:
        return self.dulr_cost_overrides.get((bus, far_bus), self.cost_dulr)

    def pdc_cost(self, bus) -> int:
        return self.pdc_cost_overrides.get(bus, self.cost_pdc)

    def interrupt_cost(self, network: PowerNetwork, k: int) -> int:
        for b in network.substations[k]:
            if b in self.interrupt_cost_overrides:
                return self.interrupt_cost_overrides[b]
        return self.cost_interrupt

    def reliability(self, branch: Branch) -> float:
        return self.line_reliability_default if branch.reliability is None else branch.reliability

    def redundancy(self, bus) -> int:
        return self.redundancy_degree.get(bus, 0)


# -- case files ----------------------------------------------------------------

@dataclass(frozen=True)
class Case:
    """Everything a case file defines."""

    network: PowerNetwork
    params: CaseParameters
    options: object  # plan.PlanningOptions
    contingency: object  # contingency.ContingencyConfig

    def replace(self, **changes) -> "Case":
        d = {"network": self.network, "params": self.params, "options": self.options,
             "contingency": self.contingency}
        d.update(changes)
        return Case(**d)


BUILTIN_CASES = ("ieee9", "ieee57")


def _req(doc, key, where):
    if key not in doc:
        raise CaseError(f"{where}: missing required key '{key}'")
    return doc[key]


def _bus_keyed(mapping, where, conv=int):
    out = {}
    for k, v in (mapping or {}).items():
        try:
            out[int(k)] = conv(v)
        except (TypeError, ValueError) as exc:
            raise CaseError(f"{where}[{k!r}]: {exc}") from None
    return out


def _parse_pair(text, where):
    if isinstance(text, (list, tuple)) and len(text) == 2:
        return int(text[0]), int(text[1])
    try:
        a, b = str(text).split("-")
        return int(a), int(b)
    except ValueError:
        raise CaseError(f"{where}: expected 'i-j' branch end, got {text!r}") from None


def parse_case(doc: dict) -> Case:
    """Validate a decoded case document and build the case objects."""
    from .contingency import ContingencyConfig
    from .plan import PlanningOptions

    if not isinstance(doc, dict):
        raise CaseError("case document must be a JSON object")
    buses = _req(doc, "buses", "case")
    if not isinstance(buses, list) or not all(isinstance(b, int) and not isinstance(b, bool) for b in buses):
        raise CaseError("buses: expected a list of integer ids")
    raw_branches = _req(doc, "branches", "case")
    if not isinstance(raw_branches, list):
        raise CaseError("branches: expected a list")
    branches = []
    for pos, rb in enumerate(raw_branches):
        where = f"branches[{pos}]"
        if isinstance(rb, list):
            rb = {"from": rb[0], "to": rb[1]} if len(rb) == 2 else None
        if not isinstance(rb, dict):
            raise CaseError(f"{where}: expected an object with 'from' and 'to'")
        i, j = int(_req(rb, "from", where)), int(_req(rb, "to", where))
        rel = rb.get("reliability")
        branches.append(Branch(min(i, j), max(i, j), bool(rb.get("transformer", False)),
                               None if rel is None else float(rel)))
    declared = set(buses)
    for pos, br in enumerate(branches):
        for end in (br.i, br.j):
            if end not in declared:
                raise CaseError(f"branches[{pos}]: unknown bus {end}")
    branches.sort(key=lambda b: b.key)

    if doc.get("substations") is not None:
        subs = tuple(sorted(tuple(sorted(int(b) for b in g)) for g in doc["substations"]))
    else:
        subs = group_substations(buses, branches)
    ci = doc.get("ci_topology")
    ci_edges = None if ci is None else tuple(_parse_pair(e, f"ci_topology[{k}]") for k, e in enumerate(ci))

    network = PowerNetwork(
        buses=tuple(buses),
        branches=tuple(branches),
        substations=subs,
        controller_bus=int(_req(doc, "controller_bus", "case")),
        name=str(doc.get("name", "case")),
        ci_edges=ci_edges,
    )

    p = doc.get("parameters", {}) or {}
    known = {
        "cost_pmu", "cost_dulr", "cost_pdc", "cost_interrupt", "line_reliability_default",
        "compression_ratio", "message_rate", "channel_limit", "redundancy_degree",
        "pmu_cost_overrides", "dulr_cost_overrides", "pdc_cost_overrides", "interrupt_cost_overrides",
    }
    unknown = set(p) - known
    if unknown:
        raise CaseError(f"parameters: unknown keys {sorted(unknown)}")
    kw = {}
    for name in ("cost_pmu", "cost_dulr", "cost_pdc", "cost_interrupt"):
        if name in p:
            kw[name] = to_cents(p[name])
    for name in ("line_reliability_default", "compression_ratio", "message_rate"):
        if name in p:
            kw[name] = float(p[name])
    if "channel_limit" in p:
        kw["channel_limit"] = int(p["channel_limit"])
    kw["redundancy_degree"] = _bus_keyed(p.get("redundancy_degree"), "parameters.redundancy_degree")
    kw["pmu_cost_overrides"] = _bus_keyed(p.get("pmu_cost_overrides"), "parameters.pmu_cost_overrides", to_cents)
    kw["pdc_cost_overrides"] = _bus_keyed(p.get("pdc_cost_overrides"), "parameters.pdc_cost_overrides", to_cents)
    kw["interrupt_cost_overrides"] = _bus_keyed(
        p.get("interrupt_cost_overrides"), "parameters.interrupt_cost_overrides", to_cents)
    kw["dulr_cost_overrides"] = {
        _parse_pair(k, "parameters.dulr_cost_overrides"): to_cents(v)
        for k, v in (p.get("dulr_cost_overrides") or {}).items()
    }
    for bus in list(kw["redundancy_degree"]) + list(kw["pmu_cost_overrides"]) + list(kw["pdc_cost_overrides"]) \
            + list(kw["interrupt_cost_overrides"]):
        network.index(bus)
    for (a, b) in kw["dulr_cost_overrides"]:
        network.branch_index(a, b)
    params = CaseParameters(**kw)

    opts = doc.get("options", {}) or {}
    options = PlanningOptions.from_dict(opts, network)
    contingency = ContingencyConfig.from_dict(opts.get("contingency"), network)
    return Case(network, params, options, contingency)


def load_case(source) -> Case:
    """Load a case from a built-in name, a path, a file object, bytes or a dict."""
    if isinstance(source, dict):
        return parse_case(source)
    if isinstance(source, str) and source in BUILTIN_CASES:
        text = resources.files("wamsplan.cases").joinpath(f"{source}.json").read_text()
    elif isinstance(source, (bytes, bytearray)):
        text = source.decode("utf-8")
    elif hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"case file is not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}") from None
    return parse_case(doc)


def _money(cents: int):
    return cents / 100 if cents % 100 else cents // 100


def case_to_dict(case: Case) -> dict:
    """Serialize a case back to the case-file document shape."""
    net, params = case.network, case.params
    branches = []
    for br in net.branches:
        d = {"from": br.i, "to": br.j, "transformer": br.transformer}
        if br.reliability is not None:
            d["reliability"] = br.reliability
        branches.append(d)
    doc = {
        "name": net.name,
        "buses": list(net.buses),
        "branches": branches,
        "substations": [list(g) for g in net.substations],
        "controller_bus": net.controller_bus,
        "parameters": {
            "cost_pmu": _money(params.cost_pmu),
            "cost_dulr": _money(params.cost_dulr),
            "cost_pdc": _money(params.cost_pdc),
            "cost_interrupt": _money(params.cost_interrupt),
            "line_reliability_default": params.line_reliability_default,
            "compression_ratio": params.compression_ratio,
            "message_rate": params.message_rate,
            "channel_limit": params.channel_limit,
            "redundancy_degree": {str(k): v for k, v in sorted(params.redundancy_degree.items())},
            "pmu_cost_overrides": {str(k): _money(v) for k, v in sorted(params.pmu_cost_overrides.items())},
            "dulr_cost_overrides": {f"{a}-{b}": _money(v) for (a, b), v in sorted(params.dulr_cost_overrides.items())},
            "pdc_cost_overrides": {str(k): _money(v) for k, v in sorted(params.pdc_cost_overrides.items())},
            "interrupt_cost_overrides": {
                str(k): _money(v) for k, v in sorted(params.interrupt_cost_overrides.items())},
        },
        "options": case.options.to_dict(),
    }
    doc["options"]["contingency"] = case.contingency.to_dict()
    if net.ci_edges is not None:
        doc["ci_topology"] = [list(e) for e in net.ci_edges]
    return doc


def dump_case(case: Case) -> str:
    return json.dumps(case_to_dict(case), indent=2, sort_keys=False) + "\n"
