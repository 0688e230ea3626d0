"""Line-outage system states, per-state bus observability, unreliability indices."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .kernels import observed_states
from .network import CaseError, CaseParameters, PowerNetwork

DEFAULT_STATE_CAP = 1_000_000


@dataclass(frozen=True)
class ContingencyConfig:
    """Which branches may fail and how many at once.

    ``failable`` is ``"non_transformer"``, ``"all"`` or an explicit tuple of
    branch keys ``(i, j)`` with ``i < j``.
    """

    failable: object = "non_transformer"
    max_order: int = 1
    include_base_state: bool = True
    probability_floor: float = 0.0
    state_cap: int = DEFAULT_STATE_CAP

    def __post_init__(self):
        if self.max_order < 0:
            raise CaseError("contingency.max_order must be >= 0")
        if not self.include_base_state:
            raise CaseError("contingency.include_base_state is always true")
        if isinstance(self.failable, str):
            if self.failable not in ("non_transformer", "all"):
                raise CaseError("contingency.failable must be 'non_transformer', 'all' or a branch list")
        else:
            object.__setattr__(self, "failable", tuple(sorted(
                (min(int(a), int(b)), max(int(a), int(b))) for a, b in self.failable)))

    def failable_branches(self, network: PowerNetwork) -> tuple:
        """Indices into ``network.branches`` of the failable set, ascending."""
        if self.failable == "all":
            idx = list(range(network.n_branches))
        elif self.failable == "non_transformer":
            idx = [k for k, br in enumerate(network.branches) if not br.transformer]
        else:
            idx = sorted(network.branch_index(a, b) for a, b in self.failable)
            if len(set(idx)) != len(idx):
                raise CaseError("contingency.failable lists a branch twice")
        if self.max_order > len(idx):
            raise CaseError(f"contingency.max_order {self.max_order} exceeds {len(idx)} failable branches")
        return tuple(idx)

    @classmethod
    def from_dict(cls, doc: dict | None, network: PowerNetwork | None = None) -> "ContingencyConfig":
        doc = doc or {}
        failable = doc.get("failable", "non_transformer")
        if isinstance(failable, list):
            failable = tuple(tuple(x) if isinstance(x, (list, tuple)) else tuple(map(int, str(x).split("-")))
                             for x in failable)
        cfg = cls(
            failable=failable,
            max_order=int(doc.get("max_order", 1)),
            probability_floor=float(doc.get("probability_floor", 0.0)),
            state_cap=int(doc.get("state_cap", DEFAULT_STATE_CAP)),
        )
        if network is not None:
            cfg.failable_branches(network)
        return cfg

    def to_dict(self) -> dict:
        failable = self.failable if isinstance(self.failable, str) else [list(k) for k in self.failable]
        return {"failable": failable, "max_order": self.max_order,
                "probability_floor": self.probability_floor, "state_cap": self.state_cap}


@dataclass(frozen=True)
class SystemState:
    outages: tuple  # branch indices, ascending
    probability: float

    def adjacency(self, network: PowerNetwork) -> np.ndarray:
        """State connectivity matrix with ones on the diagonal."""
        failed = set(self.outages)
        edges = [(br.i, br.j) for k, br in enumerate(network.branches) if k not in failed]
        adj = network.adjacency(edges)
        np.fill_diagonal(adj, True)
        return adj


@dataclass(frozen=True)
class ContingencySet:
    network: PowerNetwork
    failable: tuple
    states: tuple

    def __len__(self):
        return len(self.states)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([s.probability for s in self.states])

    def outage_matrix(self) -> np.ndarray:
        """Boolean (states x branches) matrix of failed branches."""
        out = np.zeros((len(self.states), self.network.n_branches), dtype=bool)
        for k, s in enumerate(self.states):
            out[k, list(s.outages)] = True
        return out


def _count_states(n: int, k: int) -> int:
    return sum(math.comb(n, r) for r in range(k + 1))


def state_probability(network: PowerNetwork, params: CaseParameters, failable, outages) -> float:
    """Product of branch survival/failure probabilities over the failable set.

    Multiplication runs in branch order so results are bit-reproducible.
    """
    failed = set(outages)
    p = 1.0
    for k in failable:
        rel = params.reliability(network.branches[k])
        p *= (1.0 - rel) if k in failed else rel
    return p


def enumerate_states(network: PowerNetwork, params: CaseParameters,
                     config: ContingencyConfig | None = None) -> ContingencySet:
    """Base state plus every outage combination up to ``max_order`` branches."""
    config = config or ContingencyConfig()
    failable = config.failable_branches(network)
    total = _count_states(len(failable), config.max_order)
    if total > config.state_cap:
        raise CaseError(f"contingency enumeration would produce {total} states (cap {config.state_cap})")
    states = []
    for order in range(config.max_order + 1):
        for combo in itertools.combinations(failable, order):
            states.append(SystemState(combo, state_probability(network, params, failable, combo)))
    # lexicographic by outage set, expressed as sorted bus-pair keys
    states.sort(key=lambda s: [network.branches[k].key for k in s.outages])
    return ContingencySet(network, failable, tuple(states))


def _measured_edges(plan, network: PowerNetwork):
    """Directed observations that depend on a branch being in service."""
    dst, brs = [], []
    n = network.n_buses
    pmu, dulr = plan.pmu, plan.dulr
    for j in range(n):
        for i in range(n):
            if i != j and (pmu[j, i] or dulr[j, i]):
                a, b = network.buses[j], network.buses[i]
                if network.has_branch(a, b):
                    dst.append(i)
                    brs.append(network.branch_index(a, b))
    return np.array(dst, dtype=np.int64), np.array(brs, dtype=np.int64)


def observability_matrix(plan, contingencies: ContingencySet) -> np.ndarray:
    """Boolean (states x buses) observability of every bus in every state.

    A bus is observed by a PMU on itself, by any DULR at its own end of a
    branch (state independent), or by a PMU channel / DULR at the far end of an
    in-service branch.
    """
    network = contingencies.network
    self_obs = (np.diag(plan.pmu) > 0) | plan.dulr.any(axis=1)
    dst, brs = _measured_edges(plan, network)
    return np.asarray(observed_states(self_obs, dst, brs, contingencies.outage_matrix()), dtype=bool)


def observability(plan, state: SystemState, network: PowerNetwork) -> np.ndarray:
    """0/1 observability vector of one state."""
    cs = ContingencySet(network, (), (state,))
    return observability_matrix(plan, cs)[0].astype(np.uint8)


def unreliability(plan, contingencies: ContingencySet):
    """Per-bus unreliability and the system total.

    Sums are correctly rounded (``math.fsum``), so the result does not depend
    on accumulation order. The total is the rounded sum of every
    ``p_s * (1 - o_is)`` term rather than of the rounded per-bus values.
    """
    obs = observability_matrix(plan, contingencies)
    probs = [s.probability for s in contingencies.states]
    per_bus = []
    terms = []
    for i in range(obs.shape[1]):
        bus_terms = [probs[s] for s in range(obs.shape[0]) if not obs[s, i]]
        per_bus.append(math.fsum(bus_terms))
        terms.extend(bus_terms)
    return np.array(per_bus), math.fsum(terms)
