"""Brute-force reference solvers for tiny cases.

Everything here is recomputed from the raw case fields: hop counts, outage
states and their probabilities, observability, cost and traffic. Nothing goes
through the MILP, the contingency module or the objective evaluators, so the
results can be used to audit them.
"""
from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .plan import PlacementPlan

DEFAULT_MAX_SPACE = 2 ** 24
MAX_FAILABLE = 20


class OracleSpaceError(ValueError):
    """The case is too large to enumerate."""


@dataclass(frozen=True)
class OracleResult:
    plan: PlacementPlan
    value: float
    cost: int
    unreliability: float
    traffic: float
    explored: int


def _subsets(items, max_size=None):
    top = len(items) if max_size is None else min(max_size, len(items))
    for r in range(top + 1):
        yield from itertools.combinations(items, r)


def _branch_table(network):
    return {(min(br.i, br.j), max(br.i, br.j)): br for br in network.branches}


def _reliability(br, params):
    if br.reliability is not None:
        return br.reliability
    return 0.99 if params is None else params.line_reliability_default


def _failable_positions(network, failable):
    """Positions in ``network.branches`` of the failable branches, ascending."""
    if failable is None or failable == "non_transformer":
        return [k for k, br in enumerate(network.branches) if not br.transformer]
    if failable == "all":
        return list(range(len(network.branches)))
    pos = {(min(br.i, br.j), max(br.i, br.j)): k for k, br in enumerate(network.branches)}
    return sorted(pos[(min(a, b), max(a, b))] for a, b in failable)


def _probability(network, params, failable, failed):
    p = 1.0
    for k in failable:
        rel = _reliability(network.branches[k], params)
        p *= (1.0 - rel) if k in failed else rel
    return p


def _hops(network):
    """BFS hop counts over the communication edges (or the power graph)."""
    buses = list(network.buses)
    edges = network.ci_edges if network.ci_edges is not None else [(br.i, br.j) for br in network.branches]
    adj = {b: set() for b in buses}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    out = {}
    for src in buses:
        dist = {src: 0}
        queue = deque([src])
        while queue:
            x = queue.popleft()
            for y in adj[x]:
                if y not in dist:
                    dist[y] = dist[x] + 1
                    queue.append(y)
        for dst in buses:
            if dst not in dist:
                raise OracleSpaceError("communication topology is disconnected")
            out[src, dst] = dist[dst]
    return out


def _observed(plan, network, failed_keys):
    """Set of bus positions observed when the branches in ``failed_keys`` are out."""
    buses = list(network.buses)
    table = _branch_table(network)
    seen = set()
    for i in range(len(buses)):
        if plan.pmu[i, i] or plan.dulr[i].any():
            seen.add(i)
        for j in range(len(buses)):
            if j == i or not (plan.pmu[j, i] or plan.dulr[j, i]):
                continue
            key = (min(buses[i], buses[j]), max(buses[i], buses[j]))
            if key in table and key not in failed_keys:
                seen.add(i)
    return seen


def brute_force_unreliability(plan, network, failable=None, params=None) -> float:
    """System unreliability of ``plan`` over every outage combination.

    All ``2**k`` subsets of the ``k`` failable branches are visited, so this
    is the full-order value; pass a config-limited set through
    :func:`brute_force_plan` for truncated enumerations.
    """
    fail = _failable_positions(network, failable)
    if len(fail) > MAX_FAILABLE:
        raise OracleSpaceError(f"{len(fail)} failable branches; at most {MAX_FAILABLE} can be enumerated")
    n = len(network.buses)
    terms = []
    for failed in _subsets(fail):
        p = _probability(network, params, fail, set(failed))
        keys = {(min(network.branches[k].i, network.branches[k].j),
                 max(network.branches[k].i, network.branches[k].j)) for k in failed}
        terms.extend([p] * (n - len(_observed(plan, network, keys))))
    return math.fsum(terms)


def _interrupt(network, params, options, k):
    group = network.substations[k]
    if options.waive_existing_interruption and any(b in options.existing_pmus for b in group):
        return 0
    for b in group:
        if b in params.interrupt_cost_overrides:
            return params.interrupt_cost_overrides[b]
    return params.cost_interrupt


def brute_force_plan(network, params, options, weights=None, contingency=None,
                     max_space: int = DEFAULT_MAX_SPACE):
    """Exhaustively search every placement and return the best one.

    ``weights`` maps ``cost`` (cents), ``unreliability`` and ``traffic`` to
    nonnegative weights; the default minimizes cost. Returns ``None`` when no
    placement meets the constraints. Ties keep the first plan found.
    """
    weights = {"cost": 1.0} if weights is None else dict(weights)
    wc = weights.get("cost", 0.0)
    wu = weights.get("unreliability", 0.0)
    wd = weights.get("traffic", 0.0)

    buses = list(network.buses)
    n = len(buses)
    pos = {b: k for k, b in enumerate(buses)}
    table = _branch_table(network)
    nbrs = {b: sorted(x for x in buses if x != b and (min(b, x), max(b, x)) in table) for b in buses}
    T = params.channel_limit if options.channel_limit is None else options.channel_limit

    def measurable(a, b):
        br = table.get((min(a, b), max(a, b)))
        return br is not None and (options.transformer_observability or not br.transformer)

    def need(b):
        if b in options.redundancy_degree:
            return options.redundancy_degree[b] + 1
        return params.redundancy_degree.get(b, 0) + 1

    # outage states
    max_order = 1 if contingency is None else contingency.max_order
    fail = _failable_positions(network, None if contingency is None else contingency.failable)
    states = []
    for r in range(max_order + 1):
        for failed in itertools.combinations(fail, r):
            keys = {(min(network.branches[k].i, network.branches[k].j),
                     max(network.branches[k].i, network.branches[k].j)) for k in failed}
            states.append((_probability(network, params, fail, set(failed)), keys))

    # per-bus device options: (pmu, channels, dulr far ends)
    per_bus = []
    for b in buses:
        if b in options.prohibited_buses:
            per_bus.append([(False, (), ())])
            continue
        cand = [x for x in nbrs[b] if measurable(b, x)]
        forced = set(options.existing_pmus.get(b, ())) - {b}
        pmu_choices = [] if b in options.existing_pmus else [None]
        pmu_choices += [ch for ch in _subsets(cand, T) if forced <= set(ch)]
        opts = []
        for ch in pmu_choices:
            for du in _subsets(cand):
                opts.append((ch is not None, tuple(ch or ()), du))
        per_bus.append(opts)

    space = math.prod(len(o) for o in per_bus) * 2 ** n
    if space > max_space:
        raise OracleSpaceError(f"search space {space} exceeds {max_space}")

    # numeric summary of each option
    width = 8
    summaries = []
    for b, opts in zip(buses, per_bus):
        rows = []
        for has_pmu, ch, du in opts:
            cost = 0
            if has_pmu and b not in options.existing_pmus:
                cost += params.pmu_cost_overrides.get(b, params.cost_pmu)
            for x in du:
                cost += params.dulr_cost_overrides.get((b, x), params.cost_dulr)
            hosts = has_pmu or bool(du)
            counts = 0
            if hosts:
                counts += (int(has_pmu) + len(du)) << (width * pos[b])
            for x in set(ch) | set(du):
                counts += ((x in ch) + (x in du)) << (width * pos[x])
            masks = []
            for _, keys in states:
                mask = (1 << pos[b]) if hosts else 0
                for x in set(ch) | set(du):
                    if (min(b, x), max(b, x)) not in keys:
                        mask |= 1 << pos[x]
                masks.append(mask)
            rows.append((cost, hosts, counts, tuple(masks)))
        summaries.append(rows)

    hops = _hops(network)
    ctrl = network.controller_bus
    rate = {b: params.message_rate * (len(nbrs[b]) + 1) for b in buses}
    pdc_cache = {}

    def pdc_options(host_mask):
        """Pareto (pdc cost, traffic) choices for a hosting set."""
        if host_mask in pdc_cache:
            return pdc_cache[host_mask]
        hosts = [b for b in buses if host_mask >> pos[b] & 1]
        found = []
        for r in range(0 if not hosts else 1, n + 1):
            for pdcs in itertools.combinations(buses, r):
                assign = {}
                for h in hosts:
                    best = None
                    for j in pdcs:
                        cap = options.traffic_caps.get((h, j))
                        if cap is not None and rate[h] > cap:
                            continue
                        t = (hops[h, j] + hops[j, ctrl] * params.compression_ratio) * rate[h]
                        if best is None or t < best[0]:
                            best = (t, j)
                    if best is None:
                        break
                    assign[h] = best
                else:
                    pcost = sum(params.pdc_cost_overrides.get(j, params.cost_pdc) for j in pdcs)
                    traffic = math.fsum(t for t, _ in assign.values())
                    found.append((pcost, traffic, pdcs, {h: j for h, (_, j) in assign.items()}))
        keep = [f for f in found
                if not any(g[0] <= f[0] and g[1] <= f[1] and (g[0], g[1]) != (f[0], f[1]) for g in found)]
        pdc_cache[host_mask] = keep
        return keep

    full = (1 << n) - 1
    need_ok = [(pos[b], need(b)) for b in buses]
    best = None
    explored = 0
    for combo in itertools.product(*[range(len(r)) for r in summaries]):
        explored += 1
        cost = 0
        host_mask = 0
        counts = 0
        masks = [0] * len(states)
        for k, c in enumerate(combo):
            oc, oh, ocnt, om = summaries[k][c]
            cost += oc
            if oh:
                host_mask |= 1 << k
            counts += ocnt
            for s, m in enumerate(om):
                masks[s] |= m
        if any((counts >> (width * i)) & 0xFF < t for i, t in need_ok):
            continue
        for k in range(len(network.substations)):
            if any(host_mask >> pos[b] & 1 for b in network.substations[k]):
                cost += _interrupt(network, params, options, k)
        terms = []
        for (p, _), m in zip(states, masks):
            missing = bin(full & ~m).count("1")
            terms.extend([p] * missing)
        unrel = math.fsum(terms)
        if options.max_unreliability is not None and unrel > options.max_unreliability * (1 + 1e-9) + 1e-12:
            continue
        for pcost, traffic, pdcs, assign in pdc_options(host_mask):
            total = cost + pcost
            if options.max_budget is not None and total > options.max_budget:
                continue
            if options.max_traffic is not None and traffic > options.max_traffic * (1 + 1e-9):
                continue
            value = wc * total + wu * unrel + wd * traffic
            if best is None or value < best[0]:
                best = (value, total, unrel, traffic, combo, pdcs, assign)
    if best is None:
        return None

    value, total, unrel, traffic, combo, pdcs, assign = best
    M = np.zeros((n, n), dtype=np.uint8)
    D = np.zeros((n, n), dtype=np.uint8)
    P = np.zeros(n, dtype=np.uint8)
    L = np.zeros((n, n), dtype=np.uint8)
    for k, c in enumerate(combo):
        has_pmu, ch, du = per_bus[k][c]
        if has_pmu:
            M[k, k] = 1
            for x in ch:
                M[k, pos[x]] = 1
        for x in du:
            D[k, pos[x]] = 1
    for j in pdcs:
        P[pos[j]] = 1
    for h, j in assign.items():
        L[pos[h], pos[j]] = 1
    plan = PlacementPlan(tuple(buses), M, D, P, L)
    return OracleResult(plan, value, total, unrel, traffic, explored)
