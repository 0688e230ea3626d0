"""0-1 integer linear program for joint PMU / DULR / PDC placement."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping

import numpy as np
from scipy import sparse

from .contingency import ContingencySet
from .network import CaseError, CaseParameters, DistanceMatrix, PowerNetwork
from .objectives import traffic_coefficients
from .plan import PlacementPlan, PlanningOptions, substation_interrupt_cost

OBJECTIVES = ("cost", "unreliability", "traffic")


class ModelError(ValueError):
    """Options conflict or a model that is infeasible by construction."""


class AssignmentViolation(ValueError):
    def __init__(self, name, message):
        self.constraint = name
        super().__init__(f"{name}: {message}")


@dataclass(frozen=True)
class LinearExpr:
    coef: np.ndarray
    constant: float = 0.0

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        nz = np.flatnonzero(self.coef)
        return math.fsum(np.append(self.coef[nz] * x[nz], self.constant))


@dataclass(frozen=True, eq=False)
class MilpProblem:
    """Binary program ``min c.x`` s.t. ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``lb <= x <= ub``."""

    names: tuple
    lb: np.ndarray
    ub: np.ndarray
    A_ub: sparse.csr_matrix
    b_ub: np.ndarray
    ub_names: tuple
    A_eq: sparse.csr_matrix
    b_eq: np.ndarray
    eq_names: tuple
    objectives: Mapping
    objective: LinearExpr | None = None
    objective_label: str = ""
    layout: Mapping = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def index(self, name) -> int:
        return self.layout["index"][name]

    def with_objective(self, expr: LinearExpr, label: str = "") -> "MilpProblem":
        return replace(self, objective=expr, objective_label=label)

    def scalarize(self, weights: Mapping, label: str = "") -> "MilpProblem":
        """Weighted sum of the named objectives as the active objective."""
        coef = np.zeros(self.n_vars)
        const = 0.0
        for name, w in weights.items():
            if w:
                coef = coef + w * self.objectives[name].coef
                const += w * self.objectives[name].constant
        return self.with_objective(LinearExpr(coef, const), label or _weights_label(weights))

    def with_upper_bounds(self, bounds: Mapping) -> "MilpProblem":
        """Append ``objective <= bound`` rows (epsilon constraints)."""
        rows, rhs, names = [], [], []
        for name, bound in bounds.items():
            if bound is None:
                continue
            expr = self.objectives[name]
            rows.append(sparse.csr_matrix(expr.coef.reshape(1, -1)))
            rhs.append(bound - expr.constant)
            names.append(f"bound_{name}")
        if not rows:
            return self
        return replace(
            self,
            A_ub=sparse.vstack([self.A_ub] + rows, format="csr"),
            b_ub=np.concatenate([self.b_ub, rhs]),
            ub_names=self.ub_names + tuple(names),
        )

    def with_expr_bound(self, expr: LinearExpr, bound: float, name: str) -> "MilpProblem":
        """Append one ``expr <= bound`` row."""
        return replace(
            self,
            A_ub=sparse.vstack([self.A_ub, sparse.csr_matrix(expr.coef.reshape(1, -1))], format="csr"),
            b_ub=np.append(self.b_ub, bound - expr.constant),
            ub_names=self.ub_names + (name,),
        )

    def with_fixed(self, fixes: Mapping) -> "MilpProblem":
        lb, ub = self.lb.copy(), self.ub.copy()
        for name, v in fixes.items():
            k = self.index(name)
            lb[k] = ub[k] = v
        return replace(self, lb=lb, ub=ub)

    def drop_unused_observability(self) -> "MilpProblem":
        """Pin o variables to 0 when no objective or row gives them a role.

        Valid whenever unreliability has zero weight and is not bounded: the o
        variables then appear only in their own upper-bound rows.
        """
        o_idx = np.array(self.layout.get("o_indices", []), dtype=np.int64)
        if not len(o_idx):
            return self
        if self.objective is not None and np.any(self.objective.coef[o_idx]):
            return self
        if "bound_unreliability" in self.ub_names or "unreliability_cap" in self.ub_names:
            return self
        if any(self.A_ub[self.ub_names.index(nm)][:, o_idx].nnz for nm in set(self.ub_names)
               if nm.startswith("bound_") and nm != "bound_unreliability"):
            return self
        ub = self.ub.copy()
        ub[o_idx] = 0.0
        return replace(self, ub=ub)

    def audit(self) -> dict:
        """Variable counts by family plus structural consistency checks."""
        counts: dict = {}
        for name in self.names:
            fam = name.split("_", 1)[0]
            counts[fam] = counts.get(fam, 0) + 1
        assert self.A_ub.shape == (len(self.b_ub), self.n_vars)
        assert self.A_eq.shape == (len(self.b_eq), self.n_vars)
        assert len(self.ub_names) == len(self.b_ub) and len(self.eq_names) == len(self.b_eq)
        counts["total"] = self.n_vars
        counts["rows"] = len(self.b_ub) + len(self.b_eq)
        return counts

    def row_violations(self, x, tol=1e-6) -> list:
        x = np.asarray(x, dtype=float)
        bad = []
        r = self.A_ub @ x - self.b_ub
        for k in np.flatnonzero(r > tol * np.maximum(1.0, np.abs(self.b_ub))):
            bad.append((self.ub_names[k], f"lhs exceeds rhs by {r[k]:.6g}"))
        r = self.A_eq @ x - self.b_eq
        for k in np.flatnonzero(np.abs(r) > tol * np.maximum(1.0, np.abs(self.b_eq))):
            bad.append((self.eq_names[k], f"lhs differs from rhs by {r[k]:.6g}"))
        for k in np.flatnonzero((x < self.lb - tol) | (x > self.ub + tol)):
            bad.append((f"bounds:{self.names[k]}", f"value {x[k]:g} outside [{self.lb[k]:g}, {self.ub[k]:g}]"))
        return bad


def _weights_label(weights):
    return ",".join(f"{k}={v:g}" for k, v in weights.items() if v)


class _Builder:
    def __init__(self):
        self.names = []
        self.index = {}
        self.lb = []
        self.ub = []
        self.rows = {"ub": ([], [], [], [], []), "eq": ([], [], [], [], [])}

    def var(self, name, lb=0.0, ub=1.0):
        self.index[name] = len(self.names)
        self.names.append(name)
        self.lb.append(lb)
        self.ub.append(ub)
        return self.index[name]

    def row(self, kind, name, terms, rhs):
        """Add ``sum(coef * var) (<=|=) rhs``; rows with only pinned-zero vars are dropped."""
        terms = [(k, c) for k, c in terms if c != 0 and not (self.ub[k] == 0 and self.lb[k] == 0)]
        if not terms:
            if (kind == "ub" and rhs < 0) or (kind == "eq" and rhs != 0):
                raise ModelError(f"constraint {name} cannot be satisfied")
            return
        data, cols, rowids, rhss, names = self.rows[kind]
        r = len(rhss)
        for k, c in terms:
            data.append(float(c))
            cols.append(k)
            rowids.append(r)
        rhss.append(float(rhs))
        names.append(name)

    def matrix(self, kind):
        data, cols, rowids, rhss, names = self.rows[kind]
        A = sparse.csr_matrix((data, (rowids, cols)), shape=(len(rhss), len(self.names)))
        A.sum_duplicates()
        return A, np.array(rhss, dtype=float), tuple(names)


def build_model(network: PowerNetwork, params: CaseParameters, options: PlanningOptions,
                contingencies: ContingencySet, distances: DistanceMatrix,
                probability_floor: float = 0.0) -> MilpProblem:
    """Translate a case into the placement program.

    All three objectives are exposed separately in ``problem.objectives``; cost
    is in cents. The unreliability objective is ``const - sum p_s o_is`` over
    states whose probability reaches ``probability_floor``.
    """
    if network.n_buses == 0:
        raise ModelError("empty network")
    options.validate(network)
    buses = network.buses
    n = len(buses)
    T = options.channels(params)
    existing = options.existing_pmus
    prohibited = options.prohibited_buses

    for b, observed in existing.items():
        for o in observed:
            if o != b and not options.measurable(network, b, o):
                raise ModelError(f"existing PMU at bus {b} observes bus {o} across a non-measurable branch")
        if len(observed) - 1 > T:
            raise ModelError(f"existing PMU at bus {b} uses {len(observed) - 1} channels, limit {T}")
    for b in buses:
        if b in prohibited and all(nb in prohibited for nb in network._neighbors[b]):
            raise ModelError(f"bus {b} and all its neighbors are prohibited; it can never be observed")

    B = _Builder()
    m = {}
    d = {}
    l = {}
    for a in buses:
        for b in buses:
            fixed_zero = a in prohibited or (a != b and not options.measurable(network, a, b))
            m[a, b] = B.var(f"m_{a}_{b}", ub=0.0 if fixed_zero else 1.0)
    for a in buses:
        for b in buses:
            fixed_zero = a == b or a in prohibited or not options.measurable(network, a, b)
            d[a, b] = B.var(f"d_{a}_{b}", ub=0.0 if fixed_zero else 1.0)
    p = {a: B.var(f"p_{a}") for a in buses}
    for a in buses:
        for b in buses:
            l[a, b] = B.var(f"l_{a}_{b}")
    mp = {a: B.var(f"mprime_{a}", ub=0.0 if a in existing else 1.0) for a in buses}
    dp = {a: B.var(f"dprime_{a}", ub=0.0 if a in prohibited and a not in existing else 1.0) for a in buses}
    u = {k: B.var(f"u_{k}") for k in range(network.n_substations)}

    for b, observed in existing.items():
        for o in observed:
            B.lb[m[b, o]] = 1.0

    states = contingencies.states
    floor = probability_floor
    o = {}
    o_indices = []
    modeled_states = []
    for s, st in enumerate(states):
        if st.probability < floor:
            continue
        modeled_states.append(s)
        for a in buses:
            o[a, s] = B.var(f"o_{a}_{s}")
            o_indices.append(o[a, s])

    for a in buses:
        # PMU indicator and host-voltage coupling
        for b in buses:
            if a != b:
                B.row("ub", f"pmu_host_{a}_{b}", [(m[a, b], 1), (m[a, a], -1)], 0)
            if a not in existing:
                B.row("ub", f"pmu_indicator_{a}_{b}", [(m[a, b], 1), (mp[a], -1)], 0)
        if a not in existing:
            B.row("ub", f"pmu_indicator_tight_{a}", [(mp[a], 1), (m[a, a], -1)], 0)
        # device indicator
        B.row("ub", f"device_indicator_pmu_{a}", [(mp[a], 1), (dp[a], -1)], 0)
        if a in existing:
            B.row("ub", f"device_indicator_existing_{a}", [(m[a, a], 1), (dp[a], -1)], 0)
        for b in buses:
            B.row("ub", f"device_indicator_dulr_{a}_{b}", [(d[a, b], 1), (dp[a], -1)], 0)
        B.row("ub", f"device_indicator_tight_{a}",
              [(dp[a], 1), (m[a, a], -1)] + [(d[a, b], -1) for b in buses], 0)
        # PDC assignment
        for b in buses:
            B.row("ub", f"assign_to_pdc_{a}_{b}", [(l[a, b], 1), (p[b], -1)], 0)
        B.row("eq", f"single_pdc_{a}", [(l[a, b], 1) for b in buses] + [(dp[a], -1)], 0)
        # channel limit, scaled by the host indicator so fractional PMUs get fractional channels
        B.row("ub", f"channel_limit_{a}", [(m[a, b], 1) for b in buses if b != a] + [(m[a, a], -T)], 0)

    # observability in every modeled state, and base-state redundancy
    for a in buses:
        nbrs = sorted(network._neighbors[a])
        base_terms = [(m[a, a], 1)] + [(d[a, b], 1) for b in buses]
        base_terms += [(m[b, a], 1) for b in nbrs] + [(d[b, a], 1) for b in nbrs]
        t = options.redundancy(params, a)
        B.row("ub", f"redundancy_{a}", [(k, -c) for k, c in base_terms], -(t + 1))
        for s in modeled_states:
            failed = {network.branches[k].key for k in states[s].outages}
            terms = [(m[a, a], -1)] + [(d[a, b], -1) for b in buses]
            for b in nbrs:
                if (min(a, b), max(a, b)) not in failed:
                    terms += [(m[b, a], -1), (d[b, a], -1)]
            B.row("ub", f"observe_{a}_{s}", [(o[a, s], 1)] + terms, 0)

    # substation interruption
    for k, group in enumerate(network.substations):
        members = []
        for a in group:
            for b in buses:
                B.row("ub", f"interrupt_pmu_{k}_{a}_{b}", [(m[a, b], 1), (u[k], -1)], 0)
                B.row("ub", f"interrupt_dulr_{k}_{a}_{b}", [(d[a, b], 1), (u[k], -1)], 0)
            members += [(m[a, a], -1)] + [(d[a, b], -1) for b in buses]
        B.row("ub", f"interrupt_tight_{k}", [(u[k], 1)] + members, 0)
    # every bus needs a device somewhere in its own or an adjacent substation
    for a in buses:
        hosts = [b for b in network._neighbors[a] if options.measurable(network, b, a)] + [a]
        hosts = [b for b in hosts if b not in prohibited or b in existing]
        ks = sorted({network.substation_of(b) for b in hosts})
        B.row("ub", f"substation_cover_{a}", [(u[k], -1) for k in ks], -1)

    # objectives
    nv = len(B.names)
    cost = np.zeros(nv)
    for a in buses:
        cost[mp[a]] = params.pmu_cost(a)
        cost[p[a]] = params.pdc_cost(a)
        for b in buses:
            if B.ub[d[a, b]] > 0:
                cost[d[a, b]] = params.dulr_cost(a, b)
    for k in range(network.n_substations):
        cost[u[k]] = substation_interrupt_cost(network, params, options, k)
    unrel = np.zeros(nv)
    const_u = 0.0
    for s in modeled_states:
        ps = states[s].probability
        for a in buses:
            unrel[o[a, s]] = -ps
    const_u = math.fsum(states[s].probability for s in modeled_states for _ in buses)
    traffic = np.zeros(nv)
    tc = traffic_coefficients(network, params, distances)
    for ia, a in enumerate(buses):
        for ib, b in enumerate(buses):
            traffic[l[a, b]] = tc[ia, ib]
    objectives = {
        "cost": LinearExpr(cost, 0.0),
        "unreliability": LinearExpr(unrel, const_u),
        "traffic": LinearExpr(traffic, 0.0),
    }

    # optional caps
    rate = {a: params.message_rate * (len(network._neighbors[a]) + 1) for a in buses}
    for (a, b), cap in sorted(options.traffic_caps.items()):
        B.row("ub", f"traffic_cap_{a}_{b}", [(l[a, b], rate[a])], cap)
    if options.max_budget is not None:
        B.row("ub", "budget_cap", [(k, c) for k, c in enumerate(cost) if c], options.max_budget)
    if options.max_unreliability is not None:
        B.row("ub", "unreliability_cap", [(k, c) for k, c in enumerate(unrel) if c],
              options.max_unreliability - const_u)
    if options.max_traffic is not None:
        B.row("ub", "traffic_total_cap", [(k, c) for k, c in enumerate(traffic) if c], options.max_traffic)

    A_ub, b_ub, ub_names = B.matrix("ub")
    A_eq, b_eq, eq_names = B.matrix("eq")
    layout = {
        "buses": buses,
        "index": MappingProxyType(dict(B.index)),
        "o_indices": tuple(o_indices),
        "states": tuple(modeled_states),
        "n_substations": network.n_substations,
    }
    return MilpProblem(
        names=tuple(B.names),
        lb=np.array(B.lb), ub=np.array(B.ub),
        A_ub=A_ub, b_ub=b_ub, ub_names=ub_names,
        A_eq=A_eq, b_eq=b_eq, eq_names=eq_names,
        objectives=MappingProxyType(objectives),
        layout=MappingProxyType(layout),
    )


def assignment_vector(problem: MilpProblem, assignment) -> np.ndarray:
    if isinstance(assignment, Mapping):
        x = np.zeros(problem.n_vars)
        for name, v in assignment.items():
            x[problem.index(name)] = v
        return x
    return np.asarray(assignment, dtype=float)


def extract_plan(problem: MilpProblem, assignment, tol=1e-6) -> PlacementPlan:
    """Turn a verified 0-1 assignment into a plan.

    Raises ``AssignmentViolation`` naming the first violated row, bound or
    integrality requirement.
    """
    x = assignment_vector(problem, assignment)
    if x.shape != (problem.n_vars,):
        raise AssignmentViolation("shape", f"expected {problem.n_vars} values, got {x.shape}")
    frac = np.flatnonzero(np.abs(x - np.round(x)) > tol)
    if len(frac):
        raise AssignmentViolation("integrality", f"{problem.names[frac[0]]} = {x[frac[0]]:g} is not binary")
    x = np.round(x)
    bad = problem.row_violations(x, tol)
    if bad:
        raise AssignmentViolation(*bad[0])
    buses = problem.layout["buses"]
    n = len(buses)
    idx = problem.layout["index"]
    pick = lambda fam: np.array([[x[idx[f"{fam}_{a}_{b}"]] for b in buses] for a in buses], dtype=np.uint8)
    plan = PlacementPlan(buses, pick("m"), pick("d"),
                         np.array([x[idx[f"p_{a}"]] for a in buses], dtype=np.uint8), pick("l"))
    # ancillary indicators must agree with what the matrices imply
    hosting = plan.device_mask()
    for i, a in enumerate(buses):
        if bool(x[idx[f"dprime_{a}"]]) != bool(hosting[i]):
            raise AssignmentViolation("device_indicator", f"dprime_{a} disagrees with devices at bus {a}")
    return plan


# -- LP text export ------------------------------------------------------------

def _num(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _expr_lines(coef_idx, names, first_prefix=" "):
    parts = []
    for k, c in coef_idx:
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        term = names[k] if mag == 1 else f"{_num(mag)} {names[k]}"
        parts.append(f"{sign} {term}")
    if not parts:
        return ["0 " + names[0]] if names else ["0"]
    if parts[0].startswith("+ "):
        parts[0] = parts[0][2:]
    lines, cur = [], ""
    for part in parts:
        if len(cur) + len(part) > 200:
            lines.append(cur)
            cur = ""
        cur = f"{cur} {part}" if cur else part
    lines.append(cur)
    return lines


def export_lp(problem: MilpProblem, sink=None) -> str:
    """Write the problem in CPLEX LP format; returns the text.

    Only the active objective is written; its constant term is recorded in a
    comment because not every reader accepts constants there.
    """
    if problem.objective is None:
        raise ModelError("export_lp needs an active objective (use scalarize)")
    names = problem.names
    buf = io.StringIO()
    buf.write(f"\\ wamsplan placement model; objective: {problem.objective_label or 'custom'}\n")
    buf.write(f"\\ objective constant: {_num(problem.objective.constant)}\n")
    buf.write("Minimize\n")
    coef = problem.objective.coef
    lines = _expr_lines([(k, coef[k]) for k in np.flatnonzero(coef)], names)
    buf.write(" obj: " + "\n      ".join(lines) + "\n")
    buf.write("Subject To\n")
    for A, b, rnames, sense in ((problem.A_ub, problem.b_ub, problem.ub_names, "<="),
                                (problem.A_eq, problem.b_eq, problem.eq_names, "=")):
        A = A.tocsr()
        for r in range(A.shape[0]):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            terms = sorted(zip(A.indices[lo:hi], A.data[lo:hi]))
            body = _expr_lines(terms, names)
            buf.write(f" {rnames[r]}: " + "\n   ".join(body) + f" {sense} {_num(b[r])}\n")
    buf.write("Bounds\n")
    for k, name in enumerate(names):
        lo, hi = problem.lb[k], problem.ub[k]
        if lo == hi:
            buf.write(f" {name} = {_num(lo)}\n")
        else:
            buf.write(f" {_num(lo)} <= {name} <= {_num(hi)}\n")
    buf.write("Binaries\n")
    for k in range(0, len(names), 8):
        buf.write(" " + " ".join(names[k:k + 8]) + "\n")
    buf.write("End\n")
    text = buf.getvalue()
    if sink is not None:
        if hasattr(sink, "write"):
            sink.write(text)
        else:
            with open(sink, "w", encoding="utf-8") as fh:
                fh.write(text)
    return text
