"""Pareto frontier of (cost, unreliability, traffic): epsilon-constraint and weighted-sum scans."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .contingency import enumerate_states
from .milp import OBJECTIVES, MilpProblem, build_model, extract_plan
from .network import Case, hop_distances
from .objectives import ObjectiveVector, evaluate
from .plan import PlacementPlan, notation
from .solver import SolveResult, solve

log = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 32


@dataclass(frozen=True)
class FrontierPoint:
    plan: PlacementPlan
    objectives: ObjectiveVector
    provenance: dict = field(default_factory=dict, compare=False)


@dataclass
class ParetoFrontier:
    points: list
    method: str = ""
    partial: bool = False
    incomplete_cells: list = field(default_factory=list)
    solves: int = 0

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def vectors(self) -> list:
        return [p.objectives.as_tuple() for p in self.points]


def dominates(a, b) -> bool:
    """Weakly better in every objective and strictly better in one."""
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def _vec(p):
    if isinstance(p, FrontierPoint):
        return p.objectives.as_tuple()
    if isinstance(p, ObjectiveVector):
        return p.as_tuple()
    return tuple(p)


def non_dominated_filter(points) -> list:
    """Keep the non-dominated points in input order; equal vectors keep the first."""
    points = list(points)
    vecs = [_vec(p) for p in points]
    seen = set()
    out = []
    for i, v in enumerate(vecs):
        if v in seen:
            continue
        if any(dominates(w, v) for j, w in enumerate(vecs) if j != i):
            continue
        seen.add(v)
        out.append(points[i])
    return out


def _sort_key(p: FrontierPoint):
    return p.objectives.as_tuple()


class _Workbench:
    """Model, evaluator inputs and solve accounting shared by one scan."""

    def __init__(self, case: Case, solver: Callable | None = None, **solve_kw):
        self.case = case
        net = case.network
        self.contingencies = enumerate_states(net, case.params, case.contingency)
        self.distances = hop_distances(net)
        self.problem = build_model(net, case.params, case.options, self.contingencies, self.distances)
        self.solve_kw = solve_kw
        self.solver = solver
        self.solves = 0
        self.capped = False
        self.last = None

    def run(self, problem: MilpProblem) -> SolveResult:
        self.solves += 1
        if self.solver is not None:
            res = self.solver(problem)
        else:
            res = solve(problem, incumbent=self.last, **self.solve_kw)
        if res.status == "cap-exceeded":
            self.capped = True
        if res.assignment is not None:
            self.last = res.assignment
        return res

    def point(self, x, provenance) -> FrontierPoint:
        plan = extract_plan(self.problem, x)
        case = self.case
        vec = evaluate(plan, case.network, case.params, self.contingencies, self.distances, case.options)
        return FrontierPoint(plan, vec, dict(provenance))

    def lexicographic(self, order, bounds: dict, extra=None):
        """Minimize objectives one after another, each bounded by its optimum.

        Returns ``(status, assignment)``; a capped stage returns its incumbent.
        """
        prob = self.problem.with_upper_bounds(bounds)
        if extra is not None:
            prob = extra(prob)
        x = None
        for k, name in enumerate(order):
            res = self.run(prob.scalarize({name: 1}))
            if res.status == "infeasible":
                if k == 0:
                    return "infeasible", None
                # later stages keep the earlier optimum feasible; only numerics land here
                return "cap-exceeded", x
            if res.assignment is None:
                return "cap-exceeded", x
            x = res.assignment
            if res.status != "optimal":
                return "cap-exceeded", x
            value = self.problem.objectives[name].value(x)
            prob = prob.with_upper_bounds({name: _tight(name, value)})
        return "optimal", x


def _tight(name, value):
    if name == "cost":
        return float(round(value))
    return value + 1e-9 * max(1.0, abs(value))


def _single_objective_optima(wb: _Workbench, order):
    """Lexicographic optimum for each objective taken first (the payoff table)."""
    out = []
    for first in order:
        rest = [o for o in OBJECTIVES if o != first]
        status, x = wb.lexicographic([first] + rest, {})
        if status == "infeasible":
            return None
        if x is None:
            raise RuntimeError(f"no incumbent found minimizing {first}; raise the solver caps")
        out.append(wb.point(x, {"method": "ideal", "objective": first, "status": status}))
    return out


def _levels(lo, hi, resolution):
    if resolution <= 1 or hi <= lo:
        return [hi]
    return [hi - (hi - lo) * k / (resolution - 1) for k in range(resolution)]


def epsilon_scan(case: Case, order=OBJECTIVES, resolution: int = DEFAULT_RESOLUTION, refine: bool = False,
                 max_rounds: int = 5, solver: Callable | None = None, **solve_kw) -> ParetoFrontier:
    """Minimize ``order[0]`` under upper bounds on the other two over a grid.

    Bounds run from the nadir to the ideal value of each constrained objective
    (both estimated from the payoff table) in ``resolution`` uniform levels.
    Each cell is solved lexicographically in ``order`` so its point is Pareto
    optimal. A solved cell answers every tighter cell its point satisfies and
    an infeasible cell settles every tighter one. With ``refine`` the scan is
    repeated with the achieved objective values added as levels until no new
    point appears.
    """
    order = tuple(order)
    if sorted(order) != sorted(OBJECTIVES):
        raise ValueError(f"order must be a permutation of {OBJECTIVES}")
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    wb = _Workbench(case, solver, **solve_kw)
    ideal = _single_objective_optima(wb, order)
    if ideal is None:
        return ParetoFrontier([], "epsilon", False, [], wb.solves)
    points = list(ideal)
    first, c1, c2 = order
    axis = {name: i for i, name in enumerate(OBJECTIVES)}
    vecs = [p.objectives.as_tuple() for p in ideal]

    def lo_hi(name):
        vals = [v[axis[name]] for v in vecs]
        return min(vals), max(vals)

    levels1 = _levels(*lo_hi(c1), resolution)
    levels2 = _levels(*lo_hi(c2), resolution)
    solved = []  # (e1, e2, vector, x)
    infeasible = []
    incomplete = []

    def scan(l1, l2):
        added = 0
        for e1 in sorted(set(l1), reverse=True):
            for e2 in sorted(set(l2), reverse=True):
                if any(e1 <= f1 and e2 <= f2 for f1, f2 in infeasible):
                    continue
                hit = None
                for f1, f2, v, _x in solved:
                    if e1 <= f1 and e2 <= f2 and v[axis[c1]] <= e1 and v[axis[c2]] <= e2:
                        hit = v
                        break
                if hit is not None:
                    continue
                status, x = wb.lexicographic(order, {c1: e1, c2: e2})
                if status == "infeasible":
                    infeasible.append((e1, e2))
                    continue
                if status != "optimal":
                    incomplete.append({c1: e1, c2: e2})
                    if x is None:
                        continue
                pt = wb.point(x, {"method": "epsilon", c1: e1, c2: e2, "status": status})
                v = pt.objectives.as_tuple()
                solved.append((e1, e2, v, x))
                if v not in {p.objectives.as_tuple() for p in points}:
                    points.append(pt)
                    added += 1
        return added

    scan(levels1, levels2)
    rounds = 0
    while refine and rounds < max_rounds:
        rounds += 1
        ach1 = [p.objectives.as_tuple()[axis[c1]] for p in points]
        ach2 = [p.objectives.as_tuple()[axis[c2]] for p in points]
        if not scan(sorted(set(levels1) | set(ach1)), sorted(set(levels2) | set(ach2))):
            break
    kept = sorted(non_dominated_filter(points), key=_sort_key)
    return ParetoFrontier(kept, "epsilon", bool(incomplete) or wb.capped, incomplete, wb.solves)


# bound decrements: max(absolute, relative * value); solver row tolerances scale with
# coefficient size, so traffic needs a relative step to clear them
DEFAULT_STEP = {"cost": (1.0, 0.0), "unreliability": (1e-6, 1e-6), "traffic": (1e-3, 1e-6)}


def _below(value, bound, step):
    """Next bound strictly below both ``value`` and the previous ``bound``."""
    absolute, relative = step
    nxt = value - max(absolute, relative * abs(value))
    if bound is not None and nxt >= bound:
        nxt = bound - max(absolute, relative * abs(bound))
    return nxt


def exact_epsilon(case: Case, order=OBJECTIVES, step: dict | None = None, max_solves: int | None = None,
                  solver: Callable | None = None, **solve_kw) -> ParetoFrontier:
    """Enumerate the whole frontier by nested bound tightening.

    The outer loop bounds ``order[1]``; for each bound the inner loop minimizes
    ``(order[0], order[2], order[1])`` lexicographically and then forbids the
    achieved ``order[2]`` value, until nothing is feasible. The next outer bound
    is just below the largest ``order[1]`` value the inner loop met. Every
    frontier point is found provided ``step`` (``name -> (absolute, relative)``)
    is below the gap between distinct achievable values of each bounded
    objective.
    """
    order = tuple(order)
    if sorted(order) != sorted(OBJECTIVES):
        raise ValueError(f"order must be a permutation of {OBJECTIVES}")
    step = {**DEFAULT_STEP, **(step or {})}
    first, outer, inner = order
    axis = {name: i for i, name in enumerate(OBJECTIVES)}
    lex = (first, inner, outer)
    wb = _Workbench(case, solver, **solve_kw)
    points = []
    incomplete = []
    e_out = None
    while True:
        e_in = None
        seen_outer = []
        while True:
            if max_solves is not None and wb.solves >= max_solves:
                incomplete.append({outer: e_out, inner: e_in})
                break
            bounds = {k: v for k, v in ((outer, e_out), (inner, e_in)) if v is not None}
            status, x = wb.lexicographic(lex, bounds)
            if status == "infeasible":
                break
            if status != "optimal":
                incomplete.append(dict(bounds))
                if x is None:
                    break
            pt = wb.point(x, {"method": "exact", **bounds, "status": status})
            v = pt.objectives.as_tuple()
            log.info("exact: bounds %s -> %s after %d solves", bounds, v, wb.solves)
            points.append(pt)
            seen_outer.append(v[axis[outer]])
            e_in = _below(v[axis[inner]], e_in, step[inner])
        if not seen_outer or incomplete and max_solves is not None and wb.solves >= max_solves:
            break
        e_out = _below(max(seen_outer), e_out, step[outer])
    kept = sorted(non_dominated_filter(points), key=_sort_key)
    return ParetoFrontier(kept, "exact", bool(incomplete) or wb.capped, incomplete, wb.solves)


def weight_grid(steps: int) -> list:
    """All nonnegative integer weight triples summing to ``steps``, scaled to sum 1."""
    if steps < 1:
        raise ValueError("weight grid needs at least one step")
    out = []
    for a in range(steps, -1, -1):
        for b in range(steps - a, -1, -1):
            c = steps - a - b
            out.append((a / steps, b / steps, c / steps))
    return out


def weighted_sum_scan(case: Case, weights=None, steps: int = 5, solver: Callable | None = None,
                      **solve_kw) -> ParetoFrontier:
    """Minimize normalized weighted sums of the three objectives.

    Each objective is divided by its single-objective optimum (by the nadir
    estimate when that optimum is 0). Objectives with zero weight are then
    minimized lexicographically with the weighted sum held at its optimum, so
    every returned point is Pareto optimal. Only supported points (on the
    convex hull of the frontier) can be found this way.
    """
    wb = _Workbench(case, solver, **solve_kw)
    ideal = _single_objective_optima(wb, OBJECTIVES)
    if ideal is None:
        return ParetoFrontier([], "weighted", False, [], wb.solves)
    vecs = np.array([p.objectives.as_tuple() for p in ideal], dtype=float)
    norms = []
    for k in range(3):
        opt, nadir = vecs[k, k], vecs[:, k].max()
        norms.append(opt if opt > 0 else (nadir if nadir > 0 else 1.0))
    weights = weight_grid(steps) if weights is None else [tuple(w) for w in weights]
    points = []
    incomplete = []
    for w in weights:
        if any(v < 0 for v in w) or not any(w):
            raise ValueError(f"invalid weight vector {w}")
        scaled = {name: wv / norms[k] for k, (name, wv) in enumerate(zip(OBJECTIVES, w)) if wv}
        res = wb.run(wb.problem.scalarize(scaled))
        if res.status == "infeasible":
            continue
        if res.assignment is None or res.status != "optimal":
            incomplete.append({"weights": w})
            if res.assignment is None:
                continue
        x = res.assignment
        zero = [name for name, wv in zip(OBJECTIVES, w) if not wv]
        if zero and res.status == "optimal":
            expr = wb.problem.scalarize(scaled).objective
            bound = expr.value(x)
            bound += 1e-9 * max(1.0, abs(bound))

            def hold(prob, expr=expr, bound=bound):
                return prob.with_expr_bound(expr, bound, "bound_weighted")

            status, x2 = wb.lexicographic(zero, {}, extra=hold)
            if x2 is not None:
                x = x2
            if status != "optimal":
                incomplete.append({"weights": w})
        points.append(wb.point(x, {"method": "weighted", "weights": list(w)}))
    kept = sorted(non_dominated_filter(points), key=_sort_key)
    return ParetoFrontier(kept, "weighted", bool(incomplete) or wb.capped, incomplete, wb.solves)


# -- exports ----------------------------------------------------------------------

def _money(cents: int) -> str:
    sign = "-" if cents < 0 else ""
    return f"{sign}{abs(cents) // 100}.{abs(cents) % 100:02d}"


def frontier_csv(frontier: ParetoFrontier) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point", "cost", "unreliability", "traffic", "plan_id", "pmus", "dulrs", "pdcs"])
    for k, p in enumerate(frontier.points, 1):
        nt = notation(p.plan)
        w.writerow([k, _money(p.objectives.cost), repr(p.objectives.unreliability),
                    repr(p.objectives.traffic), f"plan-{k:03d}", nt["PMUs"], nt["DULRs"], nt["PDCs"]])
    return buf.getvalue()


def frontier_json(frontier: ParetoFrontier, case_name: str = "") -> str:
    doc = {
        "case": case_name,
        "method": frontier.method,
        "partial": frontier.partial,
        "incomplete_cells": frontier.incomplete_cells,
        "points": [
            {
                "plan_id": f"plan-{k:03d}",
                "cost": _money(p.objectives.cost),
                "cost_cents": p.objectives.cost,
                "unreliability": p.objectives.unreliability,
                "traffic": p.objectives.traffic,
                "provenance": p.provenance,
                "plan": p.plan.to_dict(),
            }
            for k, p in enumerate(frontier.points, 1)
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


# the three 2-D projections of the (unreliability, traffic, cost) scatter
PROJECTIONS = (("unreliability", "traffic"), ("traffic", "cost"), ("unreliability", "cost"))


def projection_csv(frontier: ParetoFrontier, x: str, y: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point", x, y])
    for k, p in enumerate(frontier.points, 1):
        vals = {"cost": _money(p.objectives.cost), "unreliability": repr(p.objectives.unreliability),
                "traffic": repr(p.objectives.traffic)}
        w.writerow([k, vals[x], vals[y]])
    return buf.getvalue()


def write_frontier(frontier: ParetoFrontier, out_dir, case_name: str = "") -> list:
    """Write frontier.csv, frontier.json and the projection CSVs; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    files = {"frontier.csv": frontier_csv(frontier), "frontier.json": frontier_json(frontier, case_name)}
    for x, y in PROJECTIONS:
        files[f"projection_{x}_{y}.csv"] = projection_csv(frontier, x, y)
    paths = []
    for name, text in files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths.append(path)
    return paths
