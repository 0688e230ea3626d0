"""Exact 0-1 solving: best-first branch-and-bound and external-solver delegation.

Node selection is best-first on the parent's LP bound, ties broken by depth
(deeper first) and then creation order; branching takes the most decisive
family with a fractional variable (see ``BRANCH_PRIORITY``), the most
fractional variable within it, lowest index on ties, and explores the up
branch first. Given the same problem, limits and LP backend, runs are fully
reproducible.
"""
from __future__ import annotations

import heapq
import logging
import math
import os
import shlex
import subprocess
import tempfile
import time
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .milp import MilpProblem, export_lp
from .simplex import LPNumericalError, LPResult, resolve_backend, solve_lp, warm_solve

log = logging.getLogger(__name__)

INT_TOL = 1e-6
DEFAULT_MAX_NODES = 1_000_000
DEFAULT_TIME_LIMIT = 600.0
DEFAULT_STATE_BUDGET = 512 * 2**20


class DelegationError(RuntimeError):
    """External solver missing, unparsable output, or an answer that fails verification."""


@dataclass
class SolveResult:
    status: str  # "optimal" | "infeasible" | "cap-exceeded"
    assignment: np.ndarray | None
    objective_value: float | None
    bound: float
    node_count: int = 0
    wall_time: float = 0.0
    root_bound: float = math.nan
    backend: str = ""

    @property
    def gap(self) -> float:
        if self.objective_value is None:
            return math.inf
        return max(0.0, self.objective_value - self.bound)

    @property
    def root_gap(self) -> float:
        if self.objective_value is None or math.isnan(self.root_bound):
            return math.nan
        return self.objective_value - self.root_bound


def _integral_objective(problem: MilpProblem) -> bool:
    c = problem.objective.coef
    free = problem.ub > problem.lb
    return bool(np.all(c[free] == np.round(c[free])))


def lp_relax(problem: MilpProblem, lb=None, ub=None, backend="auto") -> LPResult:
    """Continuous relaxation over the [lb, ub] box; value includes the objective constant."""
    if problem.objective is None:
        raise ValueError("problem has no active objective")
    res = solve_lp(problem.objective.coef, problem.A_ub, problem.b_ub, problem.A_eq, problem.b_eq,
                   problem.lb if lb is None else lb, problem.ub if ub is None else ub, backend=backend)
    if res.status == "optimal":
        res.value += problem.objective.constant
    return res


def _fractional(x):
    frac = np.abs(x - np.round(x))
    return np.flatnonzero(frac > INT_TOL)


# branching families, most decisive first: PDC sites, substation outages, device
# installs, then the per-branch channel, DULR, assignment and observability bits
BRANCH_PRIORITY = ("p", "u", "mprime", "dprime", "d", "m", "l", "o")


def branch_priority(problem: MilpProblem) -> np.ndarray:
    rank = {fam: k for k, fam in enumerate(BRANCH_PRIORITY)}
    return np.array([rank.get(name.split("_", 1)[0], len(rank)) for name in problem.names], dtype=np.int64)


def _branch_var(x, frac, priority):
    """Most fractional variable in the most decisive fractional family; lowest index on ties."""
    top = priority[frac].min()
    cand = frac[priority[frac] == top]
    return int(cand[np.argmin(np.abs(x[cand] - 0.5))])


# rows are checked on rounded 0-1 points, where the left-hand side is exact up to
# float summation; a loose tolerance here lets rounding push bound rows over
ROUNDED_ROW_TOL = 1e-9


def _feasible(problem: MilpProblem, x) -> bool:
    return not problem.row_violations(x, ROUNDED_ROW_TOL)


def _off_integral(x):
    """Index of the variable farthest from 0/1 (any nonzero distance), or None."""
    dist = np.abs(x - np.round(x))
    j = int(np.argmax(dist))
    return j if dist[j] > 0 else None


def solve(problem: MilpProblem, max_nodes: int = DEFAULT_MAX_NODES, time_limit: float = DEFAULT_TIME_LIMIT,
          lp_backend: str = "auto", incumbent=None, state_budget: int = DEFAULT_STATE_BUDGET) -> SolveResult:
    """Minimize the active objective exactly.

    ``incumbent`` may seed the search with a known assignment; it is used only
    if it is feasible for this problem. With the embedded simplex, children
    are re-optimized from their parent's tableau as soon as they are created
    (up to ``state_budget`` bytes of stored tableaux, oldest dropped first);
    with HiGHS each node is solved from scratch when it is taken off the queue.
    """
    if problem.objective is None:
        raise ValueError("problem has no active objective; call scalarize() first")
    start = time.perf_counter()
    problem = problem.drop_unused_observability()
    obj = problem.objective
    const = obj.constant
    integral = _integral_objective(problem)
    priority = branch_priority(problem)
    backend = resolve_backend(lp_backend, problem.A_ub, problem.A_eq, problem.lb, problem.ub)
    warm = backend == "simplex"

    def prunable(bound, best):
        if best is None:
            return False
        if integral:
            return bound > best - 1 + 1e-6
        return bound >= best - 1e-9 * max(1.0, abs(best))

    best_x = None
    best_val = None  # without constant
    if incumbent is not None:
        x0 = np.round(np.asarray(incumbent, dtype=float))
        if x0.shape == (problem.n_vars,) and np.all(x0 >= problem.lb) and np.all(x0 <= problem.ub) \
                and _feasible(problem, x0):
            best_x, best_val = x0, obj.value(x0) - const

    def cold(fixes):
        lb = problem.lb.copy()
        ub = problem.ub.copy()
        for k, v in fixes:
            lb[k] = ub[k] = v
        return solve_lp(obj.coef, problem.A_ub, problem.b_ub, problem.A_eq, problem.b_eq, lb, ub,
                        backend=backend, keep_state=warm)

    def child(parent, fixes, j, v):
        if parent is not None and parent.state is not None:
            try:
                return warm_solve(parent.state, [(j, v)])
            except LPNumericalError:
                log.debug("warm start failed at depth %d; solving from scratch", len(fixes))
        return cold(fixes + ((j, v),))

    root = cold(())
    if root.status == "infeasible":
        return SolveResult("infeasible", None, None, math.inf, 1, time.perf_counter() - start,
                           math.inf, backend)
    root_bound = root.value

    if best_x is None:
        dive = _dive(problem, root, child)
        if dive is not None:
            best_x, best_val = dive, obj.value(dive) - const

    heap = [(root_bound, 0, 0, ())]
    solved = {0: root}
    states = OrderedDict()  # seq -> bytes, for eviction
    held = 0
    seq = 1
    nodes = 0
    capped = False
    while heap:
        if nodes >= max_nodes or time.perf_counter() - start > time_limit:
            capped = True
            break
        bound, negdepth, key, fixes = heapq.heappop(heap)
        lp = solved.pop(key, None)
        if key in states:
            held -= states.pop(key)
        if prunable(bound, best_val):
            continue
        if lp is None:
            lp = cold(fixes)
        nodes += 1
        if lp.status == "infeasible" or prunable(lp.value, best_val):
            continue
        frac = _fractional(lp.x)
        if not len(frac):
            x = np.round(lp.x)
            if _feasible(problem, x):
                val = obj.value(x) - const
                if best_val is None or val < best_val:
                    best_x, best_val = x, val
                continue
            # rounding broke a row: keep the subtree and branch on the least integral value
            j = _off_integral(lp.x)
            if j is None:
                continue
        else:
            j = _branch_var(lp.x, frac, priority)
        for v in (1.0, 0.0):
            if warm:
                kid = child(lp, fixes, j, v)
                if kid.status == "infeasible" or prunable(kid.value, best_val):
                    continue
                solved[seq] = kid
                if kid.state is not None:
                    states[seq] = kid.state.nbytes
                    held += kid.state.nbytes
                    while held > state_budget and states:
                        old, size = states.popitem(last=False)
                        held -= size
                        solved[old].state = None
                heapq.heappush(heap, (kid.value, negdepth - 1, seq, fixes + ((j, v),)))
            else:
                heapq.heappush(heap, (lp.value, negdepth - 1, seq, fixes + ((j, v),)))
            seq += 1
        lp.state = None

    elapsed = time.perf_counter() - start
    if capped:
        open_bounds = [b for b, *_ in heap]
        bound = min(open_bounds + ([best_val] if best_val is not None else [])) if open_bounds else root_bound
        return SolveResult("cap-exceeded", best_x, None if best_val is None else best_val + const,
                           bound + const, nodes, elapsed, root_bound + const, backend)
    if best_x is None:
        return SolveResult("infeasible", None, None, math.inf, nodes, elapsed, root_bound + const, backend)
    value = obj.value(best_x)
    return SolveResult("optimal", best_x, value, value, nodes, elapsed, root_bound + const, backend)


def _dive(problem, root, child, max_steps=None):
    """Fix the largest fractional variable to 1 (or 0 if that fails) until integral."""
    lp = root
    fixes = ()
    steps = 0
    max_steps = max_steps or 4 * problem.n_vars
    while steps < max_steps:
        frac = _fractional(lp.x)
        if not len(frac):
            x = np.round(lp.x)
            return x if _feasible(problem, x) else None
        j = int(frac[np.argmax(lp.x[frac])])
        for v in (1.0, 0.0):
            trial = child(lp, fixes, j, v)
            steps += 1
            if trial.status == "optimal":
                lp, fixes = trial, fixes + ((j, v),)
                break
        else:
            return None
    return None


# -- delegation ------------------------------------------------------------------

def parse_solution(text: str, fmt: str = "auto"):
    """Parse an external solver's solution file.

    Returns ``(status, values, objective)``. ``cbc`` files start with a status
    line (``Optimal - objective value 123``) followed by ``index name value
    reduced_cost`` rows listing nonzero columns. ``plain`` files (the Gurobi
    ``.sol`` convention) hold ``name value`` rows with ``#`` comments.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DelegationError("empty solution file")
    if fmt == "auto":
        first = lines[0].strip().lower()
        fmt = "cbc" if first.split(" ")[0] in {"optimal", "infeasible", "stopped", "integer", "unbounded"} \
            else "plain"
    values = {}
    objective = None
    if fmt == "cbc":
        head = lines[0].strip()
        low = head.lower()
        if low.startswith("optimal"):
            status = "optimal"
        elif "infeasible" in low:
            status = "infeasible"
        else:
            status = "cap-exceeded"
        if "objective value" in low:
            try:
                objective = float(head.rsplit(" ", 1)[-1])
            except ValueError:
                objective = None
        for ln in lines[1:]:
            parts = ln.split()
            if parts and parts[0] == "**":
                parts = parts[1:]
            if len(parts) < 3:
                raise DelegationError(f"cannot parse solution row: {ln!r}")
            try:
                values[parts[1]] = float(parts[2])
            except ValueError:
                raise DelegationError(f"cannot parse solution row: {ln!r}") from None
        return status, values, objective
    if fmt == "plain":
        status = "optimal"
        for ln in lines:
            s = ln.strip()
            if s.startswith("#"):
                if "objective value" in s.lower():
                    try:
                        objective = float(s.split("=")[-1])
                    except ValueError:
                        pass
                continue
            parts = s.split()
            if len(parts) != 2:
                raise DelegationError(f"cannot parse solution row: {ln!r}")
            try:
                values[parts[0]] = float(parts[1])
            except ValueError:
                raise DelegationError(f"cannot parse solution row: {ln!r}") from None
        return status, values, objective
    raise DelegationError(f"unknown solution format {fmt!r}")


def verify_external(problem: MilpProblem, status, values, objective) -> SolveResult:
    """Check an external answer with the internal row checker before accepting it."""
    if status == "infeasible":
        return SolveResult("infeasible", None, None, math.inf, backend="external")
    index = problem.layout["index"]
    x = problem.lb.copy()
    for name, v in values.items():
        if name not in index:
            raise DelegationError(f"solution names unknown variable {name!r}")
        x[index[name]] = v
    if np.any(np.abs(x - np.round(x)) > INT_TOL):
        raise DelegationError("external solution is not integral")
    x = np.round(x)
    bad = problem.row_violations(x, 1e-6)
    if bad:
        raise DelegationError(f"external solution violates {bad[0][0]}: {bad[0][1]}")
    value = problem.objective.value(x)
    if objective is not None:
        reported = objective + problem.objective.constant
        if abs(reported - value) > 1e-6 * max(1.0, abs(value)):
            raise DelegationError(f"reported objective {reported} disagrees with recomputed {value}")
    return SolveResult(status, x, value, value if status == "optimal" else -math.inf, backend="external")


def delegate(problem: MilpProblem, command: str, fmt: str = "auto", timeout: float | None = None) -> SolveResult:
    """Solve through an external tool.

    ``command`` is a template with ``{lp}`` and ``{sol}`` placeholders, e.g.
    ``"cbc {lp} solve solu {sol}"``. The answer is re-verified internally and
    rejected if it violates any row or misreports its objective.
    """
    if problem.objective is None:
        raise ValueError("problem has no active objective")
    start = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="wamsplan-") as tmp:
        lp_path = os.path.join(tmp, "model.lp")
        sol_path = os.path.join(tmp, "model.sol")
        export_lp(problem, lp_path)
        argv = [a.format(lp=lp_path, sol=sol_path) for a in shlex.split(command)]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
        except FileNotFoundError:
            raise DelegationError(f"external solver not found: {argv[0]!r} (check the command template)") from None
        except subprocess.TimeoutExpired:
            raise DelegationError(f"external solver exceeded {timeout} s") from None
        if not os.path.exists(sol_path):
            raise DelegationError(
                f"external solver wrote no solution file (exit {proc.returncode}): {proc.stderr.strip()[:500]}")
        with open(sol_path, encoding="utf-8") as fh:
            text = fh.read()
    status, values, objective = parse_solution(text, fmt)
    res = verify_external(problem, status, values, objective)
    res.wall_time = time.perf_counter() - start
    return res
