"""wamsplan command line: plan, frontier, evaluate, export-lp."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .checker import check_plan
from .contingency import enumerate_states, unreliability
from .milp import OBJECTIVES, ModelError, build_model, export_lp, extract_plan
from .network import CaseError, hop_distances, load_case, to_cents
from .objectives import AssignmentError, evaluate
from .plan import PlacementPlan, load_plan, notation
from .solver import DelegationError, delegate, solve

log = logging.getLogger("wamsplan")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_CAPPED = 0, 1, 2, 3
TEMPLATE_ENV = "WAMSPLAN_SOLVER_TEMPLATE"


class UsageError(Exception):
    pass


def _existing(text):
    """``7:5,8`` -> (7, {5, 8})."""
    bus, _, rest = text.partition(":")
    try:
        return int(bus), frozenset(int(x) for x in rest.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected BUS:OBSERVED,... got {text!r}") from None


def _weights(text):
    """``cost`` or ``cost=1,unreliability=1e6``."""
    out = {}
    for part in text.split(","):
        name, eq, val = part.partition("=")
        name = name.strip()
        if name not in OBJECTIVES:
            raise argparse.ArgumentTypeError(f"unknown objective {name!r}; choose from {', '.join(OBJECTIVES)}")
        try:
            out[name] = float(val) if eq else 1.0
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad weight in {part!r}") from None
    if not any(out.values()) or any(v < 0 for v in out.values()):
        raise argparse.ArgumentTypeError("weights must be nonnegative and not all zero")
    return out


def _order(text):
    order = tuple(x.strip() for x in text.split(","))
    if sorted(order) != sorted(OBJECTIVES):
        raise argparse.ArgumentTypeError(f"order must list each of {', '.join(OBJECTIVES)} once")
    return order


def _case_args(p):
    p.add_argument("case", help="built-in case name (ieee9, ieee57) or path to a case JSON file")
    p.add_argument("--prohibit-bus", type=int, action="append", default=[], metavar="BUS")
    p.add_argument("--existing-pmu", type=_existing, action="append", default=[], metavar="BUS:OBS,...",
                   help="pre-installed PMU at BUS observing the listed buses")
    p.add_argument("--max-budget", type=float, help="budget cap in currency units")
    p.add_argument("--max-unreliability", type=float)
    p.add_argument("--max-traffic", type=float)
    p.add_argument("--max-order", type=int, help="simultaneous outages per contingency state")
    p.add_argument("--transformer-observability", action="store_true",
                   help="let measured transformer currents observe the far bus")


def _solver_args(p):
    p.add_argument("--time-limit", type=float, default=600.0, help="seconds per solve")
    p.add_argument("--max-nodes", type=int, default=10 ** 6)
    p.add_argument("--delegate", nargs="?", const="", default=None, metavar="TEMPLATE",
                   help=f"solve with an external MILP tool; template uses {{lp}} and {{sol}}, "
                        f"default from ${TEMPLATE_ENV}")


def _load(args):
    case = load_case(args.case)
    opts = case.options
    changes = {}
    if args.prohibit_bus:
        changes["prohibited_buses"] = opts.prohibited_buses | set(args.prohibit_bus)
    if args.existing_pmu:
        merged = dict(opts.existing_pmus)
        merged.update(dict(args.existing_pmu))
        changes["existing_pmus"] = merged
    if args.max_budget is not None:
        changes["max_budget"] = to_cents(args.max_budget)
    if args.max_unreliability is not None:
        changes["max_unreliability"] = args.max_unreliability
    if args.max_traffic is not None:
        changes["max_traffic"] = args.max_traffic
    if args.transformer_observability:
        changes["transformer_observability"] = True
    if changes:
        opts = opts.replace(**changes)
        opts.validate(case.network)
    cont = case.contingency
    if args.max_order is not None:
        from .contingency import ContingencyConfig

        cont = ContingencyConfig(cont.failable, args.max_order, True, cont.probability_floor, cont.state_cap)
        cont.failable_branches(case.network)
    return case.replace(options=opts, contingency=cont)


def _solver(args):
    """Callable ``problem -> SolveResult`` honoring --delegate and caps."""
    if args.delegate is None:
        return lambda prob, incumbent=None: solve(prob, max_nodes=args.max_nodes, time_limit=args.time_limit,
                                                  incumbent=incumbent)
    template = args.delegate or os.environ.get(TEMPLATE_ENV, "")
    if not template:
        raise UsageError(f"--delegate needs a command template or ${TEMPLATE_ENV}")
    return lambda prob, incumbent=None: delegate(prob, template, timeout=args.time_limit)


def _objective_lines(vec):
    return [
        f"C = {vec.cost // 100:,}.{vec.cost % 100:02d}",
        f"U = {vec.unreliability:.6e}",
        f"D = {vec.traffic:.6e}",
    ]


def _plan_table(plan: PlacementPlan):
    nt = notation(plan)
    width = max(len(k) for k in nt)
    return [f"{k:<{width}}  {v}" for k, v in nt.items()]


def cmd_plan(args, out):
    case = _load(args)
    net = case.network
    states = enumerate_states(net, case.params, case.contingency)
    dist = hop_distances(net)
    problem = build_model(net, case.params, case.options, states, dist)
    weights = args.objective
    run = _solver(args)
    res = run(problem.scalarize(weights))
    status, x = res.status, res.assignment
    if status == "optimal" and args.lexicographic:
        rest = [o for o in OBJECTIVES if o not in weights]
        bounded = problem.with_expr_bound(problem.scalarize(weights).objective,
                                          res.objective_value + 1e-9 * max(1.0, abs(res.objective_value)),
                                          "bound_weighted")
        for name in rest:
            r2 = run(bounded.scalarize({name: 1}), x)
            if r2.status != "optimal":
                break
            x = r2.assignment
            val = problem.objectives[name].value(x)
            bounded = bounded.with_upper_bounds({name: val + 1e-9 * max(1.0, abs(val))})
    if status == "infeasible":
        print(f"{net.name}: no plan satisfies the constraints", file=sys.stderr)
        return EXIT_INFEASIBLE
    if x is None:
        print(f"{net.name}: solver stopped at its caps without a plan (bound {res.bound:.6g})", file=sys.stderr)
        return EXIT_CAPPED
    plan = extract_plan(problem, x)
    vec = evaluate(plan, net, case.params, states, dist, case.options)
    label = ", ".join(f"{k}={v:g}" for k, v in weights.items())
    print(f"case {net.name}: minimize {label}", file=out)
    print(f"status {status}", file=out)
    for line in _plan_table(plan) + _objective_lines(vec):
        print(line, file=out)
    problems = check_plan(plan, net, case.params, case.options, states, dist)
    for v in problems:
        print(f"violation {v}", file=out)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(plan.dumps())
    log.info("solve: %s nodes, %.2fs, backend %s", res.node_count, res.wall_time, res.backend)
    if problems:
        return EXIT_INFEASIBLE
    return EXIT_OK if status == "optimal" else EXIT_CAPPED


def cmd_frontier(args, out):
    from .pareto import epsilon_scan, exact_epsilon, frontier_csv, weighted_sum_scan, write_frontier

    case = _load(args)
    solver = None if args.delegate is None else _solver(args)
    kw = {} if solver is not None else {"max_nodes": args.max_nodes, "time_limit": args.time_limit}
    if args.method == "epsilon":
        front = epsilon_scan(case, order=args.order, resolution=args.resolution, refine=args.refine,
                             solver=solver, **kw)
    elif args.method == "exact":
        front = exact_epsilon(case, order=args.order, solver=solver, **kw)
    else:
        front = weighted_sum_scan(case, steps=args.grid, solver=solver, **kw)
    out.write(frontier_csv(front))
    if args.out:
        write_frontier(front, args.out, case.network.name)
    print(f"{len(front)} non-dominated points, {front.solves} solves", file=sys.stderr)
    if front.partial:
        print(f"warning: frontier is partial, {len(front.incomplete_cells)} cell(s) hit solver caps",
              file=sys.stderr)
        return EXIT_CAPPED
    if not front.points:
        print("no feasible plan", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_evaluate(args, out):
    case = _load(args)
    net = case.network
    plan = load_plan(args.plan, net)
    states = enumerate_states(net, case.params, case.contingency)
    dist = hop_distances(net)
    problems = check_plan(plan, net, case.params, case.options, states, dist)
    if problems:
        for v in problems:
            print(f"violation {v}", file=out)
        return EXIT_INFEASIBLE
    vec = evaluate(plan, net, case.params, states, dist, case.options)
    for line in _plan_table(plan) + _objective_lines(vec):
        print(line, file=out)
    per_bus, _ = unreliability(plan, states)
    print("bus  U_i", file=out)
    for b, u in zip(net.buses, per_bus):
        print(f"{b:<4} {u:.6e}", file=out)
    return EXIT_OK


def cmd_export_lp(args, out):
    case = _load(args)
    net = case.network
    states = enumerate_states(net, case.params, case.contingency)
    problem = build_model(net, case.params, case.options, states, hop_distances(net))
    text = export_lp(problem.scalarize(args.objective))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    return EXIT_OK


def cmd_oracle(args, out):
    from .oracle import brute_force_plan

    case = _load(args)
    res = brute_force_plan(case.network, case.params, case.options, args.objective, case.contingency)
    if res is None:
        print("no plan satisfies the constraints", file=sys.stderr)
        return EXIT_INFEASIBLE
    doc = {"value": res.value, "cost_cents": res.cost, "unreliability": res.unreliability,
           "traffic": res.traffic, "plan": res.plan.to_dict()}
    out.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="wamsplan", description=__doc__)
    parser.add_argument("--version", action="version", version=f"wamsplan {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="{plan,frontier,evaluate,export-lp}")
    sub.required = True

    p = sub.add_parser("plan", help="solve one (weighted) objective and report the plan")
    _case_args(p)
    _solver_args(p)
    p.add_argument("--objective", type=_weights, default={"cost": 1.0},
                   help="objective name or weights, e.g. cost=1,traffic=0.5")
    p.add_argument("--lexicographic", action="store_true",
                   help="break ties by minimizing the remaining objectives in turn")
    p.add_argument("--out", help="write the plan JSON here")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("frontier", help="sweep the Pareto frontier")
    _case_args(p)
    _solver_args(p)
    p.add_argument("--method", choices=("epsilon", "exact", "weighted"), default="epsilon")
    p.add_argument("--resolution", type=int, default=32, help="epsilon levels per bounded objective")
    p.add_argument("--refine", action="store_true", help="re-scan at achieved objective values")
    p.add_argument("--order", type=_order, default=OBJECTIVES,
                   help="minimized objective first, then the bounded ones")
    p.add_argument("--grid", type=int, default=5, help="weighted-sum grid steps")
    p.add_argument("--out", help="directory for frontier.csv, frontier.json and projections")
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("evaluate", help="check a plan file and report its objectives")
    _case_args(p)
    p.add_argument("plan")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-lp", help="write the model in LP format")
    _case_args(p)
    p.add_argument("--objective", type=_weights, default={"cost": 1.0})
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_lp)

    p = sub.add_parser("oracle")
    _case_args(p)
    p.add_argument("--objective", type=_weights, default={"cost": 1.0})
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args, out)
    except (CaseError, ModelError, AssignmentError, UsageError, OSError, ValueError) as exc:
        print(f"wamsplan: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DelegationError as exc:
        print(f"wamsplan: external solver failed: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
