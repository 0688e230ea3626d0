"""Compare the numba kernels with their numpy fallbacks.

Kernel timings call both implementations in one process. The end-to-end rows
run a 9-bus solve and repeated 9-bus relaxations in fresh
interpreters with and without WAMSPLAN_DISABLE_NUMBA.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from wamsplan import kernels
from wamsplan._accel import HAVE_NUMBA


def best_of(fn, repeat):
    fn()  # warm-up, includes compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def random_graph(n, degree, rng):
    adj = np.zeros((n, n), dtype=bool)
    for i in range(1, n):
        j = rng.integers(0, i)
        adj[i, j] = adj[j, i] = True
    extra = rng.integers(0, n, size=(n * (degree - 1) // 2, 2))
    for i, j in extra:
        if i != j:
            adj[i, j] = adj[j, i] = True
    return adj


def simplex_instance(m, n, rng):
    """Feasible bounded LP in the kernels' tableau layout (slack basis)."""
    A = rng.random((m, n))
    b = A.sum(axis=1) * 0.3
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -rng.random(n)
    basis = np.arange(n, n + m, dtype=np.int64)
    is_basic = np.zeros(n + m, dtype=np.bool_)
    is_basic[n:] = True
    upper = np.ones(n + m)
    upper[n:] = np.inf
    return T, b.copy(), basis, is_basic, np.zeros(n + m, dtype=np.bool_), upper


def kernel_rows(repeat):
    rng = np.random.default_rng(7)
    rows = []
    adj = random_graph(400, 3, rng)
    rows.append(("bfs_hops 400 nodes",
                 best_of(lambda: kernels.bfs_hops_numpy(adj), repeat),
                 best_of(lambda: kernels.bfs_hops_numba(adj), repeat)))

    n_bus, n_edges, n_states, n_br = 300, 900, 2000, 400
    self_obs = rng.random(n_bus) < 0.2
    dst = rng.integers(0, n_bus, n_edges)
    br = rng.integers(0, n_br, n_edges)
    out = rng.random((n_states, n_br)) < 0.005
    rows.append(("observed_states 2000x300",
                 best_of(lambda: kernels.observed_states_numpy(self_obs, dst, br, out), repeat),
                 best_of(lambda: kernels.observed_states_numba(self_obs, dst, br, out), repeat)))

    base = rng.random((300, 900)) + 0.1

    def piv(fn):
        t = base.copy()
        for k in range(20):
            fn(t, k, k)
    rows.append(("20 pivots 300x900", best_of(lambda: piv(kernels.pivot_numpy), repeat),
                 best_of(lambda: piv(kernels.pivot_numba), repeat)))

    inst = simplex_instance(120, 240, rng)

    def primal(fn):
        T, xB, basis, is_basic, at_upper, upper = (a.copy() for a in inst)
        obj = T.shape[0] - 1
        return fn(T, xB, basis, is_basic, at_upper, upper, obj, 120, 10000, 1e-9, 1e-9, False)
    rows.append(("primal simplex 120x240", best_of(lambda: primal(kernels.simplex_iterate_numpy), repeat),
                 best_of(lambda: primal(kernels.simplex_iterate_numba), repeat)))
    return rows


SCRIPTS = {
    "9-bus min-cost solve": (
        "from wamsplan import load_case, enumerate_states, hop_distances\n"
        "from wamsplan.milp import build_model\nfrom wamsplan.solver import solve\nimport time\n"
        "c = load_case('ieee9')\ns = enumerate_states(c.network, c.params, c.contingency)\n"
        "p = build_model(c.network, c.params, c.options, s, hop_distances(c.network))\n"
        "solve(p.scalarize({'cost': 1}))\nt = time.perf_counter()\n"
        "for _ in range(3): solve(p.scalarize({'cost': 1, 'traffic': 1}))\n"
        "print((time.perf_counter() - t) / 3)\n"),
    "9-bus unreliability relaxation x20": (
        "from wamsplan import load_case, enumerate_states, hop_distances\n"
        "from wamsplan.milp import build_model\nfrom wamsplan.solver import lp_relax\nimport time\n"
        "c = load_case('ieee9')\ns = enumerate_states(c.network, c.params, c.contingency)\n"
        "p = build_model(c.network, c.params, c.options, s, hop_distances(c.network))"
        ".scalarize({'unreliability': 1})\n"
        "lp_relax(p, backend='simplex')\nt = time.perf_counter()\n"
        "for _ in range(20): lp_relax(p, backend='simplex')\n"
        "print(time.perf_counter() - t)\n"),
}


def end_to_end_rows():
    rows = []
    for label, script in SCRIPTS.items():
        times = []
        for disable in ("1", "0"):
            env = dict(os.environ, WAMSPLAN_DISABLE_NUMBA=disable)
            res = subprocess.run([sys.executable, "-c", script], env=env, capture_output=True, text=True,
                                 check=True)
            times.append(float(res.stdout.strip().splitlines()[-1]))
        rows.append((label, *times))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba unavailable or disabled; the numba column times plain Python loops")
    rows = kernel_rows(args.repeat)
    if not args.skip_end_to_end:
        rows += end_to_end_rows()
    print(f"{'benchmark':<36}{'numpy s':>12}{'numba s':>12}{'speedup':>10}")
    for label, t_np, t_nb in rows:
        print(f"{label:<36}{t_np:>12.5f}{t_nb:>12.5f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
