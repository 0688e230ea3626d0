"""Hot numeric kernels.

Every kernel has a pure-numpy implementation (``*_numpy``) and, when numba is
available, a compiled one (``*_numba``). The unsuffixed name is the one the
rest of the package calls.
"""
import numpy as np

from ._accel import HAVE_NUMBA, njit


# -- all-pairs hop counts ----------------------------------------------------

def bfs_hops_numpy(adjacency):
    """Level-synchronous BFS from every node at once; -1 marks unreachable."""
    adj = np.asarray(adjacency, dtype=bool)
    n = adj.shape[0]
    hops = np.full((n, n), -1, dtype=np.int64)
    reached = np.eye(n, dtype=bool)
    frontier = reached.copy()
    hops[reached] = 0
    level = 0
    while frontier.any():
        level += 1
        nxt = (frontier.astype(np.int64) @ adj.astype(np.int64)) > 0
        nxt &= ~reached
        hops[nxt] = level
        reached |= nxt
        frontier = nxt
    return hops


@njit(cache=True)
def _bfs_hops_compiled(indptr, indices, n):
    hops = np.full((n, n), -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for src in range(n):
        hops[src, src] = 0
        head = 0
        tail = 0
        queue[tail] = src
        tail += 1
        while head < tail:
            u = queue[head]
            head += 1
            du = hops[src, u]
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                if hops[src, v] < 0:
                    hops[src, v] = du + 1
                    queue[tail] = v
                    tail += 1
    return hops


def _to_csr(adj):
    n = adj.shape[0]
    rows, cols = np.nonzero(adj)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    return np.cumsum(indptr), cols.astype(np.int64)


def bfs_hops_numba(adjacency):
    adj = np.asarray(adjacency, dtype=bool)
    indptr, indices = _to_csr(adj)
    return _bfs_hops_compiled(indptr, indices, adj.shape[0])


# -- per-state observability ---------------------------------------------------

def observed_states_numpy(self_observed, edge_dst, edge_branch, outages):
    """Boolean (states x buses) matrix of observed buses.

    ``self_observed`` marks buses observed independently of line status; each
    measured edge ``e`` observes ``edge_dst[e]`` unless branch ``edge_branch[e]``
    is out in that state.
    """
    n_states = outages.shape[0]
    n = self_observed.shape[0]
    obs = np.repeat(self_observed[None, :].astype(bool), n_states, axis=0)
    if len(edge_dst):
        working = ~outages[:, edge_branch]
        onehot = np.zeros((len(edge_dst), n), dtype=np.int64)
        onehot[np.arange(len(edge_dst)), edge_dst] = 1
        obs |= (working.astype(np.int64) @ onehot) > 0
    return obs


@njit(cache=True)
def _observed_states_compiled(self_observed, edge_dst, edge_branch, outages):
    n_states = outages.shape[0]
    n = self_observed.shape[0]
    obs = np.zeros((n_states, n), dtype=np.bool_)
    for s in range(n_states):
        for i in range(n):
            obs[s, i] = self_observed[i]
        for e in range(edge_dst.shape[0]):
            if not outages[s, edge_branch[e]]:
                obs[s, edge_dst[e]] = True
    return obs


def observed_states_numba(self_observed, edge_dst, edge_branch, outages):
    return _observed_states_compiled(
        np.ascontiguousarray(self_observed, dtype=np.bool_),
        np.ascontiguousarray(edge_dst, dtype=np.int64),
        np.ascontiguousarray(edge_branch, dtype=np.int64),
        np.ascontiguousarray(outages, dtype=np.bool_),
    )


# -- simplex pivot -------------------------------------------------------------

def pivot_numpy(tableau, row, col):
    """Gauss-Jordan pivot in place on ``tableau[row, col]``."""
    tableau[row, :] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    nz = np.flatnonzero(factors)
    if len(nz):
        tableau[nz, :] -= np.outer(factors[nz], tableau[row, :])
    tableau[:, col] = 0.0
    tableau[row, col] = 1.0


@njit(cache=True)
def pivot_numba(tableau, row, col):
    m, n = tableau.shape
    inv = 1.0 / tableau[row, col]
    for j in range(n):
        tableau[row, j] *= inv
    for i in range(m):
        if i == row:
            continue
        f = tableau[i, col]
        if f != 0.0:
            for j in range(n):
                tableau[i, j] -= f * tableau[row, j]
            tableau[i, col] = 0.0
    tableau[row, col] = 1.0


if HAVE_NUMBA:
    bfs_hops = bfs_hops_numba
    observed_states = observed_states_numba
    pivot = pivot_numba
else:
    bfs_hops = bfs_hops_numpy
    observed_states = observed_states_numpy
    pivot = pivot_numpy


# -- bounded-variable primal simplex iterations -------------------------------
#
# Tableau layout: rows [0, m) are constraints, the last column is B^-1 b.
# ``obj_row`` holds reduced costs of the phase being run. Nonbasic columns sit
# at 0 or at ``upper``; a column with upper == 0 never enters.

OPTIMAL, UNBOUNDED, ITERATION_LIMIT = 0, 1, 2
_TIE = 1e-12
_STALL = 50


def simplex_iterate_numpy(T, xB, basis, is_basic, at_upper, upper, obj_row, m, max_iter,
                          tol_d, tol_p, bland):
    n_cols = upper.shape[0]
    iters = 0
    degenerate = 0
    while iters < max_iter:
        d = T[obj_row, :n_cols]
        score = np.where(at_upper, d, -d)
        eligible = (~is_basic) & (upper > 0) & (score > tol_d)
        if not eligible.any():
            return OPTIMAL, iters
        q = int(np.argmax(eligible)) if bland else int(np.argmax(np.where(eligible, score, -np.inf)))
        delta = -1.0 if at_upper[q] else 1.0
        alpha = T[:m, q] * delta
        ub_basic = upper[basis]
        lims = np.full(m, np.inf)
        dec = alpha > tol_p
        inc = (alpha < -tol_p) & np.isfinite(ub_basic)
        lims[dec] = np.maximum(xB[dec], 0.0) / alpha[dec]
        lims[inc] = np.maximum(ub_basic[inc] - xB[inc], 0.0) / (-alpha[inc])
        r = -1
        t = upper[q]
        if m:
            tmin = lims.min()
            if tmin < t:
                ties = np.flatnonzero(lims <= tmin + _TIE)
                if bland:
                    r = int(ties[np.argmin(basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(alpha[ties]))])
                t = lims[r]
        if not np.isfinite(t):
            return UNBOUNDED, iters
        xB -= t * alpha
        iters += 1
        degenerate = degenerate + 1 if t <= _TIE else 0
        if degenerate > _STALL:
            bland = True
        if r < 0:
            at_upper[q] = not at_upper[q]
            continue
        leaving = basis[r]
        to_upper = alpha[r] < 0
        entering_value = (upper[q] if at_upper[q] else 0.0) + delta * t
        pivot_numpy(T, r, q)
        xB[r] = entering_value
        is_basic[leaving] = False
        at_upper[leaving] = to_upper
        is_basic[q] = True
        at_upper[q] = False
        basis[r] = q
    return ITERATION_LIMIT, iters


@njit(cache=True)
def simplex_iterate_numba(T, xB, basis, is_basic, at_upper, upper, obj_row, m, max_iter,
                          tol_d, tol_p, bland):
    n_cols = upper.shape[0]
    iters = 0
    degenerate = 0
    while iters < max_iter:
        q = -1
        best = 0.0
        for j in range(n_cols):
            if is_basic[j] or upper[j] <= 0.0:
                continue
            dj = T[obj_row, j]
            s = dj if at_upper[j] else -dj
            if s > tol_d:
                if bland:
                    q = j
                    break
                if s > best:
                    best = s
                    q = j
        if q < 0:
            return OPTIMAL, iters
        delta = -1.0 if at_upper[q] else 1.0
        r = -1
        t = upper[q]
        best_alpha = 0.0
        for i in range(m):
            a = T[i, q] * delta
            ubi = upper[basis[i]]
            if a > tol_p:
                xv = xB[i] if xB[i] > 0.0 else 0.0
                lim = xv / a
            elif a < -tol_p and ubi < np.inf:
                gap = ubi - xB[i]
                if gap < 0.0:
                    gap = 0.0
                lim = gap / (-a)
            else:
                continue
            if r < 0:
                take = lim < t
            elif lim < t - _TIE:
                take = True
            elif lim <= t + _TIE:
                if bland:
                    take = basis[i] < basis[r]
                else:
                    take = abs(a) > best_alpha
            else:
                take = False
            if take:
                r = i
                t = lim
                best_alpha = abs(a)
        if not np.isfinite(t):
            return UNBOUNDED, iters
        for i in range(m):
            xB[i] -= t * delta * T[i, q]
        iters += 1
        if t <= _TIE:
            degenerate += 1
        else:
            degenerate = 0
        if degenerate > _STALL:
            bland = True
        if r < 0:
            at_upper[q] = not at_upper[q]
            continue
        leaving = basis[r]
        to_upper = T[r, q] * delta < 0.0
        entering_value = (upper[q] if at_upper[q] else 0.0) + delta * t
        pivot_numba(T, r, q)
        xB[r] = entering_value
        is_basic[leaving] = False
        at_upper[leaving] = to_upper
        is_basic[q] = True
        at_upper[q] = False
        basis[r] = q
    return ITERATION_LIMIT, iters


simplex_iterate = simplex_iterate_numba if HAVE_NUMBA else simplex_iterate_numpy


# -- bounded dual simplex (re-optimization after bound changes) --------------
#
# Same tableau layout; every column also has a ``lower`` bound and nonbasic
# columns sit at ``lower`` or at ``upper``. Starts from a dual feasible basis
# (reduced costs of the parent optimum) and restores primal feasibility.
# Columns with lower == upper never enter.

INFEASIBLE = 3


def dual_iterate_numpy(T, xB, basis, is_basic, at_upper, lower, upper, obj_row, m, max_iter,
                       tol_p, tol_pivot, bland):
    n_cols = upper.shape[0]
    iters = 0
    movable = lower < upper
    while iters < max_iter:
        lo = lower[basis]
        hi = upper[basis]
        below = lo - xB
        above = xB - hi
        infeas = np.maximum(np.maximum(below, above), 0.0)
        cand = np.flatnonzero(infeas > tol_p)
        if not len(cand):
            return OPTIMAL, iters
        if bland:
            r = int(cand[np.argmin(basis[cand])])
        else:
            r = int(cand[np.argmax(infeas[cand])])
        raise_it = below[r] > 0
        target = lo[r] if raise_it else hi[r]
        alpha = T[r, :n_cols]
        d = T[obj_row, :n_cols]
        # entering column must move x_B[r] toward its violated bound
        sign = np.where(at_upper, 1.0, -1.0) if raise_it else np.where(at_upper, -1.0, 1.0)
        ok = (~is_basic) & movable & (alpha * sign > tol_pivot)
        if not ok.any():
            return INFEASIBLE, iters
        cols = np.flatnonzero(ok)
        ratios = np.maximum(np.where(at_upper[cols], -d[cols], d[cols]), 0.0) / np.abs(alpha[cols])
        tmin = ratios.min()
        ties = cols[ratios <= tmin + _TIE]
        if bland:
            q = int(ties[0])
        else:
            q = int(ties[np.argmax(np.abs(alpha[ties]))])
        step = (xB[r] - target) / alpha[q]
        xB -= step * T[:m, q]
        entering_value = (upper[q] if at_upper[q] else lower[q]) + step
        leaving = basis[r]
        pivot_numpy(T, r, q)
        xB[r] = entering_value
        is_basic[leaving] = False
        at_upper[leaving] = not raise_it
        is_basic[q] = True
        at_upper[q] = False
        basis[r] = q
        iters += 1
    return ITERATION_LIMIT, iters


@njit(cache=True)
def dual_iterate_numba(T, xB, basis, is_basic, at_upper, lower, upper, obj_row, m, max_iter,
                       tol_p, tol_pivot, bland):
    n_cols = upper.shape[0]
    iters = 0
    while iters < max_iter:
        r = -1
        worst = 0.0
        raise_it = False
        for i in range(m):
            b = basis[i]
            below = lower[b] - xB[i]
            above = xB[i] - upper[b]
            v = below if below > above else above
            if v > tol_p:
                if bland:
                    if r < 0 or b < basis[r]:
                        r = i
                        raise_it = below > 0.0
                elif v > worst:
                    worst = v
                    r = i
                    raise_it = below > 0.0
        if r < 0:
            return OPTIMAL, iters
        target = lower[basis[r]] if raise_it else upper[basis[r]]
        q = -1
        best = np.inf
        best_alpha = 0.0
        for j in range(n_cols):
            if is_basic[j] or not (lower[j] < upper[j]):
                continue
            a = T[r, j]
            if raise_it:
                s = a if at_upper[j] else -a
            else:
                s = -a if at_upper[j] else a
            if s <= tol_pivot:
                continue
            dj = T[obj_row, j]
            num = -dj if at_upper[j] else dj
            if num < 0.0:
                num = 0.0
            ratio = num / abs(a)
            if q < 0 or ratio < best - _TIE:
                take = True
            elif ratio <= best + _TIE:
                take = (not bland) and abs(a) > best_alpha
            else:
                take = False
            if take:
                q = j
                if ratio < best:
                    best = ratio
                best_alpha = abs(a)
        if q < 0:
            return INFEASIBLE, iters
        step = (xB[r] - target) / T[r, q]
        for i in range(m):
            xB[i] -= step * T[i, q]
        entering_value = (upper[q] if at_upper[q] else lower[q]) + step
        leaving = basis[r]
        pivot_numba(T, r, q)
        xB[r] = entering_value
        is_basic[leaving] = False
        at_upper[leaving] = not raise_it
        is_basic[q] = True
        at_upper[q] = False
        basis[r] = q
        iters += 1
    return ITERATION_LIMIT, iters


dual_iterate = dual_iterate_numba if HAVE_NUMBA else dual_iterate_numpy
