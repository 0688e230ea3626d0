"""LP relaxations: a dense bounded-variable primal simplex and a HiGHS route."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from . import kernels

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
# dense tableau entries above which ``backend="auto"`` hands the LP to HiGHS
AUTO_DENSE_LIMIT = 4_000_000


class LPNumericalError(RuntimeError):
    pass


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible"
    x: np.ndarray | None
    value: float  # c.x, without any objective constant
    iterations: int = 0
    backend: str = ""
    state: "WarmState | None" = None


@dataclass
class WarmState:
    """Final tableau of an embedded solve, reusable for re-optimization."""

    T: np.ndarray
    xB: np.ndarray
    basis: np.ndarray
    is_basic: np.ndarray
    at_upper: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    m: int
    col_of: np.ndarray  # original variable -> tableau column, -1 if substituted out
    base: np.ndarray  # values of substituted (fixed) variables; zeros elsewhere
    problem: tuple  # (c, A_ub, b_ub, A_eq, b_eq)

    @property
    def nbytes(self) -> int:
        return int(self.T.nbytes + self.xB.nbytes + 4 * self.upper.nbytes)

    def copy(self) -> "WarmState":
        return WarmState(self.T.copy(), self.xB.copy(), self.basis.copy(), self.is_basic.copy(),
                         self.at_upper.copy(), self.lower.copy(), self.upper.copy(), self.m,
                         self.col_of, self.base, self.problem)


def _dense(A, cols):
    if sparse.issparse(A):
        return A[:, cols].toarray()
    return np.asarray(A, dtype=float)[:, cols]


def simplex_solve(c, A_ub, b_ub, A_eq, b_eq, lb, ub, max_iter=None, bland=False,
                  iterate=None, keep_state=False) -> LPResult:
    """Minimize ``c.x`` over ``A_ub x <= b_ub, A_eq x = b_eq, lb <= x <= ub``.

    Two-phase bounded primal simplex on a dense tableau. Fixed variables are
    substituted out, rows are scaled to unit max-norm, and pricing switches
    to Bland's rule after a run of degenerate pivots.
    """
    iterate = iterate or kernels.simplex_iterate
    c = np.asarray(c, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if (lb > ub + 1e-12).any():
        return LPResult("infeasible", None, math.inf, 0, "simplex")
    free = np.flatnonzero(ub > lb)
    b_ub0 = np.asarray(b_ub, dtype=float)
    b_eq0 = np.asarray(b_eq, dtype=float)
    b_ub = np.asarray(b_ub, dtype=float) - (A_ub @ lb if A_ub.shape[0] else 0.0)
    b_eq = np.asarray(b_eq, dtype=float) - (A_eq @ lb if A_eq.shape[0] else 0.0)
    Aub = _dense(A_ub, free)
    Aeq = _dense(A_eq, free)
    upper_y = ub[free] - lb[free]

    # rows without free columns are either satisfied or infeasible
    keep_ub = np.abs(Aub).max(axis=1, initial=0.0) > 0
    keep_eq = np.abs(Aeq).max(axis=1, initial=0.0) > 0
    if (b_ub[~keep_ub] < -FEAS_TOL).any() or (np.abs(b_eq[~keep_eq]) > FEAS_TOL).any():
        return LPResult("infeasible", None, math.inf, 0, "simplex")
    Aub, b_ub = Aub[keep_ub], b_ub[keep_ub]
    Aeq, b_eq = Aeq[keep_eq], b_eq[keep_eq]

    s_ub = np.abs(Aub).max(axis=1, initial=1.0)
    s_eq = np.abs(Aeq).max(axis=1, initial=1.0)
    Aub, b_ub = Aub / s_ub[:, None], b_ub / s_ub
    Aeq, b_eq = Aeq / s_eq[:, None], b_eq / s_eq

    m_ub, m_eq, nf = len(b_ub), len(b_eq), len(free)
    m = m_ub + m_eq
    flip_ub = b_ub < 0
    need_art = np.concatenate([flip_ub, np.ones(m_eq, dtype=bool)])
    n_art = int(need_art.sum())
    N = nf + m_ub + n_art
    T = np.zeros((m + 2, N + 1))
    T[:m_ub, :nf] = Aub
    T[m_ub:m, :nf] = Aeq
    T[np.arange(m_ub), nf + np.arange(m_ub)] = 1.0
    T[:m_ub, N] = b_ub
    T[m_ub:m, N] = b_eq
    T[:m_ub][flip_ub] *= -1.0
    neg_eq = T[m_ub:m, N] < 0
    T[m_ub:m][neg_eq] *= -1.0
    art_rows = np.flatnonzero(need_art)
    art_cols = nf + m_ub + np.arange(n_art)
    T[art_rows, art_cols] = 1.0

    basis = np.empty(m, dtype=np.int64)
    basis[:m_ub] = nf + np.arange(m_ub)
    basis[art_rows] = art_cols
    upper = np.concatenate([upper_y, np.full(m_ub, np.inf), np.full(n_art, np.inf)])
    is_basic = np.zeros(N, dtype=np.bool_)
    is_basic[basis] = True
    at_upper = np.zeros(N, dtype=np.bool_)
    xB = T[:m, N].copy()

    cscale = np.abs(c[free]).max(initial=0.0) or 1.0
    T[m, :nf] = c[free] / cscale
    T[m + 1, art_cols] = 1.0
    if n_art:
        T[m + 1] -= T[art_rows].sum(axis=0)

    max_iter = max_iter or 50 * (m + N) + 1000
    total = 0
    if n_art:
        status, it = iterate(T, xB, basis, is_basic, at_upper, upper, m + 1, m, max_iter,
                             DUAL_TOL, PIVOT_TOL, bland)
        total += it
        if status != kernels.OPTIMAL:
            raise LPNumericalError(f"phase 1 ended with status {status}")
        _refresh(T, xB, at_upper, upper, is_basic, m, N)
        art_basic = basis >= nf + m_ub
        if xB[art_basic].sum() > FEAS_TOL:
            return LPResult("infeasible", None, math.inf, total, "simplex")
        upper[art_cols] = 0.0
        at_upper[art_cols] = False
        for r in np.flatnonzero(art_basic):
            row = np.abs(T[r, :nf + m_ub])
            row[is_basic[:nf + m_ub]] = 0.0
            q = int(np.argmax(row)) if row.size else -1
            if q >= 0 and row[q] > 1e-9:
                leaving = basis[r]
                value = upper[q] if at_upper[q] else 0.0
                kernels.pivot(T, r, q)
                is_basic[leaving] = False
                is_basic[q] = True
                at_upper[q] = False
                basis[r] = q
                xB[r] = value
        _refresh(T, xB, at_upper, upper, is_basic, m, N)

    status, it = iterate(T, xB, basis, is_basic, at_upper, upper, m, m, max_iter,
                         DUAL_TOL, PIVOT_TOL, bland)
    total += it
    if status == kernels.UNBOUNDED:
        raise LPNumericalError("relaxation reported unbounded; objectives are bounded over [0, 1] boxes")
    if status != kernels.OPTIMAL:
        raise LPNumericalError("simplex iteration limit reached")
    _refresh(T, xB, at_upper, upper, is_basic, m, N)

    y = np.where(at_upper, upper, 0.0)
    y[basis] = xB
    y = y[:nf]
    y = np.clip(y, 0.0, upper_y)
    x = lb.copy()
    x[free] += y
    _check_rows(x, A_ub, b_ub0, A_eq, b_eq0)
    state = None
    if keep_state:
        col_of = np.full(len(c), -1, dtype=np.int64)
        col_of[free] = np.arange(nf)
        base = lb.copy()
        base[free] = 0.0
        state = WarmState(T[:m + 1].copy(), xB.copy(), basis.copy(), is_basic.copy(), at_upper.copy(),
                          np.zeros(N), upper.copy(), m, col_of, base, (c, A_ub, b_ub0, A_eq, b_eq0))
    return LPResult("optimal", x, _dot(c, x), total, "simplex", state)


def _check_rows(x, A_ub, b_ub, A_eq, b_eq):
    """Primal check against the original (unscaled) rows."""
    if A_ub.shape[0] and (A_ub @ x - b_ub > 1e-6 * np.maximum(1.0, np.abs(b_ub))).any():
        raise LPNumericalError("simplex solution violates an inequality row")
    if A_eq.shape[0] and (np.abs(A_eq @ x - b_eq) > 1e-6 * np.maximum(1.0, np.abs(b_eq))).any():
        raise LPNumericalError("simplex solution violates an equality row")


def warm_solve(state: WarmState, fixes, max_iter=None, bland=False, iterate=None) -> LPResult:
    """Re-optimize ``state`` with extra variable fixings ``[(var, value), ...]``.

    The parent basis stays dual feasible under bound changes, so a bounded
    dual simplex restores primal feasibility. The returned result carries its
    own state. Raises LPNumericalError when the answer cannot be trusted; the
    caller should then solve from scratch.
    """
    iterate = iterate or kernels.dual_iterate
    st = state.copy()
    m = st.m
    N = st.T.shape[1] - 1
    for var, value in fixes:
        col = st.col_of[var]
        if col < 0:
            if st.base[var] != value:
                return LPResult("infeasible", None, math.inf, 0, "simplex")
            continue
        if value > st.upper[col] or value < st.lower[col]:
            return LPResult("infeasible", None, math.inf, 0, "simplex")
        if not st.is_basic[col]:
            old = st.upper[col] if st.at_upper[col] else st.lower[col]
            if old != value:
                st.xB -= st.T[:m, col] * (value - old)
            st.at_upper[col] = value > 0
        st.lower[col] = st.upper[col] = float(value)
    max_iter = max_iter or 20 * m + 1000
    status, it = iterate(st.T, st.xB, st.basis, st.is_basic, st.at_upper, st.lower, st.upper,
                         m, m, max_iter, FEAS_TOL * 1e-2, PIVOT_TOL, bland)
    if status == kernels.INFEASIBLE:
        return LPResult("infeasible", None, math.inf, it, "simplex")
    if status != kernels.OPTIMAL:
        raise LPNumericalError("dual simplex iteration limit reached")
    _refresh(st.T, st.xB, st.at_upper, st.upper, st.is_basic, m, N, st.lower)
    # dual feasibility of the final basis (up to tolerance) certifies optimality
    d = st.T[m, :N]
    nb = ~st.is_basic & (st.lower < st.upper)
    if (d[nb & ~st.at_upper] < -1e-7).any() or (d[nb & st.at_upper] > 1e-7).any():
        raise LPNumericalError("warm start lost dual feasibility")
    y = np.where(st.at_upper, st.upper, st.lower)
    y[st.basis] = st.xB
    c, A_ub, b_ub, A_eq, b_eq = st.problem
    x = st.base.copy()
    cols = np.flatnonzero(st.col_of >= 0)
    x[cols] = np.clip(y[st.col_of[cols]], 0.0, None)
    _check_rows(x, A_ub, b_ub, A_eq, b_eq)
    return LPResult("optimal", x, _dot(c, x), it, "simplex", st)


def _refresh(T, xB, at_upper, upper, is_basic, m, N, lower=None):
    """Recompute basic values from the rhs column to shed accumulated drift."""
    nb_up = np.flatnonzero(at_upper & ~is_basic)
    xB[:] = T[:m, N]
    if len(nb_up):
        xB -= T[:m, nb_up] @ upper[nb_up]
    if lower is not None:
        nb_lo = np.flatnonzero(~at_upper & ~is_basic & (lower != 0))
        if len(nb_lo):
            xB -= T[:m, nb_lo] @ lower[nb_lo]


def _dot(c, x) -> float:
    nz = np.flatnonzero(c)
    return math.fsum(c[nz] * x[nz])


def highs_solve(c, A_ub, b_ub, A_eq, b_eq, lb, ub) -> LPResult:
    res = linprog(
        c,
        A_ub=A_ub if A_ub.shape[0] else None, b_ub=b_ub if A_ub.shape[0] else None,
        A_eq=A_eq if A_eq.shape[0] else None, b_eq=b_eq if A_eq.shape[0] else None,
        bounds=np.column_stack([lb, ub]), method="highs",
    )
    if res.status == 2:
        return LPResult("infeasible", None, math.inf, int(getattr(res, "nit", 0)), "highs")
    if res.status != 0:
        raise LPNumericalError(f"HiGHS: {res.message}")
    x = np.clip(res.x, lb, ub)
    return LPResult("optimal", x, _dot(np.asarray(c, dtype=float), x), int(res.nit), "highs")


def resolve_backend(backend, A_ub, A_eq, lb, ub) -> str:
    if backend != "auto":
        return backend
    free = int((np.asarray(ub) > np.asarray(lb)).sum())
    rows = A_ub.shape[0] + A_eq.shape[0]
    return "simplex" if rows * (free + rows) <= AUTO_DENSE_LIMIT else "highs"


def solve_lp(c, A_ub, b_ub, A_eq, b_eq, lb, ub, backend="auto", keep_state=False) -> LPResult:
    """Dispatch to the embedded simplex or HiGHS.

    The embedded simplex retries with Bland pricing from the start if the
    first attempt stalls numerically; if that also fails the LP goes to HiGHS.
    """
    backend = resolve_backend(backend, A_ub, A_eq, lb, ub)
    if backend == "highs":
        return highs_solve(c, A_ub, b_ub, A_eq, b_eq, lb, ub)
    if backend != "simplex":
        raise ValueError(f"unknown LP backend {backend!r}")
    try:
        return simplex_solve(c, A_ub, b_ub, A_eq, b_eq, lb, ub, keep_state=keep_state)
    except LPNumericalError:
        pass
    try:
        return simplex_solve(c, A_ub, b_ub, A_eq, b_eq, lb, ub, bland=True, keep_state=keep_state)
    except LPNumericalError as exc:
        log.info("embedded simplex failed (%s); using HiGHS", exc)
        return highs_solve(c, A_ub, b_ub, A_eq, b_eq, lb, ub)
