"""Linear programs with finite variable bounds.

Two backends share one contract: ``"simplex"`` is a dense bounded-variable
primal simplex written here, ``"highs"`` hands the problem to HiGHS through
scipy. Both return an :class:`LpResult`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

FEAS_TOL = 1e-9
OPT_TOL = 1e-9

OPTIMAL, INFEASIBLE, UNBOUNDED, ERROR = "optimal", "infeasible", "unbounded", "error"


@dataclass
class LinearProgram:
    """minimize c @ x + c0  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lo <= x <= hi."""

    c: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    A_ub: sparse.csr_matrix | np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: sparse.csr_matrix | np.ndarray | None = None
    b_eq: np.ndarray | None = None
    c0: float = 0.0

    @property
    def n(self) -> int:
        return len(self.c)

    def dense(self):
        def arr(a, rows):
            if a is None:
                return np.zeros((0, self.n)), np.zeros(0)
            a = a.toarray() if sparse.issparse(a) else np.asarray(a, dtype=float)
            return a, np.asarray(rows, dtype=float)

        A_ub, b_ub = arr(self.A_ub, self.b_ub)
        A_eq, b_eq = arr(self.A_eq, self.b_eq)
        return A_ub, b_ub, A_eq, b_eq

    def violation(self, x) -> float:
        A_ub, b_ub, A_eq, b_eq = self.dense()
        worst = max(0.0, float(np.max(self.lo - x, initial=0.0)), float(np.max(x - self.hi, initial=0.0)))
        if len(b_ub):
            worst = max(worst, float(np.max(A_ub @ x - b_ub)))
        if len(b_eq):
            worst = max(worst, float(np.max(np.abs(A_eq @ x - b_eq))))
        return worst


@dataclass
class LpResult:
    status: str
    value: float = np.inf
    x: np.ndarray | None = None
    iterations: int = 0


class LpError(RuntimeError):
    pass


def solve_lp(lp: LinearProgram, backend: str = "highs") -> LpResult:
    if not (np.all(np.isfinite(lp.lo)) and np.all(np.isfinite(lp.hi))):
        raise ValueError("every LP variable needs finite bounds")
    if np.any(lp.lo > lp.hi):
        return LpResult(INFEASIBLE)
    if backend == "highs":
        return _solve_highs(lp)
    if backend == "simplex":
        A_ub, b_ub, A_eq, b_eq = lp.dense()
        return bounded_simplex(lp.c, A_ub, b_ub, A_eq, b_eq, lp.lo, lp.hi, lp.c0)
    raise ValueError(f"unknown LP backend {backend!r}")


_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": FEAS_TOL,
    "dual_feasibility_tolerance": OPT_TOL,
    "presolve": False,
}


def _solve_highs(lp: LinearProgram) -> LpResult:
    res = linprog(
        lp.c,
        A_ub=lp.A_ub if lp.b_ub is not None and len(lp.b_ub) else None,
        b_ub=lp.b_ub if lp.b_ub is not None and len(lp.b_ub) else None,
        A_eq=lp.A_eq if lp.b_eq is not None and len(lp.b_eq) else None,
        b_eq=lp.b_eq if lp.b_eq is not None and len(lp.b_eq) else None,
        bounds=np.column_stack([lp.lo, lp.hi]),
        method="highs",
        options=_HIGHS_OPTIONS,
    )
    if res.status == 0:
        return LpResult(OPTIMAL, float(res.fun) + lp.c0, np.asarray(res.x), int(res.nit))
    if res.status == 2:
        return LpResult(INFEASIBLE)
    if res.status == 3:
        return LpResult(UNBOUNDED)
    return LpResult(ERROR)


def bounded_simplex(c, A_ub, b_ub, A_eq, b_eq, lo, hi, c0=0.0, max_iter=50_000) -> LpResult:
    """Two-phase bounded-variable primal simplex on a dense revised form.

    Rows ``A_ub x <= b_ub`` get a slack in [0, inf). Nonbasic variables sit at
    one of their bounds. Dantzig pricing is used until the objective stalls,
    then Bland's rule takes over to rule out cycling.
    """
    c = np.asarray(c, dtype=float)
    n = len(c)
    A_ub = np.asarray(A_ub, dtype=float).reshape(-1, n)
    A_eq = np.asarray(A_eq, dtype=float).reshape(-1, n)
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq
    if m == 0:
        x = np.where(c >= 0, lo, hi).astype(float)
        return LpResult(OPTIMAL, float(c @ x) + c0, x, 0)

    # structural | slacks | artificials
    A = np.zeros((m, n + m_ub + m))
    A[:m_ub, :n] = A_ub
    A[m_ub:, :n] = A_eq
    A[:m_ub, n:n + m_ub] = np.eye(m_ub)
    b = np.concatenate([np.asarray(b_ub, dtype=float), np.asarray(b_eq, dtype=float)])
    lower = np.concatenate([lo, np.zeros(m_ub), np.zeros(m)])
    upper = np.concatenate([hi, np.full(m_ub, np.inf), np.full(m, np.inf)])

    x = np.concatenate([np.asarray(lo, dtype=float), np.zeros(m_ub), np.zeros(m)])
    resid = b - A[:, : n + m_ub] @ x[: n + m_ub]
    art = n + m_ub + np.arange(m)
    A[np.arange(m), art] = np.where(resid >= 0, 1.0, -1.0)
    x[art] = np.abs(resid)
    basis = list(art)

    cost1 = np.zeros(A.shape[1])
    cost1[art] = 1.0
    status, iters = _simplex_loop(A, b, cost1, lower, upper, x, basis, max_iter)
    if status != OPTIMAL:
        return LpResult(ERROR, iterations=iters)
    if np.sum(x[art]) > FEAS_TOL * max(1.0, np.max(np.abs(b))) * 10:
        return LpResult(INFEASIBLE, iterations=iters)

    # artificials are pinned to zero for phase two; any still basic stay degenerate
    upper[art] = 0.0
    x[art] = 0.0
    cost2 = np.zeros(A.shape[1])
    cost2[:n] = c
    status, iters2 = _simplex_loop(A, b, cost2, lower, upper, x, basis, max_iter)
    if status == UNBOUNDED:
        return LpResult(UNBOUNDED, iterations=iters + iters2)
    if status != OPTIMAL:
        return LpResult(ERROR, iterations=iters + iters2)
    sol = x[:n].copy()
    return LpResult(OPTIMAL, float(c @ sol) + c0, sol, iters + iters2)


def _simplex_loop(A, b, cost, lower, upper, x, basis, max_iter):
    m, total = A.shape
    is_basic = np.zeros(total, dtype=bool)
    is_basic[basis] = True
    bland = False
    best_obj = np.inf
    stall = 0
    for it in range(max_iter):
        B = A[:, basis]
        try:
            xb = np.linalg.solve(B, b - A[:, ~is_basic] @ x[~is_basic])
            y = np.linalg.solve(B.T, cost[basis])
        except np.linalg.LinAlgError:
            return ERROR, it
        x[basis] = xb
        d = cost - A.T @ y
        d[is_basic] = 0.0
        at_lower = x <= lower + FEAS_TOL
        at_upper = x >= upper - FEAS_TOL
        fixed = upper - lower <= FEAS_TOL
        can_up = (~is_basic) & (d < -OPT_TOL) & ~at_upper & ~fixed
        can_down = (~is_basic) & (d > OPT_TOL) & ~at_lower & ~fixed
        candidates = np.flatnonzero(can_up | can_down)
        if candidates.size == 0:
            return OPTIMAL, it

        obj = float(cost @ x)
        if obj < best_obj - 1e-12:
            best_obj, stall = obj, 0
        else:
            stall += 1
            if stall > 50:
                bland = True
        if bland:
            j = int(candidates[0])
        else:
            j = int(candidates[np.argmax(np.abs(d[candidates]))])
        sigma = 1.0 if can_up[j] else -1.0

        w = np.linalg.solve(B, A[:, j])
        step = upper[j] - lower[j]
        leave = -1
        leave_to = 0.0
        for k in range(m):
            rate = sigma * w[k]
            var = basis[k]
            if rate > 1e-12:
                t = (x[var] - lower[var]) / rate
                bound = lower[var]
            elif rate < -1e-12:
                t = (upper[var] - x[var]) / -rate if np.isfinite(upper[var]) else np.inf
                bound = upper[var]
            else:
                continue
            t = max(t, 0.0)
            if t < step - 1e-15 or (bland and leave >= 0 and abs(t - step) <= 1e-15 and var < basis[leave]):
                step, leave, leave_to = t, k, bound
        if not np.isfinite(step):
            return UNBOUNDED, it
        x[basis] = x[basis] - step * sigma * w
        x[j] = x[j] + step * sigma
        if leave < 0:
            # bound flip of the entering variable
            x[j] = upper[j] if sigma > 0 else lower[j]
            continue
        out = basis[leave]
        x[out] = leave_to
        is_basic[out] = False
        is_basic[j] = True
        basis[leave] = j
    return ERROR, max_iter
