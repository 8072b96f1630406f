"""Bounds and linear relaxations of a lifted program over a box.

The solver works on the *extended* program produced by :func:`extend`: every
quadratic term left in a constraint gets its own product variable, so all
constraints become linear and every nonlinearity is a definition
``y = x_i * x_j``. Squares (``i == j``) turn the unit-circle equalities into
``u + v = 1``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse

from .kinematics import KinematicChain
from .lifting import LIFTED, Qcqp, interval_product, interval_square
from .lp import LinearProgram, LpResult, solve_lp
from .pop import cos_var, sin_var

TWO_PI = 2.0 * math.pi
EMPTY_TOL = 1e-9
SAFETY = 1e-10
MAX_ROUNDS = 10
MIN_PROGRESS = 1e-12
# envelopes are loosened by this relative amount; near-degenerate boxes otherwise
# produce spurious infeasibility verdicts from the LP
ENVELOPE_SLACK = 1e-9


class EmptyBox(Exception):
    """Raised when a box (or a relaxation over it) provably contains no feasible point."""


@dataclass
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def copy(self) -> "Box":
        return Box(self.lo.copy(), self.hi.copy())

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def is_subset_of(self, other: "Box", tol: float = 0.0) -> bool:
        return bool(np.all(self.lo >= other.lo - tol) and np.all(self.hi <= other.hi + tol))


@dataclass(frozen=True)
class Arc:
    """Cosine/sine variable pair of one joint and its angle limits."""

    c: int
    s: int
    lo: float
    hi: float


def chain_arcs(chain: KinematicChain) -> list[Arc]:
    return [Arc(cos_var(i), sin_var(i), l.theta_min, l.theta_max) for i, l in enumerate(chain.links)]


# -- extension ----------------------------------------------------------------

def extend(q: Qcqp) -> Qcqp:
    """Return a copy of ``q`` whose constraints are all linear.

    Each distinct quadratic pair is mapped to an existing definition when one
    exists, otherwise to a new lifted variable.
    """
    out = copy.deepcopy(q)
    pairs = {}
    for y, i, j in out.definitions:
        pairs.setdefault((min(i, j), max(i, j)), y)
    for con in out.constraints:
        if not con.quad:
            continue
        lin = dict(con.lin)
        for i, j, coef in con.quad:
            key = (min(i, j), max(i, j))
            if key not in pairs:
                vi, vj = out.variables[key[0]], out.variables[key[1]]
                if key[0] == key[1]:
                    lb, ub = interval_square((vi.lb, vi.ub))
                else:
                    lb, ub = interval_product((vi.lb, vi.ub), (vj.lb, vj.ub))
                y = out.add_variable(lb, ub, LIFTED)
                out.definitions.append((y, key[0], key[1]))
                pairs[key] = y
            y = pairs[key]
            lin[y] = lin.get(y, 0.0) + coef
        con.quad = []
        con.lin = sorted((i, c) for i, c in lin.items() if c != 0.0)
    return out


def is_extended(q: Qcqp) -> bool:
    return all(not con.quad for con in q.constraints)


# -- trigonometric interval images --------------------------------------------

def angle_image(lo: float, hi: float) -> tuple[float, float, float, float]:
    """Exact hull of (cos t, sin t) for t in [lo, hi]: (cmin, cmax, smin, smax)."""
    if hi - lo >= TWO_PI:
        return -1.0, 1.0, -1.0, 1.0
    pts = [lo, hi]
    k = math.ceil(lo / (math.pi / 2))
    while k * math.pi / 2 <= hi:
        pts.append(k * math.pi / 2)
        k += 1
    cs = [math.cos(t) for t in pts]
    ss = [math.sin(t) for t in pts]
    # exact values at the quarter turns
    for idx in range(2, len(pts)):
        q = round(pts[idx] / (math.pi / 2)) % 4
        cs[idx], ss[idx] = ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))[q]
    return min(cs), max(cs), min(ss), max(ss)


def _intervals_cos(cl: float, ch: float) -> list[tuple[float, float]]:
    """Angles t in [-pi, pi] with cos t in [cl, ch]."""
    a_hi = math.acos(min(1.0, max(-1.0, ch)))
    a_lo = math.acos(min(1.0, max(-1.0, cl)))
    if a_hi > a_lo:
        return []
    return [(-a_lo, -a_hi), (a_hi, a_lo)]


def _intervals_sin(sl: float, sh: float) -> list[tuple[float, float]]:
    """Angles t in [-pi, pi] with sin t in [sl, sh], via sin t = cos(t - pi/2)."""
    out = []
    for a, b in _intervals_cos(sl, sh):
        for shift in (0.0, TWO_PI, -TWO_PI):
            lo, hi = a + math.pi / 2 + shift, b + math.pi / 2 + shift
            lo, hi = max(lo, -math.pi), min(hi, math.pi)
            if lo <= hi:
                out.append((lo, hi))
    return out


def _intersect(a: list[tuple[float, float]], b: list[tuple[float, float]]) -> list[tuple[float, float]]:
    out = []
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            lo, hi = max(lo1, lo2), min(hi1, hi2)
            if lo <= hi:
                out.append((lo, hi))
    return out


def arc_tighten(arc: Arc, c_range, s_range):
    """Shrink a (cos, sin) box to the hull of the joint-limit arc inside it.

    Returns (cl, ch, sl, sh) or raises EmptyBox.
    """
    pad = 1e-12
    cl, ch = c_range[0] - pad, c_range[1] + pad
    sl, sh = s_range[0] - pad, s_range[1] + pad
    allowed = _intersect(_intervals_cos(cl, ch), [(arc.lo, arc.hi)])
    allowed = _intersect(allowed, _intervals_sin(sl, sh))
    if not allowed:
        raise EmptyBox
    imgs = [angle_image(lo, hi) for lo, hi in allowed]
    ncl = min(i[0] for i in imgs) - pad
    nch = max(i[1] for i in imgs) + pad
    nsl = min(i[2] for i in imgs) - pad
    nsh = max(i[3] for i in imgs) + pad
    return (
        max(c_range[0], ncl),
        min(c_range[1], nch),
        max(s_range[0], nsl),
        min(s_range[1], nsh),
    )


# -- compiled structure -------------------------------------------------------

class Structure:
    """Array form of an extended program, shared by tightening and relaxation."""

    def __init__(self, q: Qcqp):
        if not is_extended(q):
            q = extend(q)
        self.q = q
        self.n = q.n_vars
        rows, cols, vals, row_lo, row_hi = [], [], [], [], []
        for r, con in enumerate(q.constraints):
            for i, c in con.lin:
                rows.append(r)
                cols.append(i)
                vals.append(c)
            row_lo.append(con.rhs if con.sense in ("eq", "ge") else -np.inf)
            row_hi.append(con.rhs if con.sense in ("eq", "le") else np.inf)
        self.m = len(q.constraints)
        self.rows = np.array(rows, dtype=int)
        self.cols = np.array(cols, dtype=int)
        self.vals = np.array(vals, dtype=float)
        self.row_lo = np.array(row_lo, dtype=float)
        self.row_hi = np.array(row_hi, dtype=float)
        self.A = sparse.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.m, self.n))
        senses = np.array([con.sense for con in q.constraints])
        self.eq_idx = np.flatnonzero(senses == "eq")
        self.le_idx = np.flatnonzero(senses == "le")
        self.ge_idx = np.flatnonzero(senses == "ge")
        self.A_eq = self.A[self.eq_idx]
        self.b_eq = self.row_lo[self.eq_idx]
        self.A_static_ub = sparse.vstack([self.A[self.le_idx], -self.A[self.ge_idx]]).tocsr()
        self.b_static_ub = np.concatenate([self.row_hi[self.le_idx], -self.row_lo[self.ge_idx]])

        defs = np.array(q.definitions, dtype=int).reshape(-1, 3)
        square = defs[:, 1] == defs[:, 2]
        self.bil = defs[~square]
        self.sq = defs[square]
        self.def_y = defs[:, 0]
        self.def_i = defs[:, 1]
        self.def_j = defs[:, 2]
        self.c = np.zeros(self.n)
        for i, coef in q.objective:
            self.c[i] += coef
        self.c0 = q.objective_constant
        self.var_lb = np.array([v.lb for v in q.variables])
        self.var_ub = np.array([v.ub for v in q.variables])


def structure(q: Qcqp) -> Structure:
    return Structure(q)


# -- boxes --------------------------------------------------------------------

def _propagate_definitions(st: Structure, lo: np.ndarray, hi: np.ndarray) -> None:
    """Forward interval propagation of all definitions in creation order."""
    order = np.argsort(st.def_y)
    for k in order:
        y, i, j = st.def_y[k], st.def_i[k], st.def_j[k]
        if i == j:
            a, b = interval_square((lo[i], hi[i]))
        else:
            a, b = interval_product((lo[i], hi[i]), (lo[j], hi[j]))
        lo[y] = max(lo[y], a)
        hi[y] = min(hi[y], b)


def initial_box(q: Qcqp, chain: KinematicChain | None = None, st: Structure | None = None) -> Box:
    st = st or Structure(q)
    lo = st.var_lb.astype(float).copy()
    hi = st.var_ub.astype(float).copy()
    if chain is not None:
        for arc in chain_arcs(chain):
            cl, ch, sl, sh = angle_image(arc.lo, arc.hi)
            lo[arc.c], hi[arc.c] = max(lo[arc.c], cl), min(hi[arc.c], ch)
            lo[arc.s], hi[arc.s] = max(lo[arc.s], sl), min(hi[arc.s], sh)
    _propagate_definitions(st, lo, hi)
    return Box(lo, hi)


def tighten_box(
    q: Qcqp | Structure,
    box: Box,
    arcs: Sequence[Arc] = (),
    rounds: int = MAX_ROUNDS,
) -> Box:
    """Feasibility-based bound tightening; raises EmptyBox when a domain empties."""
    st = q if isinstance(q, Structure) else Structure(q)
    lo, hi = box.lo.copy(), box.hi.copy()
    for _ in range(rounds):
        before = float(np.sum(hi - lo))
        _round(st, lo, hi, arcs)
        after = float(np.sum(hi - lo))
        if before - after < MIN_PROGRESS:
            break
    return Box(lo, hi)


def _check(lo, hi):
    bad = lo > hi
    if np.any(bad):
        if np.any(lo[bad] - hi[bad] > EMPTY_TOL * np.maximum(1.0, np.abs(lo[bad]))):
            raise EmptyBox
        mid = 0.5 * (lo[bad] + hi[bad])
        lo[bad] = mid
        hi[bad] = mid


def _round(st: Structure, lo: np.ndarray, hi: np.ndarray, arcs) -> None:
    # definitions, forward
    if len(st.def_y):
        i, j, y = st.def_i, st.def_j, st.def_y
        p = np.stack([lo[i] * lo[j], lo[i] * hi[j], hi[i] * lo[j], hi[i] * hi[j]])
        plo, phi = p.min(axis=0), p.max(axis=0)
        sq = i == j
        straddle = sq & (lo[i] < 0) & (hi[i] > 0)
        plo = np.where(straddle, 0.0, plo)
        plo = np.where(sq & ~straddle, np.minimum(lo[i] ** 2, hi[i] ** 2), plo)
        np.maximum.at(lo, y, plo - SAFETY * (1 + np.abs(plo)))
        np.minimum.at(hi, y, phi + SAFETY * (1 + np.abs(phi)))
        _check(lo, hi)
        _backward_definitions(st, lo, hi)
        _check(lo, hi)

    # linear rows
    if st.m:
        a = st.vals
        xl, xh = lo[st.cols], hi[st.cols]
        cmin = np.where(a > 0, a * xl, a * xh)
        cmax = np.where(a > 0, a * xh, a * xl)
        rmin = np.bincount(st.rows, cmin, minlength=st.m)
        rmax = np.bincount(st.rows, cmax, minlength=st.m)
        if np.any(rmin > st.row_hi + EMPTY_TOL * (1 + np.abs(st.row_hi))) or np.any(
            rmax < st.row_lo - EMPTY_TOL * (1 + np.abs(st.row_lo))
        ):
            raise EmptyBox
        others_min = rmin[st.rows] - cmin
        others_max = rmax[st.rows] - cmax
        with np.errstate(invalid="ignore"):
            t_lo = st.row_lo[st.rows] - others_max  # a*x >= t_lo
            t_hi = st.row_hi[st.rows] - others_min  # a*x <= t_hi
            new_lo = np.where(a > 0, t_lo / a, t_hi / a)
            new_hi = np.where(a > 0, t_hi / a, t_lo / a)
        slack = SAFETY * (1 + np.abs(others_min) + np.abs(others_max))
        new_lo = np.where(np.isfinite(new_lo), new_lo - slack / np.abs(a), -np.inf)
        new_hi = np.where(np.isfinite(new_hi), new_hi + slack / np.abs(a), np.inf)
        np.maximum.at(lo, st.cols, new_lo)
        np.minimum.at(hi, st.cols, new_hi)
        _check(lo, hi)

    for arc in arcs:
        cl, ch, sl, sh = arc_tighten(arc, (lo[arc.c], hi[arc.c]), (lo[arc.s], hi[arc.s]))
        lo[arc.c], hi[arc.c], lo[arc.s], hi[arc.s] = cl, ch, sl, sh
        _check(lo, hi)


def _backward_definitions(st: Structure, lo, hi) -> None:
    for y, i, j in zip(st.def_y, st.def_i, st.def_j):
        if i == j:
            r = math.sqrt(max(hi[y], 0.0)) + SAFETY
            lo[i] = max(lo[i], -r)
            hi[i] = min(hi[i], r)
            if lo[y] > 0:
                inner = math.sqrt(lo[y]) - SAFETY
                if lo[i] > -inner:
                    lo[i] = max(lo[i], inner)
                elif hi[i] < inner:
                    hi[i] = min(hi[i], -inner)
            continue
        for a, b in ((i, j), (j, i)):
            if lo[b] > 0 or hi[b] < 0:
                q = (lo[y] / lo[b], lo[y] / hi[b], hi[y] / lo[b], hi[y] / hi[b])
                ql, qh = min(q), max(q)
                lo[a] = max(lo[a], ql - SAFETY * (1 + abs(ql)))
                hi[a] = min(hi[a], qh + SAFETY * (1 + abs(qh)))


# -- relaxation ---------------------------------------------------------------

def mccormick_relax(
    q: Qcqp | Structure,
    box: Box,
    anchors: dict[int, Sequence[float]] | None = None,
) -> LinearProgram:
    """Linear relaxation of the extended program over ``box``.

    Bilinear definitions get the four McCormick inequalities. A square
    ``u = x**2`` gets the secant from above and tangents from below at both
    box ends, the box midpoint and any extra points listed in ``anchors[x]``.
    """
    st = q if isinstance(q, Structure) else Structure(q)
    lo, hi = box.lo, box.hi
    if np.any(lo > hi):
        raise EmptyBox
    rows_r, rows_c, rows_v, rhs = [], [], [], []
    nrow = 0

    if len(st.bil):
        y, i, j = st.bil[:, 0], st.bil[:, 1], st.bil[:, 2]
        li, ui, lj, uj = lo[i], hi[i], lo[j], hi[j]
        k = len(y)
        # -y + lj*xi + li*xj <= li*lj ; -y + uj*xi + ui*xj <= ui*uj
        # y - uj*xi - li*xj <= -li*uj ; y - lj*xi - ui*xj <= -ui*lj
        blocks = [
            (-1.0, lj, li, li * lj),
            (-1.0, uj, ui, ui * uj),
            (1.0, -uj, -li, -li * uj),
            (1.0, -lj, -ui, -ui * lj),
        ]
        for sy, ci, cj, r in blocks:
            idx = nrow + np.arange(k)
            rows_r += [idx, idx, idx]
            rows_c += [y, i, j]
            rows_v += [np.full(k, sy), ci, cj]
            rhs.append(r)
            nrow += k

    if len(st.sq):
        u, x = st.sq[:, 0], st.sq[:, 1]
        lx, ux = lo[x], hi[x]
        k = len(u)
        # secant: u - (lx+ux) x <= -lx*ux
        idx = nrow + np.arange(k)
        rows_r += [idx, idx]
        rows_c += [u, x]
        rows_v += [np.ones(k), -(lx + ux)]
        rhs.append(-lx * ux)
        nrow += k
        # tangents at p: -u + 2p x <= p^2
        points = [lx, ux, 0.5 * (lx + ux)]
        for p in points:
            idx = nrow + np.arange(k)
            rows_r += [idx, idx]
            rows_c += [u, x]
            rows_v += [-np.ones(k), 2.0 * p]
            rhs.append(p * p)
            nrow += k
        if anchors:
            for uu, xx in zip(u, x):
                for p in anchors.get(int(xx), ()):
                    rows_r += [np.array([nrow, nrow])]
                    rows_c += [np.array([uu, xx])]
                    rows_v += [np.array([-1.0, 2.0 * p])]
                    rhs.append(np.array([p * p]))
                    nrow += 1

    if nrow:
        env = sparse.csr_matrix(
            (np.concatenate(rows_v), (np.concatenate(rows_r), np.concatenate(rows_c))),
            shape=(nrow, st.n),
        )
        env_rhs = np.concatenate(rhs)
        env_rhs = env_rhs + ENVELOPE_SLACK * (1.0 + np.abs(env_rhs))
        A_ub = sparse.vstack([st.A_static_ub, env]).tocsr()
        b_ub = np.concatenate([st.b_static_ub, env_rhs])
    else:
        A_ub, b_ub = st.A_static_ub, st.b_static_ub
    return LinearProgram(st.c.copy(), lo.copy(), hi.copy(), A_ub, b_ub, st.A_eq, st.b_eq, st.c0)


def relax_and_solve(st: Structure, box: Box, anchors=None, backend: str = "highs") -> LpResult:
    return solve_lp(mccormick_relax(st, box, anchors), backend=backend)


def preferred_anchors(chain: KinematicChain) -> dict[int, list[float]]:
    """Tangent points at the preferred angles; they make the objective's relaxation exact there."""
    out = {}
    for i, link in enumerate(chain.links):
        out[cos_var(i)] = [math.cos(link.theta_hat)]
        out[sin_var(i)] = [math.sin(link.theta_hat)]
    return out
