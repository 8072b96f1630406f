"""Degree reduction of the polynomial program to a QCQP.

Two strategies are provided. ``lift_a`` rewrites every monomial of degree
above two by pairing its two lowest-ordered factors into a memoized product
variable. ``lift_m`` instead introduces a 3x4 block of variables for every
partial D-H product on both sides of the split.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kinematics import KinematicChain, Pose
from .polynomial import Polynomial, PolyMatrix, constant_matrix, matmul
from .pop import PopProgram, dh_inverse_poly, dh_poly

ORIGINAL, LIFTED, MATRIX_ENTRY = "original", "lifted", "matrix-entry"
SENSES = ("eq", "le", "ge")


@dataclass
class Variable:
    id: int
    lb: float
    ub: float
    kind: str


@dataclass
class Constraint:
    """``sum(quad) + sum(lin)  <sense>  rhs``."""

    quad: list[tuple[int, int, float]]
    lin: list[tuple[int, float]]
    rhs: float
    sense: str

    def activity(self, x) -> float:
        total = sum(c * x[i] * x[j] for i, j, c in self.quad)
        return total + sum(c * x[i] for i, c in self.lin)

    def violation(self, x) -> float:
        act = self.activity(x) - self.rhs
        if self.sense == "eq":
            return abs(act)
        if self.sense == "le":
            return max(act, 0.0)
        return max(-act, 0.0)


@dataclass
class Qcqp:
    variables: list[Variable] = field(default_factory=list)
    objective: list[tuple[int, float]] = field(default_factory=list)
    objective_constant: float = 0.0
    constraints: list[Constraint] = field(default_factory=list)
    definitions: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_original(self) -> int:
        return sum(v.kind == ORIGINAL for v in self.variables)

    def add_variable(self, lb: float, ub: float, kind: str) -> int:
        vid = len(self.variables)
        self.variables.append(Variable(vid, float(lb), float(ub), kind))
        return vid

    def objective_value(self, x) -> float:
        return self.objective_constant + sum(c * x[i] for i, c in self.objective)

    def max_violation(self, x, include_bounds: bool = True) -> float:
        worst = 0.0
        for con in self.constraints:
            worst = max(worst, con.violation(x))
        for y, i, j in self.definitions:
            worst = max(worst, abs(x[y] - x[i] * x[j]))
        if include_bounds:
            for v in self.variables:
                worst = max(worst, v.lb - x[v.id], x[v.id] - v.ub)
        return worst

    def max_degree(self) -> int:
        deg = 0
        for con in self.constraints:
            if con.quad:
                deg = 2
            elif con.lin:
                deg = max(deg, 1)
        return deg

    def extend_point(self, original) -> np.ndarray:
        """Extend an assignment of the original variables to every variable.

        Definitions are evaluated as soon as their operands are known; other
        variables are solved from the earliest equality in which they are the
        only unknown and appear linearly.
        """
        n0 = self.n_original
        x = np.full(self.n_vars, np.nan)
        x[:n0] = np.asarray(original, dtype=float)[:n0]
        known = np.zeros(self.n_vars, dtype=bool)
        known[:n0] = True
        pending = list(self.definitions)
        while not known.all():
            progress = False
            rest = []
            for y, i, j in pending:
                if known[i] and known[j]:
                    x[y] = x[i] * x[j]
                    known[y] = True
                    progress = True
                else:
                    rest.append((y, i, j))
            pending = rest
            if progress:
                continue
            for con in self.constraints:
                if con.sense != "eq" or any(not (known[i] and known[j]) for i, j, _ in con.quad):
                    continue
                unknown = {i for i, _ in con.lin if not known[i]}
                if len(unknown) != 1:
                    continue
                vid = unknown.pop()
                coef = sum(c for i, c in con.lin if i == vid)
                if coef == 0.0:
                    continue
                x[vid] = (con.rhs - _activity_without(con, x, vid)) / coef
                known[vid] = True
                progress = True
                break
            if not progress:
                missing = np.flatnonzero(~known)
                raise ValueError(f"variables {missing.tolist()} cannot be derived from the originals")
        return x

    # -- interchange -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "vars": [{"id": v.id, "lb": v.lb, "ub": v.ub, "kind": v.kind} for v in self.variables],
            "objective": {
                "linear": [[i, c] for i, c in self.objective],
                "constant": self.objective_constant,
            },
            "constraints": [
                {
                    "quad": [[i, j, c] for i, j, c in con.quad],
                    "lin": [[i, c] for i, c in con.lin],
                    "rhs": con.rhs,
                    "sense": con.sense,
                }
                for con in self.constraints
            ],
            "definitions": [[y, i, j] for y, i, j in self.definitions],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Qcqp":
        q = cls()
        for item in data["vars"]:
            if item["id"] != len(q.variables):
                raise ValueError("variable ids must be consecutive from 0")
            q.variables.append(Variable(int(item["id"]), float(item["lb"]), float(item["ub"]), item["kind"]))
        q.objective = [(int(i), float(c)) for i, c in data["objective"]["linear"]]
        q.objective_constant = float(data["objective"]["constant"])
        for con in data["constraints"]:
            if con["sense"] not in SENSES:
                raise ValueError(f"unknown constraint sense {con['sense']!r}")
            q.constraints.append(
                Constraint(
                    [(int(i), int(j), float(c)) for i, j, c in con["quad"]],
                    [(int(i), float(c)) for i, c in con["lin"]],
                    float(con["rhs"]),
                    con["sense"],
                )
            )
        q.definitions = [(int(y), int(i), int(j)) for y, i, j in data["definitions"]]
        return q

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"


def _activity_without(con: Constraint, x, skip: int) -> float:
    total = 0.0
    for i, j, c in con.quad:
        total += c * x[i] * x[j]
    for i, c in con.lin:
        if i != skip:
            total += c * x[i]
    return total


def export_qcqp(q: Qcqp, path: str | Path) -> None:
    Path(path).write_text(q.dumps())


def import_qcqp(path: str | Path) -> Qcqp:
    return Qcqp.from_dict(json.loads(Path(path).read_text()))


# -- interval helpers used for lifted-variable bounds -------------------------

def interval_product(a: tuple[float, float], b: tuple[float, float]) -> tuple[float, float]:
    p = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    return min(p), max(p)


def interval_square(a: tuple[float, float]) -> tuple[float, float]:
    lo, hi = a
    if lo >= 0:
        return lo * lo, hi * hi
    if hi <= 0:
        return hi * hi, lo * lo
    return 0.0, max(lo * lo, hi * hi)


# -- lift_A -------------------------------------------------------------------

class LiftingTable:
    """Memo of unordered variable pairs to the lifted variable equal to their product."""

    def __init__(self, q: Qcqp):
        self.q = q
        self.pairs: dict[tuple[int, int], int] = {}

    def product(self, i: int, j: int) -> int:
        key = (i, j) if i <= j else (j, i)
        if key not in self.pairs:
            vi, vj = self.q.variables[key[0]], self.q.variables[key[1]]
            if key[0] == key[1]:
                lb, ub = interval_square((vi.lb, vi.ub))
            else:
                lb, ub = interval_product((vi.lb, vi.ub), (vj.lb, vj.ub))
            y = self.q.add_variable(lb, ub, LIFTED)
            self.q.definitions.append((y, key[0], key[1]))
            self.pairs[key] = y
        return self.pairs[key]

    def reduce(self, key: tuple[int, ...]) -> tuple[int, ...]:
        factors = sorted(key)
        while len(factors) > 2:
            y = self.product(factors[0], factors[1])
            factors = sorted(factors[2:] + [y])
        return tuple(factors)


def _to_constraint(terms: dict[tuple[int, ...], float], sense: str) -> Constraint:
    quad, lin, const = [], [], 0.0
    for key, coef in terms.items():
        if len(key) == 0:
            const += coef
        elif len(key) == 1:
            lin.append((key[0], coef))
        else:
            quad.append((key[0], key[1], coef))
    quad.sort()
    lin.sort()
    return Constraint(quad, lin, -const, sense)


def _accumulate(poly: Polynomial, table: LiftingTable | None) -> dict[tuple[int, ...], float]:
    out: dict[tuple[int, ...], float] = {}
    for key, coef in poly.items():
        reduced = table.reduce(key) if table is not None else key
        out[reduced] = out.get(reduced, 0.0) + coef
    return {k: c for k, c in out.items() if c != 0.0}


def _base_qcqp(pop: PopProgram) -> Qcqp:
    q = Qcqp()
    for lb, ub in pop.bounds:
        q.add_variable(lb, ub, ORIGINAL)
    objective = {key: c for key, c in pop.objective.items()}
    if any(len(k) > 1 for k in objective):
        raise ValueError("objective must be affine")
    q.objective = sorted((k[0], c) for k, c in objective.items() if k)
    q.objective_constant = objective.get((), 0.0)
    return q


def _pass_through(q: Qcqp, pop: PopProgram) -> None:
    for circle in pop.circle_constraints:
        q.constraints.append(_to_constraint(_accumulate(circle, None), "eq"))
    for ineq in pop.inequalities:
        q.constraints.append(_to_constraint(_accumulate(ineq.poly, None), ineq.sense))


def lift_polynomials(polys: list[Polynomial], n_vars: int | None = None) -> Qcqp:
    """Lift bare equality constraints ``p = 0`` over variables 0..n_vars-1."""
    if n_vars is None:
        n_vars = 1 + max((max(p.variables, default=-1) for p in polys), default=-1)
    q = Qcqp()
    for _ in range(n_vars):
        q.add_variable(-math.inf, math.inf, ORIGINAL)
    table = LiftingTable(q)
    for poly in polys:
        q.constraints.append(_to_constraint(_accumulate(poly, table), "eq"))
    return q


def lift_a(pop: PopProgram) -> Qcqp:
    q = _base_qcqp(pop)
    table = LiftingTable(q)
    for poly in pop.pose_constraints:
        terms = _accumulate(poly, table)
        if terms:
            q.constraints.append(_to_constraint(terms, "eq"))
    _pass_through(q, pop)
    return q


# -- lift_M -------------------------------------------------------------------

def _entry_bounds(rows: int, translation_bound: list[float]):
    bounds = {}
    for a in range(rows):
        for b in range(4):
            if b < 3:
                bounds[a, b] = (-1.0, 1.0)
            else:
                bounds[a, b] = (-translation_bound[a], translation_bound[a])
    return bounds


def _lift_matrix(q: Qcqp, expr: PolyMatrix, bounds) -> PolyMatrix:
    """Replace the 3x4 block of ``expr`` by fresh variables tied by equalities."""
    out = [row[:] for row in expr]
    for a in range(3):
        for b in range(4):
            lb, ub = bounds[a, b]
            v = q.add_variable(lb, ub, MATRIX_ENTRY)
            terms = _accumulate(expr[a][b], None)
            if any(len(k) > 2 for k in terms):
                raise AssertionError("partial product entry exceeds degree two")
            terms[(v,)] = terms.get((v,), 0.0) - 1.0
            q.constraints.append(_to_constraint(terms, "eq"))
            out[a][b] = Polynomial.variable(v)
    return out


def lift_m(pop: PopProgram, chain: KinematicChain, target: Pose) -> Qcqp:
    if pop.n_joints != chain.n:
        raise ValueError("program and chain disagree on the number of joints")
    q = _base_qcqp(pop)
    n, nu = chain.n, chain.split
    reach = [math.hypot(link.r, link.d) for link in chain.links]

    left = dh_poly(chain, 0)
    for k in range(2, nu + 1):
        prod = matmul(left, dh_poly(chain, k - 1))
        bound = sum(reach[:k])
        left = _lift_matrix(q, prod, _entry_bounds(3, [bound] * 3))

    t = np.abs(target.translation)
    right = matmul(constant_matrix(target.matrix), dh_inverse_poly(chain, n - 1)) if n > nu else constant_matrix(target.matrix)
    for k in range(n - 1, nu, -1):
        prod = matmul(right, dh_inverse_poly(chain, k - 1))
        extra = sum(reach[k - 1:])
        right = _lift_matrix(q, prod, _entry_bounds(3, [t[a] + extra for a in range(3)]))

    for a in range(3):
        for b in range(4):
            terms = _accumulate(left[a][b] - right[a][b], None)
            if terms:
                q.constraints.append(_to_constraint(terms, "eq"))
    _pass_through(q, pop)
    return q


def lift(pop: PopProgram, chain: KinematicChain, target: Pose, method: str = "A") -> Qcqp:
    method = method.upper()
    if method == "A":
        return lift_a(pop)
    if method == "M":
        return lift_m(pop, chain, target)
    raise ValueError(f"unknown lifting method {method!r}; expected 'A' or 'M'")

