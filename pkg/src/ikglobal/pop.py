"""Polynomial program for inverse kinematics over cosine/sine variables.

Variable ``2*i`` is the cosine of joint ``i`` and ``2*i + 1`` its sine
(0-based joints), so the global order is c1 < s1 < c2 < s2 < ...
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .kinematics import KinematicChain, Pose
from .polynomial import Polynomial, PolyMatrix, constant_matrix, matmul

FULL_RANGE_TOL = 1e-9


def cos_var(joint: int) -> int:
    return 2 * joint


def sin_var(joint: int) -> int:
    return 2 * joint + 1


@dataclass(frozen=True)
class LinearInequality:
    """``poly <= 0`` for sense "le", ``poly >= 0`` for sense "ge"."""

    poly: Polynomial
    sense: str

    def satisfied(self, point, tol: float = 0.0) -> bool:
        value = self.poly.evaluate(point)
        return value <= tol if self.sense == "le" else value >= -tol


@dataclass
class PopProgram:
    n_joints: int
    objective: Polynomial
    pose_constraints: list[Polynomial]
    circle_constraints: list[Polynomial]
    inequalities: list[LinearInequality]
    names: list[str] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return 2 * self.n_joints

    @property
    def bounds(self) -> list[tuple[float, float]]:
        return [(-1.0, 1.0)] * self.n_vars

    @property
    def equalities(self) -> list[Polynomial]:
        return self.pose_constraints + self.circle_constraints

    def max_violation(self, point) -> float:
        worst = max((abs(p.evaluate(point)) for p in self.equalities), default=0.0)
        for ineq in self.inequalities:
            value = ineq.poly.evaluate(point)
            worst = max(worst, value if ineq.sense == "le" else -value)
        return worst


def dh_poly(chain: KinematicChain, joint: int) -> PolyMatrix:
    link = chain.links[joint]
    c = Polynomial.variable(cos_var(joint))
    s = Polynomial.variable(sin_var(joint))
    ca, sa = math.cos(link.alpha), math.sin(link.alpha)
    zero, one = Polynomial(), Polynomial.constant(1.0)
    return [
        [c, -ca * s, sa * s, link.r * c],
        [s, ca * c, -sa * c, link.r * s],
        [zero, Polynomial.constant(sa), Polynomial.constant(ca), Polynomial.constant(link.d)],
        [zero, zero, zero, one],
    ]


def dh_inverse_poly(chain: KinematicChain, joint: int) -> PolyMatrix:
    link = chain.links[joint]
    c = Polynomial.variable(cos_var(joint))
    s = Polynomial.variable(sin_var(joint))
    ca, sa = math.cos(link.alpha), math.sin(link.alpha)
    zero, one = Polynomial(), Polynomial.constant(1.0)
    return [
        [c, s, zero, Polynomial.constant(-link.r)],
        [-ca * s, ca * c, Polynomial.constant(sa), Polynomial.constant(-sa * link.d)],
        [sa * s, -sa * c, Polynomial.constant(ca), Polynomial.constant(-ca * link.d)],
        [zero, zero, zero, one],
    ]


def left_product(chain: KinematicChain) -> PolyMatrix:
    m = dh_poly(chain, 0)
    for j in range(1, chain.split):
        m = matmul(m, dh_poly(chain, j))
    return m


def right_product(chain: KinematicChain, target: Pose) -> PolyMatrix:
    m = constant_matrix(target.matrix)
    for j in range(chain.n - 1, chain.split - 1, -1):
        m = matmul(m, dh_inverse_poly(chain, j))
    return m


def build_objective(chain: KinematicChain) -> Polynomial:
    terms: dict[tuple[int, ...], float] = {(): 0.0}
    for i, link in enumerate(chain.links):
        w = link.weight
        terms[()] += 2.0 * w
        terms[(cos_var(i),)] = -2.0 * w * math.cos(link.theta_hat)
        terms[(sin_var(i),)] = -2.0 * w * math.sin(link.theta_hat)
    return Polynomial(terms)


def build_pose_constraints(chain: KinematicChain, target: Pose) -> list[Polynomial]:
    left = left_product(chain)
    right = right_product(chain, target)
    return [left[i][j] - right[i][j] for i in range(3) for j in range(4)]


def build_limit_inequalities(chain: KinematicChain) -> list[LinearInequality]:
    out = []
    for i, link in enumerate(chain.links):
        c, s = cos_var(i), sin_var(i)
        if abs(link.theta_min) < math.pi - FULL_RANGE_TOL:
            t = math.tan(link.theta_min / 2.0)
            out.append(LinearInequality(Polynomial({(c,): t, (s,): -1.0, (): t}), "le"))
        if abs(link.theta_max) < math.pi - FULL_RANGE_TOL:
            t = math.tan(link.theta_max / 2.0)
            out.append(LinearInequality(Polynomial({(c,): t, (s,): -1.0, (): t}), "ge"))
    return out


def build_unit_circle(chain: KinematicChain) -> list[Polynomial]:
    return [
        Polynomial({(cos_var(i), cos_var(i)): 1.0, (sin_var(i), sin_var(i)): 1.0, (): -1.0})
        for i in range(chain.n)
    ]


def build_pop(chain: KinematicChain, target: Pose) -> PopProgram:
    names = []
    for i in range(chain.n):
        names += [f"c{i + 1}", f"s{i + 1}"]
    return PopProgram(
        n_joints=chain.n,
        objective=build_objective(chain),
        pose_constraints=build_pose_constraints(chain, target),
        circle_constraints=build_unit_circle(chain),
        inequalities=build_limit_inequalities(chain),
        names=names,
    )


def angles_to_point(angles) -> list[float]:
    point = []
    for theta in angles:
        point += [math.cos(theta), math.sin(theta)]
    return point


def objective_at_angles(chain: KinematicChain, angles) -> float:
    """Weighted chordal distance from the preferred angles (the linear objective on the circle)."""
    return sum(
        2.0 * link.weight * (1.0 - math.cos(t) * math.cos(link.theta_hat) - math.sin(t) * math.sin(link.theta_hat))
        for link, t in zip(chain.links, angles)
    )
