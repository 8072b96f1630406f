import json

import numpy as np
import pytest
from hypothesis import given

from conftest import GOLDEN, chain_and_angles, planar, random_chain
from ikglobal.bench import DesignSpec, gen_design, gen_poses
from ikglobal.kinematics import forward_kinematics, partial_products
from ikglobal.lifting import (
    LIFTED,
    MATRIX_ENTRY,
    ORIGINAL,
    Constraint,
    LiftingTable,
    Qcqp,
    export_qcqp,
    import_qcqp,
    interval_product,
    interval_square,
    lift,
    lift_a,
    lift_m,
    lift_polynomials,
)
from ikglobal.polynomial import Polynomial
from ikglobal.pop import angles_to_point, build_pop, objective_at_angles


def x(i):
    return Polynomial.variable(i)


def system_a():
    # x1 x2 x3 x4 + x2 x3 x5 = 0 with x1..x5 as ids 0..4
    return lift_polynomials([x(0) * x(1) * x(2) * x(3) + x(1) * x(2) * x(4)])


class TestSystemA:
    def test_three_definitions(self):
        q = system_a()
        assert sorted((i, j) for _, i, j in q.definitions) == [(0, 1), (1, 2), (2, 3)]
        assert q.n_vars == 8

    def test_rewritten_constraint(self):
        q = system_a()
        (con,) = q.constraints
        y = {(i, j): k for k, i, j in q.definitions}
        # y12 * y34 + y23 * x5 = 0
        expected = sorted([tuple(sorted((y[0, 1], y[2, 3]))) + (1.0,), tuple(sorted((y[1, 2], 4))) + (1.0,)])
        assert sorted(con.quad) == expected
        assert con.lin == [] and con.rhs == 0.0 and con.sense == "eq"

    def test_exports_three_definitions(self, tmp_path):
        export_qcqp(system_a(), tmp_path / "q.json")
        assert len(json.loads((tmp_path / "q.json").read_text())["definitions"]) == 3

    def test_exactness(self, rng):
        q = system_a()
        for _ in range(100):
            pt = rng.normal(size=5)
            full = q.extend_point(pt)
            assert q.max_violation(full, include_bounds=False) == pytest.approx(
                abs(pt[0] * pt[1] * pt[2] * pt[3] + pt[1] * pt[2] * pt[4]), abs=1e-12
            )


def test_quadratic_program_is_fixpoint():
    polys = [x(0) * x(1) + x(2) - 1.0, x(0) * x(0) + 2.0 * x(1)]
    q = lift_polynomials(polys)
    assert q.definitions == [] and q.n_vars == 3
    assert q.constraints[0] == Constraint([(0, 1, 1.0)], [(2, 1.0)], 1.0, "eq")


def test_memo_shared_across_constraints():
    q = lift_polynomials([x(0) * x(1) * x(2), x(0) * x(1) * x(3)])
    assert q.definitions == [(4, 0, 1)]


def test_lifting_table_is_unordered():
    q = Qcqp()
    for _ in range(3):
        q.add_variable(-1, 1, ORIGINAL)
    t = LiftingTable(q)
    assert t.product(2, 0) == t.product(0, 2)
    assert q.variables[t.product(1, 1)].lb == 0.0


@pytest.mark.parametrize(
    "a, b, expected",
    [((-1, 1), (0, 1), (-1, 1)), ((2, 3), (-1, -0.5), (-3, -1)), ((0, 0), (-5, 5), (0, 0))],
)
def test_interval_product(a, b, expected):
    assert interval_product(a, b) == expected


@pytest.mark.parametrize("a, expected", [((-1, 1), (0, 1)), ((-3, -2), (4, 9)), ((0.5, 2), (0.25, 4))])
def test_interval_square(a, expected):
    assert interval_square(a) == expected


def instance(n, seed, limit=3.0):
    rng = np.random.default_rng(seed)
    chain = random_chain(rng, n, limit=limit)
    theta = rng.uniform(-limit, limit, n)
    return chain, forward_kinematics(chain, theta), theta


class TestLiftM:
    def test_two_joints_need_no_matrices(self):
        chain, target, _ = instance(2, 0)
        q = lift_m(build_pop(chain, target), chain, target)
        assert q.n_vars == 4 and q.max_degree() == 2
        assert not any(v.kind == MATRIX_ENTRY for v in q.variables)

    def test_four_joints_one_matrix_each_side(self):
        chain, target, _ = instance(4, 1)
        q = lift_m(build_pop(chain, target), chain, target)
        assert sum(v.kind == MATRIX_ENTRY for v in q.variables) == 24

    @pytest.mark.parametrize("n", [3, 4, 5, 6, 7])
    def test_entries_match_partial_products(self, n):
        chain, target, theta = instance(n, n)
        q = lift_m(build_pop(chain, target), chain, target)
        full = q.extend_point(angles_to_point(theta))
        left, right = partial_products(chain, theta, target)
        expected = [left[k][:3].ravel() for k in range(2, chain.split + 1)]
        expected += [right[k][:3].ravel() for k in range(n - 1, chain.split, -1)]
        got = full[2 * n:]
        assert np.max(np.abs(got - np.concatenate(expected))) <= 1e-10

    def test_rejects_mismatched_chain(self):
        chain, target, _ = instance(3, 0)
        with pytest.raises(ValueError):
            lift_m(build_pop(chain, target), planar(4), target)


@pytest.mark.parametrize("method", ["A", "M"])
@given(case=chain_and_angles(1, 6))
def test_exactness(method, case):
    chain, theta = case
    target = forward_kinematics(chain, theta)
    q = lift(build_pop(chain, target), chain, target, method)
    full = q.extend_point(angles_to_point(theta))
    assert q.max_violation(full) <= 1e-9
    assert q.objective_value(full) == pytest.approx(objective_at_angles(chain, theta), abs=1e-9)
    assert q.max_degree() <= 2


@pytest.mark.parametrize("method", ["A", "M"])
def test_restriction_of_infeasible_point_is_detected(method):
    chain, target, theta = instance(4, 3)
    q = lift(build_pop(chain, target), chain, target, method)
    full = q.extend_point(angles_to_point(theta + 0.01))
    assert q.max_violation(full) > 1e-4


def test_lifted_variables_have_one_definition():
    chain, target, _ = instance(7, 5)
    q = lift_a(build_pop(chain, target))
    lifted = [v.id for v in q.variables if v.kind == LIFTED]
    ys = [y for y, _, _ in q.definitions]
    assert sorted(ys) == lifted
    # acyclic in creation order
    assert all(i < y and j < y for y, i, j in q.definitions)


@pytest.mark.parametrize("method", ["A", "M"])
def test_deterministic(method):
    chain, target, _ = instance(6, 8)
    a = lift(build_pop(chain, target), chain, target, method).dumps()
    b = lift(build_pop(chain, target), chain, target, method).dumps()
    assert a == b


def test_golden_counts():
    golden = json.loads((GOLDEN / "lift_counts.json").read_text())
    from ikglobal.relaxation import extend

    for key, counts in golden.items():
        _, dof, method = key.split("-")
        chain = gen_design(DesignSpec("rand6", int(dof), 1))
        target, _ = gen_poses(chain, 1, "feasible", 1)[0]
        q = lift(build_pop(chain, target), chain, target, method)
        got = {
            "variables": q.n_vars,
            "constraints": len(q.constraints),
            "definitions": len(q.definitions),
            "relaxation_variables": extend(q).n_vars,
        }
        assert got == counts, key


class TestInterchange:
    @pytest.mark.parametrize("method", ["A", "M"])
    def test_byte_identical_round_trip(self, tmp_path, method):
        chain, target, _ = instance(5, 2)
        export_qcqp(lift(build_pop(chain, target), chain, target, method), tmp_path / "a.json")
        export_qcqp(import_qcqp(tmp_path / "a.json"), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_empty_program(self, tmp_path):
        export_qcqp(Qcqp(), tmp_path / "e.json")
        data = json.loads((tmp_path / "e.json").read_text())
        assert data == {"vars": [], "objective": {"linear": [], "constant": 0.0}, "constraints": [], "definitions": []}

    def test_schema(self):
        chain, target, _ = instance(3, 4)
        data = lift(build_pop(chain, target), chain, target, "A").to_dict()
        assert set(data) == {"vars", "objective", "constraints", "definitions"}
        assert set(data["vars"][0]) == {"id", "lb", "ub", "kind"}
        assert set(data["constraints"][0]) == {"quad", "lin", "rhs", "sense"}

    def test_rejects_unknown_sense(self):
        data = Qcqp().to_dict()
        data["constraints"].append({"quad": [], "lin": [], "rhs": 0.0, "sense": "lt"})
        with pytest.raises(ValueError):
            Qcqp.from_dict(data)

    def test_unknown_method(self):
        chain, target, _ = instance(2, 0)
        with pytest.raises(ValueError):
            lift(build_pop(chain, target), chain, target, "B")
