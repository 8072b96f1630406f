import math

import numpy as np
import pytest

from conftest import planar, random_chain
from ikglobal.bnb import (
    INFEASIBLE_STATUS,
    NODE_LIMIT,
    OPTIMAL_STATUS,
    TIME_LIMIT,
    BnbNode,
    SolveOptions,
    branch,
    certify,
    gap_of,
    solve,
    solve_global,
    split_node,
)
from ikglobal.kinematics import Pose, forward_kinematics, in_limits, pose_error
from ikglobal.lifting import LIFTED, ORIGINAL, Qcqp, lift
from ikglobal.local import solve_local
from ikglobal.pop import build_pop, objective_at_angles
from ikglobal.relaxation import Box, Structure
from oracles import chain_oracle


def lifted(chain, pose, method="A"):
    return lift(build_pop(chain, pose), chain, pose, method)


def bilinear_structure():
    q = Qcqp()
    q.add_variable(-1, 1, ORIGINAL)
    q.add_variable(-1, 1, ORIGINAL)
    q.add_variable(-1, 1, LIFTED)
    q.definitions.append((2, 0, 1))
    return Structure(q)


class TestBranch:
    def test_splits_violated_definition_at_point(self):
        st = bilinear_structure()
        node = BnbNode(Box(np.array([-1.0, -1, -1]), np.array([1.0, 1, 1])), 0.0, 0)
        left, right = branch(node, np.array([0.0, 0.0, 1.0]), st, np.full(3, 2.0))
        assert (left.box.lo[0], left.box.hi[0]) == (-1.0, 0.0)
        assert (right.box.lo[0], right.box.hi[0]) == (0.0, 1.0)
        assert left.depth == right.depth == 1

    def test_wider_operand_is_chosen(self):
        st = bilinear_structure()
        node = BnbNode(Box(np.array([-0.1, -1, -1]), np.array([0.1, 1, 1])), 0.0, 0)
        left, right = branch(node, np.array([0.0, 0.5, 1.0]), st, np.full(3, 2.0))
        assert left.box.hi[1] == 0.5 and right.box.lo[1] == 0.5
        assert np.array_equal(left.box.lo[[0, 2]], node.box.lo[[0, 2]])

    def test_split_point_is_clamped_away_from_the_ends(self):
        node = BnbNode(Box(np.array([0.0]), np.array([1.0])), 0.0, 0)
        left, right = split_node(node, 0, 0.999)
        assert left.box.hi[0] == pytest.approx(0.8)

    def test_nothing_violated(self):
        st = bilinear_structure()
        node = BnbNode(Box(np.array([-1.0, -1, -1]), np.array([1.0, 1, 1])), 0.0, 0)
        with pytest.raises(ValueError):
            branch(node, np.array([0.5, 0.5, 0.25]), st, np.full(3, 2.0))

    def test_children_partition_the_parent(self, rng):
        st = bilinear_structure()
        for _ in range(200):
            lo = rng.uniform(-1, 0, 3)
            hi = rng.uniform(0, 1, 3) + 1e-3
            x = rng.uniform(lo, hi)
            x[2] = x[0] * x[1] + rng.choice([-1, 1]) * 0.1
            node = BnbNode(Box(lo, hi), 0.0, 0)
            a, b = branch(node, x, st, np.full(3, 2.0))
            var = int(np.flatnonzero(a.box.hi != hi)[0])
            assert a.box.hi[var] == b.box.lo[var]
            assert a.box.is_subset_of(node.box) and b.box.is_subset_of(node.box)
            # every point of the parent lies in one of the children
            for _ in range(10):
                p = rng.uniform(lo, hi)
                assert a.box.contains(p, 0) or b.box.contains(p, 0)


class TestSolve:
    def test_planar_matches_truth(self):
        theta = np.array([0.3, -0.5])
        chain = planar().with_preferred(theta)
        res = solve(chain, forward_kinematics(chain, theta))
        assert res.status == OPTIMAL_STATUS
        assert res.objective <= 1e-9
        assert np.allclose(res.angles, theta, atol=1e-6)
        assert certify(res, chain, forward_kinematics(chain, theta)).passed

    def test_planar_out_of_reach(self):
        res = solve(planar(), Pose.from_translation(3, 0, 0))
        assert res.status == INFEASIBLE_STATUS
        assert res.angles is None and res.best_bound == math.inf

    @pytest.mark.parametrize("method", ["A", "M"])
    def test_matches_oracle_3dof(self, method):
        rng = np.random.default_rng(11)
        for _ in range(3):
            chain = random_chain(rng, 3)
            pose = forward_kinematics(chain, rng.uniform(chain.lower, chain.upper))
            status, obj, _ = chain_oracle(chain, pose)
            res = solve(chain, pose, method)
            assert res.status == status == OPTIMAL_STATUS
            assert res.objective == pytest.approx(obj, abs=1e-6)

    def test_lifts_agree(self):
        rng = np.random.default_rng(12)
        for _ in range(3):
            chain = random_chain(rng, 4)
            pose = forward_kinematics(chain, rng.uniform(chain.lower, chain.upper))
            a, m = solve(chain, pose, "A"), solve(chain, pose, "M")
            assert a.status == m.status == OPTIMAL_STATUS
            assert abs(a.objective - m.objective) <= 1e-6

    def test_result_is_certified(self):
        rng = np.random.default_rng(13)
        chain = random_chain(rng, 4)
        pose = forward_kinematics(chain, rng.uniform(chain.lower, chain.upper))
        res = solve(chain, pose)
        pos, rot = pose_error(forward_kinematics(chain, res.angles), pose)
        assert pos <= 1e-5 and rot <= 1e-5 and in_limits(chain, res.angles)
        assert res.objective == pytest.approx(objective_at_angles(chain, res.angles), abs=1e-12)
        assert res.best_bound <= res.objective
        assert res.gap == gap_of(res.objective, res.best_bound) <= 1e-6

    def test_trace_is_monotone(self):
        rng = np.random.default_rng(14)
        chain = random_chain(rng, 4)
        pose = forward_kinematics(chain, rng.uniform(chain.lower, chain.upper))
        res = solve(chain, pose, warm=False)
        bounds = [b for b, _ in res.trace]
        incs = [u for _, u in res.trace]
        assert all(b2 >= b1 - 1e-12 for b1, b2 in zip(bounds, bounds[1:]))
        assert all(u2 <= u1 for u1, u2 in zip(incs, incs[1:]))
        assert all(b <= u + 1e-12 for b, u in res.trace)

    def test_never_worse_than_warm_start(self):
        rng = np.random.default_rng(15)
        for _ in range(4):
            chain = random_chain(rng, 3)
            pose = forward_kinematics(chain, rng.uniform(chain.lower, chain.upper))
            warm = solve_local(chain, pose)
            res = solve_global(lifted(chain, pose), chain, pose, SolveOptions(warm_start=warm))
            if warm.converged:
                assert res.warm_start_used
                assert res.objective <= warm.objective + 1e-9

    def test_warm_and_cold_agree(self):
        rng = np.random.default_rng(16)
        chain = random_chain(rng, 3)
        pose = forward_kinematics(chain, rng.uniform(chain.lower, chain.upper))
        warm, cold = solve(chain, pose), solve(chain, pose, warm=False)
        assert abs(warm.objective - cold.objective) <= 1e-6
        assert not cold.warm_start_used

    def test_threads_agree(self):
        rng = np.random.default_rng(17)
        chain = random_chain(rng, 3)
        pose = forward_kinematics(chain, rng.uniform(chain.lower, chain.upper))
        one, two = solve(chain, pose), solve(chain, pose, threads=2)
        assert two.status == OPTIMAL_STATUS
        assert abs(one.objective - two.objective) <= 1e-6

    def test_simplex_backend(self):
        theta = np.array([0.3, -0.5, 1.0])
        rng = np.random.default_rng(18)
        chain = random_chain(rng, 3)
        pose = forward_kinematics(chain, theta)
        a, b = solve(chain, pose), solve(chain, pose, lp_backend="simplex")
        assert b.status == OPTIMAL_STATUS and abs(a.objective - b.objective) <= 1e-6

    def test_node_limit(self):
        rng = np.random.default_rng(19)
        chain = random_chain(rng, 5)
        pose = forward_kinematics(chain, rng.uniform(chain.lower, chain.upper))
        res = solve(chain, pose, warm=False, node_limit=1)
        assert res.nodes_explored == 1
        assert res.status in (NODE_LIMIT, OPTIMAL_STATUS)

    def test_time_limit(self):
        rng = np.random.default_rng(20)
        chain = random_chain(rng, 6)
        pose = forward_kinematics(chain, rng.uniform(chain.lower, chain.upper))
        res = solve(chain, pose, warm=False, time_limit=1e-9)
        assert res.status == TIME_LIMIT and res.nodes_explored == 0

    def test_wrong_program(self):
        chain = planar()
        pose = Pose.from_translation(1, 1, 0)
        with pytest.raises(ValueError):
            solve_global(lifted(planar(3), pose), chain, pose)

    @pytest.mark.parametrize(
        "kw",
        [dict(gap_rel=-1), dict(gap_abs=-1), dict(time_limit=0), dict(node_limit=0), dict(threads=0)],
    )
    def test_option_validation(self, kw):
        with pytest.raises(ValueError):
            SolveOptions(**kw).validate()

    def test_to_dict(self):
        res = solve(planar(), Pose.from_translation(3, 0, 0))
        d = res.to_dict()
        assert d["status"] == "infeasible" and d["angles"] is None and d["best_bound"] is None


@pytest.fixture(scope="module")
def solved():
    rng = np.random.default_rng(21)
    chain = random_chain(rng, 3)
    pose = forward_kinematics(chain, rng.uniform(chain.lower, chain.upper))
    return chain, pose, solve(chain, pose)


class TestCertify:
    def test_passes(self, solved):
        chain, pose, res = solved
        rep = certify(res, chain, pose)
        assert rep.passed
        names = {c.name for c in rep.checks}
        assert {"pose_position", "pose_rotation", "joint_limits", "objective_match", "gap_within_tolerance"} <= names

    def test_tampered_objective(self, solved):
        chain, pose, res = solved
        bad = res.__class__(**{**res.__dict__, "objective": res.objective + 1e-3})
        rep = certify(bad, chain, pose)
        assert not rep.passed
        assert not {c.name: c.passed for c in rep.checks}["objective_match"]

    def test_tampered_angles(self, solved):
        chain, pose, res = solved
        bad = res.__class__(**{**res.__dict__, "angles": res.angles + 1e-3})
        assert not certify(bad, chain, pose).passed

    def test_infeasible(self):
        res = solve(planar(), Pose.from_translation(3, 0, 0))
        rep = certify(res, planar(), Pose.from_translation(3, 0, 0))
        assert rep.passed
        assert [c.name for c in rep.checks] == ["queue_exhausted", "no_finite_bound"]

    def test_limit_status_without_incumbent(self):
        res = solve(planar(), Pose.from_translation(3, 0, 0), time_limit=1e-9)
        assert res.status == TIME_LIMIT
        assert not certify(res, planar(), Pose.from_translation(3, 0, 0)).passed


def test_gap_of():
    assert gap_of(1.0, 1.0) == 0.0
    assert gap_of(2.0, 1.0) == pytest.approx(0.5)
    assert gap_of(0.0, -1e-7) == pytest.approx(1e-7)
    assert gap_of(math.inf, 0.0) == math.inf
