import csv
import json
import math

import numpy as np
import pytest

from conftest import GOLDEN
from ikglobal.bench import (
    BenchOptions,
    BenchRecord,
    DesignSpec,
    gen_design,
    gen_poses,
    quartiles,
    read_csv,
    run_bench,
    summarize,
    write_csv,
    write_summary,
)
from ikglobal.bnb import solve
from ikglobal.kinematics import DhLink, KinematicChain, forward_kinematics, in_limits

GOLDEN_CSV = GOLDEN / "bench.csv"
GOLDEN_OPTS = BenchOptions(methods=("A", "M"), warm_modes=(True, False))


def golden_run(tmp_path):
    records = []
    for design_set in ("orth", "rand4"):
        records += run_bench(design_set, [2, 3], 3, "feasible", 7, GOLDEN_OPTS)
    path = tmp_path / "bench.csv"
    write_csv(records, path)
    return path


def without_wall_time(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    k = rows[0].index("wall_time")
    return [r[:k] + r[k + 1:] for r in rows]


class TestGenDesign:
    def test_orth(self):
        chain = gen_design(DesignSpec("orth", 7, 1))
        assert chain.n == 7
        for link in chain.links:
            assert link.alpha in (-math.pi / 2, math.pi / 2)
            assert (link.theta_min, link.theta_max) == (-3, 3)

    def test_orth_uses_both_twists(self):
        alphas = {l.alpha for s in range(5) for l in gen_design(DesignSpec("orth", 7, s)).links}
        assert alphas == {-math.pi / 2, math.pi / 2}

    def test_rand4(self):
        chain = gen_design(DesignSpec("rand4", 7, 1))
        for link in chain.links:
            assert (link.theta_min, link.theta_max) == (-2, 2)
            assert 0.1 <= link.d <= 1.0 and 0.1 <= link.r <= 1.0
            assert -3 <= link.alpha <= 3

    def test_rand6(self):
        chain = gen_design(DesignSpec("rand6", 5, 3))
        assert all((l.theta_min, l.theta_max) == (-3, 3) for l in chain.links)
        assert all(l.theta_min <= l.theta_hat <= l.theta_max for l in chain.links)

    def test_deterministic(self):
        assert gen_design(DesignSpec("rand6", 6, 42)) == gen_design(DesignSpec("rand6", 6, 42))
        assert gen_design(DesignSpec("rand6", 6, 42)) != gen_design(DesignSpec("rand6", 6, 43))

    @pytest.mark.parametrize("kw", [dict(set="nope", dof=3, seed=0), dict(set="orth", dof=1, seed=0)])
    def test_bad_spec(self, kw):
        with pytest.raises(ValueError):
            DesignSpec(**kw)


class TestGenPoses:
    def test_feasible(self):
        chain = gen_design(DesignSpec("rand6", 5, 2))
        for pose, theta in gen_poses(chain, 50, "feasible", 1):
            assert in_limits(chain, theta)
            assert np.max(np.abs(forward_kinematics(chain, theta).matrix - pose.matrix)) <= 1e-10

    def test_unrestricted_hides_truth(self):
        chain = gen_design(DesignSpec("orth", 3, 2))
        assert all(theta is None for _, theta in gen_poses(chain, 5, "unrestricted", 1))

    def test_unrestricted_tight_limits_mostly_infeasible(self):
        base = gen_design(DesignSpec("rand6", 3, 5))
        chain = KinematicChain([DhLink(l.d, l.r, l.alpha, theta_min=-0.1, theta_max=0.1) for l in base.links])
        statuses = [solve(chain, pose).status for pose, _ in gen_poses(chain, 20, "unrestricted", 3)]
        assert statuses.count("infeasible") > len(statuses) / 2

    def test_deterministic(self):
        chain = gen_design(DesignSpec("orth", 4, 0))
        a, b = gen_poses(chain, 3, "feasible", 9), gen_poses(chain, 3, "feasible", 9)
        for (pa, ta), (pb, tb) in zip(a, b):
            assert np.array_equal(pa.matrix, pb.matrix) and np.array_equal(ta, tb)

    def test_bad_arguments(self):
        chain = gen_design(DesignSpec("orth", 3, 0))
        with pytest.raises(ValueError):
            gen_poses(chain, 0)
        with pytest.raises(ValueError):
            gen_poses(chain, 1, "sideways")


class TestRunBench:
    def test_truth_preferred_batch_is_all_zero(self):
        opts = BenchOptions(methods=("A",), preferred="truth")
        records = run_bench("rand6", [3, 4], 5, "feasible", 1, opts)
        assert len(records) == 10
        for r in records:
            assert r.status == "optimal" and r.objective <= 1e-9
            assert r.pos_error_um <= 10 and r.rot_error_urad <= 10

    def test_warm_not_worse_than_cold(self):
        opts = BenchOptions(methods=("A",), warm_modes=(True, False))
        records = run_bench("orth", [3], 5, "feasible", 2, opts)
        by = {}
        for r in records:
            by.setdefault(r.instance, {})[r.warm] = r
        for pair in by.values():
            assert pair[True].objective <= pair[False].objective + 1e-6
            assert not pair[False].warm_start_used and math.isnan(pair[False].warm_start_objective)

    def test_one_record_per_instance_and_method(self):
        records = run_bench("orth", [2], 3, "feasible", 3, BenchOptions())
        keys = [(r.instance, r.method) for r in records]
        assert len(keys) == len(set(keys)) == 6

    def test_suboptimality_is_non_negative(self):
        records = run_bench("rand6", [4], 4, "feasible", 4, BenchOptions(methods=("A",)))
        for r in records:
            if not math.isnan(r.local_suboptimality):
                assert r.local_suboptimality >= -1e-6

    def test_truth_needs_feasible_mode(self):
        with pytest.raises(ValueError):
            run_bench("orth", [2], 1, "unrestricted", 0, BenchOptions(preferred="truth"))


def sample_records():
    rng = np.random.default_rng(5)
    out = []
    for k in range(12):
        status = ["optimal", "infeasible", "time_limit"][k % 3]
        solved = status == "optimal"
        out.append(
            BenchRecord(
                instance=k // 2,
                design_set="orth",
                dof=3 + k % 2,
                design_seed=int(rng.integers(2**32)),
                pose_seed=int(rng.integers(2**32)),
                method="AM"[k % 2],
                warm=bool(k % 4 < 2),
                status=status,
                wall_time=float(rng.exponential()),
                objective=float(rng.uniform()) if solved else math.nan,
                pos_error_um=float(rng.uniform()) if solved else math.nan,
                rot_error_urad=float(rng.uniform()) if solved else math.nan,
                nodes=int(rng.integers(1, 1000)),
                warm_start_used=bool(k % 4 == 0),
                warm_start_objective=float(rng.uniform()) / 3,
                local_suboptimality=math.nan,
            )
        )
    return out


def same(a, b):
    return a == b or (isinstance(a, float) and math.isnan(a) and math.isnan(b))


class TestFiles:
    def test_csv_round_trip(self, tmp_path):
        records = sample_records()
        write_csv(records, tmp_path / "r.csv")
        back = read_csv(tmp_path / "r.csv")
        assert len(back) == len(records)
        for a, b in zip(records, back):
            for name in a.__dataclass_fields__:
                assert same(getattr(a, name), getattr(b, name)), name

    def test_summary_recomputes(self, tmp_path):
        records = sample_records()
        write_csv(records, tmp_path / "r.csv")
        write_summary(summarize(records), tmp_path / "s.json")
        summary = json.loads((tmp_path / "s.json").read_text())
        groups = {}
        for r in read_csv(tmp_path / "r.csv"):
            groups.setdefault(f"{r.design_set}/dof{r.dof}/{r.method}/{'warm' if r.warm else 'cold'}", []).append(r)
        assert set(groups) == set(summary)
        for name, rs in groups.items():
            s = summary[name]
            times = sorted(r.wall_time for r in rs)
            assert abs(s["wall_time"]["mean"] - sum(times) / len(times)) <= 1e-12
            assert abs(s["wall_time"]["median"] - float(np.median(times))) <= 1e-12
            assert s["sorted_wall_time"] == times
            assert s["optimal"] + s["infeasible"] + s["limit"] == len(rs)
            solved = [r.pos_error_um for r in rs if r.status == "optimal"]
            if solved:
                assert abs(s["mean_pos_error_um"] - sum(solved) / len(solved)) <= 1e-12
            else:
                assert s["mean_pos_error_um"] is None

    def test_quartiles(self):
        q = quartiles([4.0, 1.0, 3.0, 2.0])
        assert (q["q1"], q["median"], q["q3"], q["mean"]) == (1.75, 2.5, 3.25, 2.5)
        assert quartiles([])["count"] == 0


class TestDeterminism:
    def test_rerun_is_identical(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        a, b = golden_run(tmp_path / "a"), golden_run(tmp_path / "b")
        assert without_wall_time(a) == without_wall_time(b)

    def test_matches_golden(self, tmp_path):
        assert without_wall_time(golden_run(tmp_path)) == without_wall_time(GOLDEN_CSV)
