"""The ``ik`` command."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import DESIGN_SETS, POSE_MODES, BenchOptions, DesignSpec, gen_design, gen_poses, run_bench, summarize, write_csv, write_summary
from .bnb import INFEASIBLE_STATUS, OPTIMAL_STATUS, SolveOptions, certify, solve_global
from .kinematics import forward_kinematics, load_chain, load_pose, save_chain, save_pose
from .lifting import export_qcqp, lift
from .local import DEFAULT_CAP, multi_start, solve_local
from .pop import build_pop

EXIT_OPTIMAL, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_LIMIT = 0, 1, 2, 3
SEED_ENV = "IK_SEED"

log = logging.getLogger("ikglobal")


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"{SEED_ENV} must be an integer, got {raw!r}")


def _seed(args) -> int:
    return default_seed() if args.seed is None else args.seed


def _emit(payload, out: str | None) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _read_angles(path):
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data["angles"]
    return np.asarray(data, dtype=float)


def cmd_gen_design(args) -> int:
    chain = gen_design(DesignSpec(args.set, args.dof, _seed(args)))
    if args.out:
        save_chain(chain, args.out)
    else:
        _emit(chain.to_dict(), None)
    return 0


def cmd_gen_poses(args) -> int:
    chain = load_chain(args.chain)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, (pose, angles) in enumerate(gen_poses(chain, args.count, args.mode, _seed(args))):
        save_pose(pose, out / f"pose_{k:04d}.json")
        if angles is not None:
            (out / f"angles_{k:04d}.json").write_text(json.dumps([float(t) for t in angles]) + "\n")
    return 0


def cmd_fk(args) -> int:
    pose = forward_kinematics(load_chain(args.chain), _read_angles(args.angles))
    if args.out:
        save_pose(pose, args.out)
    else:
        _emit(pose.matrix.tolist(), None)
    return 0


def cmd_local(args) -> int:
    chain, pose = load_chain(args.chain), load_pose(args.pose)
    if args.starts:
        res = multi_start(chain, pose, args.starts, _seed(args), args.cap)
    else:
        start = _read_angles(args.start) if args.start else None
        res = solve_local(chain, pose, start, args.cap)
    _emit(res.to_dict(), args.out)
    return 0


def cmd_lift(args) -> int:
    chain, pose = load_chain(args.chain), load_pose(args.pose)
    q = lift(build_pop(chain, pose), chain, pose, args.method)
    if args.out:
        export_qcqp(q, args.out)
    else:
        sys.stdout.write(q.dumps())
    return 0


def cmd_solve(args) -> int:
    chain, pose = load_chain(args.chain), load_pose(args.pose)
    q = lift(build_pop(chain, pose), chain, pose, args.lift)
    warm = None
    if not args.no_warm_start:
        warm = solve_local(chain, pose, None, args.cap)
        log.info("warm start: converged=%s objective=%.6g iterations=%d (cap %d)", warm.converged, warm.objective, warm.iterations, args.cap)
    opts = SolveOptions(
        gap_rel=args.gap,
        time_limit=args.time_limit,
        node_limit=args.node_limit,
        warm_start=warm,
        threads=args.threads,
        lp_backend=args.lp,
    )
    res = solve_global(q, chain, pose, opts)
    payload = res.to_dict()
    payload["lift"] = args.lift
    payload["certificate"] = certify(res, chain, pose, args.gap).to_dict()
    _emit(payload, args.out)
    if res.status == OPTIMAL_STATUS:
        return EXIT_OPTIMAL
    if res.status == INFEASIBLE_STATUS:
        return EXIT_INFEASIBLE
    return EXIT_LIMIT


def cmd_bench(args) -> int:
    opts = BenchOptions(
        methods=tuple(args.methods),
        warm_modes=tuple(m == "warm" for m in args.modes),
        gap_rel=args.gap,
        time_limit=args.time_limit,
        node_limit=args.node_limit,
        cap=args.cap,
        starts=args.starts,
        preferred=args.preferred,
    )
    records = []
    for design_set in args.set:
        records.extend(run_bench(design_set, args.dof, args.instances, args.mode, _seed(args), opts))
    write_csv(records, args.csv)
    summary = summarize(records)
    if args.summary:
        write_summary(summary, args.summary)
    else:
        _emit(summary, None)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ik", description="Globally optimal inverse kinematics by spatial branch and bound.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr (-vv for debug output)")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND", help="run `ik COMMAND --help` for its flags")
    seed_help = f"random seed (default: ${SEED_ENV} or 0)"

    s = sub.add_parser("gen-design", help="generate a random chain", description="Generate a random chain from one of the design sets.")
    s.add_argument("--set", required=True, choices=DESIGN_SETS, help="design set: orth (twists ±π/2), rand6 (limits ±3) or rand4 (limits ±2)")
    s.add_argument("--dof", required=True, type=int, help="number of joints (at least 2)")
    s.add_argument("--seed", type=int, help=seed_help)
    s.add_argument("--out", help="chain JSON to write (default: stdout)")
    s.set_defaults(func=cmd_gen_design)

    s = sub.add_parser("gen-poses", help="sample target poses for a chain", description="Sample joint angles and write their forward-kinematics poses.")
    s.add_argument("--chain", required=True, help="chain JSON")
    s.add_argument("--count", type=int, default=1, help="number of poses (default: 1)")
    s.add_argument("--mode", choices=POSE_MODES, default="feasible", help="feasible: angles within limits, ground truth written; unrestricted: angles in [-π, π], no ground truth")
    s.add_argument("--seed", type=int, help=seed_help)
    s.add_argument("--out-dir", required=True, help="directory for pose_NNNN.json and angles_NNNN.json")
    s.set_defaults(func=cmd_gen_poses)

    s = sub.add_parser("fk", help="forward kinematics", description="Print the end-effector pose for given joint angles.")
    s.add_argument("--chain", required=True, help="chain JSON")
    s.add_argument("--angles", required=True, help="JSON list of joint angles in radians")
    s.add_argument("--out", help="pose JSON to write (default: stdout)")
    s.set_defaults(func=cmd_fk)

    s = sub.add_parser("local", help="local solve", description="Run the local solver and print its result.")
    s.add_argument("--chain", required=True, help="chain JSON")
    s.add_argument("--pose", required=True, help="target pose JSON (4x4 row-major)")
    s.add_argument("--start", help="JSON list of starting angles (default: the preferred angles)")
    s.add_argument("--cap", type=int, default=DEFAULT_CAP, help=f"iteration cap (default: {DEFAULT_CAP})")
    s.add_argument("--starts", type=int, default=0, help="extra random starts; the best converged run is kept (default: 0)")
    s.add_argument("--seed", type=int, help=seed_help + ", used by --starts")
    s.add_argument("--out", help="result JSON to write (default: stdout)")
    s.set_defaults(func=cmd_local)

    s = sub.add_parser("lift", help="write the lifted QCQP", description="Build the polynomial program and lift it to a QCQP.")
    s.add_argument("--chain", required=True, help="chain JSON")
    s.add_argument("--pose", required=True, help="target pose JSON")
    s.add_argument("--method", choices=("A", "M"), default="A", help="A: pairwise monomial lifting, M: matrix-entry lifting (default: A)")
    s.add_argument("--out", help="QCQP JSON to write (default: stdout)")
    s.set_defaults(func=cmd_lift)

    s = sub.add_parser(
        "solve",
        help="certified global solve",
        description="Solve to global optimality. Exit code 0 = optimal, 2 = infeasible, 3 = limit hit.",
    )
    s.add_argument("--chain", required=True, help="chain JSON")
    s.add_argument("--pose", required=True, help="target pose JSON")
    s.add_argument("--lift", choices=("A", "M"), default="A", help="lifting method (default: A)")
    s.add_argument("--gap", type=float, default=1e-6, help="relative optimality gap (default: 1e-6)")
    s.add_argument("--time-limit", type=float, default=300.0, help="wall-clock limit in seconds (default: 300)")
    s.add_argument("--node-limit", type=int, default=1_000_000, help="node limit (default: 1000000)")
    s.add_argument("--threads", type=int, default=1, help="nodes bounded concurrently (default: 1, reproducible)")
    s.add_argument("--no-warm-start", action="store_true", help="skip the local solve used as first incumbent")
    s.add_argument("--lp", choices=("highs", "simplex"), default="highs", help="LP backend for node relaxations: HiGHS or the built-in bounded simplex (default: highs)")
    s.add_argument("--cap", type=int, default=DEFAULT_CAP, help=f"warm-start iteration cap (default: {DEFAULT_CAP})")
    s.add_argument("--out", help="result JSON to write (default: stdout)")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("bench", help="batch benchmark", description="Generate designs and poses, solve them and write a CSV plus a JSON summary.")
    s.add_argument("--set", nargs="+", choices=DESIGN_SETS, default=["orth"], help="design sets (default: orth)")
    s.add_argument("--dof", nargs="+", type=int, default=[3], help="joint counts (default: 3)")
    s.add_argument("--instances", type=int, default=10, help="instances per set and joint count (default: 10)")
    s.add_argument("--mode", choices=POSE_MODES, default="feasible", help="pose sampling mode (default: feasible)")
    s.add_argument("--preferred", choices=("random", "truth"), default="random", help="preferred angles: random within limits or the pose-generating angles (default: random)")
    s.add_argument("--methods", nargs="+", choices=("A", "M"), default=["A", "M"], help="lifting methods (default: A M)")
    s.add_argument("--modes", nargs="+", choices=("warm", "cold"), default=["warm"], help="warm and/or cold starts (default: warm)")
    s.add_argument("--gap", type=float, default=1e-6, help="relative optimality gap (default: 1e-6)")
    s.add_argument("--time-limit", type=float, default=300.0, help="per-solve limit in seconds (default: 300)")
    s.add_argument("--node-limit", type=int, default=1_000_000, help="per-solve node limit (default: 1000000)")
    s.add_argument("--cap", type=int, default=DEFAULT_CAP, help=f"warm-start iteration cap per local run (default: {DEFAULT_CAP})")
    s.add_argument("--starts", type=int, default=4, help="random local starts tried besides the preferred angles (default: 4)")
    s.add_argument("--seed", type=int, help=seed_help)
    s.add_argument("--csv", required=True, help="CSV file, one row per instance and method")
    s.add_argument("--summary", help="summary JSON to write (default: stdout)")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"ik: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
