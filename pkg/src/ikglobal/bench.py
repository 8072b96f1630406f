"""Random designs, pose sets and batch benchmarking."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .bnb import SolveOptions, solve_global
from .kinematics import DhLink, KinematicChain, forward_kinematics
from .lifting import lift
from .local import DEFAULT_CAP, multi_start
from .pop import build_pop

log = logging.getLogger(__name__)

DESIGN_SETS = ("orth", "rand6", "rand4")
POSE_MODES = ("feasible", "unrestricted")
LENGTH_RANGE = (0.10, 1.00)


@dataclass(frozen=True)
class DesignSpec:
    set: str
    dof: int
    seed: int

    def __post_init__(self):
        if self.set not in DESIGN_SETS:
            raise ValueError(f"unknown design set {self.set!r}; expected one of {', '.join(DESIGN_SETS)}")
        if self.dof < 2:
            raise ValueError("dof must be at least 2")


def gen_design(spec: DesignSpec) -> KinematicChain:
    """Random chain of the given set; preferred angles are drawn within the limits."""
    rng = np.random.default_rng(spec.seed)
    limit = 2.0 if spec.set == "rand4" else 3.0
    links = []
    for _ in range(spec.dof):
        if spec.set == "orth":
            alpha = math.pi / 2 if rng.random() < 0.5 else -math.pi / 2
        else:
            alpha = float(rng.uniform(-3.0, 3.0))
        d = float(rng.uniform(*LENGTH_RANGE))
        r = float(rng.uniform(*LENGTH_RANGE))
        links.append(DhLink(d=d, r=r, alpha=alpha, theta_min=-limit, theta_max=limit))
    hat = rng.uniform(-limit, limit, spec.dof)
    return KinematicChain(links).with_preferred(hat)


def gen_poses(chain: KinematicChain, count: int, mode: str = "feasible", seed: int = 0):
    """List of (pose, angles); angles are None in unrestricted mode."""
    if count < 1:
        raise ValueError("count must be at least 1")
    if mode not in POSE_MODES:
        raise ValueError(f"unknown pose mode {mode!r}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        if mode == "feasible":
            theta = rng.uniform(chain.lower, chain.upper)
            out.append((forward_kinematics(chain, theta), theta))
        else:
            theta = rng.uniform(-math.pi, math.pi, chain.n)
            out.append((forward_kinematics(chain, theta), None))
    return out


@dataclass
class BenchRecord:
    instance: int
    design_set: str
    dof: int
    design_seed: int
    pose_seed: int
    method: str
    warm: bool
    status: str
    wall_time: float
    objective: float
    pos_error_um: float
    rot_error_urad: float
    nodes: int
    warm_start_used: bool
    warm_start_objective: float
    local_suboptimality: float

    def row(self) -> dict:
        return {f.name: _fmt(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_row(cls, row: dict) -> "BenchRecord":
        kw = {}
        for f in fields(cls):
            raw = row[f.name]
            if f.type == "int":
                kw[f.name] = int(raw)
            elif f.type == "float":
                kw[f.name] = float(raw)
            elif f.type == "bool":
                kw[f.name] = raw == "true"
            else:
                kw[f.name] = raw
        return cls(**kw)

    @property
    def key(self):
        return (self.design_set, self.dof, self.instance, self.method, not self.warm)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class BenchOptions:
    methods: tuple[str, ...] = ("A", "M")
    warm_modes: tuple[bool, ...] = (True,)
    gap_rel: float = 1e-6
    time_limit: float = 300.0
    node_limit: int = 1_000_000
    cap: int = DEFAULT_CAP
    starts: int = 4  # random local starts on top of the preferred angles
    preferred: str = "random"  # or "truth": preferred angles equal the pose-generating angles


def run_instance(chain, pose, truth, opts: BenchOptions, meta: dict) -> list[BenchRecord]:
    if opts.preferred == "truth":
        if truth is None:
            raise ValueError("preferred='truth' needs ground-truth angles")
        chain = chain.with_preferred(truth)
    pop = build_pop(chain, pose)
    local = multi_start(chain, pose, opts.starts, meta["pose_seed"], opts.cap)
    log.info("warm start: converged=%s iterations=%d cap=%d starts=%d", local.converged, local.iterations, opts.cap, 1 + opts.starts)
    records = []
    for method in opts.methods:
        q = lift(pop, chain, pose, method)
        for warm in opts.warm_modes:
            so = SolveOptions(
                gap_rel=opts.gap_rel,
                time_limit=opts.time_limit,
                node_limit=opts.node_limit,
                warm_start=local if warm else None,
                record_trace=False,
            )
            res = solve_global(q, chain, pose, so)
            pos, rot = res.pose_error if res.pose_error is not None else (math.nan, math.nan)
            obj = res.objective if res.angles is not None else math.nan
            subopt = math.nan
            if local.converged and res.angles is not None:
                subopt = (local.objective - obj) / max(1.0, abs(obj))
            records.append(
                BenchRecord(
                    **meta,
                    method=method,
                    warm=warm,
                    status=res.status,
                    wall_time=res.wall_time,
                    objective=obj,
                    pos_error_um=pos,
                    rot_error_urad=rot,
                    nodes=res.nodes_explored,
                    warm_start_used=res.warm_start_used,
                    warm_start_objective=local.objective if warm else math.nan,
                    local_suboptimality=subopt,
                )
            )
    return records


def run_bench(
    design_set: str,
    dofs,
    instances: int,
    mode: str = "feasible",
    seed: int = 0,
    opts: BenchOptions | None = None,
) -> list[BenchRecord]:
    """One pose per design; design and pose seeds are derived from ``seed`` deterministically."""
    opts = opts or BenchOptions()
    records = []
    for dof in dofs:
        seeds = np.random.SeedSequence([seed, dof, DESIGN_SETS.index(design_set)]).generate_state(2 * instances, dtype=np.uint32)
        for k in range(instances):
            dseed, pseed = int(seeds[2 * k]), int(seeds[2 * k + 1])
            chain = gen_design(DesignSpec(design_set, dof, dseed))
            pose, truth = gen_poses(chain, 1, mode, pseed)[0]
            meta = dict(instance=k, design_set=design_set, dof=dof, design_seed=dseed, pose_seed=pseed)
            recs = run_instance(chain, pose, truth, opts, meta)
            for r in recs:
                log.info("%s dof=%d #%d %s warm=%s: %s in %.3fs", design_set, dof, k, r.method, r.warm, r.status, r.wall_time)
            records.extend(recs)
    records.sort(key=lambda r: r.key)
    return records


def quartiles(values) -> dict:
    v = np.sort(np.asarray(values, dtype=float))
    if len(v) == 0:
        return {"count": 0, "mean": None, "q1": None, "median": None, "q3": None}
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"count": int(len(v)), "mean": float(np.mean(v)), "q1": float(q1), "median": float(med), "q3": float(q3)}


def summarize(records: list[BenchRecord]) -> dict:
    groups: dict = {}
    for r in records:
        groups.setdefault(f"{r.design_set}/dof{r.dof}/{r.method}/{'warm' if r.warm else 'cold'}", []).append(r)
    out = {}
    for name in sorted(groups):
        rs = groups[name]
        solved = [r for r in rs if r.status == "optimal"]
        out[name] = {
            "wall_time": quartiles([r.wall_time for r in rs]),
            "sorted_wall_time": sorted(r.wall_time for r in rs),
            "mean_pos_error_um": _mean([r.pos_error_um for r in solved]),
            "mean_rot_error_urad": _mean([r.rot_error_urad for r in solved]),
            "optimal": len(solved),
            "infeasible": sum(r.status == "infeasible" for r in rs),
            "limit": sum(r.status not in ("optimal", "infeasible") for r in rs),
            "warm_start_used": sum(r.warm_start_used for r in rs),
        }
    return out


def _mean(values):
    v = [x for x in values if not math.isnan(x)]
    return float(np.mean(v)) if v else None


def write_csv(records: list[BenchRecord], path) -> None:
    names = [f.name for f in fields(BenchRecord)]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow(r.row())


def read_csv(path) -> list[BenchRecord]:
    with open(path, newline="") as fh:
        return [BenchRecord.from_row(row) for row in csv.DictReader(fh)]


def write_summary(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
