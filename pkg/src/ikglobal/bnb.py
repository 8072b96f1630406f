"""Spatial branch and bound over boxes of the lifted program."""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kinematics import KinematicChain, Pose, forward_kinematics, in_limits, pose_error, recover_angles, DegenerateAngle
from .lifting import Qcqp
from .local import DEFAULT_CAP, LocalResult, polish, solve_local
from .lp import INFEASIBLE, OPTIMAL
from .pop import objective_at_angles
from .relaxation import (
    Box,
    EmptyBox,
    Structure,
    chain_arcs,
    initial_box,
    mccormick_relax,
    preferred_anchors,
    tighten_box,
)
from .lp import solve_lp

log = logging.getLogger(__name__)

FEAS_TOL = 1e-8
CERT_POS = 10e-6
CERT_ROT = 10e-6
MIN_WIDTH = 1e-10

OPTIMAL_STATUS = "optimal"
INFEASIBLE_STATUS = "infeasible"
GAP_LIMIT = "gap_limit"
TIME_LIMIT = "time_limit"
NODE_LIMIT = "node_limit"


@dataclass
class SolveOptions:
    gap_rel: float = 1e-6
    gap_abs: float = 1e-9
    time_limit: float = 300.0
    node_limit: int = 1_000_000
    warm_start: LocalResult | None = None
    threads: int = 1
    lp_backend: str = "highs"
    record_trace: bool = True

    def validate(self):
        if self.time_limit <= 0 or self.node_limit <= 0:
            raise ValueError("time and node limits must be positive")
        if self.gap_rel < 0 or self.gap_abs < 0:
            raise ValueError("gap tolerances must be non-negative")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


@dataclass(order=False)
class BnbNode:
    box: Box
    lower_bound: float
    depth: int
    relaxation_point: np.ndarray | None = None


@dataclass
class SolveResult:
    status: str
    angles: np.ndarray | None
    objective: float
    best_bound: float
    gap: float
    nodes_explored: int
    wall_time: float
    pose_error: tuple[float, float] | None  # (micrometres, microradians)
    warm_start_used: bool = False
    warm_start_objective: float | None = None
    trace: list[tuple[float, float]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "angles": None if self.angles is None else [float(t) for t in self.angles],
            "objective": _json_float(self.objective),
            "best_bound": _json_float(self.best_bound),
            "gap": _json_float(self.gap),
            "nodes_explored": self.nodes_explored,
            "wall_time": self.wall_time,
            "pose_error_um": None if self.pose_error is None else self.pose_error[0],
            "pose_error_urad": None if self.pose_error is None else self.pose_error[1],
            "warm_start_used": self.warm_start_used,
            "warm_start_objective": self.warm_start_objective,
        }


def _json_float(x):
    if x is None or not math.isfinite(x):
        return None
    return float(x)


def gap_of(objective: float, bound: float) -> float:
    if not math.isfinite(objective):
        return math.inf
    if not math.isfinite(bound):
        return 0.0 if bound > 0 else math.inf
    return max(0.0, (objective - bound) / max(1.0, abs(objective)))


class _Incumbent:
    def __init__(self):
        self.lock = threading.Lock()
        self.angles = None
        self.objective = math.inf

    def offer(self, angles, objective) -> bool:
        with self.lock:
            if objective < self.objective:
                self.angles = np.array(angles)
                self.objective = objective
                return True
        return False


def branch(node: BnbNode, point: np.ndarray, st: Structure, root_width: np.ndarray, tol: float = FEAS_TOL):
    """Split on an operand of the most violated definition.

    Returns the two children; raises ValueError when no definition is violated.
    """
    lo, hi = node.box.lo, node.box.hi
    x = point
    viol = np.abs(x[st.def_y] - x[st.def_i] * x[st.def_j])
    k = int(np.argmax(viol)) if len(viol) else -1
    if k < 0 or viol[k] <= tol:
        raise ValueError("no violated definition: the relaxation point is feasible")
    i, j = int(st.def_i[k]), int(st.def_j[k])
    var = _pick_operand(i, j, lo, hi, root_width)
    if hi[var] - lo[var] <= MIN_WIDTH:
        other = j if var == i else i
        var = other
    if hi[var] - lo[var] <= MIN_WIDTH:
        raise ValueError("operands of the violated definition are already degenerate")
    return split_node(node, var, x[var])


def _pick_operand(i, j, lo, hi, root_width):
    wi = (hi[i] - lo[i]) / max(root_width[i], 1e-300)
    wj = (hi[j] - lo[j]) / max(root_width[j], 1e-300)
    return i if wi >= wj else j


def split_node(node: BnbNode, var: int, value: float):
    lo, hi = node.box.lo, node.box.hi
    w = hi[var] - lo[var]
    cut = min(max(value, lo[var] + 0.2 * w), hi[var] - 0.2 * w)
    left, right = node.box.copy(), node.box.copy()
    left.hi[var] = cut
    right.lo[var] = cut
    return (
        BnbNode(left, node.lower_bound, node.depth + 1),
        BnbNode(right, node.lower_bound, node.depth + 1),
    )


def _widest_original(box: Box, n_orig: int, root_width) -> int:
    rel = box.width[:n_orig] / np.maximum(root_width[:n_orig], 1e-300)
    return int(np.argmax(rel))


def verify_incumbent(chain: KinematicChain, target: Pose, angles) -> tuple[float, float]:
    pos, rot = pose_error(forward_kinematics(chain, angles), target)
    return pos, rot


def solve_global(
    q: Qcqp,
    chain: KinematicChain,
    target: Pose,
    opts: SolveOptions | None = None,
) -> SolveResult:
    opts = opts or SolveOptions()
    opts.validate()
    if q.n_original != 2 * chain.n:
        raise ValueError(
            f"program has {q.n_original} original variables but the chain needs {2 * chain.n}"
        )
    start = time.perf_counter()
    st = Structure(q)
    arcs = chain_arcs(chain)
    anchors = preferred_anchors(chain)
    n_orig = 2 * chain.n
    inc = _Incumbent()
    warm_used = False
    warm_obj = None

    def offer_angles(angles) -> bool:
        pos, rot = verify_incumbent(chain, target, angles)
        if pos > CERT_POS or rot > CERT_ROT or not in_limits(chain, angles, 1e-12):
            return False
        return inc.offer(angles, objective_at_angles(chain, angles))

    if opts.warm_start is not None:
        warm_obj = opts.warm_start.objective
        if opts.warm_start.converged and offer_angles(opts.warm_start.angles):
            warm_used = True

    def cutoff():
        obj = inc.objective
        if not math.isfinite(obj):
            return math.inf
        return obj - max(opts.gap_abs, opts.gap_rel * max(1.0, abs(obj)))

    def tol_for(obj):
        return max(opts.gap_abs, opts.gap_rel * max(1.0, abs(obj)))

    root = BnbNode(initial_box(st.q, chain, st), -math.inf, 0)
    root_width = np.maximum(root.box.width, 1e-12)
    counter = itertools.count()
    heap: list = []
    heapq.heappush(heap, (root.lower_bound, -root.depth, next(counter), root))
    fathomed_bound = math.inf  # smallest bound among nodes pruned by the incumbent
    unresolved_bound = math.inf  # nodes dropped at minimum width without a verdict
    nodes = 0
    status = None
    trace: list[tuple[float, float]] = []
    lock = threading.Lock()

    def process(node: BnbNode):
        """Bound one node; returns ('prune', bound) | ('infeasible',) | ('branch', children, bound) | ('stuck', bound)."""
        try:
            box = tighten_box(st, node.box, arcs)
        except EmptyBox:
            return ("infeasible",)
        res = solve_lp(mccormick_relax(st, box, anchors), backend=opts.lp_backend)
        if res.status == INFEASIBLE:
            return ("infeasible",)
        if res.status != OPTIMAL:
            # numerical trouble: keep the parent bound and split the widest original variable
            var = _widest_original(box, n_orig, root_width)
            if box.width[var] <= MIN_WIDTH:
                return ("stuck", node.lower_bound)
            mid = 0.5 * (box.lo[var] + box.hi[var])
            return ("branch", split_node(BnbNode(box, node.lower_bound, node.depth), var, mid), node.lower_bound)
        bound = max(node.lower_bound, res.value)
        x = res.x
        try:
            candidate = recover_angles(x[0:n_orig:2], x[1:n_orig:2])
        except DegenerateAngle:
            candidate = None
        if candidate is not None and bound < cutoff():
            candidate = np.clip(candidate, chain.lower, chain.upper)
            local = polish(chain, target, candidate)
            if local.converged:
                offer_angles(local.angles)
        if bound >= cutoff():
            return ("prune", bound)
        here = BnbNode(box, bound, node.depth, x)
        try:
            children = branch(here, x, st, root_width)
        except ValueError:
            var = _widest_original(box, n_orig, root_width)
            if box.width[var] <= MIN_WIDTH:
                return ("stuck", bound)
            children = split_node(here, var, 0.5 * (box.lo[var] + box.hi[var]))
        return ("branch", children, bound)

    def handle(node, outcome):
        nonlocal fathomed_bound, unresolved_bound
        kind = outcome[0]
        if kind == "prune":
            fathomed_bound = min(fathomed_bound, outcome[1])
        elif kind == "stuck":
            unresolved_bound = min(unresolved_bound, outcome[1])
        elif kind == "branch":
            for child in outcome[1]:
                heapq.heappush(heap, (child.lower_bound, -child.depth, next(counter), child))

    def global_bound():
        open_min = heap[0][0] if heap else math.inf
        return min(open_min, fathomed_bound, unresolved_bound, inc.objective)

    pool = ThreadPoolExecutor(opts.threads) if opts.threads > 1 else None
    try:
        while heap:
            if time.perf_counter() - start > opts.time_limit:
                status = TIME_LIMIT
                break
            if nodes >= opts.node_limit:
                status = NODE_LIMIT
                break
            lb = heap[0][0]
            if lb >= cutoff():
                # best-first: every open node is dominated by the incumbent
                fathomed_bound = min(fathomed_bound, lb)
                heap.clear()
                break
            batch = [heapq.heappop(heap)[3] for _ in range(min(opts.threads, len(heap)))]
            if pool is None:
                outcomes = [process(batch[0])]
            else:
                outcomes = list(pool.map(process, batch))
            with lock:
                for node, outcome in zip(batch, outcomes):
                    handle(node, outcome)
                nodes += len(batch)
                if opts.record_trace:
                    trace.append((global_bound(), inc.objective))
    finally:
        if pool is not None:
            pool.shutdown()

    best_bound = global_bound()
    wall = time.perf_counter() - start
    if status is None:
        if inc.angles is None:
            status = INFEASIBLE_STATUS if unresolved_bound == math.inf else GAP_LIMIT
            best_bound = math.inf if status == INFEASIBLE_STATUS else best_bound
        else:
            within = inc.objective - best_bound <= tol_for(inc.objective) + 1e-12
            status = OPTIMAL_STATUS if within else GAP_LIMIT

    angles = inc.angles
    objective = inc.objective
    err = None
    if angles is not None:
        pos, rot = verify_incumbent(chain, target, angles)
        err = (pos * 1e6, rot * 1e6)
        objective = objective_at_angles(chain, angles)
        best_bound = min(best_bound, objective)
    result = SolveResult(
        status=status,
        angles=angles,
        objective=objective,
        best_bound=best_bound,
        gap=gap_of(objective, best_bound),
        nodes_explored=nodes,
        wall_time=wall,
        pose_error=err,
        warm_start_used=warm_used,
        warm_start_objective=warm_obj,
        trace=trace,
    )
    log.info("solve finished: %s obj=%s bound=%s nodes=%d", status, objective, best_bound, nodes)
    return result


def solve(
    chain: KinematicChain,
    target: Pose,
    method: str = "A",
    warm: bool = True,
    cap: int = DEFAULT_CAP,
    **kwargs,
) -> SolveResult:
    """Build, lift and solve one instance; warm-starts from the preferred angles unless ``warm`` is False."""
    from .lifting import lift
    from .pop import build_pop

    q = lift(build_pop(chain, target), chain, target, method)
    opts = SolveOptions(**kwargs)
    if warm and opts.warm_start is None:
        opts.warm_start = solve_local(chain, target, None, cap)
        log.info("warm start: converged=%s iterations=%d cap=%d", opts.warm_start.converged, opts.warm_start.iterations, cap)
    return solve_global(q, chain, target, opts)


# -- certificates ---------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class CertificateReport:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.__dict__ for c in self.checks]}


def certify(result: SolveResult, chain: KinematicChain, target: Pose, gap_rel: float = 1e-6) -> CertificateReport:
    checks = []
    if result.angles is not None:
        angles = np.asarray(result.angles)
        pos, rot = verify_incumbent(chain, target, angles)
        checks.append(Check("pose_position", pos <= CERT_POS, f"{pos * 1e6:.3f} um"))
        checks.append(Check("pose_rotation", rot <= CERT_ROT, f"{rot * 1e6:.3f} urad"))
        checks.append(Check("joint_limits", in_limits(chain, angles), "all joints within limits"))
        recomputed = objective_at_angles(chain, angles)
        diff = abs(recomputed - result.objective)
        checks.append(Check("objective_match", diff <= 1e-9, f"|recomputed - reported| = {diff:.3g}"))
        ok = result.best_bound <= result.objective + 1e-12
        checks.append(Check("bound_below_objective", ok, f"bound {result.best_bound!r} vs objective {result.objective!r}"))
        gap = gap_of(result.objective, result.best_bound)
        if result.status == OPTIMAL_STATUS:
            checks.append(Check("gap_within_tolerance", gap <= gap_rel + 1e-12, f"gap {gap:.3g}"))
        checks.append(Check("gap_arithmetic", abs(gap - result.gap) <= 1e-12, f"reported {result.gap:.3g}, recomputed {gap:.3g}"))
    else:
        exhausted = result.status == INFEASIBLE_STATUS
        checks.append(Check("queue_exhausted", exhausted, f"status {result.status}"))
        checks.append(Check("no_finite_bound", not math.isfinite(result.best_bound) or result.best_bound == math.inf, f"bound {result.best_bound!r}"))
    return CertificateReport(checks)
