"""Local solutions of the joint-angle program, used as warm starts and for polishing.

Each iteration combines a damped Gauss-Newton step towards the 12 split-pose
equations with a Newton step on the objective inside their null space, then
backtracks on an exact-penalty merit function and projects onto the joint
limits. It is fast and may fail; failure is a result state, not an error.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .kinematics import (
    KinematicChain,
    Pose,
    dh_array,
    dh_inverse_array,
    fk_array,
    pose_error,
)
from .pop import objective_at_angles

log = logging.getLogger(__name__)

DEFAULT_CAP = 200
POLISH_CAP = 50
CONVERGED_TOL = 1e-6
STOP_RESIDUAL = 1e-12
STOP_STEP = 1e-12
SIGMA_START = 10.0
DAMPING_START = 1e-4
DAMPING_MIN = 1e-12
DAMPING_MAX = 1e8
MIN_ALPHA = 1e-4
RANK_TOL = 1e-8
HESS_REG = 1e-6


@dataclass
class LocalResult:
    angles: np.ndarray
    objective: float
    pose_residual: float
    converged: bool
    iterations: int

    def to_dict(self) -> dict:
        return {
            "angles": [float(t) for t in self.angles],
            "objective": self.objective,
            "pose_residual": self.pose_residual,
            "converged": self.converged,
            "iterations": self.iterations,
        }


def pose_residual(chain: KinematicChain, target: Pose, angles) -> float:
    fk = fk_array(chain.links, angles)
    dev = fk @ np.linalg.inv(target.matrix) - np.eye(4)
    return float(np.max(np.abs(dev)) + np.linalg.norm(fk[:3, 3] - target.translation))


def _dh_derivative(link, theta):
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(link.alpha), math.sin(link.alpha)
    return np.array(
        [
            [-st, -ca * ct, sa * ct, -link.r * st],
            [ct, -ca * st, sa * st, link.r * ct],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ]
    )


def _dh_inverse_derivative(link, theta):
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(link.alpha), math.sin(link.alpha)
    return np.array(
        [
            [-st, ct, 0.0, 0.0],
            [-ca * ct, -ca * st, 0.0, 0.0],
            [sa * ct, sa * st, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ]
    )


def _prod(ms):
    out = np.eye(4)
    for m in ms:
        out = out @ m
    return out


def split_residual(chain: KinematicChain, target: Pose, theta, jacobian: bool = True):
    """Residual T_1..T_nu - P T_n^-1..T_{nu+1}^-1 (top three rows) and its Jacobian."""
    n, nu = chain.n, chain.split
    links = chain.links
    left = [dh_array(links[k], theta[k]) for k in range(nu)]
    right = [target.matrix] + [dh_inverse_array(links[k], theta[k]) for k in range(n - 1, nu - 1, -1)]
    res = (_prod(left) - _prod(right))[:3].ravel()
    if not jacobian:
        return res, None
    jac = np.zeros((12, n))
    for k in range(nu):
        d = _prod(left[:k]) @ _dh_derivative(links[k], theta[k]) @ _prod(left[k + 1:])
        jac[:, k] = d[:3].ravel()
    for pos in range(1, len(right)):
        k = n - pos  # joint index of right[pos]
        d = _prod(right[:pos]) @ _dh_inverse_derivative(links[k], theta[k]) @ _prod(right[pos + 1:])
        jac[:, k] = -d[:3].ravel()
    return res, jac


def _objective_terms(chain: KinematicChain, theta):
    w = chain.weights
    delta = theta - chain.theta_hat
    f = float(np.sum(2.0 * w * (1.0 - np.cos(delta))))
    g = 2.0 * w * np.sin(delta)
    h = 2.0 * w * np.cos(delta)
    return f, g, h


def solve_local(
    chain: KinematicChain,
    target: Pose,
    start=None,
    cap: int = DEFAULT_CAP,
) -> LocalResult:
    lower, upper = chain.lower, chain.upper
    theta = np.clip(np.asarray(chain.theta_hat if start is None else start, dtype=float), lower, upper)
    sigma = SIGMA_START
    damping = DAMPING_START
    r, jac = split_residual(chain, target, theta)
    iterations = 0

    def merit(th, rr):
        return _objective_terms(chain, th)[0] + sigma * float(np.linalg.norm(rr))

    while iterations < cap:
        f, g, h = _objective_terms(chain, theta)
        free = _free_mask(theta, g, jac, r, lower, upper)
        if not free.any():
            break
        step, mult = _sqp_step(jac[:, free], r, g[free], h[free], damping)
        full = np.zeros_like(theta)
        full[free] = step
        rnorm = float(np.linalg.norm(r))
        if rnorm < STOP_RESIDUAL and np.linalg.norm(full) < STOP_STEP:
            break
        iterations += 1
        sigma = max(sigma, 2.0 * mult + 1.0)
        current = merit(theta, r)
        accepted = False
        alpha = 1.0
        while alpha >= MIN_ALPHA:
            trial = np.clip(theta + alpha * full, lower, upper)
            r_trial, _ = split_residual(chain, target, trial, jacobian=False)
            if merit(trial, r_trial) < current - 1e-16 * max(1.0, abs(current)):
                accepted = True
                break
            alpha *= 0.5
        if accepted:
            theta = trial
            r, jac = split_residual(chain, target, theta)
            damping = max(damping * 0.3, DAMPING_MIN) if alpha == 1.0 else damping
        else:
            damping *= 10.0
            if damping > DAMPING_MAX:
                break
    return _result(chain, target, theta, iterations)


def _free_mask(theta, g, jac, r, lower, upper):
    """Joints at a limit stay fixed while the unconstrained descent direction points outward."""
    push = g + jac.T @ r
    at_lo = (theta <= lower) & (push > 0)
    at_hi = (theta >= upper) & (push < 0)
    return ~(at_lo | at_hi)


def _sqp_step(jac, r, g, h, damping):
    """Damped Gauss-Newton step onto the constraints plus a Newton step in their null space.

    Returns the step and the norm of the multiplier estimate.
    """
    u, sv, vt = np.linalg.svd(jac, full_matrices=True)
    if sv.size == 0 or sv[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(sv > RANK_TOL * sv[0]))
    uk, sk, vk = u[:, :rank], sv[:rank], vt[:rank].T
    # range-space step: Levenberg-Marquardt damped pseudo-inverse
    scale = sk[0] ** 2 if rank else 1.0
    step = -vk @ ((sk / (sk ** 2 + damping * scale)) * (uk.T @ r))
    null = vt[rank:].T
    if null.shape[1]:
        hess = np.diag(np.maximum(h, 0.0)) + HESS_REG * np.eye(len(h))
        reduced = null.T @ hess @ null
        step = step - null @ np.linalg.solve(reduced, null.T @ (g + hess @ step))
    mult = 0.0
    if rank:
        mult = float(np.linalg.norm((uk / sk) @ (vk.T @ g)))
    return step, mult


def _result(chain, target, theta, iterations) -> LocalResult:
    res = pose_residual(chain, target, theta)
    pos, rot = pose_error(Pose(fk_array(chain.links, theta)), target)
    converged = res < CONVERGED_TOL and pos <= CONVERGED_TOL and rot <= CONVERGED_TOL
    return LocalResult(theta, objective_at_angles(chain, theta), res, bool(converged), iterations)


def polish(chain: KinematicChain, target: Pose, candidate) -> LocalResult:
    return solve_local(chain, target, candidate, cap=POLISH_CAP)


def multi_start(
    chain: KinematicChain,
    target: Pose,
    starts: int = 4,
    seed: int = 0,
    cap: int = DEFAULT_CAP,
) -> LocalResult:
    """Run from the preferred angles plus ``starts`` random starts; keep the best converged result."""
    rng = np.random.default_rng(seed)
    best = solve_local(chain, target, None, cap)
    for _ in range(starts):
        start = rng.uniform(chain.lower, chain.upper)
        res = solve_local(chain, target, start, cap)
        if res.converged and (not best.converged or res.objective < best.objective):
            best = res
    return best
