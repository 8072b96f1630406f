"""Serial revolute chains in Denavit-Hartenberg form, rigid poses and error metrics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

POSE_TOL = 1e-9


class InvalidPose(ValueError):
    pass


class DegenerateAngle(ValueError):
    pass


def wrap_angle(theta):
    """Wrap an angle (or array of angles) into (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2.0 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class DhLink:
    d: float
    r: float
    alpha: float
    theta_min: float = -math.pi
    theta_max: float = math.pi
    weight: float = 1.0
    theta_hat: float = 0.0

    def __post_init__(self):
        if not -math.pi <= self.theta_min <= 0.0:
            raise ValueError(f"theta_min must lie in [-pi, 0], got {self.theta_min}")
        if not 0.0 <= self.theta_max <= math.pi:
            raise ValueError(f"theta_max must lie in [0, pi], got {self.theta_max}")
        if self.weight < 0:
            raise ValueError("weight must be non-negative")


@dataclass(frozen=True)
class KinematicChain:
    links: tuple[DhLink, ...]
    split: int | None = None
    # set in __post_init__; links carry normalized weights
    n: int = field(init=False)

    def __post_init__(self):
        links = tuple(self.links)
        if not links:
            raise ValueError("a chain needs at least one link")
        n = len(links)
        total = sum(link.weight for link in links)
        if total > 0:
            links = tuple(_with_weight(link, link.weight / total) for link in links)
        else:
            links = tuple(_with_weight(link, 1.0 / n) for link in links)
        split = self.split
        if n == 1:
            split = 1
        elif split is None:
            split = math.ceil(n / 2)
        elif not 1 <= split <= n - 1:
            raise ValueError(f"split index must lie in [1, {n - 1}], got {split}")
        object.__setattr__(self, "links", links)
        object.__setattr__(self, "split", int(split))
        object.__setattr__(self, "n", n)

    @property
    def weights(self) -> np.ndarray:
        return np.array([link.weight for link in self.links])

    @property
    def theta_hat(self) -> np.ndarray:
        return np.array([link.theta_hat for link in self.links])

    @property
    def lower(self) -> np.ndarray:
        return np.array([link.theta_min for link in self.links])

    @property
    def upper(self) -> np.ndarray:
        return np.array([link.theta_max for link in self.links])

    def with_preferred(self, theta_hat: Sequence[float]) -> "KinematicChain":
        links = [_replace(link, theta_hat=float(t)) for link, t in zip(self.links, theta_hat)]
        return KinematicChain(tuple(links), self.split)

    def to_dict(self) -> dict:
        return {
            "links": [
                {
                    "d": l.d,
                    "r": l.r,
                    "alpha": l.alpha,
                    "theta_min": l.theta_min,
                    "theta_max": l.theta_max,
                    "weight": l.weight,
                    "theta_hat": l.theta_hat,
                }
                for l in self.links
            ],
            "split": self.split if self.n > 1 else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KinematicChain":
        links = tuple(DhLink(**{k: float(v) for k, v in item.items()}) for item in data["links"])
        return cls(links, data.get("split"))


def _with_weight(link: DhLink, weight: float) -> DhLink:
    return _replace(link, weight=weight)


def _replace(link: DhLink, **changes) -> DhLink:
    values = dict(
        d=link.d,
        r=link.r,
        alpha=link.alpha,
        theta_min=link.theta_min,
        theta_max=link.theta_max,
        weight=link.weight,
        theta_hat=link.theta_hat,
    )
    values.update(changes)
    return DhLink(**values)


class Pose:
    """A rigid transform stored as a read-only 4x4 homogeneous matrix."""

    __slots__ = ("matrix",)

    def __init__(self, matrix, tol: float = POSE_TOL):
        m = np.array(matrix, dtype=float)
        if m.shape != (4, 4):
            raise InvalidPose(f"pose must be 4x4, got shape {m.shape}")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise InvalidPose("bottom row must be exactly (0, 0, 0, 1)")
        rot = m[:3, :3]
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > tol:
            raise InvalidPose("rotation block is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > tol:
            raise InvalidPose("rotation block must have determinant +1")
        m.setflags(write=False)
        self.matrix = m

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3]

    def inverse(self) -> "Pose":
        return Pose(_rigid_inverse(self.matrix))

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(self.matrix @ other.matrix)

    def __repr__(self):
        return f"Pose({self.matrix.tolist()!r})"

    @classmethod
    def from_translation(cls, x: float, y: float, z: float) -> "Pose":
        m = np.eye(4)
        m[:3, 3] = (x, y, z)
        return cls(m)

    @classmethod
    def from_matrix_lenient(cls, matrix, tol: float = POSE_TOL) -> "Pose":
        """Accept a matrix whose rotation is orthonormal within ``tol`` and snap it.

        Anything further off is rejected rather than silently projected.
        """
        m = np.array(matrix, dtype=float)
        if m.shape != (4, 4):
            raise InvalidPose(f"pose must be 4x4, got shape {m.shape}")
        rot = m[:3, :3]
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > tol or abs(np.linalg.det(rot) - 1.0) > tol:
            raise InvalidPose("rotation block is not a rotation within tolerance")
        u, _, vt = np.linalg.svd(rot)
        m[:3, :3] = u @ vt
        return cls(m)


def _rigid_inverse(m: np.ndarray) -> np.ndarray:
    out = np.eye(4)
    rot_t = m[:3, :3].T
    out[:3, :3] = rot_t
    out[:3, 3] = -rot_t @ m[:3, 3]
    return out


def dh_array(link: DhLink, theta: float) -> np.ndarray:
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(link.alpha), math.sin(link.alpha)
    return np.array(
        [
            [ct, -ca * st, sa * st, link.r * ct],
            [st, ca * ct, -sa * ct, link.r * st],
            [0.0, sa, ca, link.d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def dh_inverse_array(link: DhLink, theta: float) -> np.ndarray:
    # translation column uses cos^2 + sin^2 = 1, so every entry stays affine in (cos, sin)
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(link.alpha), math.sin(link.alpha)
    return np.array(
        [
            [ct, st, 0.0, -link.r],
            [-ca * st, ca * ct, sa, -sa * link.d],
            [sa * st, -sa * ct, ca, -ca * link.d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def dh_matrix(link: DhLink, theta: float) -> Pose:
    return Pose(dh_array(link, theta))


def dh_inverse(link: DhLink, theta: float) -> Pose:
    return Pose(dh_inverse_array(link, theta))


def fk_array(links: Sequence[DhLink], angles: Sequence[float]) -> np.ndarray:
    if len(links) != len(angles):
        raise ValueError(f"expected {len(links)} joint angles, got {len(angles)}")
    m = np.eye(4)
    for link, theta in zip(links, angles):
        m = m @ dh_array(link, float(theta))
    m[3] = (0.0, 0.0, 0.0, 1.0)
    return m


def forward_kinematics(chain: KinematicChain, angles: Sequence[float]) -> Pose:
    # products of rotations drift off orthonormality by ~n ulp, far inside POSE_TOL
    return Pose(fk_array(chain.links, angles))


def partial_products(chain: KinematicChain, angles: Sequence[float], target: Pose):
    """Numeric left/right partial products used by the split pose constraint.

    Returns ``(left, right)`` where ``left[k]`` is T_1..T_k for k = 1..split and
    ``right[k]`` is P T_n^-1 .. T_k^-1 for k = n..split+1 (dict keyed by k).
    """
    n, nu = chain.n, chain.split
    left = {}
    m = np.eye(4)
    for k in range(1, nu + 1):
        m = m @ dh_array(chain.links[k - 1], angles[k - 1])
        left[k] = m.copy()
    right = {}
    m = np.array(target.matrix)
    for k in range(n, nu, -1):
        m = m @ dh_inverse_array(chain.links[k - 1], angles[k - 1])
        right[k] = m.copy()
    return left, right


def pose_error(a: Pose, b: Pose) -> tuple[float, float]:
    """Positional (m) and geodesic rotational (rad) distance between two poses."""
    positional = float(np.linalg.norm(a.translation - b.translation))
    rel = a.rotation.T @ b.rotation
    cos_angle = (np.trace(rel) - 1.0) / 2.0
    rotational = float(math.acos(min(1.0, max(-1.0, cos_angle))))
    if rotational < 1e-4:
        # arccos loses precision near 0; use the skew part instead
        skew = np.array([rel[2, 1] - rel[1, 2], rel[0, 2] - rel[2, 0], rel[1, 0] - rel[0, 1]])
        rotational = float(math.asin(min(1.0, np.linalg.norm(skew) / 2.0)))
    return positional, rotational


def recover_angles(c: Sequence[float], s: Sequence[float]) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    s = np.asarray(s, dtype=float)
    if c.shape != s.shape:
        raise ValueError("cosine and sine lists differ in length")
    if np.any((c == 0.0) & (s == 0.0)):
        raise DegenerateAngle("(c, s) = (0, 0) has no angle")
    return np.arctan2(s, c)


def in_limits(chain: KinematicChain, angles: Sequence[float], tol: float = 0.0) -> bool:
    theta = np.asarray(angles, dtype=float)
    return bool(np.all(theta >= chain.lower - tol) and np.all(theta <= chain.upper + tol))


def load_chain(path: str | Path) -> KinematicChain:
    return KinematicChain.from_dict(json.loads(Path(path).read_text()))


def save_chain(chain: KinematicChain, path: str | Path) -> None:
    Path(path).write_text(json.dumps(chain.to_dict(), indent=2) + "\n")


def load_pose(path: str | Path) -> Pose:
    return Pose.from_matrix_lenient(json.loads(Path(path).read_text()))


def save_pose(pose: Pose, path: str | Path) -> None:
    Path(path).write_text(json.dumps(pose.matrix.tolist()) + "\n")
