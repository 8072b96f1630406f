"""Certified globally optimal inverse kinematics for serial chains.

Joint angles enter through c_i = cos θ_i and s_i = sin θ_i. The resulting
polynomial program is lifted to a QCQP and solved by spatial branch and bound
over McCormick relaxations.
"""

from .bnb import SolveOptions, SolveResult, certify, solve, solve_global
from .kinematics import DhLink, KinematicChain, Pose, forward_kinematics, pose_error
from .lifting import Qcqp, lift, lift_a, lift_m
from .local import LocalResult, solve_local
from .pop import build_pop

__version__ = "0.1.0"

__all__ = [
    "DhLink",
    "KinematicChain",
    "LocalResult",
    "Pose",
    "Qcqp",
    "SolveOptions",
    "SolveResult",
    "build_pop",
    "certify",
    "forward_kinematics",
    "lift",
    "lift_a",
    "lift_m",
    "pose_error",
    "solve",
    "solve_global",
    "solve_local",
]
