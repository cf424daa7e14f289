"""Planar quasistatic simulator of the BaRiFlex hybrid rigid-flexible gripper.

Subsystems:

- ``linkage``: closed-form 4-bar kinematics and dimensional synthesis
- ``elastics``: Fin-Ray pseudo-rigid-body chain, fingertip torsion spring
- ``actuation``: direct-drive motor with stick-slip friction and encoder
- ``contact``: 2D objects, contact detection, grasp feasibility, press rig
- ``sim``: gripper assembly and the four gripper fixtures
- ``experiments``: compliance / durability / grasp-matrix / precision / speed
- ``learning``: UCB bandit trained against the simulator
- ``cli``: the ``bariflex-sim`` command
"""

from .linkage import (
    LinkageGeometry,
    JointConfiguration,
    SynthesisConstraints,
    LinkageLocked,
    SynthesisFailed,
    SingularTransmission,
    solve_loop,
    aperture,
    transmission_jacobian,
    fingertip_force,
    synthesize_geometry,
)

__all__ = [
    "LinkageGeometry",
    "JointConfiguration",
    "SynthesisConstraints",
    "LinkageLocked",
    "SynthesisFailed",
    "SingularTransmission",
    "solve_loop",
    "aperture",
    "transmission_jacobian",
    "fingertip_force",
    "synthesize_geometry",
]

__version__ = "0.1.0"
