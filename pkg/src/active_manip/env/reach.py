"""Reachability checks shared by task sampling and view construction."""

from __future__ import annotations

from typing import Optional

from ..world.arm import ArmModel

HOME_JOINTS = (0.0, 0.0, 0.0, 0.0)
REACH_TOLERANCE = 0.01
REACH_ITERATIONS = 200
LIFT_CLEARANCE = 0.10


def reachable(
    arm: ArmModel,
    point,
    pitch: float = 0.0,
    pitch_weight: float = 0.1,
    pitch_tolerance: Optional[float] = None,
) -> bool:
    """Whether IK from the home pose puts the fingertip on ``point``.

    With ``pitch_tolerance`` the wrist must also end within that many
    radians of ``pitch``.
    """
    q, error = arm.solve_ik(HOME_JOINTS, point, iterations=REACH_ITERATIONS, pitch_target=pitch, pitch_weight=pitch_weight)
    if error > REACH_TOLERANCE:
        return False
    if pitch_tolerance is None:
        return True
    return abs(arm.forward_kinematics(q).wrist_pitch - pitch) <= pitch_tolerance


def liftable(arm: ArmModel, point) -> bool:
    """Reachable both at ``point`` and ``LIFT_CLEARANCE`` above it."""
    x, y, z = point
    return reachable(arm, point) and reachable(arm, (x, y, z + LIFT_CLEARANCE))
