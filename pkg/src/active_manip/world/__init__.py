"""Deterministic synthetic world: scenes, articulation, camera and arm."""

from .arm import D_BODY, ArmModel, EndEffectorPose, ProprioState
from .articulation import ArticulatedJoint, Container, step_joint
from .camera import (
    CameraState,
    apply_head_delta,
    camera_delta_to,
    in_frame,
    pixel_rays,
    project_point,
)
from .liquid import PourResult, pour_step
from .render import DEPTH_EMPTY, Observation, render, render_view, unobstructed_count
from .scene import ObjectInstance, Scene, drive_container, sample_scene, support_below

__all__ = [
    "ArmModel",
    "ArticulatedJoint",
    "CameraState",
    "Container",
    "D_BODY",
    "DEPTH_EMPTY",
    "EndEffectorPose",
    "ObjectInstance",
    "Observation",
    "PourResult",
    "ProprioState",
    "Scene",
    "apply_head_delta",
    "camera_delta_to",
    "drive_container",
    "in_frame",
    "pixel_rays",
    "pour_step",
    "project_point",
    "render",
    "render_view",
    "sample_scene",
    "step_joint",
    "support_below",
    "unobstructed_count",
]
