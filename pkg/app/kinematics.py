from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .errors import KinematicsError
from .geometry import Pose, UnitQuat, vec3
from .urdf import Joint, JointKind, JointLimit, UrdfModel

LIMIT_SLACK = 1e-9


def joint_motion(joint: Joint, value: float) -> Pose:
    """Motion of the child frame inside the joint frame for a joint value."""
    if joint.kind == JointKind.REVOLUTE:
        return Pose.from_rotation(UnitQuat.from_axis_angle(joint.axis, value))
    if joint.kind == JointKind.PRISMATIC:
        return Pose.from_translation(joint.axis * value)
    return Pose.identity()


def check_joint_values(model: UrdfModel, joint_values: Mapping[str, float]) -> None:
    known = {j.name: j for j in model.joints}
    for name, value in joint_values.items():
        joint = known.get(name)
        if joint is None:
            raise KinematicsError(f"unknown joint '{name}'", code="unknown_joint")
        if not joint.is_movable:
            if abs(value) > LIMIT_SLACK:
                raise KinematicsError(f"fixed joint '{name}' cannot take value {value}", code="value_out_of_range")
            continue
        if value < joint.limit.lower - LIMIT_SLACK or value > joint.limit.upper + LIMIT_SLACK:
            raise KinematicsError(
                f"value {value} for joint '{name}' outside [{joint.limit.lower}, {joint.limit.upper}]",
                code="value_out_of_range",
            )


def forward_kinematics(model: UrdfModel, joint_values: Optional[Mapping[str, float]] = None) -> dict[str, Pose]:
    """World pose of every link: child = parent @ joint origin @ joint motion. Missing values are 0."""
    joint_values = dict(joint_values or {})
    check_joint_values(model, joint_values)
    poses: dict[str, Pose] = {model.root: Pose.identity()}
    for joint in model.joints_in_tree_order():
        value = joint_values.get(joint.name, 0.0)
        poses[joint.child] = poses[joint.parent] @ joint.origin @ joint_motion(joint, value)
    return {link.name: poses[link.name] for link in model.links}


@dataclass(frozen=True, eq=False)
class WorldJoint:
    """A joint re-expressed in the world frame, ready for comparison."""

    name: str
    kind: JointKind
    parent: str
    child: str
    origin: np.ndarray
    axis: np.ndarray
    limit: Optional[JointLimit]

    @property
    def motion_vector(self) -> np.ndarray:
        if self.limit is None:
            return vec3((0.0, 0.0, 0.0))
        return vec3(self.axis * self.limit.span)


def world_joints(model: UrdfModel, joint_values: Optional[Mapping[str, float]] = None) -> dict[str, WorldJoint]:
    """Axes and origins of every joint in the world frame, keyed by joint name."""
    poses = forward_kinematics(model, joint_values)
    frames: dict[str, WorldJoint] = {}
    for joint in model.joints:
        frame = poses[joint.parent] @ joint.origin
        frames[joint.name] = WorldJoint(
            name=joint.name,
            kind=joint.kind,
            parent=joint.parent,
            child=joint.child,
            origin=frame.position,
            axis=frame.rotate_vector(joint.axis),
            limit=joint.limit,
        )
    return frames


def sweep_values(limit: JointLimit, frames: int) -> list[float]:
    """Evenly spaced joint values from the lower to the upper limit, inclusive."""
    if frames < 2:
        return [limit.lower]
    return [limit.lower + limit.span * i / (frames - 1) for i in range(frames)]
