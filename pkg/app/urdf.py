"""
URDF subset used for articulated objects.

Supported: robot / link / visual / geometry / mesh(+scale) / origin and
joint / {type, origin, parent, child, axis, limit}. Inertial, collision and
mimic tags are accepted and ignored. Continuous joints become revolute joints
limited to [-pi, pi]. Orientations use the fixed-axis XYZ roll/pitch/yaw convention.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence
from xml.sax.saxutils import quoteattr

import numpy as np

from .errors import GeometryError, UrdfError
from .geometry import NORM_TOLERANCE, Pose, TriMesh, UnitQuat, vec3


class JointKind(str, Enum):
    FIXED = "fixed"
    PRISMATIC = "prismatic"
    REVOLUTE = "revolute"


@dataclass(frozen=True)
class JointLimit:
    lower: float
    upper: float

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise UrdfError("joint limits must be finite", code="invalid_limit")
        if self.lower > self.upper:
            raise UrdfError(f"lower limit {self.lower} exceeds upper limit {self.upper}", code="invalid_limit")

    @property
    def span(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True, eq=False)
class Link:
    name: str
    mesh_ref: Optional[str] = None
    mesh_scale: np.ndarray = field(default_factory=lambda: vec3((1.0, 1.0, 1.0)))
    visual_origin: Pose = field(default_factory=Pose.identity)
    mesh: Optional[TriMesh] = None

    def __post_init__(self):
        scale = vec3(self.mesh_scale)
        if np.any(scale <= 0):
            raise UrdfError(f"link '{self.name}' has non-positive scale {scale.tolist()}", code="invalid_scale")
        object.__setattr__(self, "mesh_scale", scale)

    @property
    def has_geometry(self) -> bool:
        return self.mesh is not None or self.mesh_ref is not None


@dataclass(frozen=True, eq=False)
class Joint:
    name: str
    kind: JointKind
    parent: str
    child: str
    origin: Pose = field(default_factory=Pose.identity)
    axis: np.ndarray = field(default_factory=lambda: vec3((1.0, 0.0, 0.0)))
    limit: Optional[JointLimit] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", JointKind(self.kind))
        axis = vec3(self.axis)
        if self.kind != JointKind.FIXED:
            norm = float(np.linalg.norm(axis))
            if norm < 1e-12:
                raise UrdfError(f"joint '{self.name}' has a zero-length axis", code="invalid_axis")
            if abs(norm - 1.0) > NORM_TOLERANCE:
                axis = vec3(axis / norm)
            if self.limit is None:
                raise UrdfError(f"joint '{self.name}' of type {self.kind.value} has no limit", code="missing_limit")
        object.__setattr__(self, "axis", axis)

    @property
    def is_movable(self) -> bool:
        return self.kind != JointKind.FIXED


@dataclass(frozen=True, eq=False)
class UrdfModel:
    """A validated link/joint tree. Construction fails on any structural defect."""

    name: str
    links: tuple[Link, ...]
    joints: tuple[Joint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "joints", tuple(self.joints))
        validate_tree(self.links, self.joints)

    @property
    def root(self) -> str:
        children = {j.child for j in self.joints}
        return next(link.name for link in self.links if link.name not in children)

    def link(self, name: str) -> Link:
        for link in self.links:
            if link.name == name:
                return link
        raise KeyError(name)

    def joint(self, name: str) -> Joint:
        for joint in self.joints:
            if joint.name == name:
                return joint
        raise KeyError(name)

    def joint_for_child(self, child: str) -> Optional[Joint]:
        for joint in self.joints:
            if joint.child == child:
                return joint
        return None

    @property
    def link_names(self) -> list[str]:
        return [link.name for link in self.links]

    @property
    def movable_joints(self) -> list[Joint]:
        return [j for j in self.joints if j.is_movable]

    def joints_in_tree_order(self) -> list[Joint]:
        """Joints ordered so every parent link is reached before its children."""
        by_parent: dict[str, list[Joint]] = {}
        for joint in self.joints:
            by_parent.setdefault(joint.parent, []).append(joint)
        ordered, stack = [], [self.root]
        while stack:
            name = stack.pop(0)
            for joint in by_parent.get(name, []):
                ordered.append(joint)
                stack.append(joint.child)
        return ordered

    def with_links(self, links: Iterable[Link]) -> UrdfModel:
        return replace(self, links=tuple(links))


def validate_tree(links: Sequence[Link], joints: Sequence[Joint]) -> None:
    names: set[str] = set()
    for link in links:
        if link.name in names:
            raise UrdfError(f"link '{link.name}' is declared more than once", code="repeated_link")
        names.add(link.name)
    if not links:
        raise UrdfError("model has no links", code="disconnected_tree")

    parent_of: dict[str, str] = {}
    joint_names: set[str] = set()
    for joint in joints:
        if joint.name in joint_names:
            raise UrdfError(f"joint '{joint.name}' is declared more than once", code="repeated_joint")
        joint_names.add(joint.name)
        for role, ref in (("parent", joint.parent), ("child", joint.child)):
            if ref not in names:
                raise UrdfError(f"joint '{joint.name}' references unknown {role} link '{ref}'", code="dangling_reference")
        if joint.parent == joint.child:
            raise UrdfError(f"joint '{joint.name}' connects link '{joint.child}' to itself", code="cyclic_structure")
        if joint.child in parent_of:
            raise UrdfError(f"link '{joint.child}' has more than one parent joint", code="multiple_parents")
        parent_of[joint.child] = joint.parent

    roots = [link.name for link in links if link.name not in parent_of]
    reached = set(roots)
    frontier = list(roots)
    children: dict[str, list[str]] = {}
    for child, parent in parent_of.items():
        children.setdefault(parent, []).append(child)
    while frontier:
        for child in children.get(frontier.pop(), []):
            if child not in reached:
                reached.add(child)
                frontier.append(child)
    if len(reached) != len(names):
        # every link has at most one parent, so unreached links sit on a cycle
        stuck = sorted(names - reached)
        raise UrdfError(f"links {stuck} form a cycle", code="cyclic_structure")
    if len(roots) != 1:
        raise UrdfError(f"expected exactly one root link, found {roots}", code="disconnected_tree")


def structurally_equal(a: UrdfModel, b: UrdfModel, tol: float = 1e-9) -> bool:
    """Same names, kinds, connectivity, frames, axes, limits and mesh references."""
    if a.name != b.name or a.link_names != b.link_names or len(a.joints) != len(b.joints):
        return False
    for la, lb in zip(a.links, b.links):
        if la.mesh_ref != lb.mesh_ref:
            return False
        if not np.allclose(la.mesh_scale, lb.mesh_scale, atol=tol) or not la.visual_origin.allclose(lb.visual_origin, tol):
            return False
    for ja, jb in zip(a.joints, b.joints):
        if (ja.name, ja.kind, ja.parent, ja.child) != (jb.name, jb.kind, jb.parent, jb.child):
            return False
        if not ja.origin.allclose(jb.origin, tol):
            return False
        if ja.is_movable and not np.allclose(ja.axis, jb.axis, atol=tol):
            return False
        if (ja.limit is None) != (jb.limit is None):
            return False
        if ja.limit and (abs(ja.limit.lower - jb.limit.lower) > tol or abs(ja.limit.upper - jb.limit.upper) > tol):
            return False
    return True


# ---------------------------------------------------------------- parsing

def _floats(text: Optional[str], count: int, default: Sequence[float], what: str) -> tuple[float, ...]:
    if text is None:
        return tuple(default)
    parts = text.split()
    if len(parts) != count:
        raise UrdfError(f"{what} expects {count} numbers, got '{text}'", code="malformed_xml")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise UrdfError(f"{what} has a non-numeric value: '{text}'", code="malformed_xml")


def _parse_origin(element: Optional[ET.Element], what: str) -> Pose:
    if element is None:
        return Pose.identity()
    xyz = _floats(element.get("xyz"), 3, (0.0, 0.0, 0.0), f"{what} origin xyz")
    rpy = _floats(element.get("rpy"), 3, (0.0, 0.0, 0.0), f"{what} origin rpy")
    try:
        return Pose(vec3(xyz), UnitQuat.from_rpy(*rpy))
    except GeometryError as exc:
        raise UrdfError(f"{what} origin: {exc.message}", code="malformed_xml")


def _required(element: ET.Element, attr: str, what: str) -> str:
    value = element.get(attr)
    if value is None or not value.strip():
        raise UrdfError(f"{what} is missing attribute '{attr}'", code="malformed_xml")
    return value


def _parse_link(element: ET.Element) -> Link:
    name = _required(element, "name", "link")
    mesh_ref, scale, visual_origin = None, (1.0, 1.0, 1.0), Pose.identity()
    visual = element.find("visual")
    if visual is not None:
        visual_origin = _parse_origin(visual.find("origin"), f"link '{name}' visual")
        mesh = visual.find("geometry/mesh")
        if mesh is not None:
            mesh_ref = _required(mesh, "filename", f"link '{name}' mesh")
            scale = _floats(mesh.get("scale"), 3, (1.0, 1.0, 1.0), f"link '{name}' mesh scale")
    return Link(name=name, mesh_ref=mesh_ref, mesh_scale=vec3(scale), visual_origin=visual_origin)


def _parse_joint(element: ET.Element) -> Joint:
    name = _required(element, "name", "joint")
    raw_kind = _required(element, "type", f"joint '{name}'")
    parent = element.find("parent")
    child = element.find("child")
    if parent is None or child is None:
        raise UrdfError(f"joint '{name}' needs both <parent> and <child>", code="malformed_xml")
    parent_name = _required(parent, "link", f"joint '{name}' parent")
    child_name = _required(child, "link", f"joint '{name}' child")
    origin = _parse_origin(element.find("origin"), f"joint '{name}'")
    axis_el = element.find("axis")
    axis = _floats(axis_el.get("xyz") if axis_el is not None else None, 3, (1.0, 0.0, 0.0), f"joint '{name}' axis")
    limit_el = element.find("limit")

    if raw_kind == "continuous":
        kind, limit = JointKind.REVOLUTE, JointLimit(-math.pi, math.pi)
    elif raw_kind in (k.value for k in JointKind):
        kind = JointKind(raw_kind)
        limit = None
        if kind != JointKind.FIXED:
            if limit_el is None:
                raise UrdfError(f"joint '{name}' of type {raw_kind} has no <limit>", code="missing_limit")
            lower = _floats(limit_el.get("lower"), 1, (0.0,), f"joint '{name}' lower limit")[0]
            upper = _floats(limit_el.get("upper"), 1, (0.0,), f"joint '{name}' upper limit")[0]
            limit = JointLimit(lower, upper)
    else:
        raise UrdfError(f"joint '{name}' has unsupported type '{raw_kind}'", code="unknown_joint_type")

    return Joint(name=name, kind=kind, parent=parent_name, child=child_name, origin=origin, axis=vec3(axis), limit=limit)


def parse_urdf(text: str | bytes) -> UrdfModel:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise UrdfError(f"malformed XML: {exc}", code="malformed_xml")
    if root.tag != "robot":
        raise UrdfError(f"root element must be <robot>, found <{root.tag}>", code="malformed_xml")
    links = [_parse_link(el) for el in root.findall("link")]
    joints = [_parse_joint(el) for el in root.findall("joint")]
    return UrdfModel(name=root.get("name", "object"), links=tuple(links), joints=tuple(joints))


# ---------------------------------------------------------------- emission

def fmt(value: float) -> str:
    """9 significant digits; tiny magnitudes and negative zero print as 0."""
    if abs(value) < 1e-12:
        return "0"
    return format(float(value), ".9g")


def _fmt_vec(values: Iterable[float]) -> str:
    return " ".join(fmt(v) for v in values)


def _origin_tag(pose: Pose, indent: str) -> str:
    return f'{indent}<origin xyz="{_fmt_vec(pose.position)}" rpy="{_fmt_vec(pose.orientation.to_rpy())}"/>'


def emit_urdf(model: UrdfModel) -> str:
    """Canonical URDF text. Inline geometry must carry a mesh_ref to be written."""
    lines = ['<?xml version="1.0" encoding="utf-8"?>', f"<robot name={quoteattr(model.name)}>"]
    for link in model.links:
        if link.mesh_ref is None and link.mesh is not None and not link.mesh.is_empty:
            raise UrdfError(f"link '{link.name}' has inline geometry but no mesh filename", code="unnamed_mesh")
        if link.mesh_ref is None:
            lines.append(f"  <link name={quoteattr(link.name)}/>")
            continue
        lines += [
            f"  <link name={quoteattr(link.name)}>",
            "    <visual>",
            _origin_tag(link.visual_origin, "      "),
            "      <geometry>",
            f'        <mesh filename={quoteattr(link.mesh_ref)} scale="{_fmt_vec(link.mesh_scale)}"/>',
            "      </geometry>",
            "    </visual>",
            "  </link>",
        ]
    for joint in model.joints:
        lines += [
            f"  <joint name={quoteattr(joint.name)} type=\"{joint.kind.value}\">",
            f"    <parent link={quoteattr(joint.parent)}/>",
            f"    <child link={quoteattr(joint.child)}/>",
            _origin_tag(joint.origin, "    "),
        ]
        if joint.is_movable:
            lines.append(f'    <axis xyz="{_fmt_vec(joint.axis)}"/>')
            lines.append(f'    <limit lower="{fmt(joint.limit.lower)}" upper="{fmt(joint.limit.upper)}"/>')
        lines.append("  </joint>")
    lines.append("</robot>")
    return "\n".join(lines) + "\n"
