"""
ArtLang -> UrdfModel.

Placements run first, in statement order, against the assembly posed so far.
Joints are then resolved from their world-frame description into frames
relative to their parent link.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .artlang import ArtProgram, JointStmt, PlaceStmt
from .errors import ArticraftError, CompileError, PlacementError, SourceLocation
from .geometry import Aabb, Pose, TriMesh, aabb_of, vec3
from .logging_config import get_logger
from .meshes import MeshResolver
from .placement import search_contact
from .urdf import Joint, JointKind, Link, UrdfError, UrdfModel

logger = get_logger("compiler")

IMPLICIT_STATEMENT = -1


@dataclass(frozen=True)
class CompileWarning:
    statement_index: int
    message: str
    location: Optional[SourceLocation] = None


@dataclass
class CompileDiagnostics:
    warnings: list[CompileWarning] = field(default_factory=list)
    collision_iterations: dict[str, int] = field(default_factory=dict)

    def warn(self, index: int, message: str, location: Optional[SourceLocation] = None) -> None:
        self.warnings.append(CompileWarning(index, message, location))
        logger.warning(f"COMPILE_WARN statement={index} message={message!r}")


def joint_frame(stmt: JointStmt, child_pose: Pose) -> Pose:
    """World frame of the joint; it becomes the child's link frame.

    Revolute joints sit at the point of the pivot line closest to the child's
    placed origin. Other kinds sit at the child's placed pose.
    """
    if stmt.kind != JointKind.REVOLUTE:
        return child_pose
    if stmt.global_pivot is None:
        raise CompileError(f"revolute joint on '{stmt.child}' needs a pivot", code="missing_pivot", location=stmt.location)
    axis = _global_axis(stmt)
    pivot = vec3(stmt.global_pivot)
    along = float(np.dot(child_pose.position - pivot, axis))
    return Pose(pivot + along * axis, child_pose.orientation)


def _global_axis(stmt: JointStmt) -> np.ndarray:
    if stmt.global_axis is None:
        raise CompileError(f"{stmt.kind.value} joint on '{stmt.child}' needs an axis", code="invalid_joint_axis", location=stmt.location)
    axis = np.asarray(stmt.global_axis, dtype=np.float64)
    norm = float(np.linalg.norm(axis))
    if norm < 1e-12:
        raise CompileError(f"joint on '{stmt.child}' has a zero-length axis", code="invalid_joint_axis", location=stmt.location)
    return vec3(axis / norm)


def resolve_joint(stmt: JointStmt, world_poses: Mapping[str, Pose]) -> Joint:
    """Joint relative to its parent link whose world axis (and pivot) match the statement."""
    for ref in (stmt.parent, stmt.child):
        if ref not in world_poses:
            raise CompileError(f"no world pose for part '{ref}'", code="unplaced_part", location=stmt.location)
    frame = joint_frame(stmt, world_poses[stmt.child])
    origin = world_poses[stmt.parent].inverse() @ frame
    name = f"{stmt.child}_joint"
    if stmt.kind == JointKind.FIXED:
        return Joint(name=name, kind=JointKind.FIXED, parent=stmt.parent, child=stmt.child, origin=origin)
    axis = frame.orientation.inverse().rotate(_global_axis(stmt))
    return Joint(name=name, kind=stmt.kind, parent=stmt.parent, child=stmt.child, origin=origin, axis=axis, limit=stmt.limit)


def find_root(program: ArtProgram) -> str:
    children = {s.child for s in program.statements}
    for decl in program.part_decls:
        if decl.name not in children:
            return decl.name
    if not program.part_decls:
        raise CompileError("program declares no parts", code="empty_program")
    raise CompileError("every part is attached to another part; no root", code="no_root", location=program.part_decls[0].location)


def _load_parts(program: ArtProgram, resolve_mesh: MeshResolver) -> dict[str, TriMesh]:
    meshes = {}
    for decl in program.part_decls:
        try:
            meshes[decl.name] = resolve_mesh(decl.mesh_ref)
        except ArticraftError as exc:
            raise CompileError(
                f"cannot resolve mesh '{decl.mesh_ref}' for part '{decl.name}': {exc.message}",
                code="unresolvable_mesh",
                location=decl.location,
            )
    return meshes


def _check_acyclic(program: ArtProgram, parent_of: dict[str, str], root: str) -> None:
    for start in parent_of:
        seen, name = set(), start
        while name != root:
            if name in seen:
                stmt = program.joint_for(start) or program.placement_for(start)
                raise CompileError(f"part '{start}' is attached in a cycle", code="cyclic_structure", location=stmt.location if stmt else None)
            seen.add(name)
            name = parent_of[name]


def compile_program(
    program: ArtProgram,
    resolve_mesh: MeshResolver,
    model_name: str = "object",
) -> tuple[UrdfModel, CompileDiagnostics]:
    diagnostics = CompileDiagnostics()
    raw = _load_parts(program, resolve_mesh)
    scaled = {d.name: raw[d.name].scaled(d.scale) for d in program.part_decls}
    root = find_root(program)

    placed: dict[str, Pose] = {root: Pose.identity()}
    assembly: dict[str, TriMesh] = {root: scaled[root]}

    def place(stmt: PlaceStmt) -> None:
        if stmt.parent not in placed:
            raise CompileError(
                f"'{stmt.child}' is placed on '{stmt.parent}', which has no pose yet",
                code="unplaced_parent",
                location=stmt.location,
            )
        parent_mesh = assembly.get(stmt.parent)
        anchor: Optional[Aabb] = None
        if parent_mesh is not None and not parent_mesh.is_empty:
            anchor = aabb_of(parent_mesh)
        try:
            result = search_contact(scaled[stmt.child], list(assembly.values()), stmt, anchor)
        except PlacementError as exc:
            raise CompileError(exc.message, code=exc.code, location=stmt.location)
        placed[stmt.child] = result.pose
        assembly[stmt.child] = scaled[stmt.child].transformed(result.pose)
        diagnostics.collision_iterations[stmt.child] = result.collision_checks

    for stmt in program.placements:
        place(stmt)

    for decl in program.part_decls:
        if decl.name in placed:
            continue
        joint = program.joint_for(decl.name)
        target = joint.parent if joint is not None and joint.parent in placed else root
        diagnostics.warn(IMPLICIT_STATEMENT, f"part '{decl.name}' has no placement; snapped onto '{target}' along +z", decl.location)
        place(PlaceStmt(child=decl.name, parent=target, axis="+z", location=decl.location))

    parent_of: dict[str, str] = {}
    joint_stmts: dict[str, JointStmt] = {}
    for decl in program.part_decls:
        if decl.name == root:
            continue
        joint = program.joint_for(decl.name)
        if joint is None:
            placement = program.placement_for(decl.name)
            parent = placement.parent if placement is not None else root
            joint = JointStmt(child=decl.name, parent=parent, kind=JointKind.FIXED, location=decl.location)
        joint_stmts[decl.name] = joint
        parent_of[decl.name] = joint.parent
    _check_acyclic(program, parent_of, root)

    frames = {root: Pose.identity()}
    for name, stmt in joint_stmts.items():
        frames[name] = joint_frame(stmt, placed[name])

    joints = [resolve_joint(stmt, frames) for stmt in joint_stmts.values()]

    links = []
    for decl in program.part_decls:
        visual = frames[decl.name].inverse() @ placed[decl.name]
        links.append(Link(name=decl.name, mesh_ref=decl.mesh_ref, mesh_scale=vec3(decl.scale), visual_origin=visual, mesh=raw[decl.name]))

    try:
        model = UrdfModel(name=model_name, links=tuple(links), joints=tuple(joints))
    except UrdfError as exc:
        raise CompileError(exc.message, code=exc.code)
    logger.info(f"COMPILE_OK model={model_name} links={len(links)} joints={len(model.movable_joints)} warnings={len(diagnostics.warnings)}")
    return model, diagnostics
