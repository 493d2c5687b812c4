"""
Static collision tests and collision-aware contact placement.

Triangles that merely touch (overlap no deeper than CONTACT_EPS) do not
intersect, so face-to-face contact between parts is a valid placement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .artlang import PlaceStmt
from .errors import GeometryError, PlacementError
from .geometry import Aabb, Pose, TriMesh, aabb_of
from .logging_config import get_logger

logger = get_logger("placement")

CONTACT_EPS = 1e-9
SEARCH_TOLERANCE = 1e-4
SEARCH_RANGE_FACTOR = 10.0
PAIR_CHUNK = 4096
MAX_SCAN_STEPS = 4096


def _triangle_bounds(tv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return tv.min(axis=1), tv.max(axis=1)


def _sat_intersect(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    """Separating-axis test on (P, 3, 3) triangle pairs; True where a pair intersects."""
    e1 = np.roll(t1, -1, axis=1) - t1
    e2 = np.roll(t2, -1, axis=1) - t2
    n1 = np.cross(e1[:, 0], e1[:, 1])
    n2 = np.cross(e2[:, 0], e2[:, 1])
    axes = [n1[:, None], n2[:, None]]
    axes.append(np.cross(e1[:, :, None, :], e2[:, None, :, :]).reshape(-1, 9, 3))
    axes.append(np.cross(n1[:, None, :], e1))
    axes.append(np.cross(n2[:, None, :], e2))
    axes = np.concatenate(axes, axis=1)

    norms = np.linalg.norm(axes, axis=2)
    valid = norms > 1e-12
    axes = axes / np.where(valid, norms, 1.0)[..., None]

    p1 = np.einsum("pkd,pvd->pkv", axes, t1)
    p2 = np.einsum("pkd,pvd->pkv", axes, t2)
    overlap = np.minimum(p1.max(axis=2), p2.max(axis=2)) - np.maximum(p1.min(axis=2), p2.min(axis=2))
    separated = valid & (overlap <= CONTACT_EPS)
    return ~separated.any(axis=1)


def triangles_intersect(t1: np.ndarray, t2: np.ndarray) -> bool:
    return bool(_sat_intersect(np.asarray(t1, float)[None], np.asarray(t2, float)[None])[0])


def collide(a: TriMesh, b: TriMesh, pose_a: Optional[Pose] = None, pose_b: Optional[Pose] = None) -> bool:
    """True iff any triangle of `a` intersects any triangle of `b` (both optionally posed)."""
    if a.is_empty or b.is_empty:
        raise GeometryError("collision test on an empty mesh", code="empty_mesh")
    if pose_a is not None:
        a = a.transformed(pose_a)
    if pose_b is not None:
        b = b.transformed(pose_b)
    box_a, box_b = aabb_of(a), aabb_of(b)
    if not box_a.overlaps(box_b, tol=-CONTACT_EPS):
        return False

    ta, tb = a.triangle_vertices(), b.triangle_vertices()
    lo_a, hi_a = _triangle_bounds(ta)
    lo_b, hi_b = _triangle_bounds(tb)
    keep_a = np.all((lo_a <= box_b.max) & (hi_a >= box_b.min), axis=1)
    keep_b = np.all((lo_b <= box_a.max) & (hi_b >= box_a.min), axis=1)
    ta, lo_a, hi_a = ta[keep_a], lo_a[keep_a], hi_a[keep_a]
    tb, lo_b, hi_b = tb[keep_b], lo_b[keep_b], hi_b[keep_b]
    if ta.shape[0] == 0 or tb.shape[0] == 0:
        return False

    rows = max(1, PAIR_CHUNK // max(1, tb.shape[0]))
    for start in range(0, ta.shape[0], rows):
        sl = slice(start, start + rows)
        mask = np.all(
            (lo_a[sl, None, :] <= hi_b[None, :, :]) & (hi_a[sl, None, :] >= lo_b[None, :, :]),
            axis=2,
        )
        ia, ib = np.nonzero(mask)
        if ia.size and _sat_intersect(ta[sl][ia], tb[ib]).any():
            return True
    return False


def collides_with_any(mesh: TriMesh, assembly: Sequence[TriMesh]) -> bool:
    return any(collide(mesh, other) for other in assembly if not other.is_empty)


@dataclass(frozen=True, eq=False)
class Placement:
    pose: Pose
    collision_checks: int


def _offset_pose(child_box: Aabb, target_center: np.ndarray) -> Pose:
    return Pose.from_translation(target_center - child_box.center)


def search_contact(
    child_mesh: TriMesh,
    parent_assembly: Sequence[TriMesh],
    stmt: PlaceStmt,
    anchor: Optional[Aabb] = None,
    tolerance: float = SEARCH_TOLERANCE,
) -> Placement:
    """Contact placement plus the number of collision tests it took.

    The child's Aabb center is aligned with the anchor's center on the two
    axes orthogonal to the placement axis (plus the lateral offset), then
    moved along the axis to the non-intersecting offset closest to the anchor.
    """
    if child_mesh.is_empty:
        raise PlacementError(f"part '{stmt.child}' has no geometry to place", code="empty_mesh", location=stmt.location)
    solids = [m for m in parent_assembly if not m.is_empty]
    if not solids:
        raise PlacementError(f"parent '{stmt.parent}' has no geometry", code="empty_mesh", location=stmt.location)
    if anchor is None:
        anchor = aabb_of(solids[0])
        for mesh in solids[1:]:
            anchor = anchor.union(aabb_of(mesh))

    child_box = aabb_of(child_mesh)
    k, sign = stmt.axis_index, stmt.axis_sign
    base = anchor.center.copy()
    lateral = np.array(stmt.lateral_offset, dtype=np.float64)
    lateral[k] = 0.0
    base = base + lateral
    checks = 0

    def pose_at(t: float) -> Pose:
        center = base.copy()
        center[k] += sign * t
        return _offset_pose(child_box, center)

    def hits(t: float) -> bool:
        nonlocal checks
        checks += 1
        return collides_with_any(child_mesh.transformed(pose_at(t)), solids)

    def bisect(free: float, blocked: float) -> float:
        while abs(free - blocked) > tolerance:
            mid = 0.5 * (free + blocked)
            if hits(mid):
                blocked = mid
            else:
                free = mid
        return free

    combined = float(anchor.extent[k] + child_box.extent[k])
    if combined <= 0.0:
        combined = float(np.linalg.norm(anchor.extent + child_box.extent)) or 1.0
    t0 = float(anchor.half_extent[k] + child_box.half_extent[k])

    if hits(t0):
        step = max(tolerance, combined / 64.0)
        blocked, t = t0, t0 + step
        while hits(t):
            blocked = t
            step *= 2.0
            t = t0 + step
            if t - t0 > SEARCH_RANGE_FACTOR * combined:
                raise PlacementError(
                    f"no collision-free position for '{stmt.child}' on '{stmt.parent}' along {stmt.axis}",
                    code="placement_failed",
                    location=stmt.location,
                )
        contact = bisect(t, blocked)
    else:
        ext = [e for e in (anchor.extent[k], child_box.extent[k]) if e > 0.0]
        step = max(tolerance, min(ext) / 8.0 if ext else tolerance, combined / MAX_SCAN_STEPS)
        free, t, contact = t0, t0 - step, t0
        while t >= -t0:
            if hits(t):
                contact = bisect(free, t)
                break
            free, t = t, t - step
        else:
            # nothing along the axis blocks the child; keep the bounding-box contact
            logger.debug(f"PLACE_NO_CONTACT child={stmt.child} parent={stmt.parent} axis={stmt.axis}")

    pose = pose_at(contact + stmt.clearance)
    logger.debug(f"PLACE_OK child={stmt.child} parent={stmt.parent} axis={stmt.axis} offset={contact:.6f} checks={checks}")
    return Placement(pose=pose, collision_checks=checks)


def place_with_collision(
    child_mesh: TriMesh,
    parent_assembly: Sequence[TriMesh],
    stmt: PlaceStmt,
    anchor: Optional[Aabb] = None,
) -> Pose:
    """Pose for the child mesh: centers aligned off-axis, tight contact along the axis."""
    return search_contact(child_mesh, parent_assembly, stmt, anchor).pose
