"""
Rigid-body math shared by every other module.

Conventions (fixed project-wide):
    - quaternions are scalar-first (w, x, y, z), right-handed, active rotations
    - a Pose maps points of its own frame into the parent frame: p' = R p + t
    - roll/pitch/yaw use the URDF fixed-axis XYZ convention: R = Rz(yaw) Ry(pitch) Rx(roll)

All value types are immutable; arrays they hold are marked read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import GeometryError

NORM_TOLERANCE = 1e-9


def vec3(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """A finite, read-only float64 3-vector."""
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise GeometryError(f"expected 3 components, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"non-finite vector {arr.tolist()}")
    arr.setflags(write=False)
    return arr


def normalized(values: Sequence[float] | np.ndarray) -> np.ndarray:
    v = vec3(values)
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        raise GeometryError("cannot normalize a zero-length vector", code="zero_vector")
    return vec3(v / n)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class UnitQuat:
    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        comps = (self.w, self.x, self.y, self.z)
        if not all(math.isfinite(c) for c in comps):
            raise GeometryError(f"non-finite quaternion {comps}")
        n = math.sqrt(sum(c * c for c in comps))
        if n < 1e-12:
            raise GeometryError("zero quaternion", code="zero_quaternion")
        for name, c in zip("wxyz", comps):
            object.__setattr__(self, name, float(c / n))

    @classmethod
    def identity(cls) -> UnitQuat:
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> UnitQuat:
        w, x, y, z = (float(c) for c in arr)
        return cls(w, x, y, z)

    @classmethod
    def from_axis_angle(cls, axis: Sequence[float], angle: float) -> UnitQuat:
        u = normalized(axis)
        half = 0.5 * float(angle)
        s = math.sin(half)
        return cls(math.cos(half), u[0] * s, u[1] * s, u[2] * s)

    @classmethod
    def from_rpy(cls, roll: float, pitch: float, yaw: float) -> UnitQuat:
        qx = cls.from_axis_angle((1.0, 0.0, 0.0), roll)
        qy = cls.from_axis_angle((0.0, 1.0, 0.0), pitch)
        qz = cls.from_axis_angle((0.0, 0.0, 1.0), yaw)
        return qz * qy * qx

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> UnitQuat:
        m = np.asarray(m, dtype=np.float64)
        trace = m[0, 0] + m[1, 1] + m[2, 2]
        if trace > 0.0:
            s = 2.0 * math.sqrt(trace + 1.0)
            return cls(0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
        if m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            return cls((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
        if m[1, 1] > m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
            return cls((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
        s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        return cls((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)

    def as_array(self) -> np.ndarray:
        return _frozen(np.array([self.w, self.x, self.y, self.z], dtype=np.float64))

    def __mul__(self, other: UnitQuat) -> UnitQuat:
        """Hamilton product: (self * other) applies `other` first, then `self`."""
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return UnitQuat(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def conjugate(self) -> UnitQuat:
        return UnitQuat(self.w, -self.x, -self.y, -self.z)

    inverse = conjugate

    def dot(self, other: UnitQuat) -> float:
        return self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return _frozen(np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]))

    def rotate(self, v: Sequence[float] | np.ndarray) -> np.ndarray:
        return vec3(self.to_matrix() @ np.asarray(v, dtype=np.float64))

    def to_rpy(self) -> tuple[float, float, float]:
        m = self.to_matrix()
        pitch = math.atan2(-m[2, 0], math.hypot(m[0, 0], m[1, 0]))
        if math.hypot(m[0, 0], m[1, 0]) < 1e-10:
            # gimbal lock: fold the whole yaw/roll ambiguity into yaw
            roll = 0.0
            yaw = math.atan2(-m[0, 1], m[1, 1])
        else:
            roll = math.atan2(m[2, 1], m[2, 2])
            yaw = math.atan2(m[1, 0], m[0, 0])
        return roll, pitch, yaw

    def canonical(self) -> UnitQuat:
        """Same rotation with a non-negative scalar part."""
        if self.w < 0.0:
            return UnitQuat(-self.w, -self.x, -self.y, -self.z)
        return self


def quat_geodesic(q_p: UnitQuat, q_g: UnitQuat) -> float:
    """Smallest rotation angle between two orientations: 2 * arccos(|q_p . q_g|)."""
    d = abs(q_p.dot(q_g))
    return 2.0 * math.acos(min(1.0, max(-1.0, d)))


@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray = field(default_factory=lambda: vec3((0.0, 0.0, 0.0)))
    orientation: UnitQuat = field(default_factory=UnitQuat.identity)

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_translation(cls, t: Sequence[float]) -> Pose:
        return cls(vec3(t), UnitQuat.identity())

    @classmethod
    def from_rotation(cls, q: UnitQuat) -> Pose:
        return cls(vec3((0.0, 0.0, 0.0)), q)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> Pose:
        m = np.asarray(m, dtype=np.float64)
        return cls(vec3(m[:3, 3]), UnitQuat.from_matrix(m[:3, :3]))

    def compose(self, other: Pose) -> Pose:
        return Pose(
            self.position + self.orientation.rotate(other.position),
            self.orientation * other.orientation,
        )

    def __matmul__(self, other: Pose) -> Pose:
        return self.compose(other)

    def inverse(self) -> Pose:
        q_inv = self.orientation.conjugate()
        return Pose(-q_inv.rotate(self.position), q_inv)

    def transform_point(self, p: Sequence[float]) -> np.ndarray:
        return vec3(self.orientation.rotate(p) + self.position)

    def transform_points(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return pts @ self.orientation.to_matrix().T + self.position

    def rotate_vector(self, v: Sequence[float]) -> np.ndarray:
        return self.orientation.rotate(v)

    def to_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.orientation.to_matrix()
        m[:3, 3] = self.position
        return _frozen(m)

    def allclose(self, other: Pose, tol: float = 1e-9) -> bool:
        if not np.allclose(self.position, other.position, atol=tol, rtol=0.0):
            return False
        return abs(abs(self.orientation.dot(other.orientation)) - 1.0) <= tol

    def __repr__(self) -> str:
        p = ", ".join(f"{c:.6g}" for c in self.position)
        q = self.orientation
        return f"Pose(position=({p}), orientation=({q.w:.6g}, {q.x:.6g}, {q.y:.6g}, {q.z:.6g}))"


def compose(a: Pose, b: Pose) -> Pose:
    """Pose of frame b expressed through frame a (rotate b's offset by a, then translate)."""
    return a.compose(b)


@dataclass(frozen=True, eq=False)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo, hi = vec3(self.min), vec3(self.max)
        if np.any(lo > hi):
            raise GeometryError(f"inverted bounds min={lo.tolist()} max={hi.tolist()}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def from_points(cls, points: np.ndarray) -> Aabb:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if pts.shape[0] == 0:
            raise GeometryError("bounds of an empty point set", code="empty_mesh")
        return cls(pts.min(axis=0), pts.max(axis=0))

    @property
    def center(self) -> np.ndarray:
        return vec3(0.5 * (self.min + self.max))

    @property
    def extent(self) -> np.ndarray:
        return vec3(self.max - self.min)

    @property
    def half_extent(self) -> np.ndarray:
        return vec3(0.5 * (self.max - self.min))

    def union(self, other: Aabb) -> Aabb:
        return Aabb(np.minimum(self.min, other.min), np.maximum(self.max, other.max))

    def contains(self, other: Aabb, tol: float = 0.0) -> bool:
        return bool(np.all(self.min <= other.min + tol) and np.all(other.max <= self.max + tol))

    def contains_point(self, p: Sequence[float], tol: float = 0.0) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(self.min - tol <= p) and np.all(p <= self.max + tol))

    def overlaps(self, other: Aabb, tol: float = 0.0) -> bool:
        return bool(np.all(self.min <= other.max + tol) and np.all(other.min <= self.max + tol))

    def translated(self, t: Sequence[float]) -> Aabb:
        return Aabb(self.min + np.asarray(t), self.max + np.asarray(t))


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    color: Optional[str] = None

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        tris = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(verts)):
            raise GeometryError("non-finite mesh vertex")
        if tris.size and (tris.min() < 0 or tris.max() >= verts.shape[0]):
            raise GeometryError("triangle index out of range", code="index_out_of_range")
        if verts.shape[0] > 0 and tris.shape[0] == 0:
            raise GeometryError("non-empty mesh without triangles", code="no_triangles")
        object.__setattr__(self, "vertices", _frozen(verts))
        object.__setattr__(self, "triangles", _frozen(tris))

    @classmethod
    def empty(cls) -> TriMesh:
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @classmethod
    def box(cls, extents: Sequence[float], center: Sequence[float] = (0.0, 0.0, 0.0), color: Optional[str] = None) -> TriMesh:
        """Axis-aligned box with outward-facing triangles."""
        hx, hy, hz = (0.5 * float(e) for e in extents)
        cx, cy, cz = (float(c) for c in center)
        verts = np.array([
            [cx - hx, cy - hy, cz - hz], [cx + hx, cy - hy, cz - hz],
            [cx + hx, cy + hy, cz - hz], [cx - hx, cy + hy, cz - hz],
            [cx - hx, cy - hy, cz + hz], [cx + hx, cy - hy, cz + hz],
            [cx + hx, cy + hy, cz + hz], [cx - hx, cy + hy, cz + hz],
        ])
        tris = [
            (0, 2, 1), (0, 3, 2),  # -z
            (4, 5, 6), (4, 6, 7),  # +z
            (0, 1, 5), (0, 5, 4),  # -y
            (2, 3, 7), (2, 7, 6),  # +y
            (1, 2, 6), (1, 6, 5),  # +x
            (0, 4, 7), (0, 7, 3),  # -x
        ]
        return cls(verts, np.array(tris), color=color)

    @classmethod
    def merge(cls, meshes: Iterable[TriMesh], color: Optional[str] = None) -> TriMesh:
        verts, tris, offset = [], [], 0
        for mesh in meshes:
            if mesh.is_empty:
                continue
            verts.append(mesh.vertices)
            tris.append(mesh.triangles + offset)
            offset += mesh.vertices.shape[0]
        if not verts:
            return cls.empty()
        return cls(np.vstack(verts), np.vstack(tris), color=color)

    @property
    def is_empty(self) -> bool:
        return self.triangles.shape[0] == 0

    def triangle_vertices(self) -> np.ndarray:
        """(M, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    def triangle_areas(self) -> np.ndarray:
        tv = self.triangle_vertices()
        return 0.5 * np.linalg.norm(np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0]), axis=1)

    def area(self) -> float:
        return float(self.triangle_areas().sum())

    def transformed(self, pose: Pose) -> TriMesh:
        if self.is_empty:
            return self
        return TriMesh(pose.transform_points(self.vertices), self.triangles, self.color)

    def scaled(self, scale: Sequence[float]) -> TriMesh:
        s = vec3(scale)
        if np.any(s <= 0):
            raise GeometryError(f"scale components must be positive, got {s.tolist()}", code="invalid_scale")
        if self.is_empty:
            return self
        return TriMesh(self.vertices * s, self.triangles, self.color)

    def with_color(self, color: Optional[str]) -> TriMesh:
        return TriMesh(self.vertices, self.triangles, color)


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", _frozen(pts))

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def transformed(self, pose: Pose) -> PointCloud:
        return PointCloud(pose.transform_points(self.points))


def aabb_of(mesh: TriMesh, transform: Optional[Pose] = None) -> Aabb:
    if mesh.is_empty:
        raise GeometryError("bounds of an empty mesh", code="empty_mesh")
    verts = mesh.vertices[np.unique(mesh.triangles)]
    if transform is not None:
        verts = transform.transform_points(verts)
    return Aabb.from_points(verts)


def sample_surface(mesh: TriMesh, n: int, seed: int) -> PointCloud:
    """Area-proportional, barycentric-uniform surface samples.

    Philox is counter-based, so a seed gives the same cloud on every platform.
    """
    if n < 1:
        raise GeometryError(f"sample count must be positive, got {n}")
    if mesh.is_empty:
        raise GeometryError("cannot sample an empty mesh", code="empty_mesh")
    areas = mesh.triangle_areas()
    total = float(areas.sum())
    if total <= 0.0:
        raise GeometryError("mesh has zero surface area", code="degenerate_mesh")
    rng = np.random.Generator(np.random.Philox(seed))
    picks = rng.choice(areas.shape[0], size=n, p=areas / total)
    r1, r2 = rng.random(n), rng.random(n)
    s = np.sqrt(r1)
    a, b, c = 1.0 - s, s * (1.0 - r2), s * r2
    tv = mesh.triangle_vertices()[picks]
    points = a[:, None] * tv[:, 0] + b[:, None] * tv[:, 1] + c[:, None] * tv[:, 2]
    return PointCloud(points)


def point_triangle_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    """Distance from a point to a triangle (closest-feature region test)."""
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = float(ab @ ap), float(ac @ ap)
    if d1 <= 0 and d2 <= 0:
        return float(np.linalg.norm(p - a))
    bp = p - b
    d3, d4 = float(ab @ bp), float(ac @ bp)
    if d3 >= 0 and d4 <= d3:
        return float(np.linalg.norm(p - b))
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return float(np.linalg.norm(p - (a + v * ab)))
    cp = p - c
    d5, d6 = float(ab @ cp), float(ac @ cp)
    if d6 >= 0 and d5 <= d6:
        return float(np.linalg.norm(p - c))
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return float(np.linalg.norm(p - (a + w * ac)))
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return float(np.linalg.norm(p - (b + w * (c - b))))
    denom = 1.0 / (va + vb + vc)
    v, w = vb * denom, vc * denom
    return float(np.linalg.norm(p - (a + ab * v + ac * w)))


def point_mesh_distance(p: Sequence[float], mesh: TriMesh) -> float:
    p = np.asarray(p, dtype=np.float64)
    return min(point_triangle_distance(p, *tri) for tri in mesh.triangle_vertices())
