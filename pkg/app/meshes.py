from __future__ import annotations

import threading
from dataclasses import replace
from pathlib import Path
from typing import Callable, Mapping, Optional

import numpy as np

from .errors import ArticraftError, ObjError, UrdfError
from .geometry import PointCloud, Pose, TriMesh, sample_surface
from .kinematics import forward_kinematics
from .logging_config import get_logger
from .urdf import Link, UrdfModel, emit_urdf, fmt, parse_urdf

logger = get_logger("meshes")

MeshResolver = Callable[[str], TriMesh]


def _face_index(token: str, vertex_count: int, line_no: int) -> int:
    raw = token.split("/")[0]
    try:
        idx = int(raw)
    except ValueError:
        raise ObjError(f"line {line_no}: bad face index '{token}'", code="malformed_obj")
    resolved = idx - 1 if idx > 0 else vertex_count + idx
    if idx == 0 or not 0 <= resolved < vertex_count:
        raise ObjError(f"line {line_no}: face index {idx} out of range (1..{vertex_count})", code="index_out_of_range")
    return resolved


def parse_obj(text: str) -> TriMesh:
    """`v` and `f` records of a Wavefront OBJ; polygons are fanned into triangles."""
    vertices: list[tuple[float, float, float]] = []
    triangles: list[tuple[int, int, int]] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise ObjError(f"line {line_no}: vertex needs 3 coordinates", code="malformed_obj")
            try:
                vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError:
                raise ObjError(f"line {line_no}: non-numeric vertex", code="malformed_obj")
        elif parts[0] == "f":
            if len(parts) < 4:
                raise ObjError(f"line {line_no}: face needs at least 3 vertices", code="short_face")
            idx = [_face_index(tok, len(vertices), line_no) for tok in parts[1:]]
            for k in range(1, len(idx) - 1):
                triangles.append((idx[0], idx[k], idx[k + 1]))
    if not triangles:
        if vertices:
            raise ObjError("OBJ has vertices but no faces", code="no_faces")
        return TriMesh.empty()
    return TriMesh(np.array(vertices), np.array(triangles))


def emit_obj(mesh: TriMesh) -> str:
    lines = [f"v {fmt(x)} {fmt(y)} {fmt(z)}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    return "\n".join(lines) + "\n"


class MeshCache:
    """OBJ files keyed by resolved path. Reads are lock-free; inserts take the lock."""

    def __init__(self):
        self._meshes: dict[Path, TriMesh] = {}
        self._lock = threading.Lock()

    def load(self, path: Path) -> TriMesh:
        path = path.resolve()
        cached = self._meshes.get(path)
        if cached is not None:
            return cached
        if not path.is_file():
            raise UrdfError(f"mesh file not found: {path}", code="unresolvable_mesh")
        mesh = parse_obj(path.read_text(encoding="utf-8"))
        with self._lock:
            return self._meshes.setdefault(path, mesh)

    def __len__(self) -> int:
        return len(self._meshes)


default_cache = MeshCache()


def directory_resolver(base_dir: Path, cache: Optional[MeshCache] = None) -> MeshResolver:
    """Mesh references resolve relative to a directory (no package:// support)."""
    cache = cache or default_cache
    base_dir = Path(base_dir)

    def resolve(ref: str) -> TriMesh:
        return cache.load(base_dir / ref)

    return resolve


def link_mesh(link: Link, resolver: Optional[MeshResolver] = None) -> Optional[TriMesh]:
    """The link's scaled geometry in its own link frame (visual origin applied)."""
    if link.mesh is not None:
        mesh = link.mesh
    elif link.mesh_ref is not None:
        if resolver is None:
            raise UrdfError(f"no resolver for mesh '{link.mesh_ref}' of link '{link.name}'", code="unresolvable_mesh")
        mesh = resolver(link.mesh_ref)
    else:
        return None
    if mesh.is_empty:
        return None
    return mesh.scaled(link.mesh_scale).transformed(link.visual_origin)


def attach_meshes(model: UrdfModel, resolver: MeshResolver) -> UrdfModel:
    """Copy of the model with every referenced mesh loaded inline."""
    links = []
    for link in model.links:
        if link.mesh is None and link.mesh_ref is not None:
            link = Link(link.name, link.mesh_ref, link.mesh_scale, link.visual_origin, resolver(link.mesh_ref))
        links.append(link)
    return model.with_links(links)


def load_model(path: str | Path, cache: Optional[MeshCache] = None) -> UrdfModel:
    """Parse a URDF file and load its meshes from the file's directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UrdfError(f"cannot read {path}: {exc}", code="unreadable_file")
    model = parse_urdf(text)
    return attach_meshes(model, directory_resolver(path.parent, cache))


def _unnamed(link: Link) -> bool:
    return link.mesh_ref is None and link.mesh is not None and not link.mesh.is_empty


def write_model_dir(model: UrdfModel, directory: str | Path, filename: str = "model.urdf") -> Path:
    """Write model.urdf plus every inline mesh under its reference path.

    Inline meshes without a reference are written as ``meshes/<link>.obj``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if any(_unnamed(link) for link in model.links):
        model = model.with_links([
            replace(link, mesh_ref=f"meshes/{link.name}.obj") if _unnamed(link) else link
            for link in model.links
        ])
    for link in model.links:
        if link.mesh is not None and link.mesh_ref is not None:
            target = directory / link.mesh_ref
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(emit_obj(link.mesh), encoding="utf-8")
    urdf_path = directory / filename
    urdf_path.write_text(emit_urdf(model), encoding="utf-8")
    return urdf_path


def posed_link_meshes(
    model: UrdfModel,
    joint_values: Optional[Mapping[str, float]] = None,
    resolver: Optional[MeshResolver] = None,
    poses: Optional[Mapping[str, Pose]] = None,
) -> dict[str, TriMesh]:
    """World-space geometry per link (links without geometry are left out)."""
    poses = poses if poses is not None else forward_kinematics(model, joint_values)
    meshes = {}
    for link in model.links:
        local = link_mesh(link, resolver)
        if local is not None:
            meshes[link.name] = local.transformed(poses[link.name])
    return meshes


def model_point_clouds(
    model: UrdfModel,
    joint_values: Optional[Mapping[str, float]] = None,
    n_per_link: int = 2048,
    seed: int = 0,
    resolver: Optional[MeshResolver] = None,
    skip_unresolvable: bool = False,
) -> dict[str, PointCloud]:
    """World-frame surface samples per link; link i draws from stream seed + i.

    An unresolvable mesh raises unless skip_unresolvable is set, in which case
    that link is left out of the result.
    """
    poses = forward_kinematics(model, joint_values)
    clouds = {}
    for index, link in enumerate(model.links):
        try:
            local = link_mesh(link, resolver)
        except ArticraftError as exc:
            if not skip_unresolvable:
                raise UrdfError(
                    f"mesh of link '{link.name}' cannot be sampled: {exc.message}",
                    code="unresolvable_mesh",
                )
            logger.warning(f"SAMPLE_SKIP link={link.name} reason={exc.code}")
            continue
        if local is None:
            continue
        clouds[link.name] = sample_surface(local, n_per_link, seed + index).transformed(poses[link.name])
    return clouds


