"""
Offline orthographic renderer: flat shading, per-pixel z-buffer, Pillow output.

Pixels are a pure function of (model, joint values, camera, mode, size,
framing), so renders are byte-stable across runs.
"""

from __future__ import annotations

import colorsys
import io
import json
import subprocess
import tempfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from PIL import Image

from .errors import ArticraftError, RenderError
from .geometry import Aabb, TriMesh, aabb_of
from .kinematics import sweep_values
from .logging_config import get_logger
from .meshes import MeshResolver, posed_link_meshes, write_model_dir
from .urdf import UrdfModel

logger = get_logger("render")

BACKGROUND = (255, 255, 255)
MARGIN = 0.08


class RenderMode(str, Enum):
    SHADED = "shaded"
    SEGMENTED = "segmented"


@dataclass(frozen=True)
class Camera:
    """Orthographic view: `forward` points from the viewer into the scene."""

    forward: tuple[float, float, float]
    up: tuple[float, float, float]

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        f = np.asarray(self.forward, dtype=np.float64)
        f = f / np.linalg.norm(f)
        u = np.asarray(self.up, dtype=np.float64)
        r = np.cross(f, u)
        r = r / np.linalg.norm(r)
        u = np.cross(r, f)
        return r, u, f


CAMERAS: dict[str, Camera] = {
    "front": Camera((0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
    "back": Camera((0.0, -1.0, 0.0), (0.0, 0.0, 1.0)),
    "left": Camera((1.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    "right": Camera((-1.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    "top": Camera((0.0, 0.0, -1.0), (0.0, 1.0, 0.0)),
    "iso": Camera((-1.0, 1.0, -0.8), (0.0, 0.0, 1.0)),
}

SEGMENT_PALETTE = [
    (230, 25, 75), (60, 180, 75), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60),
    (0, 128, 128), (170, 110, 40), (128, 0, 0), (0, 0, 128),
]

SHADE_PALETTE = [
    (176, 140, 104), (120, 150, 180), (150, 170, 120), (190, 120, 120),
    (160, 130, 180), (200, 180, 110),
]


def segment_colors(n: int) -> list[tuple[int, int, int]]:
    """n distinct saturated colors; the fixed palette first, evenly spaced hues beyond it."""
    if n <= len(SEGMENT_PALETTE):
        return SEGMENT_PALETTE[:n]
    colors = []
    for i in range(n):
        r, g, b = colorsys.hsv_to_rgb(i / n, 1.0, 0.9)
        colors.append((int(r * 255), int(g * 255), int(b * 255)))
    return colors


def parse_color(value: Optional[str]) -> Optional[tuple[int, int, int]]:
    if not value:
        return None
    text = value.lstrip("#")
    if len(text) != 6:
        return None
    try:
        return tuple(int(text[i:i + 2], 16) for i in (0, 2, 4))
    except ValueError:
        return None


def camera_for(name: str) -> Camera:
    camera = CAMERAS.get(name)
    if camera is None:
        raise RenderError(f"unknown camera preset '{name}' (known: {', '.join(CAMERAS)})", code="unknown_camera")
    return camera


def scene_bounds(meshes: Sequence[TriMesh]) -> Optional[Aabb]:
    box = None
    for mesh in meshes:
        if mesh.is_empty:
            continue
        b = aabb_of(mesh)
        box = b if box is None else box.union(b)
    return box


def rasterize(
    meshes: Sequence[TriMesh],
    colors: Sequence[tuple[int, int, int]],
    camera: Camera,
    width: int,
    height: int,
    shaded: bool = True,
    framing: Optional[Aabb] = None,
) -> Image.Image:
    if width <= 0 or height <= 0:
        raise RenderError(f"viewport {width}x{height} has no area", code="zero_viewport")
    image = np.empty((height, width, 3), dtype=np.uint8)
    image[:] = BACKGROUND
    framing = framing or scene_bounds(meshes)
    if framing is None:
        return Image.fromarray(image, "RGB")

    right, up, forward = camera.basis()
    corners = np.array([[x, y, z] for x in (framing.min[0], framing.max[0]) for y in (framing.min[1], framing.max[1]) for z in (framing.min[2], framing.max[2])])
    sx, sy = corners @ right, corners @ up
    span = max(sx.max() - sx.min(), sy.max() - sy.min(), 1e-9)
    scale = (1.0 - 2.0 * MARGIN) * min(width, height) / span
    cx, cy = 0.5 * (sx.max() + sx.min()), 0.5 * (sy.max() + sy.min())

    depth = np.full((height, width), np.inf)
    light = -forward + 0.35 * up
    light = light / np.linalg.norm(light)

    for mesh, color in zip(meshes, colors):
        if mesh.is_empty:
            continue
        tv = mesh.triangle_vertices()
        px = (tv @ right - cx) * scale + 0.5 * width
        py = 0.5 * height - (tv @ up - cy) * scale
        pz = tv @ forward
        normals = np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0])
        lengths = np.linalg.norm(normals, axis=1)
        base = np.asarray(color, dtype=np.float64)
        for i in range(tv.shape[0]):
            if lengths[i] < 1e-15:
                continue
            x0, x1 = int(max(0, np.floor(px[i].min()))), int(min(width - 1, np.ceil(px[i].max())))
            y0, y1 = int(max(0, np.floor(py[i].min()))), int(min(height - 1, np.ceil(py[i].max())))
            if x0 > x1 or y0 > y1:
                continue
            gx, gy = np.meshgrid(np.arange(x0, x1 + 1) + 0.5, np.arange(y0, y1 + 1) + 0.5)
            (ax, bx, cx_), (ay, by, cy_) = px[i], py[i]
            area = (bx - ax) * (cy_ - ay) - (cx_ - ax) * (by - ay)
            if abs(area) < 1e-12:
                continue
            w0 = ((bx - gx) * (cy_ - gy) - (cx_ - gx) * (by - gy)) / area
            w1 = ((cx_ - gx) * (ay - gy) - (ax - gx) * (cy_ - gy)) / area
            w2 = 1.0 - w0 - w1
            inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
            if not inside.any():
                continue
            z = w0 * pz[i, 0] + w1 * pz[i, 1] + w2 * pz[i, 2]
            region = depth[y0:y1 + 1, x0:x1 + 1]
            closer = inside & (z < region)
            if not closer.any():
                continue
            region[closer] = z[closer]
            if shaded:
                intensity = 0.3 + 0.7 * abs(float(normals[i] @ light)) / lengths[i]
                pixel = np.clip(base * intensity, 0, 255).astype(np.uint8)
            else:
                pixel = base.astype(np.uint8)
            image[y0:y1 + 1, x0:x1 + 1][closer] = pixel
    return Image.fromarray(image, "RGB")


def _run_external(
    command: Sequence[str], model: UrdfModel, joint_values: Mapping[str, float], camera: str
) -> Image.Image:
    with tempfile.TemporaryDirectory(prefix="articraft-render-") as tmp:
        tmp_path = Path(tmp)
        urdf_path = write_model_dir(model, tmp_path / "model")
        joints_path = tmp_path / "joints.json"
        joints_path.write_text(json.dumps(dict(joint_values), sort_keys=True), encoding="utf-8")
        out_path = tmp_path / "render.png"
        result = subprocess.run([*command, str(urdf_path), str(joints_path), camera, str(out_path)], capture_output=True, text=True)
        if result.returncode != 0 or not out_path.is_file():
            raise RenderError(f"external renderer exited with {result.returncode}: {result.stderr.strip()[:500]}", code="external_renderer_failed")
        with Image.open(out_path) as img:
            return img.convert("RGB")


def render(
    model: UrdfModel,
    joint_values: Optional[Mapping[str, float]] = None,
    camera: str = "iso",
    mode: RenderMode = RenderMode.SHADED,
    width: int = 192,
    height: int = 192,
    resolver: Optional[MeshResolver] = None,
    framing: Optional[Aabb] = None,
    external_command: Optional[Sequence[str]] = None,
) -> Image.Image:
    cam = camera_for(camera)
    joint_values = dict(joint_values or {})
    if external_command and mode == RenderMode.SHADED:
        return _run_external(external_command, model, joint_values, camera)
    try:
        posed = posed_link_meshes(model, joint_values, resolver)
    except ArticraftError as exc:
        raise RenderError(f"cannot pose model '{model.name}': {exc.message}", code=exc.code)
    names = [link.name for link in model.links if link.name in posed]
    meshes = [posed[n] for n in names]
    if mode == RenderMode.SEGMENTED:
        colors = link_color_map(model)
        palette = [colors[n] for n in names]
    else:
        palette = []
        for index, name in enumerate(names):
            palette.append(parse_color(posed[name].color) or SHADE_PALETTE[index % len(SHADE_PALETTE)])
    return rasterize(meshes, palette, cam, width, height, shaded=mode == RenderMode.SHADED, framing=framing)


def link_color_map(model: UrdfModel) -> dict[str, tuple[int, int, int]]:
    """Segmentation color of every link, in link order."""
    return dict(zip(model.link_names, segment_colors(len(model.links))))


def sweep_framing(
    model: UrdfModel, joint_name: str, frames: int, resolver: Optional[MeshResolver] = None
) -> Optional[Aabb]:
    joint = model.joint(joint_name)
    box = None
    for value in sweep_values(joint.limit, frames):
        b = scene_bounds(list(posed_link_meshes(model, {joint_name: value}, resolver).values()))
        if b is not None:
            box = b if box is None else box.union(b)
    return box


def render_joint_sweep(
    model: UrdfModel,
    joint_name: str,
    frames: int = 6,
    camera: str = "iso",
    width: int = 192,
    height: int = 192,
    resolver: Optional[MeshResolver] = None,
    external_command: Optional[Sequence[str]] = None,
) -> list[Image.Image]:
    """Frames of one joint moving from its lower to its upper limit, all with the same framing."""
    try:
        joint = model.joint(joint_name)
    except KeyError:
        raise RenderError(f"model has no joint '{joint_name}'", code="unknown_joint")
    if not joint.is_movable:
        raise RenderError(f"joint '{joint_name}' is fixed and cannot be swept", code="fixed_joint")
    framing = sweep_framing(model, joint_name, frames, resolver)
    return [
        render(model, {joint_name: value}, camera, RenderMode.SHADED, width, height, resolver, framing, external_command)
        for value in sweep_values(joint.limit, frames)
    ]


def png_bytes(image: Image.Image) -> bytes:
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


def foreground_colors(image: Image.Image) -> set[tuple[int, int, int]]:
    arr = np.asarray(image.convert("RGB")).reshape(-1, 3)
    return {tuple(int(c) for c in px) for px in np.unique(arr, axis=0)} - {BACKGROUND}
