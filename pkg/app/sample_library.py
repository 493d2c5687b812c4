"""
Miniature asset library built from boxes: five articulated objects with
ground-truth programs, compiled ground-truth URDFs, thumbnails, input frames,
part and object embeddings and a cached query table.

Embeddings come from `keyword_embedding`, a bag-of-keywords vector, so the
library and its query cache are reproducible without an embedding model.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .artlang import parse_artlang
from .compiler import compile_program
from .geometry import TriMesh
from .library import LibraryEntry, LibraryManifest, LibraryPart, encode_embedding, unit
from .logging_config import get_logger
from .meshes import directory_resolver, emit_obj, write_model_dir
from .render import RenderMode, render, render_joint_sweep

logger = get_logger("sample_library")

KEYWORDS = (
    "cabinet", "drawer", "door", "box", "lid", "window", "sash", "frame",
    "faucet", "spout", "base", "body", "storage", "kitchen", "hinge", "slide",
)
EMBEDDING_DIM = len(KEYWORDS)
THUMBNAIL_SIZE = 96
INPUT_FRAMES = 6


def keyword_embedding(text: str) -> np.ndarray:
    """Unit vector of keyword counts; a small floor keeps unrelated text non-zero."""
    counts = np.full(EMBEDDING_DIM, 1e-3)
    for token in re.findall(r"[a-z]+", text.lower()):
        for candidate in (token, token.rstrip("s"), token[:-2] if token.endswith("es") else token):
            if candidate in KEYWORDS:
                counts[KEYWORDS.index(candidate)] += 1.0
                break
    return unit(counts)


@dataclass(frozen=True)
class SamplePart:
    name: str
    description: str
    extents: tuple[float, float, float]
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def mesh(self) -> TriMesh:
        return TriMesh.box(self.extents, self.center)


@dataclass(frozen=True)
class SampleObject:
    object_id: str
    category: str
    description: str
    parts: tuple[SamplePart, ...]
    program: str

    def mesh_ref(self, part: SamplePart) -> str:
        return f"{self.object_id}/{part.name}.obj"


SAMPLE_OBJECTS: tuple[SampleObject, ...] = (
    SampleObject(
        "drawer_cabinet", "storage_furniture", "a storage cabinet with one sliding drawer",
        (
            SamplePart("body", "cabinet body box", (0.6, 0.5, 0.8), (0.0, 0.0, 0.4)),
            SamplePart("drawer", "drawer front panel", (0.5, 0.05, 0.2)),
        ),
        'part body "drawer_cabinet/body.obj";\n'
        'part drawer "drawer_cabinet/drawer.obj";\n'
        "place drawer on body axis -y offset (0, 0, 0.2);\n"
        "joint drawer to body prismatic axis (0, -1, 0) limit (0, 0.35);\n",
    ),
    SampleObject(
        "door_cabinet", "storage_furniture", "a kitchen cabinet with a hinged door",
        (
            SamplePart("body", "cabinet body box", (0.6, 0.5, 0.9), (0.0, 0.0, 0.45)),
            SamplePart("door", "cabinet door panel on a hinge", (0.6, 0.03, 0.9)),
        ),
        'part body "door_cabinet/body.obj";\n'
        'part door "door_cabinet/door.obj";\n'
        "place door on body axis -y;\n"
        "joint door to body revolute axis (0, 0, 1) pivot (0.3, -0.265, 0.45) limit (0, 1.57);\n",
    ),
    SampleObject(
        "lidded_box", "container", "a storage box with a hinged lid",
        (
            SamplePart("base", "box base", (0.4, 0.3, 0.2), (0.0, 0.0, 0.1)),
            SamplePart("lid", "flat box lid on a hinge", (0.4, 0.3, 0.02)),
        ),
        'part base "lidded_box/base.obj";\n'
        'part lid "lidded_box/lid.obj";\n'
        "place lid on base axis +z;\n"
        "joint lid to base revolute axis (-1, 0, 0) pivot (0, 0.15, 0.21) limit (0, 1.9);\n",
    ),
    SampleObject(
        "sliding_window", "window", "a window frame with a sliding sash",
        (
            SamplePart("frame", "window frame", (0.8, 0.05, 0.6), (0.0, 0.0, 0.3)),
            SamplePart("sash", "sliding window sash", (0.4, 0.02, 0.55)),
        ),
        'part frame "sliding_window/frame.obj";\n'
        'part sash "sliding_window/sash.obj";\n'
        "place sash on frame axis -y offset (-0.2, 0, 0);\n"
        "joint sash to frame prismatic axis (1, 0, 0) limit (0, 0.35);\n",
    ),
    SampleObject(
        "swivel_faucet", "faucet", "a kitchen faucet with a swivel spout",
        (
            SamplePart("base", "faucet base column", (0.06, 0.06, 0.2), (0.0, 0.0, 0.1)),
            SamplePart("spout", "faucet spout arm", (0.25, 0.04, 0.04)),
        ),
        'part base "swivel_faucet/base.obj";\n'
        'part spout "swivel_faucet/spout.obj";\n'
        "place spout on base axis +z offset (0.1, 0, 0);\n"
        "joint spout to base revolute axis (0, 0, 1) pivot (0, 0, 0.2) limit (-1, 1);\n",
    ),
)

SAMPLE_QUERIES = (
    "a cabinet with a drawer",
    "a kitchen cabinet with a hinged door",
    "a box with a hinged lid",
    "a sliding window",
    "a swivel faucet",
)


def sample_object(object_id: str) -> SampleObject:
    for obj in SAMPLE_OBJECTS:
        if obj.object_id == object_id:
            return obj
    raise KeyError(object_id)


def _query_texts(objects: Iterable[SampleObject], extra: Iterable[str]) -> list[str]:
    texts = set(extra)
    for obj in objects:
        texts.add(obj.description)
        texts.update(part.description for part in obj.parts)
    return sorted(texts)


def build_sample_library(root: str | Path, with_frames: bool = True, extra_queries: Iterable[str] = ()) -> Path:
    """Write the library under `root` and return the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    resolve = directory_resolver(root)
    categories: dict[str, list[LibraryEntry]] = {}

    for obj in SAMPLE_OBJECTS:
        folder = root / obj.object_id
        folder.mkdir(parents=True, exist_ok=True)
        parts = []
        for part in obj.parts:
            (root / obj.mesh_ref(part)).write_text(emit_obj(part.mesh()), encoding="utf-8")
            parts.append(LibraryPart(
                name=part.name,
                mesh_ref=obj.mesh_ref(part),
                description=part.description,
                dimensions=part.extents,
                embedding=encode_embedding(keyword_embedding(part.description)),
            ))
        (folder / "program.art").write_text(obj.program, encoding="utf-8")

        model, _ = compile_program(parse_artlang(obj.program), resolve, obj.object_id)
        write_model_dir(model, root, f"{obj.object_id}.urdf")

        thumbnail = render(model, None, "iso", RenderMode.SHADED, THUMBNAIL_SIZE, THUMBNAIL_SIZE, resolve)
        thumbnail.save(folder / "thumbnail.png", format="PNG")
        if with_frames:
            frames_dir = root / "inputs" / obj.object_id
            frames_dir.mkdir(parents=True, exist_ok=True)
            joint = model.movable_joints[0].name
            for index, frame in enumerate(render_joint_sweep(model, joint, INPUT_FRAMES, "iso", THUMBNAIL_SIZE, THUMBNAIL_SIZE, resolve)):
                frame.save(frames_dir / f"frame_{index:02d}.png", format="PNG")

        categories.setdefault(obj.category, []).append(LibraryEntry(
            object_id=obj.object_id,
            description=obj.description,
            parts=parts,
            images=[f"{obj.object_id}/thumbnail.png"],
            embedding=encode_embedding(keyword_embedding(obj.description)),
            program=f"{obj.object_id}/program.art",
            gt_urdf=f"{obj.object_id}.urdf",
        ))

    cache = {text: encode_embedding(keyword_embedding(text)) for text in _query_texts(SAMPLE_OBJECTS, [*SAMPLE_QUERIES, *extra_queries])}
    (root / "query_cache.json").write_text(json.dumps(cache, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    manifest = LibraryManifest(embedding_dim=EMBEDDING_DIM, categories=categories, query_cache="query_cache.json")
    manifest_path = root / "manifest.json"
    manifest_path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"SAMPLE_LIBRARY_OK root={root} objects={len(SAMPLE_OBJECTS)} queries={len(cache)}")
    return manifest_path
