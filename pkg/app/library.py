"""
Asset library: manifest, category narrowing, text part matching, mesh
rescaling and tournament selection.

The manifest is a single JSON file (see docs/LIBRARY_MANIFEST.md). Embeddings
are stored as base64 little-endian float32 and are unit-normalized.
"""

from __future__ import annotations

import base64
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator

from .errors import ArticraftError, GeometryError, LibraryError
from .geometry import TriMesh, aabb_of, vec3
from .logging_config import get_logger
from .meshes import MeshCache, MeshResolver, directory_resolver

logger = get_logger("library")

MANIFEST_SCHEMA_VERSION = 1
UNIT_NORM_TOLERANCE = 1e-6

QueryEmbedder = Callable[[str], np.ndarray]
Selector = Callable[[list[str]], str]


def encode_embedding(vector: Sequence[float] | np.ndarray) -> str:
    return base64.b64encode(np.asarray(vector, dtype="<f4").tobytes()).decode("ascii")


def decode_embedding(blob: str) -> np.ndarray:
    try:
        raw = base64.b64decode(blob.encode("ascii"), validate=True)
    except ValueError as exc:
        raise LibraryError(f"bad embedding blob: {exc}", code="malformed_manifest")
    if len(raw) % 4:
        raise LibraryError("embedding blob length is not a multiple of 4 bytes", code="malformed_manifest")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def unit(vector: Sequence[float] | np.ndarray) -> np.ndarray:
    v = np.asarray(vector, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        raise LibraryError("cannot normalize a zero embedding", code="zero_embedding")
    return v / n


class PartSpec(BaseModel):
    name: str
    description: str = ""
    dimensions: tuple[float, float, float]

    @field_validator("dimensions")
    @classmethod
    def positive(cls, value):
        if any(d <= 0 for d in value):
            raise ValueError("dimensions must be positive")
        return value


class LibraryPart(BaseModel):
    name: str
    mesh_ref: str
    description: str = ""
    dimensions: Optional[tuple[float, float, float]] = None
    embedding: Optional[str] = None


class LibraryEntry(BaseModel):
    object_id: str
    description: str = ""
    parts: list[LibraryPart] = Field(default_factory=list)
    images: list[str] = Field(default_factory=list)
    embedding: str
    program: Optional[str] = None
    gt_urdf: Optional[str] = None


class LibraryManifest(BaseModel):
    schema_version: int = MANIFEST_SCHEMA_VERSION
    embedding_dim: int = Field(ge=1)
    categories: dict[str, list[LibraryEntry]] = Field(default_factory=dict)
    query_cache: Optional[str] = None


@dataclass(frozen=True)
class PartCandidate:
    object_id: str
    part: str
    mesh_ref: str
    description: str
    embedding: np.ndarray


@dataclass(frozen=True)
class PartMatch:
    mesh_ref: str
    object_id: str
    part: str
    similarity: float


class AssetLibrary:
    """Immutable after load; safe to share between threads."""

    def __init__(self, manifest: LibraryManifest, root: str | Path, cache: Optional[MeshCache] = None):
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION:
            raise LibraryError(f"unsupported manifest schema {manifest.schema_version}", code="unsupported_schema")
        self.manifest = manifest
        self.root = Path(root)
        self._cache = cache or MeshCache()
        self._embeddings: dict[str, np.ndarray] = {}
        for entries in manifest.categories.values():
            for entry in entries:
                self._embeddings[entry.object_id] = self._checked(entry.embedding, entry.object_id)

    @classmethod
    def load(cls, path: str | Path, cache: Optional[MeshCache] = None) -> AssetLibrary:
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        try:
            manifest = LibraryManifest.model_validate(json.loads(path.read_text(encoding="utf-8")))
        except OSError as exc:
            raise LibraryError(f"cannot read library manifest {path}: {exc}", code="unreadable_manifest")
        except (ValueError, ValidationError) as exc:
            raise LibraryError(f"invalid library manifest {path}: {exc}", code="malformed_manifest")
        library = cls(manifest, path.parent, cache)
        logger.info(f"LIBRARY_LOADED path={path} categories={len(manifest.categories)} entries={len(library._embeddings)}")
        return library

    def _checked(self, blob: str, owner: str) -> np.ndarray:
        vector = decode_embedding(blob)
        if vector.shape[0] != self.manifest.embedding_dim:
            raise LibraryError(
                f"embedding of '{owner}' has dimension {vector.shape[0]}, expected {self.manifest.embedding_dim}",
                code="dimension_mismatch",
            )
        if abs(float(np.linalg.norm(vector)) - 1.0) > UNIT_NORM_TOLERANCE:
            raise LibraryError(f"embedding of '{owner}' is not unit-normalized", code="not_normalized")
        return vector

    @property
    def embedding_dim(self) -> int:
        return self.manifest.embedding_dim

    @property
    def categories(self) -> dict[str, list[LibraryEntry]]:
        return self.manifest.categories

    def entries(self, categories: Optional[Sequence[str]] = None) -> list[LibraryEntry]:
        names = categories if categories is not None else sorted(self.manifest.categories)
        return [entry for name in names for entry in self.manifest.categories.get(name, [])]

    def entry(self, object_id: str) -> LibraryEntry:
        for entry in self.entries():
            if entry.object_id == object_id:
                return entry
        raise LibraryError(f"no library entry '{object_id}'", code="unknown_entry")

    def category_of(self, object_id: str) -> str:
        for name, entries in self.manifest.categories.items():
            if any(e.object_id == object_id for e in entries):
                return name
        raise LibraryError(f"no library entry '{object_id}'", code="unknown_entry")

    def embedding(self, object_id: str) -> np.ndarray:
        return self._embeddings[object_id]

    @cached_property
    def part_candidates(self) -> list[PartCandidate]:
        candidates = []
        for entry in self.entries():
            for part in entry.parts:
                if part.embedding is None:
                    continue
                candidates.append(PartCandidate(
                    object_id=entry.object_id,
                    part=part.name,
                    mesh_ref=part.mesh_ref,
                    description=part.description,
                    embedding=self._checked(part.embedding, f"{entry.object_id}/{part.name}"),
                ))
        return candidates

    def resolver(self) -> MeshResolver:
        return directory_resolver(self.root, self._cache)

    def path(self, ref: str) -> Path:
        return self.root / ref

    def read_text(self, ref: str) -> str:
        try:
            return self.path(ref).read_text(encoding="utf-8")
        except OSError as exc:
            raise LibraryError(f"cannot read library file '{ref}': {exc}", code="unreadable_file")

    def query_cache(self) -> QueryCache:
        if self.manifest.query_cache is None:
            return QueryCache({})
        return QueryCache.load(self.path(self.manifest.query_cache))


class QueryCache:
    """Precomputed text embeddings keyed by the exact query text."""

    def __init__(self, vectors: dict[str, str]):
        self._vectors = dict(vectors)

    @classmethod
    def load(cls, path: str | Path) -> QueryCache:
        try:
            return cls(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, ValueError) as exc:
            raise LibraryError(f"cannot read query cache {path}: {exc}", code="unreadable_file")

    def __contains__(self, text: str) -> bool:
        return text in self._vectors

    def __call__(self, text: str) -> np.ndarray:
        blob = self._vectors.get(text)
        if blob is None:
            raise LibraryError(f"no cached embedding for query {text!r}", code="uncached_query")
        return decode_embedding(blob)


def top_k_categories(query_embedding: Sequence[float] | np.ndarray, library: AssetLibrary, k: int) -> list[tuple[str, float]]:
    """Categories ranked by their best member's cosine similarity; ties by name."""
    if k < 1:
        raise LibraryError(f"k must be at least 1, got {k}", code="invalid_argument")
    query = np.asarray(query_embedding, dtype=np.float64)
    if query.shape != (library.embedding_dim,):
        raise LibraryError(
            f"query has dimension {query.shape[0] if query.ndim else 0}, library uses {library.embedding_dim}",
            code="dimension_mismatch",
        )
    query = unit(query)
    scored = []
    for name, entries in library.categories.items():
        if not entries:
            continue
        scored.append((name, max(float(library.embedding(e.object_id) @ query) for e in entries)))
    if not scored:
        raise LibraryError("library has no entries", code="empty_library")
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]


def match_parts_by_text(
    parts: Sequence[PartSpec],
    candidates: Sequence[PartCandidate],
    query_embedder: QueryEmbedder,
) -> dict[str, PartMatch]:
    """Each part goes to the library part whose description embedding is closest (cosine)."""
    if not candidates:
        raise LibraryError("no part descriptions to match against", code="empty_library")
    matrix = np.stack([c.embedding for c in candidates])
    matches = {}
    for spec in parts:
        try:
            query = unit(query_embedder(spec.description or spec.name))
        except ArticraftError as exc:
            raise LibraryError(f"embedding part '{spec.name}' failed: {exc.message}", code="embedder_failure")
        if query.shape[0] != matrix.shape[1]:
            raise LibraryError(f"embedding of part '{spec.name}' has the wrong dimension", code="dimension_mismatch")
        scores = matrix @ query
        best = int(np.argmax(scores))
        hit = candidates[best]
        matches[spec.name] = PartMatch(hit.mesh_ref, hit.object_id, hit.part, float(scores[best]))
        logger.debug(f"PART_MATCH part={spec.name} mesh={hit.mesh_ref} similarity={scores[best]:.4f}")
    return matches


def rescale_mesh(mesh: TriMesh, target: Sequence[float]) -> tuple[TriMesh, np.ndarray]:
    """Per-axis scale so the mesh's bounding box extents equal `target`."""
    target = vec3(target)
    if np.any(target <= 0):
        raise GeometryError(f"target dimensions must be positive, got {target.tolist()}", code="invalid_scale")
    extent = aabb_of(mesh).extent
    if np.any(extent <= 1e-12):
        raise GeometryError(f"mesh has zero extent along an axis: {extent.tolist()}", code="zero_extent")
    scale = vec3(target / extent)
    return mesh.scaled(scale), scale


def _judge(batch: list[str], selector: Selector) -> str:
    winner = selector(list(batch))
    if winner not in batch:
        raise LibraryError(f"selector picked {winner!r}, not one of {batch}", code="invalid_selection")
    return winner


def tournament_select(
    candidates: Sequence[str],
    batch: int,
    selector: Selector,
    max_workers: int = 1,
) -> str:
    """Divide-and-conquer selection over batches of at most `batch` candidates.

    Each round judges every full batch. A short trailing batch (fewer than
    `batch` candidates) gets a bye: it advances to the next round unjudged and
    joins that round's batches. Once fewer than `batch` survivors remain, one
    final call decides.
    This takes exactly ceil((n - 1) / (batch - 1)) selector calls.
    """
    if not candidates:
        raise LibraryError("tournament needs at least one candidate", code="invalid_argument")
    if batch < 2:
        raise LibraryError(f"tournament batch must be at least 2, got {batch}", code="invalid_argument")
    survivors = list(candidates)
    round_no = 0
    while len(survivors) > 1:
        round_no += 1
        if len(survivors) < batch:
            survivors = [_judge(survivors, selector)]
            break
        full = len(survivors) // batch
        batches = [survivors[i * batch:(i + 1) * batch] for i in range(full)]
        remainder = survivors[full * batch:]
        if max_workers > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                winners = list(pool.map(lambda b: _judge(b, selector), batches))
        else:
            winners = [_judge(b, selector) for b in batches]
        survivors = winners + remainder
        logger.debug(f"TOURNAMENT_ROUND round={round_no} batches={len(batches)} survivors={len(survivors)}")
    return survivors[0]
