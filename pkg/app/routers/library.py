from typing import List

from fastapi import APIRouter, Depends

from ..deps import get_library, get_query_embedder, http_error
from ..errors import ArticraftError
from ..library import AssetLibrary, QueryEmbedder, match_parts_by_text, top_k_categories
from ..schemas import CategoryOut, CategoryScore, CategorySearch, PartMatchOut, PartSearch

router = APIRouter()


@router.get("/categories", response_model=List[CategoryOut])
def list_categories(library: AssetLibrary = Depends(get_library)):
    return [
        CategoryOut(name=name, objects=[e.object_id for e in entries])
        for name, entries in sorted(library.categories.items())
    ]


@router.post("/categories/search", response_model=List[CategoryScore])
def search_categories(
    body: CategorySearch,
    library: AssetLibrary = Depends(get_library),
    embedder: QueryEmbedder = Depends(get_query_embedder),
):
    try:
        ranked = top_k_categories(embedder(body.query), library, body.k)
    except ArticraftError as exc:
        raise http_error(exc)
    return [CategoryScore(name=name, similarity=sim) for name, sim in ranked]


@router.post("/parts/match", response_model=List[PartMatchOut])
def match_parts(
    body: PartSearch,
    library: AssetLibrary = Depends(get_library),
    embedder: QueryEmbedder = Depends(get_query_embedder),
):
    try:
        matches = match_parts_by_text(body.parts, library.part_candidates, embedder)
    except ArticraftError as exc:
        raise http_error(exc)
    return [
        PartMatchOut(part=spec.name, mesh_ref=matches[spec.name].mesh_ref, object_id=matches[spec.name].object_id,
                     library_part=matches[spec.name].part, similarity=matches[spec.name].similarity)
        for spec in body.parts
    ]
