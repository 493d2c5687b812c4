from functools import lru_cache
from typing import Optional

from fastapi import Depends, HTTPException, status

from .agents import EndpointEmbedder, FallbackEmbedder
from .config import settings
from .errors import ArticraftError
from .library import AssetLibrary, QueryEmbedder
from .meshes import MeshResolver

NOT_FOUND_CODES = {"unknown_joint", "unknown_camera"}
UPSTREAM_CODES = {"endpoint_failure"}


@lru_cache(maxsize=4)
def _load_library(path: str) -> AssetLibrary:
    return AssetLibrary.load(path)


def get_library() -> AssetLibrary:
    if not settings.library_path:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail="No asset library configured (set LIBRARY_PATH)"
        )
    try:
        return _load_library(settings.library_path)
    except ArticraftError as exc:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail=f"Asset library unavailable: {exc}"
        )


def get_optional_resolver() -> Optional[MeshResolver]:
    """Library mesh resolver when a library is configured; models without meshes still work otherwise."""
    if not settings.library_path:
        return None
    try:
        return _load_library(settings.library_path).resolver()
    except ArticraftError:
        return None


def get_query_embedder(library: AssetLibrary = Depends(get_library)) -> QueryEmbedder:
    return FallbackEmbedder(library.query_cache(), EndpointEmbedder(settings.embedder))


def http_error(exc: ArticraftError) -> HTTPException:
    """400 for bad input, 404 for unknown references, 502 when an upstream endpoint failed."""
    if exc.code in UPSTREAM_CODES:
        code = status.HTTP_502_BAD_GATEWAY
    elif exc.code in NOT_FOUND_CODES:
        code = status.HTTP_404_NOT_FOUND
    else:
        code = status.HTTP_400_BAD_REQUEST
    detail = {"code": exc.code, "message": exc.message}
    if exc.location is not None:
        detail["line"], detail["column"] = exc.location.line, exc.location.column
    return HTTPException(status_code=code, detail=detail)
