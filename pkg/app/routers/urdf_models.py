from typing import Optional

from fastapi import APIRouter, Depends, File, HTTPException, UploadFile, status

from ..artlang import format_program, parse_artlang
from ..compiler import compile_program
from ..deps import get_library, http_error
from ..errors import ArticraftError
from ..library import AssetLibrary
from ..logging_config import get_logger
from ..schemas import CompileRequest, CompileResponse, CompileWarningOut, UrdfValidation
from ..urdf import emit_urdf, parse_urdf

router = APIRouter()
logger = get_logger("api.models")

MAX_URDF_SIZE = 2 * 1024 * 1024


@router.post("/compile", response_model=CompileResponse)
def compile_source(body: CompileRequest, library: AssetLibrary = Depends(get_library)):
    """Compile ArtLang source; mesh references resolve against the configured library."""
    try:
        program = parse_artlang(body.source)
        model, diagnostics = compile_program(program, library.resolver(), body.name)
    except ArticraftError as exc:
        logger.info(f"API_COMPILE_FAILED code={exc.code}")
        raise http_error(exc)
    return CompileResponse(
        name=model.name,
        urdf=emit_urdf(model),
        canonical_source=format_program(program),
        links=model.link_names,
        movable_joints=[j.name for j in model.movable_joints],
        warnings=[CompileWarningOut(statement_index=w.statement_index, message=w.message) for w in diagnostics.warnings],
    )


def _validate(text: str) -> UrdfValidation:
    try:
        model = parse_urdf(text)
    except ArticraftError as exc:
        return UrdfValidation(valid=False, error_code=exc.code, error_message=exc.message)
    return UrdfValidation(
        valid=True,
        name=model.name,
        root=model.root,
        links=model.link_names,
        joints=[j.name for j in model.joints],
    )


@router.post("/validate", response_model=UrdfValidation)
def validate_upload(file: UploadFile = File(...)):
    """Validate an uploaded URDF document. Invalid documents are reported, not rejected."""
    data = file.file.read()
    if len(data) > MAX_URDF_SIZE:
        raise HTTPException(
            status_code=status.HTTP_413_REQUEST_ENTITY_TOO_LARGE,
            detail="File too large. Maximum size is 2MB."
        )
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail="URDF must be UTF-8 text.")
    result = _validate(text)
    logger.info(f"API_URDF_VALIDATED valid={result.valid} code={result.error_code or 'none'}")
    return result
