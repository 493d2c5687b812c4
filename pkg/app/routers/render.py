from typing import Optional

from fastapi import APIRouter, Depends
from fastapi.responses import Response

from ..deps import get_optional_resolver, http_error
from ..errors import ArticraftError
from ..meshes import MeshResolver
from ..render import RenderMode, png_bytes, render
from ..schemas import RenderRequest
from ..urdf import parse_urdf

router = APIRouter()


@router.post("/", response_class=Response, responses={200: {"content": {"image/png": {}}}})
def render_urdf(body: RenderRequest, resolver: Optional[MeshResolver] = Depends(get_optional_resolver)):
    mode = RenderMode.SEGMENTED if body.segmented else RenderMode.SHADED
    try:
        model = parse_urdf(body.urdf)
        image = render(model, body.joints, body.camera, mode, body.width, body.height, resolver)
    except ArticraftError as exc:
        raise http_error(exc)
    return Response(content=png_bytes(image), media_type="image/png")
