from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class SourceLocation:
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


class ArticraftError(Exception):
    """Base error. `code` is stable and used by the CLI, the HTTP layer and reports."""

    code: str = "error"

    def __init__(self, message: str, code: Optional[str] = None, location: Optional[SourceLocation] = None):
        super().__init__(message)
        self.message = message
        if code is not None:
            self.code = code
        self.location = location

    def __str__(self) -> str:
        if self.location is not None:
            return f"[{self.code}] {self.location}: {self.message}"
        return f"[{self.code}] {self.message}"


class GeometryError(ArticraftError):
    code = "geometry_error"


class KinematicsError(ArticraftError):
    code = "kinematics_error"


class UrdfError(ArticraftError):
    code = "urdf_error"


class ObjError(ArticraftError):
    code = "obj_error"


class ArtLangError(ArticraftError):
    code = "artlang_error"


class PlacementError(ArticraftError):
    code = "placement_failed"


class CompileError(ArticraftError):
    code = "compile_error"


class EvaluationError(ArticraftError):
    code = "evaluation_error"


class LibraryError(ArticraftError):
    code = "library_error"


class AgentError(ArticraftError):
    code = "endpoint_failure"

    def __init__(self, message: str, code: Optional[str] = None, raw_text: Optional[str] = None):
        super().__init__(message, code=code)
        self.raw_text = raw_text


class RenderError(ArticraftError):
    code = "render_error"


class PipelineError(ArticraftError):
    code = "pipeline_error"
