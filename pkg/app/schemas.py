from datetime import datetime
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from .config import MatchingMode
from .library import PartSpec


class CompileRequest(BaseModel):
    source: str = Field(min_length=1, description="ArtLang program text")
    name: str = Field(default="object", min_length=1, max_length=100)


class CompileWarningOut(BaseModel):
    statement_index: int
    message: str


class CompileResponse(BaseModel):
    name: str
    urdf: str
    canonical_source: str
    links: list[str]
    movable_joints: list[str]
    warnings: list[CompileWarningOut] = Field(default_factory=list)


class CompileErrorOut(BaseModel):
    code: str
    message: str
    line: Optional[int] = None
    column: Optional[int] = None


class UrdfValidation(BaseModel):
    valid: bool
    name: Optional[str] = None
    root: Optional[str] = None
    links: list[str] = Field(default_factory=list)
    joints: list[str] = Field(default_factory=list)
    error_code: Optional[str] = None
    error_message: Optional[str] = None


class EvaluationCreate(BaseModel):
    pred_urdf: str = Field(min_length=1)
    gt_urdf: str = Field(min_length=1)
    object_id: Optional[str] = None
    run_id: Optional[str] = None
    matching: MatchingMode = MatchingMode.NAME
    compute_chamfer: bool = True


class EvaluationOut(BaseModel):
    id: int
    object_id: Optional[str] = None
    run_id: Optional[str] = None
    object_link_success: bool
    object_joint_success: bool
    failure_category: Optional[str] = None
    n_joints: int
    n_joints_ok: int
    created_at: datetime

    model_config = ConfigDict(from_attributes=True)


class EvaluationDetail(EvaluationOut):
    report: dict


class CriticAgreementRequest(BaseModel):
    critic_verdicts: list[bool]
    gt_verdicts: list[bool]


class CriticAgreementOut(BaseModel):
    tp: int
    fp: int
    fn: int
    tn: int
    total: int
    accuracy: float


class RenderRequest(BaseModel):
    urdf: str = Field(min_length=1)
    joints: dict[str, float] = Field(default_factory=dict)
    camera: str = "iso"
    segmented: bool = False
    width: int = Field(default=256, ge=1, le=2048)
    height: int = Field(default=256, ge=1, le=2048)


class CategoryOut(BaseModel):
    name: str
    objects: list[str]


class CategorySearch(BaseModel):
    query: str = Field(min_length=1)
    k: int = Field(default=3, ge=1)


class CategoryScore(BaseModel):
    name: str
    similarity: float


class PartSearch(BaseModel):
    parts: list[PartSpec] = Field(min_length=1)


class PartMatchOut(BaseModel):
    part: str
    mesh_ref: str
    object_id: str
    library_part: str
    similarity: float
