from typing import List, Optional

from fastapi import APIRouter, Depends, HTTPException, status
from sqlalchemy.orm import Session

from ..config import settings
from ..database import get_db
from ..deps import get_optional_resolver, http_error
from ..errors import ArticraftError
from ..evaluation import evaluate_documents
from ..logging_config import get_logger
from ..meshes import MeshResolver
from ..models import EvaluationRecord
from ..schemas import CriticAgreementOut, CriticAgreementRequest, EvaluationCreate, EvaluationDetail, EvaluationOut
from ..stats import AggregateStats, aggregate, critic_agreement

router = APIRouter()
logger = get_logger("api.evaluations")


def _detail(record: EvaluationRecord) -> EvaluationDetail:
    return EvaluationDetail(
        **EvaluationOut.model_validate(record).model_dump(),
        report=record.report.model_dump(mode="json"),
    )


@router.post("/", response_model=EvaluationDetail, status_code=status.HTTP_201_CREATED)
def create_evaluation(
    body: EvaluationCreate,
    db: Session = Depends(get_db),
    resolver: Optional[MeshResolver] = Depends(get_optional_resolver),
):
    cfg = settings.eval.model_copy(update={"matching": body.matching, "compute_chamfer": body.compute_chamfer})
    try:
        report = evaluate_documents(body.pred_urdf, body.gt_urdf, cfg, resolver, resolver, body.object_id)
    except ArticraftError as exc:
        raise http_error(exc)
    record = EvaluationRecord.from_report(report, body.run_id)
    db.add(record)
    db.commit()
    db.refresh(record)
    logger.info(f"API_EVALUATION_STORED id={record.id} object={record.object_id} joint_success={record.object_joint_success}")
    return _detail(record)


@router.get("/", response_model=List[EvaluationOut])
def list_evaluations(
    run_id: Optional[str] = None,
    failure_category: Optional[str] = None,
    db: Session = Depends(get_db),
):
    query = db.query(EvaluationRecord)
    if run_id is not None:
        query = query.filter(EvaluationRecord.run_id == run_id)
    if failure_category is not None:
        query = query.filter(EvaluationRecord.failure_category == failure_category)
    return query.order_by(EvaluationRecord.id).all()


@router.get("/summary", response_model=AggregateStats)
def summary(run_id: Optional[str] = None, db: Session = Depends(get_db)):
    query = db.query(EvaluationRecord)
    if run_id is not None:
        query = query.filter(EvaluationRecord.run_id == run_id)
    records = query.order_by(EvaluationRecord.id).all()
    if not records:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="No evaluations stored")
    return aggregate([r.report for r in records])


@router.post("/critic-agreement", response_model=CriticAgreementOut)
def agreement(body: CriticAgreementRequest):
    try:
        matrix = critic_agreement(body.critic_verdicts, body.gt_verdicts)
    except ArticraftError as exc:
        raise http_error(exc)
    return CriticAgreementOut(**matrix.model_dump(), total=matrix.total, accuracy=matrix.accuracy)


@router.get("/{evaluation_id}", response_model=EvaluationDetail)
def get_evaluation(evaluation_id: int, db: Session = Depends(get_db)):
    record = db.query(EvaluationRecord).filter(EvaluationRecord.id == evaluation_id).first()
    if not record:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="Evaluation not found")
    return _detail(record)


@router.delete("/{evaluation_id}", status_code=status.HTTP_204_NO_CONTENT)
def delete_evaluation(evaluation_id: int, db: Session = Depends(get_db)):
    record = db.query(EvaluationRecord).filter(EvaluationRecord.id == evaluation_id).first()
    if not record:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="Evaluation not found")
    db.delete(record)
    db.commit()
    return None
