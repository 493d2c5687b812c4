from datetime import datetime, timezone

from sqlalchemy import Boolean, Column, DateTime, Integer, String, Text

from .database import Base
from .evaluation import EvalReport


class EvaluationRecord(Base):
    __tablename__ = "evaluations"

    id = Column(Integer, primary_key=True, index=True)
    object_id = Column(String, index=True, nullable=True)
    run_id = Column(String, index=True, nullable=True)
    object_link_success = Column(Boolean, default=False)
    object_joint_success = Column(Boolean, default=False)
    failure_category = Column(String, nullable=True)
    n_joints = Column(Integer, default=0)
    n_joints_ok = Column(Integer, default=0)
    report_json = Column(Text)
    created_at = Column(DateTime(timezone=True), default=lambda: datetime.now(timezone.utc))

    @classmethod
    def from_report(cls, report: EvalReport, run_id: str | None = None) -> "EvaluationRecord":
        return cls(
            object_id=report.object_id,
            run_id=run_id,
            object_link_success=report.object_link_success,
            object_joint_success=report.object_joint_success,
            failure_category=report.failure_category.value if report.failure_category else None,
            n_joints=report.n_joints,
            n_joints_ok=report.n_joints_ok,
            report_json=report.model_dump_json(),
        )

    @property
    def report(self) -> EvalReport:
        return EvalReport.model_validate_json(self.report_json)


class PipelineRunRecord(Base):
    __tablename__ = "pipeline_runs"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(String, index=True)
    modality = Column(String)
    input = Column(Text)
    status = Column(String)
    failed_stage = Column(String, nullable=True)
    error_code = Column(String, nullable=True)
    bundle_path = Column(String)
    created_at = Column(DateTime(timezone=True), default=lambda: datetime.now(timezone.utc))
