"""
Corpus-level statistics over evaluation reports.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np
from pydantic import BaseModel, Field

from .errors import EvaluationError
from .evaluation import EvalReport, FailureCategory, Verdict
from .logging_config import get_logger

logger = get_logger("stats")

Z_95 = 1.96


class Rate(BaseModel):
    successes: int
    total: int
    rate: float
    ci_half_width: float

    def __str__(self) -> str:
        return f"{100 * self.rate:.2f}% ± {100 * self.ci_half_width:.2f}% ({self.successes}/{self.total})"


class MeanSd(BaseModel):
    mean: Optional[float] = None
    sd: Optional[float] = None
    count: int = 0


class AggregateStats(BaseModel):
    n_objects: int
    link_success: Rate
    joint_success: Rate
    object_joint_success: Rate
    joint_type_error: Rate
    failure_counts: dict[FailureCategory, int] = Field(default_factory=dict)
    failure_percentages: dict[FailureCategory, float] = Field(default_factory=dict)
    position_error: MeanSd = Field(default_factory=MeanSd)
    orientation_error: MeanSd = Field(default_factory=MeanSd)
    axis_error: MeanSd = Field(default_factory=MeanSd)
    origin_error: MeanSd = Field(default_factory=MeanSd)
    limit_range_error: MeanSd = Field(default_factory=MeanSd)
    limit_direction_error: MeanSd = Field(default_factory=MeanSd)
    chamfer: MeanSd = Field(default_factory=MeanSd)


class ConfusionMatrix(BaseModel):
    """Rows: critic says success / failure; positives are successes."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0


def wald_interval(successes: int, total: int) -> Rate:
    """Binomial proportion with a 95% Wald half-width 1.96 * sqrt(p (1 - p) / n)."""
    if total == 0:
        return Rate(successes=0, total=0, rate=0.0, ci_half_width=0.0)
    p = successes / total
    return Rate(successes=successes, total=total, rate=p, ci_half_width=Z_95 * math.sqrt(p * (1.0 - p) / total))


def mean_sd(values: Iterable[Optional[float]]) -> MeanSd:
    data = [v for v in values if v is not None]
    if not data:
        return MeanSd()
    arr = np.asarray(data, dtype=np.float64)
    return MeanSd(mean=float(arr.mean()), sd=float(arr.std()), count=len(data))


def aggregate(reports: Sequence[EvalReport]) -> AggregateStats:
    if not reports:
        raise EvaluationError("cannot aggregate zero reports", code="empty_input")

    links = [e for r in reports for e in r.links.values()]
    joints = [e for r in reports for e in r.joints.values()]
    typed = [e for r in reports if not r.is_invalid for e in r.joints.values()]

    counts: dict[FailureCategory, int] = {}
    for report in reports:
        if report.failure_category is not None:
            counts[report.failure_category] = counts.get(report.failure_category, 0) + 1
    n = len(reports)

    return AggregateStats(
        n_objects=n,
        link_success=wald_interval(sum(r.object_link_success for r in reports), n),
        joint_success=wald_interval(sum(e.verdict == Verdict.SUCCESS for e in joints), len(joints)),
        object_joint_success=wald_interval(sum(r.object_joint_success for r in reports), n),
        joint_type_error=wald_interval(sum(e.type_error for e in typed), len(typed)),
        failure_counts=counts,
        failure_percentages={cat: 100.0 * c / n for cat, c in counts.items()},
        position_error=mean_sd(e.position_error for e in links),
        orientation_error=mean_sd(e.orientation_error for e in links),
        axis_error=mean_sd(e.axis_error for e in typed),
        origin_error=mean_sd(e.origin_error for e in typed),
        limit_range_error=mean_sd(e.limit_range_error for e in typed),
        limit_direction_error=mean_sd(e.limit_direction_error for e in typed),
        chamfer=mean_sd(v for r in reports for v in r.chamfer.values()),
    )


def critic_agreement(critic_verdicts: Sequence[bool], gt_verdicts: Sequence[bool]) -> ConfusionMatrix:
    if len(critic_verdicts) != len(gt_verdicts):
        raise EvaluationError(
            f"{len(critic_verdicts)} critic verdicts vs {len(gt_verdicts)} ground-truth verdicts",
            code="length_mismatch",
        )
    tp = fp = fn = tn = 0
    for critic, truth in zip(critic_verdicts, gt_verdicts):
        if critic and truth:
            tp += 1
        elif critic:
            fp += 1
        elif truth:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


def improvement_curve(rating_histories: Sequence[Sequence[int]], threshold: int = 5) -> list[dict]:
    """Per iteration: mean best-so-far rating and share of runs whose critic has approved.

    Runs that stopped early carry their last best rating forward.
    """
    if not rating_histories:
        return []
    depth = max((len(h) for h in rating_histories), default=0)
    curve = []
    for i in range(depth):
        best, approved = [], 0
        for history in rating_histories:
            if not history:
                continue
            seen = history[: i + 1]
            top = max(seen)
            best.append(top)
            approved += top > threshold
        curve.append({
            "iteration": i + 1,
            "mean_best_rating": float(np.mean(best)) if best else 0.0,
            "approved_rate": approved / len(best) if best else 0.0,
        })
    return curve


JOINT_CSV_COLUMNS = [
    "object_id", "joint", "kind", "pred_kind", "verdict", "component_verdict",
    "type_error", "axis_error", "origin_error", "limit_range_error", "limit_direction_error",
]


def _cell(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.9g}"


def write_joint_csv(reports: Sequence[EvalReport], fh: TextIO) -> None:
    """One row per ground-truth joint across all reports."""
    writer = csv.DictWriter(fh, fieldnames=JOINT_CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for report in reports:
        for name, error in report.joints.items():
            writer.writerow({
                "object_id": report.object_id,
                "joint": name,
                "kind": error.kind.value,
                "pred_kind": error.pred_kind.value if error.pred_kind else "",
                "verdict": error.verdict.value,
                "component_verdict": error.component_verdict.value,
                "type_error": error.type_error,
                "axis_error": _cell(error.axis_error),
                "origin_error": _cell(error.origin_error),
                "limit_range_error": _cell(error.limit_range_error),
                "limit_direction_error": _cell(error.limit_direction_error),
            })


def export_joint_csv(reports: Sequence[EvalReport], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        write_joint_csv(reports, fh)
    return path


def load_reports(directory: str | Path) -> list[EvalReport]:
    """Every eval_report.json below a results directory, in path order."""
    reports = []
    for path in sorted(Path(directory).rglob("eval_report.json")):
        try:
            reports.append(EvalReport.model_validate(json.loads(path.read_text(encoding="utf-8"))))
        except (ValueError, OSError) as exc:
            logger.warning(f"REPORT_SKIP path={path} reason={exc}")
    return reports


def format_summary(stats: AggregateStats) -> str:
    lines = [
        f"objects: {stats.n_objects}",
        f"link success: {stats.link_success}",
        f"joint success: {stats.joint_success}",
        f"object joint success: {stats.object_joint_success}",
        f"joint type error: {stats.joint_type_error}",
    ]
    for label, value in (
        ("axis error (rad)", stats.axis_error),
        ("origin error (m)", stats.origin_error),
        ("chamfer (m)", stats.chamfer),
    ):
        if value.count:
            lines.append(f"{label}: {value.mean:.4f} ± {value.sd:.4f} (n={value.count})")
    if stats.failure_percentages:
        lines.append("failures:")
        for category, pct in sorted(stats.failure_percentages.items(), key=lambda kv: kv[0].value):
            lines.append(f"  {category.value}: {pct:.1f}%")
    return "\n".join(lines)


def format_report(report: EvalReport) -> str:
    """Human-readable view of one report."""
    category = report.failure_category.value if report.failure_category else "none"
    lines = [
        f"object: {report.object_id}",
        f"links ok: {report.n_links_ok}/{report.n_links}",
        f"joints ok: {report.n_joints_ok}/{report.n_joints}",
        f"failure: {category}",
    ]
    if report.is_invalid:
        lines.append(f"invalid: [{report.invalid_code}] {report.invalid_message}")
    for name, link in report.links.items():
        if link.position_error is None:
            lines.append(f"  link {name}: unmatched")
        else:
            lines.append(f"  link {name}: pos {link.position_error:.4f} m, rot {link.orientation_error:.4f} rad, {'ok' if link.success else 'fail'}")
    for name, joint in report.joints.items():
        parts = [f"  joint {name} ({joint.kind.value}): {joint.verdict.value}"]
        for label, value in (("axis", joint.axis_error), ("origin", joint.origin_error), ("range", joint.limit_range_error), ("dir", joint.limit_direction_error)):
            if value is not None:
                parts.append(f"{label} {value:.4f}")
        lines.append(", ".join(parts))
    if report.chamfer:
        lines.append(f"chamfer total: {sum(report.chamfer.values()):.5f}")
    return "\n".join(lines)
