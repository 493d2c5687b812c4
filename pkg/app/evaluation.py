"""
Articulated-object evaluation: link pose errors, joint errors, Chamfer mesh
distance and the per-object report.

A joint verdict names the first failing component in the order
type -> axis -> origin -> limit. A failing link fails every joint of the object.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import Mapping, Optional

import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .config import EvalConfig, LinkPoseMode, MatchingMode
from .errors import ArticraftError, EvaluationError, GeometryError
from .geometry import Pose, PointCloud, aabb_of, quat_geodesic
from .kinematics import WorldJoint, forward_kinematics, world_joints
from .logging_config import get_logger
from .meshes import MeshResolver, link_mesh, model_point_clouds
from .urdf import JointKind, UrdfModel, parse_urdf

logger = get_logger("evaluation")

REPORT_SCHEMA_VERSION = 1
CHAMFER_VARIANT = "symmetric_mean_l2_halved"
PARALLEL_EPS = 1e-9


class Verdict(str, Enum):
    SUCCESS = "success"
    FAIL_TYPE = "fail_type"
    FAIL_AXIS = "fail_axis"
    FAIL_ORIGIN = "fail_origin"
    FAIL_LIMIT = "fail_limit"
    FAIL_LINK = "fail_link"


class FailureCategory(str, Enum):
    LINK = "link"
    TYPE = "type"
    AXIS = "axis"
    ORIGIN = "origin"
    LIMIT = "limit"
    INVALID = "invalid"


_VERDICT_CATEGORY = {
    Verdict.FAIL_TYPE: FailureCategory.TYPE,
    Verdict.FAIL_AXIS: FailureCategory.AXIS,
    Verdict.FAIL_ORIGIN: FailureCategory.ORIGIN,
    Verdict.FAIL_LIMIT: FailureCategory.LIMIT,
}


class LinkError(BaseModel):
    pred_link: Optional[str] = None
    position_error: Optional[float] = None
    orientation_error: Optional[float] = None
    success: bool = False


class JointError(BaseModel):
    pred_joint: Optional[str] = None
    kind: JointKind
    pred_kind: Optional[JointKind] = None
    type_error: int = 0
    axis_error: Optional[float] = None
    origin_error: Optional[float] = None
    limit_range_error: Optional[float] = None
    limit_direction_error: Optional[float] = None
    component_verdict: Verdict = Verdict.SUCCESS
    verdict: Verdict = Verdict.SUCCESS


class LossSummary(BaseModel):
    """Auxiliary sums. link_total mixes meters and radians and is not used for success."""

    mesh: Optional[float] = None
    link_total: float = 0.0
    link_mean: float = 0.0
    joint_axis: float = 0.0
    joint_origin: float = 0.0
    joint_limit_range: float = 0.0
    joint_limit_direction: float = 0.0


class EvalReport(BaseModel):
    schema_version: int = REPORT_SCHEMA_VERSION
    object_id: Optional[str] = None
    matching: MatchingMode = MatchingMode.NAME
    link_pose_mode: LinkPoseMode = LinkPoseMode.FRAME
    chamfer_variant: str = CHAMFER_VARIANT
    links: dict[str, LinkError] = Field(default_factory=dict)
    joints: dict[str, JointError] = Field(default_factory=dict)
    chamfer: dict[str, float] = Field(default_factory=dict)
    unmatched_pred_links: list[str] = Field(default_factory=list)
    chamfer_skipped: list[str] = Field(default_factory=list)
    object_link_success: bool = False
    object_joint_success: bool = False
    failure_category: Optional[FailureCategory] = None
    invalid_code: Optional[str] = None
    invalid_message: Optional[str] = None
    loss: LossSummary = Field(default_factory=LossSummary)

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_links_ok(self) -> int:
        return sum(1 for e in self.links.values() if e.success)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_joints_ok(self) -> int:
        return sum(1 for e in self.joints.values() if e.verdict == Verdict.SUCCESS)

    @property
    def is_invalid(self) -> bool:
        return self.failure_category == FailureCategory.INVALID


# ---------------------------------------------------------------- components

def link_error(pred: Pose, gt: Pose, cfg: Optional[EvalConfig] = None) -> LinkError:
    cfg = cfg or EvalConfig()
    e_pos = float(np.linalg.norm(pred.position - gt.position))
    e_orient = quat_geodesic(pred.orientation, gt.orientation)
    ok = e_pos <= cfg.position_threshold and e_orient <= cfg.angular_threshold
    return LinkError(position_error=e_pos, orientation_error=e_orient, success=ok)


def axis_angle_error(a_p: np.ndarray, a_g: np.ndarray) -> float:
    """Angle between two axis lines, ignoring direction: in [0, pi/2]."""
    d = abs(float(np.dot(a_p, a_g)) / (np.linalg.norm(a_p) * np.linalg.norm(a_g)))
    return math.acos(min(1.0, d))


def line_distance(x_p: np.ndarray, a_p: np.ndarray, x_g: np.ndarray, a_g: np.ndarray) -> float:
    """Shortest distance between the lines x_p + s a_p and x_g + t a_g."""
    a_p = a_p / np.linalg.norm(a_p)
    a_g = a_g / np.linalg.norm(a_g)
    offset = x_p - x_g
    cross = np.cross(a_p, a_g)
    norm = float(np.linalg.norm(cross))
    if norm < PARALLEL_EPS:
        return float(np.linalg.norm(np.cross(offset, a_g)))
    return abs(float(np.dot(offset, cross))) / norm


def limit_errors(m_p: np.ndarray, m_g: np.ndarray) -> tuple[float, float]:
    """(range error, direction error) between two motion vectors axis * (upper - lower)."""
    e_range = float(np.linalg.norm(m_p - m_g))
    n_p, n_g = float(np.linalg.norm(m_p)), float(np.linalg.norm(m_g))
    if n_p < 1e-12 and n_g < 1e-12:
        return e_range, 0.0
    if n_p < 1e-12 or n_g < 1e-12:
        return e_range, 2.0
    e_dir = 1.0 - float(np.dot(m_p, m_g)) / (n_p * n_g)
    return e_range, min(2.0, max(0.0, e_dir))


def joint_error(pred: Optional[WorldJoint], gt: WorldJoint, cfg: Optional[EvalConfig] = None) -> JointError:
    """Compare two joints already expressed in the world frame. A missing prediction counts as fixed."""
    cfg = cfg or EvalConfig()
    pred_kind = pred.kind if pred is not None else JointKind.FIXED
    result = JointError(pred_joint=pred.name if pred is not None else None, kind=gt.kind, pred_kind=pred_kind)
    result.type_error = int(pred_kind != gt.kind)

    if pred is not None and pred.kind != JointKind.FIXED and gt.kind != JointKind.FIXED:
        result.axis_error = axis_angle_error(pred.axis, gt.axis)
        if gt.kind == JointKind.REVOLUTE:
            result.origin_error = line_distance(pred.origin, pred.axis, gt.origin, gt.axis)
        else:
            result.origin_error = float(np.linalg.norm(pred.origin - gt.origin))
        result.limit_range_error, result.limit_direction_error = limit_errors(pred.motion_vector, gt.motion_vector)

    if result.type_error:
        verdict = Verdict.FAIL_TYPE
    elif result.axis_error is not None and result.axis_error > cfg.angular_threshold:
        verdict = Verdict.FAIL_AXIS
    elif result.origin_error is not None and result.origin_error > cfg.position_threshold:
        verdict = Verdict.FAIL_ORIGIN
    elif result.limit_range_error is not None and (
        result.limit_range_error > cfg.limit_range_threshold
        or result.limit_direction_error > cfg.limit_direction_threshold
    ):
        verdict = Verdict.FAIL_LIMIT
    else:
        verdict = Verdict.SUCCESS
    result.component_verdict = verdict
    result.verdict = verdict
    return result


def chamfer(a: PointCloud, b: PointCloud) -> float:
    """Symmetric mean nearest-neighbour distance (not squared), halved."""
    if len(a) == 0 or len(b) == 0:
        raise EvaluationError("chamfer distance of an empty point cloud", code="empty_cloud")
    d_ab, _ = cKDTree(b.points).query(a.points, k=1)
    d_ba, _ = cKDTree(a.points).query(b.points, k=1)
    return 0.5 * (float(np.mean(d_ab)) + float(np.mean(d_ba)))


# ---------------------------------------------------------------- matching

def match_links_by_name(pred: UrdfModel, gt: UrdfModel) -> dict[str, str]:
    gt_names = set(gt.link_names)
    return {name: name for name in pred.link_names if name in gt_names}


def match_links_by_chamfer(
    pred: UrdfModel,
    gt: UrdfModel,
    n_samples: int = 512,
    seed: int = 0,
    pred_resolver: Optional[MeshResolver] = None,
    gt_resolver: Optional[MeshResolver] = None,
) -> dict[str, str]:
    """Minimal-total-Chamfer assignment of predicted links to ground-truth links (rest pose)."""
    pred_clouds = model_point_clouds(pred, None, n_samples, seed, pred_resolver, skip_unresolvable=True)
    gt_clouds = model_point_clouds(gt, None, n_samples, seed, gt_resolver, skip_unresolvable=True)
    pred_names, gt_names = pred.link_names, gt.link_names
    big = 1e6
    cost = np.full((len(pred_names), len(gt_names)), big)
    for i, p in enumerate(pred_names):
        for j, g in enumerate(gt_names):
            if p in pred_clouds and g in gt_clouds:
                cost[i, j] = chamfer(pred_clouds[p], gt_clouds[g])
            elif p not in pred_clouds and g not in gt_clouds:
                # geometry-less links can only pair by name
                cost[i, j] = 0.0 if p == g else big
    rows, cols = linear_sum_assignment(cost)
    return {pred_names[i]: gt_names[j] for i, j in zip(rows, cols) if cost[i, j] < big}


def _check_matching(matching: Mapping[str, str], pred: UrdfModel, gt: UrdfModel) -> None:
    pred_names, gt_names = set(pred.link_names), set(gt.link_names)
    for p, g in matching.items():
        if p not in pred_names or g not in gt_names:
            raise EvaluationError(f"matching pairs unknown links {p!r} -> {g!r}", code="invalid_matching")
    if len(set(matching.values())) != len(matching):
        raise EvaluationError("link matching is not injective", code="invalid_matching")


# ---------------------------------------------------------------- reports

def _link_poses(
    model: UrdfModel, mode: LinkPoseMode, resolver: Optional[MeshResolver]
) -> dict[str, Pose]:
    poses = forward_kinematics(model)
    if mode == LinkPoseMode.FRAME:
        return poses
    centered = {}
    for link in model.links:
        pose = poses[link.name]
        try:
            mesh = link_mesh(link, resolver)
        except ArticraftError:
            mesh = None
        if mesh is not None:
            pose = Pose(aabb_of(mesh, pose).center, pose.orientation)
        centered[link.name] = pose
    return centered


def _failure_category(report: EvalReport) -> Optional[FailureCategory]:
    if not report.object_link_success:
        return FailureCategory.LINK
    for error in report.joints.values():
        if error.verdict != Verdict.SUCCESS:
            return _VERDICT_CATEGORY[error.verdict]
    return None


def _loss_summary(report: EvalReport) -> LossSummary:
    link_terms = [
        e.position_error + e.orientation_error
        for e in report.links.values()
        if e.position_error is not None
    ]
    joints = list(report.joints.values())
    return LossSummary(
        mesh=sum(report.chamfer.values()) if report.chamfer else None,
        link_total=float(sum(link_terms)),
        link_mean=float(np.mean(link_terms)) if link_terms else 0.0,
        joint_axis=float(sum(j.axis_error or 0.0 for j in joints)),
        joint_origin=float(sum(j.origin_error or 0.0 for j in joints)),
        joint_limit_range=float(sum(j.limit_range_error or 0.0 for j in joints)),
        joint_limit_direction=float(sum(j.limit_direction_error or 0.0 for j in joints)),
    )


def _has_geometry(model: UrdfModel, link_name: str) -> bool:
    link = model.link(link_name)
    return link.mesh_ref is not None or (link.mesh is not None and not link.mesh.is_empty)


def evaluate(
    pred: UrdfModel,
    gt: UrdfModel,
    link_matching: Optional[Mapping[str, str]] = None,
    cfg: Optional[EvalConfig] = None,
    pred_resolver: Optional[MeshResolver] = None,
    gt_resolver: Optional[MeshResolver] = None,
    object_id: Optional[str] = None,
) -> EvalReport:
    """Full report for one predicted object against its ground truth (both at zero joint values)."""
    cfg = cfg or EvalConfig()
    if link_matching is None:
        if cfg.matching == MatchingMode.CHAMFER:
            link_matching = match_links_by_chamfer(pred, gt, min(cfg.chamfer_samples, 512), cfg.seed, pred_resolver, gt_resolver)
        else:
            link_matching = match_links_by_name(pred, gt)
    _check_matching(link_matching, pred, gt)
    gt_to_pred = {g: p for p, g in link_matching.items()}

    report = EvalReport(object_id=object_id or gt.name, matching=cfg.matching, link_pose_mode=cfg.link_pose_mode)
    report.unmatched_pred_links = [name for name in pred.link_names if name not in link_matching]

    pred_poses = _link_poses(pred, cfg.link_pose_mode, pred_resolver)
    gt_poses = _link_poses(gt, cfg.link_pose_mode, gt_resolver)
    for name in gt.link_names:
        pred_name = gt_to_pred.get(name)
        if pred_name is None:
            report.links[name] = LinkError()
            continue
        error = link_error(pred_poses[pred_name], gt_poses[name], cfg)
        error.pred_link = pred_name
        report.links[name] = error
    report.object_link_success = all(e.success for e in report.links.values())

    pred_frames = world_joints(pred)
    gt_frames = world_joints(gt)
    for joint in gt.joints:
        if not joint.is_movable and not cfg.include_fixed_joints:
            continue
        pred_child = gt_to_pred.get(joint.child)
        pred_joint = pred.joint_for_child(pred_child) if pred_child is not None else None
        pred_frame = pred_frames[pred_joint.name] if pred_joint is not None else None
        error = joint_error(pred_frame, gt_frames[joint.name], cfg)
        if not report.object_link_success:
            error.verdict = Verdict.FAIL_LINK
        report.joints[joint.name] = error
    report.object_joint_success = all(e.verdict == Verdict.SUCCESS for e in report.joints.values())

    if cfg.compute_chamfer:
        pred_clouds = model_point_clouds(pred, None, cfg.chamfer_samples, cfg.seed, pred_resolver, skip_unresolvable=True)
        gt_clouds = model_point_clouds(gt, None, cfg.chamfer_samples, cfg.seed, gt_resolver, skip_unresolvable=True)
        for name in gt.link_names:
            pred_name = gt_to_pred.get(name)
            if pred_name in pred_clouds and name in gt_clouds:
                report.chamfer[name] = chamfer(pred_clouds[pred_name], gt_clouds[name])
            elif _has_geometry(gt, name) or (pred_name is not None and _has_geometry(pred, pred_name)):
                report.chamfer_skipped.append(name)

    report.failure_category = _failure_category(report)
    report.loss = _loss_summary(report)
    logger.info(
        f"EVAL_DONE object={report.object_id} links_ok={report.n_links_ok}/{report.n_links} "
        f"joints_ok={report.n_joints_ok}/{report.n_joints} failure={report.failure_category.value if report.failure_category else 'none'}"
    )
    return report


def invalid_report(gt: Optional[UrdfModel], error: ArticraftError, object_id: Optional[str] = None) -> EvalReport:
    """A prediction that never produced a valid model: every link and joint fails."""
    report = EvalReport(object_id=object_id or (gt.name if gt else None))
    if gt is not None:
        report.links = {name: LinkError() for name in gt.link_names}
        report.joints = {
            j.name: JointError(kind=j.kind, type_error=1, component_verdict=Verdict.FAIL_TYPE, verdict=Verdict.FAIL_TYPE)
            for j in gt.movable_joints
        }
    report.failure_category = FailureCategory.INVALID
    report.invalid_code = error.code
    report.invalid_message = error.message
    logger.info(f"EVAL_INVALID object={report.object_id} code={error.code}")
    return report


def evaluate_documents(
    pred_text: str,
    gt_text: str,
    cfg: Optional[EvalConfig] = None,
    pred_resolver: Optional[MeshResolver] = None,
    gt_resolver: Optional[MeshResolver] = None,
    object_id: Optional[str] = None,
) -> EvalReport:
    """Evaluate URDF documents; a prediction that fails to parse or validate is reported as invalid."""
    gt = parse_urdf(gt_text)
    try:
        pred = parse_urdf(pred_text)
    except ArticraftError as exc:
        return invalid_report(gt, exc, object_id)
    try:
        return evaluate(pred, gt, cfg=cfg, pred_resolver=pred_resolver, gt_resolver=gt_resolver, object_id=object_id)
    except GeometryError as exc:
        return invalid_report(gt, exc, object_id)
