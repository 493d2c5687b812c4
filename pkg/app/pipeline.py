"""
End-to-end run: intake -> retrieval -> link loop -> (affordance) -> joint loop
-> bundle (-> evaluation when a ground truth is given).

A failing stage is recorded in the bundle manifest with its error code; the
stages that completed still land in the bundle.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, Field

from .agents import Agent, EndpointEmbedder, FallbackEmbedder, HttpAgent, RecordingAgent, ReplayAgent, ask, extract_json
from .artlang import ArtProgram, PartDecl, format_program
from .config import Modality, Settings
from .errors import ArticraftError, LibraryError, PipelineError
from .evaluation import EvalReport, evaluate
from .library import AssetLibrary, match_parts_by_text, rescale_mesh, top_k_categories, tournament_select
from .logging_config import get_logger
from .loops import (
    LoopContext, LoopLog, detect_object, extract_target_affordance, load_frames,
    run_joint_loop, run_link_loop, specify_task,
)
from .meshes import directory_resolver, load_model, write_model_dir
from .prompts import PromptBook
from .render import RenderMode, render
from .urdf import UrdfModel

logger = get_logger("pipeline")

BUNDLE_SCHEMA_VERSION = 1
STAGES = ("intake", "retrieval", "link_loop", "affordance", "joint_loop", "emit", "evaluation")


@dataclass
class AgentSet:
    actor: Agent
    critic: Optional[Agent] = None
    planner: Optional[Agent] = None
    selector: Optional[Agent] = None
    embedder: Optional[Callable[[str], np.ndarray]] = None

    @property
    def planning_agent(self) -> Agent:
        return self.planner or self.actor

    @property
    def selecting_agent(self) -> Agent:
        return self.selector or self.critic or self.actor


class StageRecord(BaseModel):
    name: str
    status: str = "skipped"
    error_code: Optional[str] = None
    error_message: Optional[str] = None


class BundleManifest(BaseModel):
    schema_version: int = BUNDLE_SCHEMA_VERSION
    run_id: str
    modality: Modality
    input: str
    status: str = "running"
    target_link: Optional[str] = None
    stages: list[StageRecord] = Field(default_factory=list)
    files: list[str] = Field(default_factory=list)

    def stage(self, name: str) -> StageRecord:
        return next(s for s in self.stages if s.name == name)

    @property
    def succeeded(self) -> bool:
        return self.status == "succeeded"


class RetrievalLog(BaseModel):
    description: str = ""
    categories: list[tuple[str, float]] = Field(default_factory=list)
    candidates: list[str] = Field(default_factory=list)
    selected: Optional[str] = None
    part_matches: dict[str, dict] = Field(default_factory=dict)


def build_agents(settings: Settings, record_dir: Optional[Path] = None, replay: Optional[Path] = None, library: Optional[AssetLibrary] = None) -> AgentSet:
    """Live HTTP agents from settings, optionally recorded, or one replayed transcript for every role."""
    cached = library.query_cache() if library is not None else None
    if replay is not None:
        agent = ReplayAgent(replay)
        return AgentSet(actor=agent, critic=agent, embedder=cached)
    live_embedder = EndpointEmbedder(settings.embedder)
    embedder = FallbackEmbedder(cached, live_embedder) if cached is not None else live_embedder
    actor: Agent = HttpAgent(settings.actor)
    critic: Agent = HttpAgent(settings.critic)
    if record_dir is not None:
        actor = RecordingAgent(actor, Path(record_dir) / "transcript.jsonl")
        critic = RecordingAgent(critic, Path(record_dir) / "transcript.jsonl")
    return AgentSet(actor=actor, critic=critic, embedder=embedder)


def _identifier(name: str, taken: set[str]) -> str:
    ident = re.sub(r"\W+", "_", name.strip().lower()).strip("_") or "part"
    if ident[0].isdigit():
        ident = f"part_{ident}"
    base, n = ident, 2
    while ident in taken:
        ident, n = f"{base}_{n}", n + 1
    taken.add(ident)
    return ident


def retrieve_from_text(prompt: str, library: AssetLibrary, agents: AgentSet, prompts: PromptBook, log: RetrievalLog) -> tuple[str, ArtProgram]:
    """Plan parts from text, match each to a library mesh and rescale it to the planned size."""
    if agents.embedder is None:
        raise PipelineError("text retrieval needs an embedder", code="invalid_input")
    description, parts = specify_task(prompt, agents.planning_agent, prompts)
    log.description = description
    matches = match_parts_by_text(parts, library.part_candidates, agents.embedder)
    resolve = library.resolver()
    decls, taken = [], set()
    for spec in parts:
        match = matches[spec.name]
        _, scale = rescale_mesh(resolve(match.mesh_ref), spec.dimensions)
        decls.append(PartDecl(_identifier(spec.name, taken), match.mesh_ref, tuple(float(s) for s in scale)))
        log.part_matches[spec.name] = {"mesh_ref": match.mesh_ref, "object_id": match.object_id, "similarity": match.similarity}
    return description, ArtProgram(tuple(decls))


def retrieve_from_frames(
    frames: list[bytes], library: AssetLibrary, agents: AgentSet, prompts: PromptBook, settings: Settings, log: RetrievalLog
) -> tuple[str, ArtProgram]:
    """Detect the object, narrow to the closest categories, then let the selector pick one entry."""
    if agents.embedder is None:
        raise PipelineError("image retrieval needs an embedder", code="invalid_input")
    description = detect_object(frames[0], agents.planning_agent, prompts)
    log.description = description
    log.categories = top_k_categories(agents.embedder(description), library, settings.retrieval.top_k_categories)
    candidates = [e.object_id for e in library.entries([name for name, _ in log.categories])]
    log.candidates = candidates

    def thumbnail(object_id: str) -> list[bytes]:
        entry = library.entry(object_id)
        if not entry.images:
            return []
        try:
            return [library.path(entry.images[0]).read_bytes()]
        except OSError as exc:
            raise LibraryError(f"thumbnail of '{object_id}' cannot be read: {exc}", code="missing_asset")

    def select(batch: list[str]) -> str:
        images = [frames[0]] + [img for object_id in batch for img in thumbnail(object_id)]
        request = prompts.build("object_selector", images=images, candidates=", ".join(batch))

        def parse_choice(text: str) -> str:
            choice = str(extract_json(text)["choice"]).strip()
            if choice not in batch:
                raise ValueError(f"'{choice}' is not one of {', '.join(batch)}")
            return choice

        return ask(agents.selecting_agent, request, parse_choice).payload

    winner = tournament_select(candidates, settings.retrieval.max_num_images, select, settings.retrieval.max_parallel_selectors)
    log.selected = winner
    entry = library.entry(winner)
    taken: set[str] = set()
    decls = tuple(PartDecl(_identifier(p.name, taken), p.mesh_ref) for p in entry.parts)
    if not decls:
        raise LibraryError(f"library entry '{winner}' has no parts", code="empty_entry")
    return description, ArtProgram(decls)


def _write_json(path: Path, payload: BaseModel) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(payload.model_dump_json(indent=2) + "\n", encoding="utf-8")


def run_pipeline(
    input_ref: str,
    modality: Modality,
    library: AssetLibrary,
    agents: AgentSet,
    settings: Settings,
    out_dir: str | Path,
    gt_urdf: Optional[str | Path] = None,
    target_affordance: bool = False,
    run_id: Optional[str] = None,
) -> BundleManifest:
    """Run every stage for one input and write its bundle to `out_dir`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run_id = run_id or hashlib.sha256(f"{modality.value}:{input_ref}".encode("utf-8")).hexdigest()[:12]
    manifest = BundleManifest(run_id=run_id, modality=modality, input=input_ref, stages=[StageRecord(name=s) for s in STAGES])
    prompts = PromptBook(examples_dir=settings.loop.examples_dir, max_examples=settings.loop.max_in_context_examples)
    ctx = LoopContext(
        resolve_mesh=library.resolver(), prompts=prompts, loop=settings.loop.model_copy(update={"modality": modality}),
        render=settings.render, render_dir=out / "renders", model_name=run_id,
    )
    retrieval_log = RetrievalLog()
    frames: list[bytes] = []
    task = ""
    program: Optional[ArtProgram] = None
    model: Optional[UrdfModel] = None
    logs: dict[str, LoopLog] = {}
    logger.info(f"PIPELINE_START run={run_id} modality={modality.value} input={input_ref}")

    def stage(name: str, fn: Callable[[], None]) -> bool:
        record = manifest.stage(name)
        try:
            fn()
        except ArticraftError as exc:
            record.status, record.error_code, record.error_message = "failed", exc.code, exc.message
            logger.error(f"PIPELINE_STAGE_FAILED run={run_id} stage={name} code={exc.code} message={exc.message!r}")
            return False
        record.status = "ok"
        return True

    def intake() -> None:
        nonlocal frames, task
        if modality == Modality.TEXT:
            path = Path(input_ref)
            task = path.read_text(encoding="utf-8").strip() if path.is_file() else input_ref.strip()
            if not task:
                raise PipelineError("empty text prompt", code="invalid_input")
        else:
            if not Path(input_ref).exists():
                raise PipelineError(f"input {input_ref} does not exist", code="invalid_input")
            frames = load_frames(input_ref)
            if modality == Modality.IMAGE:
                frames = frames[:1]

    def retrieval() -> None:
        nonlocal task, program
        if modality == Modality.TEXT:
            task, program = retrieve_from_text(task, library, agents, prompts, retrieval_log)
        else:
            task, program = retrieve_from_frames(frames, library, agents, prompts, settings, retrieval_log)

    def link_loop() -> None:
        nonlocal program, model
        critic = agents.critic if modality != Modality.TEXT else None
        result = run_link_loop(task, frames, program, agents.actor, critic, ctx)
        program, model, logs["link_loop"] = result.program, result.model, result.log

    def affordance() -> None:
        manifest.target_link = extract_target_affordance(frames, model, agents.selecting_agent, ctx)

    def joint_loop() -> None:
        nonlocal program, model
        critic = agents.critic if modality == Modality.VIDEO else None
        result = run_joint_loop(task, frames, program, agents.actor, critic, ctx, manifest.target_link)
        program, model, logs["joint_loop"] = result.program, result.model, result.log

    ok = stage("intake", intake) and stage("retrieval", retrieval) and stage("link_loop", link_loop)
    if ok and target_affordance and frames:
        ok = stage("affordance", affordance)
    if ok:
        ok = stage("joint_loop", joint_loop)

    def emit() -> None:
        _write_json(out / "logs" / "retrieval.json", retrieval_log)
        for name, log in logs.items():
            _write_json(out / "logs" / f"{name}.json", log)
        if program is not None:
            (out / "program.art").write_text(format_program(program), encoding="utf-8")
        if model is not None:
            write_model_dir(model, out)
            image = render(model, None, settings.render.camera, RenderMode.SHADED, settings.render.width, settings.render.height, ctx.resolve_mesh)
            (out / "renders").mkdir(parents=True, exist_ok=True)
            image.save(out / "renders" / "final.png", format="PNG")

    emitted = stage("emit", emit)

    if ok and emitted and gt_urdf is not None:
        def evaluation() -> None:
            report = evaluate(
                model, load_model(gt_urdf), cfg=settings.eval, pred_resolver=ctx.resolve_mesh,
                gt_resolver=directory_resolver(Path(gt_urdf).parent), object_id=run_id,
            )
            _write_json(out / "eval_report.json", report)
        ok = stage("evaluation", evaluation)

    manifest.status = "succeeded" if ok and emitted else "failed"
    manifest.files = sorted(p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    _write_json(out / "manifest.json", manifest)
    logger.info(f"PIPELINE_DONE run={run_id} status={manifest.status}")
    return manifest


def read_eval_report(bundle_dir: str | Path) -> Optional[EvalReport]:
    path = Path(bundle_dir) / "eval_report.json"
    if not path.is_file():
        return None
    return EvalReport.model_validate(json.loads(path.read_text(encoding="utf-8")))
