"""
Actor-critic refinement loops and the smaller single-shot agent steps
(task specification, targeted affordance).

A loop stops at the first critic rating strictly above the threshold or after
max_iterations, and returns the best-rated program (earliest on ties). Parse
and compile failures are fed back to the actor as the next iteration's
feedback; they never abort the loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from PIL import Image
from pydantic import BaseModel, Field

from .agents import Agent, AgentRequest, CriticFeedback, ask, extract_fenced, extract_json, parse_critic_feedback
from .artlang import ArtProgram, format_program, parse_artlang
from .compiler import compile_program
from .config import LoopConfig, RenderConfig
from .errors import AgentError, ArticraftError, PipelineError
from .library import PartSpec
from .logging_config import get_logger
from .meshes import MeshResolver
from .prompts import PromptBook
from .render import RenderMode, link_color_map, png_bytes, render, render_joint_sweep
from .urdf import UrdfModel

logger = get_logger("loop")

FRAME_SUFFIXES = (".png", ".jpg", ".jpeg")


class LoopIteration(BaseModel):
    iteration: int
    program: Optional[str] = None
    compile_error: Optional[str] = None
    rating: Optional[int] = None
    feedback: Optional[CriticFeedback] = None
    renders: list[str] = Field(default_factory=list)
    actor_raw: str = ""
    critic_raw: Optional[str] = None


class LoopLog(BaseModel):
    stage: str
    iterations: list[LoopIteration] = Field(default_factory=list)
    best_iteration: Optional[int] = None
    stop_reason: str = ""

    @property
    def ratings(self) -> list[int]:
        return [it.rating for it in self.iterations if it.rating is not None]


@dataclass
class LoopResult:
    program: ArtProgram
    model: UrdfModel
    log: LoopLog


@dataclass
class LoopContext:
    """What a loop needs besides its agents."""

    resolve_mesh: MeshResolver
    prompts: PromptBook
    loop: LoopConfig = field(default_factory=LoopConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    render_dir: Optional[Path] = None
    model_name: str = "object"


# ---------------------------------------------------------------- inputs

def load_frames(path: str | Path) -> list[bytes]:
    """A single image file or a directory of ordered frames, as PNG bytes."""
    path = Path(path)
    files = [path] if path.is_file() else sorted(p for p in path.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)
    if not files:
        raise PipelineError(f"no image frames found at {path}", code="invalid_input")
    frames = []
    for file in files:
        try:
            with Image.open(file) as img:
                frames.append(png_bytes(img.convert("RGB")))
        except OSError as exc:
            raise PipelineError(f"cannot read frame {file}: {exc}", code="invalid_input")
    return frames


def subsample(frames: Sequence[bytes], limit: int) -> list[bytes]:
    """At most `limit` frames, uniformly spaced, first and last kept."""
    if len(frames) <= limit:
        return list(frames)
    if limit == 1:
        return [frames[0]]
    indices = np.unique(np.round(np.linspace(0, len(frames) - 1, limit)).astype(int))
    return [frames[i] for i in indices]


# ---------------------------------------------------------------- single-shot steps

def specify_task(prompt: str, agent: Agent, prompts: PromptBook, retries: int = 2) -> tuple[str, list[PartSpec]]:
    """Densify a sparse text prompt, then plan its parts with dimensions."""
    if not prompt.strip():
        raise PipelineError("empty task prompt", code="invalid_input")
    description = agent.complete(prompts.build("task_specifier", prompt=prompt.strip())).text.strip()

    def parse_parts(text: str) -> list[PartSpec]:
        parts = [PartSpec.model_validate(p) for p in extract_json(text)["parts"]]
        if not parts:
            raise ValueError("the plan lists no parts")
        return parts

    parts = ask(agent, prompts.build("layout_planner", description=description), parse_parts, retries).payload
    logger.info(f"TASK_SPECIFIED parts={len(parts)}")
    return description, parts


def detect_object(frame: bytes, agent: Agent, prompts: PromptBook) -> str:
    text = agent.complete(prompts.build("object_detector", images=[frame])).text.strip()
    if not text:
        raise AgentError("object detector returned nothing", code="unparseable_output", raw_text=text)
    return text.splitlines()[0].strip()


def extract_target_affordance(
    frames: Sequence[bytes],
    model: UrdfModel,
    agent: Agent,
    ctx: LoopContext,
    retries: int = 2,
) -> str:
    """Ask which child link should get a joint, showing a per-link color-segmented render."""
    segmented = render(
        model, None, ctx.render.camera, RenderMode.SEGMENTED,
        ctx.render.width, ctx.render.height, ctx.resolve_mesh,
    )
    colors = link_color_map(model)
    valid = [name for name in model.link_names if name != model.root]
    listing = "\n".join(f"- {name}: rgb{colors[name]}" for name in model.link_names)
    images = [*subsample(frames, max(1, ctx.loop.max_frames_per_request - 1)), png_bytes(segmented)]
    request = ctx.prompts.build("affordance_extractor", images=images, links=listing)

    def parse_link(text: str) -> str:
        name = str(extract_json(text)["link"]).strip()
        if name not in valid:
            raise ValueError(f"'{name}' is not a movable part; choose one of: {', '.join(valid)}")
        return name

    link = ask(agent, request, parse_link, retries).payload
    logger.info(f"AFFORDANCE_TARGET link={link}")
    return link


# ---------------------------------------------------------------- loops

def _best(log: LoopLog, compiled: dict[int, tuple[ArtProgram, UrdfModel]]) -> tuple[ArtProgram, UrdfModel]:
    rated = [it for it in log.iterations if it.iteration in compiled and it.rating is not None]
    if rated:
        best = max(rated, key=lambda it: (it.rating, -it.iteration))
    else:
        best = max((it for it in log.iterations if it.iteration in compiled), key=lambda it: it.iteration)
    log.best_iteration = best.iteration
    return compiled[best.iteration]


def _save_renders(ctx: LoopContext, stage: str, iteration: int, images: Sequence[Image.Image]) -> list[str]:
    if ctx.render_dir is None:
        return []
    ctx.render_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for index, image in enumerate(images):
        name = f"{stage}_iter{iteration}_{index}.png"
        image.save(ctx.render_dir / name, format="PNG")
        names.append(name)
    return names


def _refine(
    stage: str,
    actor: Agent,
    critic: Optional[Agent],
    ctx: LoopContext,
    build_actor_request: Callable[[str, str], AgentRequest],
    materialize: Callable[[str], ArtProgram],
    critique: Callable[[ArtProgram, UrdfModel, int], tuple[AgentRequest, list[str]]],
    start_program: str,
) -> LoopResult:
    log = LoopLog(stage=stage)
    compiled: dict[int, tuple[ArtProgram, UrdfModel]] = {}
    program_text, feedback_text = start_program, ""

    for iteration in range(1, ctx.loop.max_iterations + 1):
        entry = LoopIteration(iteration=iteration)
        log.iterations.append(entry)
        entry.actor_raw = actor.complete(build_actor_request(program_text, feedback_text)).text
        try:
            program = materialize(extract_fenced(entry.actor_raw, "artlang"))
            model, _ = compile_program(program, ctx.resolve_mesh, ctx.model_name)
        except ArticraftError as exc:
            entry.compile_error = str(exc)
            feedback_text = f"The program failed to compile:\n{exc}"
            logger.info(f"LOOP_COMPILE_FAILED stage={stage} iteration={iteration} code={exc.code}")
            continue
        compiled[iteration] = (program, model)
        entry.program = format_program(program)
        program_text = entry.program

        if critic is None:
            log.stop_reason = "actor_only"
            break
        request, entry.renders = critique(program, model, iteration)
        reply = ask(critic, request, parse_critic_feedback)
        feedback, entry.critic_raw = reply.payload, reply.text
        entry.feedback, entry.rating = feedback, feedback.realism_rating
        logger.info(f"LOOP_ITER_OK stage={stage} iteration={iteration} rating={feedback.realism_rating}")
        if feedback.realism_rating > ctx.loop.rating_threshold:
            log.stop_reason = "approved"
            break
        feedback_text = feedback.as_prompt_text()
    else:
        log.stop_reason = "exhausted"

    if not compiled:
        raise PipelineError(f"{stage} loop produced no program that compiles", code="no_valid_program")
    program, model = _best(log, compiled)
    logger.info(f"LOOP_DONE stage={stage} iterations={len(log.iterations)} best={log.best_iteration} reason={log.stop_reason}")
    return LoopResult(program, model, log)


def _parts_listing(program: ArtProgram) -> str:
    return "\n".join(
        f"- {d.name}: \"{d.mesh_ref}\"" + (f" scale ({d.scale[0]:.4g}, {d.scale[1]:.4g}, {d.scale[2]:.4g})" if tuple(d.scale) != (1.0, 1.0, 1.0) else "")
        for d in program.part_decls
    )


def run_link_loop(
    task: str,
    frames: Sequence[bytes],
    draft: ArtProgram,
    actor: Agent,
    critic: Optional[Agent],
    ctx: LoopContext,
) -> LoopResult:
    """Place the parts. Only the first frame is shown to the agents."""
    reference = list(frames[:1])
    parts = _parts_listing(draft)

    def actor_request(program_text: str, feedback: str):
        return ctx.prompts.build("link_actor", images=reference, task=task, parts=parts, program=program_text or "(none yet)", feedback=feedback or "(none)")

    def materialize(source: str) -> ArtProgram:
        return parse_artlang(source).without_joints()

    def critique(program: ArtProgram, model: UrdfModel, iteration: int):
        views = [
            render(model, None, cam, RenderMode.SHADED, ctx.render.width, ctx.render.height, ctx.resolve_mesh, external_command=ctx.render.external_command)
            for cam in ctx.render.critic_cameras
        ]
        names = _save_renders(ctx, "link", iteration, views)
        request = ctx.prompts.build("link_critic", images=[*reference, *(png_bytes(v) for v in views)], program=format_program(program))
        return request, names

    return _refine("link", actor, critic, ctx, actor_request, materialize, critique, format_program(draft) if draft.statements else "")


def merge_joints(placed: ArtProgram, proposal: ArtProgram, target: Optional[str] = None) -> ArtProgram:
    """Placed program's parts and placements plus the proposal's joint statements."""
    joints = [s for s in proposal.joint_statements if s.child in placed.part_names and s.parent in placed.part_names]
    if target is not None:
        kept = [s for s in joints if s.child == target]
        if len(kept) != len(joints):
            logger.info(f"JOINTS_FILTERED target={target} dropped={len(joints) - len(kept)}")
        joints = kept
    if proposal.placements != placed.placements:
        logger.info("JOINT_ACTOR_PLACEMENTS_IGNORED")
    return ArtProgram(placed.part_decls, tuple(placed.placements) + tuple(joints))


def run_joint_loop(
    task: str,
    frames: Sequence[bytes],
    placed: ArtProgram,
    actor: Agent,
    critic: Optional[Agent],
    ctx: LoopContext,
    target: Optional[str] = None,
) -> LoopResult:
    """Articulate a placed program. The critic compares input frames with joint sweeps."""
    limit = ctx.loop.max_frames_per_request
    target_line = f"Only the part '{target}' moves; give it the joint." if target else ""

    def actor_request(program_text: str, feedback: str):
        return ctx.prompts.build("joint_actor", images=subsample(frames, limit), task=task, target=target_line, program=program_text, feedback=feedback or "(none)")

    def materialize(source: str) -> ArtProgram:
        return merge_joints(placed, parse_artlang(source), target)

    def critique(program: ArtProgram, model: UrdfModel, iteration: int):
        sweeps = []
        for joint in model.movable_joints:
            sweeps += render_joint_sweep(
                model, joint.name, ctx.render.sweep_frames, ctx.render.camera,
                ctx.render.width, ctx.render.height, ctx.resolve_mesh, ctx.render.external_command,
            )
        names = _save_renders(ctx, "joint", iteration, sweeps)
        shown_input = subsample(frames, max(1, limit // 2))
        shown_sweep = subsample([png_bytes(s) for s in sweeps], max(1, limit - len(shown_input)))
        request = ctx.prompts.build("joint_critic", images=[*shown_input, *shown_sweep], program=format_program(program))
        return request, names

    return _refine("joint", actor, critic, ctx, actor_request, materialize, critique, format_program(placed))
