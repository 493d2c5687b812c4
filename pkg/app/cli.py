"""
Command line: compile, eval, retrieve, run, report, render, serve.

Exit codes: 0 success, 1 pipeline failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .artlang import format_program, parse_artlang
from .compiler import compile_program
from .config import MatchingMode, Modality, Settings, load_settings
from .errors import ArticraftError, ArtLangError, CompileError, LibraryError, ObjError, UrdfError
from .evaluation import EvalReport, evaluate_documents
from .library import AssetLibrary
from .logging_config import get_logger, setup_logging
from .loops import FRAME_SUFFIXES, load_frames
from .meshes import directory_resolver, load_model, write_model_dir
from .pipeline import RetrievalLog, build_agents, retrieve_from_frames, retrieve_from_text, run_pipeline
from .prompts import PromptBook
from .render import RenderMode, render, render_joint_sweep
from .stats import aggregate, format_report, format_summary, improvement_curve, load_reports, write_joint_csv

logger = get_logger("cli")

EXIT_OK = 0
EXIT_PIPELINE_FAILURE = 1
EXIT_INVALID_INPUT = 2

INVALID_INPUT_ERRORS = (ArtLangError, CompileError, LibraryError, ObjError, UrdfError)


def exit_code_for(exc: Exception) -> int:
    if isinstance(exc, (OSError, ValueError)) or isinstance(exc, INVALID_INPUT_ERRORS):
        return EXIT_INVALID_INPUT
    if isinstance(exc, ArticraftError) and exc.code == "invalid_input":
        return EXIT_INVALID_INPUT
    return EXIT_PIPELINE_FAILURE


def _store(records: Sequence[object]) -> None:
    from .database import Base, SessionLocal, engine

    Base.metadata.create_all(bind=engine)
    db = SessionLocal()
    try:
        db.add_all(records)
        db.commit()
    finally:
        db.close()


def _stored_reports() -> list[EvalReport]:
    from .database import Base, SessionLocal, engine
    from .models import EvaluationRecord

    Base.metadata.create_all(bind=engine)
    db = SessionLocal()
    try:
        return [record.report for record in db.query(EvaluationRecord).order_by(EvaluationRecord.id).all()]
    finally:
        db.close()


def _is_frame_input(value: str) -> bool:
    path = Path(value)
    return path.is_dir() or (path.is_file() and path.suffix.lower() in FRAME_SUFFIXES)


# ---------------------------------------------------------------- commands

def cmd_compile(args: argparse.Namespace, settings: Settings) -> int:
    source = Path(args.program)
    program = parse_artlang(source.read_text(encoding="utf-8"))
    mesh_root = Path(args.mesh_root) if args.mesh_root else source.parent
    model, diagnostics = compile_program(program, directory_resolver(mesh_root), args.name or source.stem)
    out = Path(args.output)
    write_model_dir(model, out.parent, out.name)
    for warning in diagnostics.warnings:
        print(f"warning: {warning.message}", file=sys.stderr)
    if args.canonical:
        Path(args.canonical).write_text(format_program(program), encoding="utf-8")
    print(f"wrote {out} ({len(model.links)} links, {len(model.movable_joints)} movable joints)")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, settings: Settings) -> int:
    pred_path, gt_path = Path(args.pred), Path(args.gt)
    cfg = settings.eval.model_copy(update={"matching": MatchingMode(args.match)})
    report = evaluate_documents(
        pred_path.read_text(encoding="utf-8"),
        gt_path.read_text(encoding="utf-8"),
        cfg,
        directory_resolver(pred_path.parent),
        directory_resolver(gt_path.parent),
        args.object_id or gt_path.stem,
    )
    if args.format == "structured":
        print(report.model_dump_json(indent=2))
    elif args.format == "csv":
        buffer = io.StringIO()
        write_joint_csv([report], buffer)
        sys.stdout.write(buffer.getvalue())
    else:
        print(format_report(report))
    if args.store:
        from .models import EvaluationRecord

        _store([EvaluationRecord.from_report(report)])
    return EXIT_OK


def cmd_retrieve(args: argparse.Namespace, settings: Settings) -> int:
    library = AssetLibrary.load(args.library)
    agents = build_agents(settings, args.record, args.replay, library)
    prompts = PromptBook(examples_dir=settings.loop.examples_dir, max_examples=settings.loop.max_in_context_examples)
    log = RetrievalLog()
    if _is_frame_input(args.input):
        _, draft = retrieve_from_frames(load_frames(args.input)[:1], library, agents, prompts, settings, log)
    else:
        path = Path(args.input)
        text = path.read_text(encoding="utf-8") if path.is_file() else args.input
        _, draft = retrieve_from_text(text, library, agents, prompts, log)
    print(json.dumps({**log.model_dump(mode="json"), "program": format_program(draft)}, indent=2))
    return EXIT_OK


def cmd_run(args: argparse.Namespace, settings: Settings) -> int:
    library = AssetLibrary.load(args.library)
    agents = build_agents(settings, args.record, args.replay, library)
    manifest = run_pipeline(
        args.input, Modality(args.modality), library, agents, settings, args.out,
        gt_urdf=args.gt, target_affordance=args.target_affordance, run_id=args.run_id,
    )
    for stage in manifest.stages:
        detail = f" [{stage.error_code}] {stage.error_message}" if stage.error_code else ""
        print(f"{stage.name}: {stage.status}{detail}")
    if args.store:
        from .models import EvaluationRecord, PipelineRunRecord
        from .pipeline import read_eval_report

        failed = next((s for s in manifest.stages if s.status == "failed"), None)
        records: list[object] = [PipelineRunRecord(
            run_id=manifest.run_id, modality=manifest.modality.value, input=manifest.input, status=manifest.status,
            failed_stage=failed.name if failed else None, error_code=failed.error_code if failed else None,
            bundle_path=str(Path(args.out).resolve()),
        )]
        report = read_eval_report(args.out)
        if report is not None:
            records.append(EvaluationRecord.from_report(report, manifest.run_id))
        _store(records)
    if manifest.succeeded:
        return EXIT_OK
    failed = next((s for s in manifest.stages if s.status == "failed"), None)
    if failed is not None and failed.name == "intake":
        return EXIT_INVALID_INPUT
    return EXIT_PIPELINE_FAILURE


def _rating_histories(results_dir: Path, stage: str) -> list[list[int]]:
    histories = []
    for path in sorted(results_dir.rglob(f"{stage}_loop.json")):
        data = json.loads(path.read_text(encoding="utf-8"))
        histories.append([it["rating"] for it in data.get("iterations", []) if it.get("rating") is not None])
    return histories


def cmd_report(args: argparse.Namespace, settings: Settings) -> int:
    if args.from_db:
        reports = _stored_reports()
    elif args.results_dir:
        reports = load_reports(args.results_dir)
    else:
        print("report needs a results directory or --from-db", file=sys.stderr)
        return EXIT_INVALID_INPUT
    if not reports:
        print("no evaluation reports found", file=sys.stderr)
        return EXIT_INVALID_INPUT
    stats = aggregate(reports)
    if args.format == "structured":
        print(stats.model_dump_json(indent=2))
    elif args.format == "csv":
        buffer = io.StringIO()
        write_joint_csv(reports, buffer)
        sys.stdout.write(buffer.getvalue())
    else:
        print(format_summary(stats))
        if args.results_dir and args.curve:
            for stage in ("link", "joint"):
                curve = improvement_curve(_rating_histories(Path(args.results_dir), stage), settings.loop.rating_threshold)
                for point in curve:
                    print(f"{stage} iter {point['iteration']}: best {point['mean_best_rating']:.2f}, approved {100 * point['approved_rate']:.1f}%")
    return EXIT_OK


def cmd_render(args: argparse.Namespace, settings: Settings) -> int:
    model = load_model(args.urdf)
    joints = json.loads(Path(args.joints).read_text(encoding="utf-8")) if args.joints else {}
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    external = settings.render.external_command
    if args.sweep:
        frames = render_joint_sweep(model, args.sweep, settings.render.sweep_frames, args.camera, args.width, args.height, external_command=external)
        for index, frame in enumerate(frames):
            frame.save(out.with_name(f"{out.stem}_{index}{out.suffix or '.png'}"), format="PNG")
        print(f"wrote {len(frames)} frames")
        return EXIT_OK
    mode = RenderMode.SEGMENTED if args.segmented else RenderMode.SHADED
    image = render(model, joints, args.camera, mode, args.width, args.height, external_command=external)
    image.save(out, format="PNG")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace, settings: Settings) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="articraft", description="Articulated object toolkit")
    parser.add_argument("--config", help="JSON config file for endpoints and loop settings")
    parser.add_argument("--log-level", help="overrides LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile an ArtLang program to URDF")
    p.add_argument("program")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--mesh-root", help="directory mesh references resolve against (default: program directory)")
    p.add_argument("--name", help="robot name (default: program file stem)")
    p.add_argument("--canonical", help="also write the canonical program text here")
    p.set_defaults(handler=cmd_compile)

    p = sub.add_parser("eval", help="evaluate a predicted URDF against ground truth")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--match", choices=[m.value for m in MatchingMode], default=MatchingMode.NAME.value)
    p.add_argument("--format", choices=["text", "structured", "csv"], default="text")
    p.add_argument("--object-id")
    p.add_argument("--store", action="store_true", help="persist the report in the result store")
    p.set_defaults(handler=cmd_eval)

    for name, handler, help_text in (
        ("retrieve", cmd_retrieve, "retrieve library parts for an input"),
        ("run", cmd_run, "run the full pipeline and write a bundle"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--input", required=True)
        p.add_argument("--library", required=True)
        transcripts = p.add_mutually_exclusive_group()
        transcripts.add_argument("--record", type=Path, help="directory to append an agent transcript to")
        transcripts.add_argument("--replay", type=Path, help="transcript file to answer agent calls from")
        p.set_defaults(handler=handler)
        if name == "run":
            p.add_argument("--modality", choices=[m.value for m in Modality], required=True)
            p.add_argument("--out", required=True)
            p.add_argument("--gt")
            p.add_argument("--target-affordance", action="store_true")
            p.add_argument("--run-id")
            p.add_argument("--store", action="store_true")

    p = sub.add_parser("report", help="aggregate evaluation reports")
    p.add_argument("results_dir", nargs="?")
    p.add_argument("--from-db", action="store_true")
    p.add_argument("--format", choices=["text", "structured", "csv"], default="text")
    p.add_argument("--curve", action="store_true", help="also print per-iteration critic ratings")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("render", help="render a URDF to PNG")
    p.add_argument("urdf")
    p.add_argument("--joints", help="JSON file of joint values")
    p.add_argument("--segmented", action="store_true")
    p.add_argument("--camera", default="iso")
    p.add_argument("--width", type=int, default=384)
    p.add_argument("--height", type=int, default=384)
    p.add_argument("--sweep", metavar="JOINT", help="render a sweep of this joint instead")
    p.add_argument("-o", "--output", default="render.png")
    p.set_defaults(handler=cmd_render)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings(args.config)
    except (OSError, ValueError) as exc:
        print(f"error: cannot load config: {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    setup_logging(args.log_level or settings.log_level, settings.log_file)
    try:
        return args.handler(args, settings)
    except (ArticraftError, OSError, ValueError) as exc:
        code = exit_code_for(exc)
        logger.error(f"CLI_FAILED command={args.command} exit={code} error={exc}")
        print(f"error: {exc}", file=sys.stderr)
        return code
