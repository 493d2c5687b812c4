import json
import shutil

import pytest

from app.agents import AgentRequest, RecordingAgent, ReplayAgent, ScriptedAgent
from app.config import EvalConfig, Modality, RenderConfig, Settings
from app.library import AssetLibrary
from app.pipeline import AgentSet, _identifier, build_agents, read_eval_report, run_pipeline
from app.sample_library import SAMPLE_OBJECTS, sample_object

DRAWER = sample_object("drawer_cabinet")


def fenced(source):
    return f"```artlang\n{source}```"


def rating(value):
    return json.dumps({"realism_rating": value, "failure_case": None, "summary": "", "issues": []})


def placed_program(obj):
    return obj.program.split("joint")[0]


PLACED = placed_program(DRAWER)


def sample_agent(obj, link_program=None):
    """Answers every role the way a competent model would for one sample object."""
    link_program = link_program if link_program is not None else placed_program(obj)
    moving = obj.parts[1].name

    def respond(request: AgentRequest) -> str:
        role = request.agent_role
        if role == "object_detector":
            return obj.description
        if role == "object_selector":
            ids = request.messages[-1].text.split(":", 1)[1].strip().split(", ")
            return json.dumps({"choice": obj.object_id if obj.object_id in ids else ids[0]})
        if role == "task_specifier":
            return f"{obj.description[0].upper()}{obj.description[1:]}."
        if role == "layout_planner":
            return json.dumps({"parts": [
                {"name": p.name, "description": p.description, "dimensions": list(p.extents)} for p in obj.parts
            ]})
        if role == "link_actor":
            return fenced(link_program)
        if role == "joint_actor":
            return fenced(obj.program)
        if role in ("link_critic", "joint_critic"):
            return rating(9)
        if role == "affordance_extractor":
            return json.dumps({"link": moving})
        raise AssertionError(role)

    return ScriptedAgent(respond)


def drawer_agent(link_program=PLACED):
    return sample_agent(DRAWER, link_program)


@pytest.fixture
def settings():
    base = Settings()
    return base.model_copy(update={
        "render": RenderConfig(width=32, height=32, critic_cameras=["front"], sweep_frames=2),
        "eval": EvalConfig(chamfer_samples=256),
    })


@pytest.fixture
def frames_dir(library_dir):
    return library_dir / "inputs" / "drawer_cabinet"


@pytest.fixture
def gt_urdf(library_dir):
    return library_dir / "drawer_cabinet.urdf"


def agents_for(library, agent):
    return AgentSet(actor=agent, critic=agent, embedder=library.query_cache())


class TestVideoRun:
    def test_full_bundle(self, library, settings, frames_dir, gt_urdf, tmp_path):
        agent = drawer_agent()
        manifest = run_pipeline(str(frames_dir), Modality.VIDEO, library, agents_for(library, agent), settings, tmp_path, gt_urdf)

        assert manifest.succeeded
        statuses = {s.name: s.status for s in manifest.stages}
        assert statuses == {
            "intake": "ok", "retrieval": "ok", "link_loop": "ok", "affordance": "skipped",
            "joint_loop": "ok", "emit": "ok", "evaluation": "ok",
        }
        for name in ("model.urdf", "program.art", "eval_report.json", "logs/retrieval.json",
                     "logs/link_loop.json", "logs/joint_loop.json", "renders/final.png",
                     "drawer_cabinet/body.obj"):
            assert name in manifest.files
        assert (tmp_path / "manifest.json").is_file()

        retrieval = json.loads((tmp_path / "logs" / "retrieval.json").read_text())
        assert retrieval["selected"] == "drawer_cabinet"
        assert retrieval["categories"][0][0] == "storage_furniture"

        report = read_eval_report(tmp_path)
        assert report.object_link_success
        assert report.object_joint_success
        assert {r.agent_role for r in agent.requests} >= {"object_detector", "object_selector", "link_critic", "joint_critic"}

    def test_run_id_is_stable(self, library, settings, frames_dir, tmp_path):
        first = run_pipeline(str(frames_dir), Modality.VIDEO, library, agents_for(library, drawer_agent()), settings, tmp_path / "a")
        second = run_pipeline(str(frames_dir), Modality.VIDEO, library, agents_for(library, drawer_agent()), settings, tmp_path / "b")
        assert first.run_id == second.run_id
        for name in ("manifest.json", "model.urdf", "program.art", "renders/final.png"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_replay_reproduces_bundle(self, library, settings, frames_dir, tmp_path):
        transcript = tmp_path / "transcript.jsonl"
        recorder = RecordingAgent(drawer_agent(), transcript)
        run_pipeline(str(frames_dir), Modality.VIDEO, library, agents_for(library, recorder), settings, tmp_path / "live")
        replay = ReplayAgent(transcript)
        manifest = run_pipeline(str(frames_dir), Modality.VIDEO, library, agents_for(library, replay), settings, tmp_path / "replay")
        assert manifest.succeeded
        for name in ("manifest.json", "model.urdf", "logs/joint_loop.json"):
            assert (tmp_path / "live" / name).read_bytes() == (tmp_path / "replay" / name).read_bytes()

    def test_target_affordance(self, library, settings, frames_dir, tmp_path):
        manifest = run_pipeline(
            str(frames_dir), Modality.VIDEO, library, agents_for(library, drawer_agent()), settings, tmp_path,
            target_affordance=True,
        )
        assert manifest.stage("affordance").status == "ok"
        assert manifest.target_link == "drawer"


class TestEverySample:
    @pytest.mark.parametrize("modality", [Modality.TEXT, Modality.IMAGE, Modality.VIDEO], ids=lambda m: m.value)
    @pytest.mark.parametrize("object_id", [obj.object_id for obj in SAMPLE_OBJECTS])
    def test_replayed_run_passes_evaluation(self, library, library_dir, settings, tmp_path, object_id, modality):
        obj = sample_object(object_id)
        input_ref = obj.description if modality == Modality.TEXT else str(library_dir / "inputs" / object_id)
        gt = library_dir / f"{object_id}.urdf"
        transcript = tmp_path / "transcript.jsonl"

        recorder = RecordingAgent(sample_agent(obj), transcript)
        live = run_pipeline(input_ref, modality, library, agents_for(library, recorder), settings, tmp_path / "live", gt)
        replay = ReplayAgent(transcript)
        replayed = run_pipeline(input_ref, modality, library, agents_for(library, replay), settings, tmp_path / "replay", gt)

        assert live.succeeded and replayed.succeeded
        report = read_eval_report(tmp_path / "replay")
        assert report.object_link_success
        assert report.object_joint_success
        assert report.failure_category is None
        assert (tmp_path / "live" / "model.urdf").read_bytes() == (tmp_path / "replay" / "model.urdf").read_bytes()


class TestOtherModalities:
    def test_image_uses_link_critic_only(self, library, settings, frames_dir, tmp_path):
        agent = drawer_agent()
        manifest = run_pipeline(str(frames_dir), Modality.IMAGE, library, agents_for(library, agent), settings, tmp_path)
        roles = [r.agent_role for r in agent.requests]
        assert manifest.succeeded
        assert "link_critic" in roles
        assert "joint_critic" not in roles

    def test_text_is_actor_only(self, library, settings, gt_urdf, tmp_path):
        agent = drawer_agent()
        manifest = run_pipeline("a cabinet with a drawer", Modality.TEXT, library, agents_for(library, agent), settings, tmp_path, gt_urdf)
        roles = [r.agent_role for r in agent.requests]
        assert manifest.succeeded
        assert not {"link_critic", "joint_critic", "object_selector"} & set(roles)
        retrieval = json.loads((tmp_path / "logs" / "retrieval.json").read_text())
        assert retrieval["part_matches"]["drawer"]["mesh_ref"] == "drawer_cabinet/drawer.obj"
        assert read_eval_report(tmp_path).object_joint_success

    def test_text_prompt_from_file(self, library, settings, tmp_path):
        prompt = tmp_path / "prompt.txt"
        prompt.write_text("a cabinet with a drawer\n", encoding="utf-8")
        agent = drawer_agent()
        run_pipeline(str(prompt), Modality.TEXT, library, agents_for(library, agent), settings, tmp_path / "out")
        assert "Request: a cabinet with a drawer" in agent.requests[0].messages[1].text


class TestFailures:
    def test_missing_input(self, library, settings, tmp_path):
        manifest = run_pipeline(str(tmp_path / "nowhere"), Modality.VIDEO, library, agents_for(library, drawer_agent()), settings, tmp_path / "out")
        assert not manifest.succeeded
        intake = manifest.stage("intake")
        assert (intake.status, intake.error_code) == ("failed", "invalid_input")
        assert manifest.stage("retrieval").status == "skipped"
        assert manifest.stage("emit").status == "ok"

    def test_partial_bundle_when_link_loop_fails(self, library, settings, frames_dir, tmp_path):
        agent = drawer_agent(link_program="place drawer on body axis sideways;\n")
        manifest = run_pipeline(str(frames_dir), Modality.VIDEO, library, agents_for(library, agent), settings, tmp_path)
        assert manifest.status == "failed"
        assert manifest.stage("link_loop").error_code == "no_valid_program"
        assert manifest.stage("joint_loop").status == "skipped"
        assert "logs/retrieval.json" in manifest.files
        assert "model.urdf" not in manifest.files
        assert read_eval_report(tmp_path) is None

    def test_no_embedder(self, library, settings, frames_dir, tmp_path):
        agents = AgentSet(actor=drawer_agent())
        manifest = run_pipeline(str(frames_dir), Modality.VIDEO, library, agents, settings, tmp_path)
        assert manifest.stage("retrieval").error_code == "invalid_input"

    def test_missing_thumbnail_fails_retrieval(self, library_dir, settings, frames_dir, tmp_path):
        copy = tmp_path / "library"
        shutil.copytree(library_dir, copy)
        (copy / "drawer_cabinet" / "thumbnail.png").unlink()
        library = AssetLibrary.load(copy)
        manifest = run_pipeline(str(frames_dir), Modality.VIDEO, library, agents_for(library, drawer_agent()), settings, tmp_path / "out")
        retrieval = manifest.stage("retrieval")
        assert (retrieval.status, retrieval.error_code) == ("failed", "missing_asset")
        assert manifest.stage("link_loop").status == "skipped"
        assert (tmp_path / "out" / "manifest.json").is_file()

class TestAgentWiring:
    def test_replay_serves_every_role(self, library, settings, tmp_path):
        transcript = tmp_path / "t.jsonl"
        transcript.write_text("", encoding="utf-8")
        agents = build_agents(settings, replay=transcript, library=library)
        assert agents.actor is agents.critic
        assert agents.selecting_agent is agents.actor
        assert agents.embedder is not None

    def test_record_wraps_live_agents(self, library, settings, tmp_path):
        agents = build_agents(settings, record_dir=tmp_path, library=library)
        assert isinstance(agents.actor, RecordingAgent)
        assert agents.actor.path == tmp_path / "transcript.jsonl"

    def test_identifiers(self):
        taken = set()
        assert _identifier("Left Door", taken) == "left_door"
        assert _identifier("left-door", taken) == "left_door_2"
        assert _identifier("3rd shelf", taken) == "part_3rd_shelf"
        assert _identifier("!!!", taken) == "part"
