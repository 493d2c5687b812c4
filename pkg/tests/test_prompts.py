import pytest

from app.errors import AgentError
from app.prompts import ROLES, PromptBook, PromptTemplate


class TestTemplates:
    def test_every_role_has_a_template(self, prompts):
        assert set(prompts.templates) == set(ROLES)
        assert all(prompts.version(role) >= 1 for role in ROLES)

    def test_parse_sections(self):
        template = PromptTemplate.parse("r", "# version: 3\n[system]\nBe brief.\n[user]\nSay $word.\n")
        assert template.version == 3
        assert template.system == "Be brief."
        assert template.user.substitute(word="hi") == "Say hi."

    @pytest.mark.parametrize("text", [
        "[system]\nx\n[user]\ny\n",
        "# version: 1\n[user]\ny\n",
        "# version: 1\n[system]\nx\n",
    ])
    def test_incomplete_template(self, text):
        with pytest.raises(AgentError) as exc:
            PromptTemplate.parse("r", text)
        assert exc.value.code == "bad_template"


class TestBuild:
    def test_fields_and_images(self, prompts):
        request = prompts.build("task_specifier", prompt="a box with a lid")
        assert request.agent_role == "task_specifier"
        assert [m.role for m in request.messages] == ["system", "user"]
        assert request.messages[1].text == "Request: a box with a lid"

        request = prompts.build("object_detector", images=[b"\x89PNG"])
        assert len(request.messages[1].images) == 1

    def test_missing_field(self, prompts):
        with pytest.raises(AgentError) as exc:
            prompts.build("link_critic")
        assert exc.value.code == "bad_template"

    def test_none_becomes_empty(self, prompts):
        request = prompts.build("joint_critic", program=None)
        assert request.messages[1].text.strip() == "Program of the prediction:"

    def test_assembly_is_deterministic(self, prompts):
        a = prompts.build("link_critic", images=[b"1", b"2"], program="part a \"a.obj\";")
        b = PromptBook().build("link_critic", images=[b"1", b"2"], program="part a \"a.obj\";")
        assert a.digest() == b.digest()


class TestExamples:
    def test_examples_in_sorted_order_and_capped(self, tmp_path):
        folder = tmp_path / "link_actor"
        folder.mkdir()
        for name in ("b.txt", "a.txt", "c.txt", "notes.md"):
            (folder / name).write_text(f"example {name}", encoding="utf-8")
        book = PromptBook(examples_dir=tmp_path, max_examples=2)
        assert book.examples["link_actor"] == ["example a.txt", "example b.txt"]
        assert book.examples["joint_actor"] == []
        system = book.build("link_actor", task="t", parts="p", program="", feedback="").messages[0].text
        assert "Example 1:\nexample a.txt" in system
        assert "example c.txt" not in system

    def test_examples_disabled(self, tmp_path):
        (tmp_path / "link_actor").mkdir()
        (tmp_path / "link_actor" / "a.txt").write_text("x", encoding="utf-8")
        assert PromptBook(examples_dir=tmp_path, max_examples=0).examples["link_actor"] == []
