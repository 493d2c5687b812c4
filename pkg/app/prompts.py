"""
Versioned prompt templates (app/prompt_templates/<role>.txt) and request assembly.

A template file holds a `# version: N` header and two sections, `[system]`
and `[user]`. The user section uses `$name` placeholders. In-context examples
for a role live in `<examples_dir>/<role>/*.txt` and are inserted in sorted
file order, capped at `max_examples`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from string import Template
from typing import Optional, Sequence

from .agents import AgentRequest, ImagePayload, Message
from .errors import AgentError
from .logging_config import get_logger

logger = get_logger("prompts")

TEMPLATE_DIR = Path(__file__).parent / "prompt_templates"

ROLES = (
    "task_specifier",
    "layout_planner",
    "object_detector",
    "object_selector",
    "link_actor",
    "link_critic",
    "joint_actor",
    "joint_critic",
    "affordance_extractor",
)

_SECTION_RE = re.compile(r"^\[(system|user)\]\s*$", re.MULTILINE)
_VERSION_RE = re.compile(r"^#\s*version:\s*(\d+)\s*$", re.MULTILINE)


@dataclass(frozen=True)
class PromptTemplate:
    role: str
    version: int
    system: str
    user: Template

    @classmethod
    def parse(cls, role: str, text: str) -> PromptTemplate:
        version = _VERSION_RE.search(text)
        parts = _SECTION_RE.split(text)
        sections = dict(zip(parts[1::2], (p.strip("\n") for p in parts[2::2])))
        if version is None or "system" not in sections or "user" not in sections:
            raise AgentError(f"prompt template '{role}' needs a version header, [system] and [user]", code="bad_template")
        return cls(role, int(version.group(1)), sections["system"].strip(), Template(sections["user"].strip()))


class PromptBook:
    """All role templates plus optional in-context examples. Assembly is a pure function of its inputs."""

    def __init__(self, template_dir: Path = TEMPLATE_DIR, examples_dir: Optional[str | Path] = None, max_examples: int = 20):
        self.templates = {
            role: PromptTemplate.parse(role, (Path(template_dir) / f"{role}.txt").read_text(encoding="utf-8"))
            for role in ROLES
        }
        self.examples = {role: self._load_examples(examples_dir, role, max_examples) for role in ROLES}

    @staticmethod
    def _load_examples(examples_dir: Optional[str | Path], role: str, limit: int) -> list[str]:
        if examples_dir is None or limit <= 0:
            return []
        folder = Path(examples_dir) / role
        if not folder.is_dir():
            return []
        files = sorted(folder.glob("*.txt"))
        if len(files) > limit:
            logger.info(f"PROMPT_EXAMPLES_CAPPED role={role} available={len(files)} used={limit}")
        return [f.read_text(encoding="utf-8").strip() for f in files[:limit]]

    def version(self, role: str) -> int:
        return self.templates[role].version

    def build(self, role: str, images: Sequence[bytes] = (), **fields: object) -> AgentRequest:
        template = self.templates[role]
        system = template.system
        if self.examples[role]:
            shown = "\n\n".join(f"Example {i}:\n{text}" for i, text in enumerate(self.examples[role], start=1))
            system = f"{system}\n\n{shown}"
        values = {key: "" if value is None else str(value) for key, value in fields.items()}
        try:
            user = template.user.substitute(values)
        except KeyError as exc:
            raise AgentError(f"prompt '{role}' is missing field {exc}", code="bad_template")
        return AgentRequest(
            agent_role=role,
            messages=[
                Message(role="system", text=system),
                Message(role="user", text=user, images=[ImagePayload.from_bytes(img) for img in images]),
            ],
        )
