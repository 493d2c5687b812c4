"""
Agent plumbing: request/response types, the HTTP chat client, scripted and
record/replay agents, payload extraction and embedding clients.

Requests are provider-neutral (role-tagged messages, images as base64 with a
media type); HttpAgent adapts them to a chat-completions style endpoint.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import threading
import time
from collections import defaultdict, deque
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Protocol, Sequence, TypeVar, Union

import httpx
import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator

from .config import AgentEndpoint
from .errors import AgentError, ArticraftError
from .logging_config import get_logger

logger = get_logger("agents")

T = TypeVar("T")


class ImagePayload(BaseModel):
    media_type: str = "image/png"
    data: str

    @classmethod
    def from_bytes(cls, raw: bytes, media_type: str = "image/png") -> ImagePayload:
        return cls(media_type=media_type, data=base64.b64encode(raw).decode("ascii"))


class Message(BaseModel):
    role: str
    text: str
    images: list[ImagePayload] = Field(default_factory=list)


class AgentRequest(BaseModel):
    agent_role: str
    messages: list[Message]

    def digest(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def followed_by(self, reply: str, follow_up: str) -> AgentRequest:
        return AgentRequest(
            agent_role=self.agent_role,
            messages=[*self.messages, Message(role="assistant", text=reply), Message(role="user", text=follow_up)],
        )


class AgentResponse(BaseModel):
    """Raw reply text; ``payload`` holds the parsed value once a parser accepted the text."""

    text: str
    payload: Optional[Any] = None

    @property
    def parsed(self) -> bool:
        return self.payload is not None


class Agent(Protocol):
    def complete(self, request: AgentRequest) -> AgentResponse: ...


class RateLimiter:
    """Spaces calls at least 1 / rate seconds apart across threads."""

    def __init__(self, rate: Optional[float], clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        self.interval = 1.0 / rate if rate else 0.0
        self._next = 0.0
        self._lock = threading.Lock()
        self._clock = clock
        self._sleep = sleep

    def wait(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = self._clock()
            start = max(now, self._next)
            self._next = start + self.interval
        if start > now:
            self._sleep(start - now)


class HttpAgent:
    """Chat-completions client with retry, exponential backoff and rate limiting."""

    RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}

    def __init__(self, endpoint: AgentEndpoint, client: Optional[httpx.Client] = None, sleep: Callable[[float], None] = time.sleep):
        self.endpoint = endpoint
        self._client = client or httpx.Client(timeout=endpoint.timeout)
        self._sleep = sleep
        self._limiter = RateLimiter(endpoint.requests_per_second, sleep=sleep)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.endpoint.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def payload(self, request: AgentRequest) -> dict:
        messages = []
        for message in request.messages:
            if not message.images:
                messages.append({"role": message.role, "content": message.text})
                continue
            content = [{"type": "text", "text": message.text}]
            for image in message.images:
                content.append({"type": "image_url", "image_url": {"url": f"data:{image.media_type};base64,{image.data}"}})
            messages.append({"role": message.role, "content": content})
        return {"model": self.endpoint.model, "messages": messages}

    def complete(self, request: AgentRequest) -> AgentResponse:
        url = self.endpoint.base_url.rstrip("/") + "/chat/completions"
        body = self.payload(request)
        last_error = "no attempt made"
        for attempt in range(self.endpoint.max_retries + 1):
            self._limiter.wait()
            try:
                response = self._client.post(url, json=body, headers=self._headers())
                if response.status_code in self.RETRY_STATUS:
                    last_error = f"HTTP {response.status_code}"
                elif response.status_code >= 400:
                    raise AgentError(f"{request.agent_role}: HTTP {response.status_code} from {url}", code="endpoint_failure", raw_text=response.text)
                else:
                    data = response.json()
                    return AgentResponse(text=data["choices"][0]["message"]["content"])
            except httpx.HTTPError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise AgentError(f"{request.agent_role}: unexpected response shape: {exc}", code="endpoint_failure")
            if attempt < self.endpoint.max_retries:
                wait = self.endpoint.retry_base_delay * 2 ** attempt
                logger.warning(f"AGENT_RETRY role={request.agent_role} attempt={attempt + 1} error={last_error!r} wait={wait:.1f}")
                self._sleep(wait)
        raise AgentError(f"{request.agent_role}: endpoint failed after {self.endpoint.max_retries + 1} attempts: {last_error}", code="endpoint_failure")


ScriptStep = Union[str, Callable[[AgentRequest], str]]


class ScriptedAgent:
    """Canned responses keyed by request digest, in call order, or computed from the request.

    A keyed script answers each digest from its own queue; the last answer of a queue
    repeats for further identical requests. Keeps every request it saw.
    """

    def __init__(
        self,
        script: Union[Sequence[ScriptStep], Mapping[str, Union[ScriptStep, Sequence[ScriptStep]]], Callable[[AgentRequest], str]],
        name: str = "scripted",
    ):
        self.name = name
        self._fn: Optional[Callable[[AgentRequest], str]] = None
        self._keyed: Optional[dict[str, deque[ScriptStep]]] = None
        self._steps: deque[ScriptStep] = deque()
        if isinstance(script, Mapping):
            self._keyed = {
                digest: deque([steps] if isinstance(steps, str) or callable(steps) else steps)
                for digest, steps in script.items()
            }
        elif callable(script):
            self._fn = script
        else:
            self._steps = deque(script)
        self.requests: list[AgentRequest] = []
        self._lock = threading.Lock()

    @classmethod
    def keyed(cls, pairs: Iterable[tuple[AgentRequest, ScriptStep]], name: str = "scripted") -> ScriptedAgent:
        """Build a keyed script from (request, answer) pairs; repeated requests queue their answers."""
        script: dict[str, list[ScriptStep]] = defaultdict(list)
        for request, step in pairs:
            script[request.digest()].append(step)
        return cls(dict(script), name)

    def complete(self, request: AgentRequest) -> AgentResponse:
        with self._lock:
            self.requests.append(request)
            if self._fn is not None:
                step: ScriptStep = self._fn
            elif self._keyed is not None:
                queue = self._keyed.get(request.digest())
                if not queue:
                    raise AgentError(
                        f"{self.name}: no scripted answer for {request.agent_role} request {request.digest()[:12]}",
                        code="script_miss",
                    )
                step = queue.popleft() if len(queue) > 1 else queue[0]
            elif self._steps:
                step = self._steps.popleft()
            else:
                raise AgentError(f"{self.name}: script exhausted at request {len(self.requests)}", code="script_exhausted")
        text = step(request) if callable(step) else step
        return AgentResponse(text=text)

    @property
    def calls(self) -> int:
        return len(self.requests)


class RecordingAgent:
    """Passes requests through and appends (request hash, request, response) lines to a transcript."""

    def __init__(self, inner: Agent, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def complete(self, request: AgentRequest) -> AgentResponse:
        response = self.inner.complete(request)
        line = json.dumps({
            "request_hash": request.digest(),
            "agent_role": request.agent_role,
            "request": request.model_dump(mode="json"),
            "response": response.text,
        }, sort_keys=True)
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        return response


class ReplayAgent:
    """Answers from a recorded transcript; repeated identical requests replay in recorded order."""

    def __init__(self, path: str | Path):
        self._answers: dict[str, deque[str]] = defaultdict(deque)
        self._lock = threading.Lock()
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise AgentError(f"cannot read transcript {path}: {exc}", code="transcript_unreadable")
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                self._answers[record["request_hash"]].append(record["response"])
            except (ValueError, KeyError) as exc:
                raise AgentError(f"transcript line {number} is malformed: {exc}", code="transcript_unreadable")

    def complete(self, request: AgentRequest) -> AgentResponse:
        digest = request.digest()
        with self._lock:
            queue = self._answers.get(digest)
            if not queue:
                raise AgentError(f"{request.agent_role}: no recorded response for request {digest[:12]}", code="transcript_miss")
            return AgentResponse(text=queue.popleft())


# ---------------------------------------------------------------- payloads

_FENCE_RE = re.compile(r"```([A-Za-z0-9_+-]*)[ \t]*\n(.*?)```", re.DOTALL)


def extract_fenced(text: str, language: str) -> str:
    """Body of the first ```<language> block, else of the first unlabeled block."""
    blocks = _FENCE_RE.findall(text)
    for lang, body in blocks:
        if lang.lower() == language:
            return body
    for lang, body in blocks:
        if not lang:
            return body
    raise AgentError(f"no ```{language} block in response", code="unparseable_output", raw_text=text)


def extract_json(text: str) -> dict:
    """First JSON object in the text, fenced or bare."""
    for lang, body in _FENCE_RE.findall(text):
        if lang.lower() in ("json", ""):
            try:
                value = json.loads(body)
            except ValueError:
                continue
            if isinstance(value, dict):
                return value
    decoder = json.JSONDecoder()
    for match in re.finditer(r"\{", text):
        try:
            value, _ = decoder.raw_decode(text, match.start())
        except ValueError:
            continue
        if isinstance(value, dict):
            return value
    raise AgentError("no JSON object in response", code="unparseable_output", raw_text=text)


def ask(
    agent: Agent,
    request: AgentRequest,
    parse: Callable[[str], T],
    retries: int = 2,
    follow_up: Callable[[Exception], str] = lambda exc: f"Your reply could not be used: {exc}. Answer again in the requested format.",
) -> AgentResponse:
    """Send a request and parse the reply; malformed replies are retried with a follow-up message.

    Returns the accepted reply with its parsed value in ``payload``.
    """
    current = request
    raw = ""
    for attempt in range(retries + 1):
        response = agent.complete(current)
        raw = response.text
        try:
            payload = parse(raw)
        except (ArticraftError, ValidationError, ValueError, KeyError, TypeError) as exc:
            logger.warning(f"AGENT_UNPARSEABLE role={request.agent_role} attempt={attempt + 1} error={exc}")
            current = current.followed_by(raw, follow_up(exc))
            continue
        return response.model_copy(update={"payload": payload})
    raise AgentError(f"{request.agent_role}: no usable reply after {retries + 1} attempts", code="unparseable_output", raw_text=raw)


FAILURE_CASES = ("joint_type", "joint_axis", "joint_origin", "joint_limit")


class CriticIssue(BaseModel):
    line: Optional[int] = None
    message: str


class CriticFeedback(BaseModel):
    realism_rating: int = Field(ge=0, le=10)
    failure_case: Optional[str] = None
    issues: list[CriticIssue] = Field(default_factory=list)
    summary: str = ""

    @field_validator("failure_case")
    @classmethod
    def known_case(cls, value):
        if value in (None, "", "success", "none"):
            return None
        if value not in FAILURE_CASES:
            raise ValueError(f"failure_case must be one of {FAILURE_CASES}")
        return value

    def as_prompt_text(self) -> str:
        lines = [f"Realism rating: {self.realism_rating}/10."]
        if self.failure_case:
            lines.append(f"Failure case: {self.failure_case}.")
        if self.summary:
            lines.append(self.summary)
        for issue in self.issues:
            where = f"line {issue.line}: " if issue.line is not None else ""
            lines.append(f"- {where}{issue.message}")
        return "\n".join(lines)


def parse_critic_feedback(text: str) -> CriticFeedback:
    return CriticFeedback.model_validate(extract_json(text))


# ---------------------------------------------------------------- embeddings

class EndpointEmbedder:
    """Text embeddings from an `/embeddings` endpoint, unit-normalized."""

    def __init__(self, endpoint: AgentEndpoint, client: Optional[httpx.Client] = None):
        self.endpoint = endpoint
        self._client = client or httpx.Client(timeout=endpoint.timeout)

    def __call__(self, text: str) -> np.ndarray:
        url = self.endpoint.base_url.rstrip("/") + "/embeddings"
        headers = {}
        key = os.environ.get(self.endpoint.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            response = self._client.post(url, json={"model": self.endpoint.model, "input": text}, headers=headers)
            response.raise_for_status()
            vector = np.asarray(response.json()["data"][0]["embedding"], dtype=np.float64)
        except httpx.HTTPError as exc:
            raise AgentError(f"embedding endpoint failed: {exc}", code="endpoint_failure")
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise AgentError(f"unexpected embedding response: {exc}", code="endpoint_failure")
        norm = float(np.linalg.norm(vector))
        if norm < 1e-12:
            raise AgentError("embedding endpoint returned a zero vector", code="endpoint_failure")
        return vector / norm


class FallbackEmbedder:
    """First embedder that knows the text wins (e.g. a query cache, then a live endpoint)."""

    def __init__(self, *embedders: Callable[[str], np.ndarray]):
        self.embedders = embedders

    def __call__(self, text: str) -> np.ndarray:
        errors = []
        for embedder in self.embedders:
            try:
                return embedder(text)
            except ArticraftError as exc:
                errors.append(exc.message)
        raise AgentError(f"no embedder could embed {text!r}: {'; '.join(errors)}", code="endpoint_failure")
