"""Chat-completion access to remote LLM endpoints and scripted stand-ins.

Every agent call in the pipeline goes through :func:`complete` (or
:func:`complete_parsed`, which adds the re-ask-on-bad-output policy).
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, TypeVar

import httpx

from .errors import (
    BackendExhausted,
    NoJsonFound,
    OutputFormatError,
    ParseError,
    ProviderError,
    ScriptExhausted,
)
from .transport import RETRYABLE_STATUS, Backoff, TransportFailure, bearer_headers, post_json

log = logging.getLogger(__name__)

T = TypeVar("T")

BACKEND_KINDS = ("remote", "scripted")
JSON_ONLY = "Respond again with only valid JSON and no other text."


@dataclass(frozen=True)
class BackendSpec:
    name: str
    kind: str = "remote"
    endpoint: str = ""
    model: str = ""
    temperature: float = 0.2
    max_retries: int = 3
    api_key_env: str | None = None
    timeout: float = 120.0
    max_in_flight: int = 4
    backoff_base: float = 1.0
    seed: int = 0
    script: dict[str, Any] | None = None
    cycle: bool = False

    def __post_init__(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"backend {self.name!r}: unknown kind {self.kind!r}")
        if self.temperature < 0:
            raise ValueError(f"backend {self.name!r}: temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError(f"backend {self.name!r}: max_retries must be >= 0")
        if self.kind == "remote" and not (self.endpoint and self.model):
            raise ValueError(f"backend {self.name!r}: remote backends need endpoint and model")


@dataclass(frozen=True)
class ChatRequest:
    user: str
    system: str | None = None
    temperature_override: float | None = None
    # ``tag`` names the agent role; ``stream`` identifies a sequential call
    # chain (e.g. "<issue_id>/track-1"). Scripted backends key responses on both.
    tag: str = "default"
    stream: str = ""

    def __post_init__(self) -> None:
        if not self.user or not self.user.strip():
            raise ValueError("chat request needs a non-empty user message")

    def messages(self) -> list[dict[str, str]]:
        msgs = []
        if self.system:
            msgs.append({"role": "system", "content": self.system})
        msgs.append({"role": "user", "content": self.user})
        return msgs


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend: str
    latency_ms: int
    attempt: int


class Backend:
    def __init__(self, spec: BackendSpec):
        self.spec = spec
        self.calls = 0
        self._count_lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(max(1, spec.max_in_flight))

    @property
    def name(self) -> str:
        return self.spec.name

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._count_lock:
            self.calls += 1
        with self._slots:
            start = time.perf_counter()
            text, attempt = self._complete(request)
            latency = int((time.perf_counter() - start) * 1000)
        return ChatResponse(text=text, backend=self.name, latency_ms=latency, attempt=attempt)

    def _complete(self, request: ChatRequest) -> tuple[str, int]:
        raise NotImplementedError


class RemoteBackend(Backend):
    """OpenAI-style ``POST {endpoint}/chat/completions`` client."""

    def __init__(
        self,
        spec: BackendSpec,
        *,
        sleep: Callable[[float], None] = time.sleep,
        client: httpx.Client | None = None,
    ):
        super().__init__(spec)
        self._sleep = sleep
        self._client = client
        self._backoff = Backoff(base=spec.backoff_base, seed=spec.seed)

    @property
    def url(self) -> str:
        return self.spec.endpoint.rstrip("/") + "/chat/completions"

    def request_body(self, request: ChatRequest) -> dict:
        temp = request.temperature_override
        return {
            "model": self.spec.model,
            "messages": request.messages(),
            "temperature": self.spec.temperature if temp is None else temp,
        }

    def _complete(self, request: ChatRequest) -> tuple[str, int]:
        try:
            payload, attempt = post_json(
                self.url,
                self.request_body(request),
                headers=bearer_headers(self.spec.api_key_env),
                max_retries=self.spec.max_retries,
                backoff=self._backoff,
                timeout=self.spec.timeout,
                sleep=self._sleep,
                client=self._client,
            )
        except TransportFailure as exc:
            if exc.status is not None and exc.status not in RETRYABLE_STATUS:
                raise ProviderError(exc.status, exc.body) from None
            raise BackendExhausted(self.name, exc.attempts, str(exc)) from None
        try:
            content = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProviderError(200, f"unexpected response shape: {json.dumps(payload)[:200]}") from None
        return content or "", attempt


class ScriptedBackend(Backend):
    """Deterministic response table standing in for a live model.

    The table maps a request tag to an ordered list of responses. A key may
    be narrowed to a stream as ``"tag:qualifier"``; the qualifier matches the
    whole stream or any ``/``-separated segment of it, with the most specific
    key winning. Responses are consumed per ``(tag, stream)`` pair, so the
    output is the same whatever order concurrent streams arrive in. With
    ``cycle`` set, an exhausted list wraps around.
    """

    def __init__(self, spec: BackendSpec):
        super().__init__(spec)
        self.table: dict[str, list[Any]] = {
            k: v if isinstance(v, list) else [v] for k, v in (spec.script or {}).items() if not k.startswith("_")
        }
        self.cycle = spec.cycle or bool((spec.script or {}).get("_cycle", False))
        self._counters: dict[tuple[str, str], int] = {}
        self._table_lock = threading.Lock()
        self.log: list[ChatRequest] = []

    def _lookup(self, request: ChatRequest) -> tuple[str, list[Any]] | None:
        keys = []
        if request.stream:
            keys.append(f"{request.tag}:{request.stream}")
            keys.extend(f"{request.tag}:{seg}" for seg in reversed(request.stream.split("/")) if seg)
        keys.append(request.tag)
        for key in keys:
            if key in self.table:
                return key, self.table[key]
        return None

    def _complete(self, request: ChatRequest) -> tuple[str, int]:
        with self._table_lock:
            self.log.append(request)
            found = self._lookup(request)
            if found is None or not found[1]:
                raise ScriptExhausted(f"{self.name}: no scripted response for tag {request.tag!r}")
            key, responses = found
            counter = (request.tag, request.stream)
            i = self._counters.get(counter, 0)
            self._counters[counter] = i + 1
        if i >= len(responses):
            if not self.cycle:
                raise ScriptExhausted(
                    f"{self.name}: script {key!r} has {len(responses)} response(s), call #{i + 1} requested"
                )
            i %= len(responses)
        value = responses[i]
        return (value if isinstance(value, str) else json.dumps(value, ensure_ascii=False)), 1


def load_script(path: str | Path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        table = json.load(fh)
    if not isinstance(table, dict):
        raise ValueError(f"{path}: scripted backend file must be a JSON object")
    return table


def make_backend(spec: BackendSpec, **kwargs) -> Backend:
    if spec.kind == "scripted":
        return ScriptedBackend(spec)
    return RemoteBackend(spec, **kwargs)


def complete(backend: Backend, request: ChatRequest) -> ChatResponse:
    return backend.complete(request)


# -- response cleaning ----------------------------------------------------------

_THINK_BLOCK = re.compile(r"<think>.*?</think>", re.S | re.I)
_THINK_CLOSE = re.compile(r"</think>", re.I)
_FENCE = re.compile(r"```[A-Za-z0-9_+\-]*[ \t]*\n?")


def sanitize(text: str) -> str:
    """Drop ``<think>`` blocks and Markdown fence markers, then trim. Idempotent."""
    prev = None
    while text != prev:
        prev = text
        text = _THINK_BLOCK.sub("", text)
        closes = list(_THINK_CLOSE.finditer(text))
        if closes:
            # reasoning trace whose opening tag was cut off
            text = text[closes[-1].end() :]
        text = _FENCE.sub("", text)
        text = text.strip()
    return text


def _balanced_span(text: str, start: int) -> int | None:
    """End index (exclusive) of the bracket group opening at ``start``."""
    depth = 0
    in_str = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_str:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch in "{[":
            depth += 1
        elif ch in "}]":
            depth -= 1
            if depth == 0:
                return i + 1
    return None


_TRAILING_COMMA = re.compile(r",\s*([\]}])")
_FAIL = object()


def _lenient_decode(text: str, start: int) -> Any:
    end = _balanced_span(text, start)
    if end is None:
        return _FAIL
    try:
        return json.loads(_TRAILING_COMMA.sub(r"\1", text[start:end]))
    except json.JSONDecodeError:
        return _FAIL


def extract_json(text: str, expect: type | tuple[type, ...] | None = None) -> Any:
    """Parse the first JSON object or array embedded in ``text``.

    ``expect`` skips candidates of the wrong type (e.g. a bracketed citation
    before the real object). Raises :class:`NoJsonFound` when nothing looks
    like JSON and :class:`ParseError` when candidates exist but none parse.
    """
    clean = sanitize(text)
    decoder = json.JSONDecoder()
    first_error: tuple[int, str] | None = None
    for match in re.finditer(r"[\[{]", clean):
        pos = match.start()
        try:
            value, _ = decoder.raw_decode(clean, pos)
        except json.JSONDecodeError as exc:
            value = _lenient_decode(clean, pos)
            if value is _FAIL:
                if first_error is None:
                    first_error = (pos, exc.msg)
                continue
        if expect is not None and not isinstance(value, expect):
            continue
        return value
    if first_error is not None:
        raise ParseError(*first_error)
    raise NoJsonFound("no JSON object or array in response")


# -- repair policy ----------------------------------------------------------------


def repair_request(request: ChatRequest, prior: str, error: Exception, instruction: str) -> ChatRequest:
    user = (
        f"{request.user}\n\n"
        f"Your previous reply could not be used ({error}).\n"
        f"Previous reply:\n{prior}\n\n"
        f"{instruction}"
    )
    return ChatRequest(
        user=user,
        system=request.system,
        temperature_override=request.temperature_override,
        tag=request.tag,
        stream=request.stream,
    )


@dataclass
class Parsed:
    value: Any
    response: ChatResponse
    repairs: list[str] = field(default_factory=list)


def complete_parsed(
    backend: Backend,
    request: ChatRequest,
    parse: Callable[[str], T],
    *,
    instruction: str = JSON_ONLY,
    max_repairs: int = 2,
) -> Parsed:
    """Complete and parse; on :class:`OutputFormatError` re-ask up to ``max_repairs`` times.

    Each re-ask goes to the same backend and quotes the rejected reply.
    The last parse error propagates once the repairs are spent.
    """
    response = backend.complete(request)
    repairs: list[str] = []
    while True:
        try:
            return Parsed(parse(response.text), response, repairs)
        except OutputFormatError as exc:
            if len(repairs) >= max_repairs:
                raise
            log.info("%s/%s: unusable reply from %s (%s); re-asking", request.tag, request.stream, backend.name, exc)
            repairs.append(f"{type(exc).__name__}: {exc}")
            response = backend.complete(repair_request(request, response.text, exc, instruction))
