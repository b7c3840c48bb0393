from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from review_advisor.errors import BackendExhausted, NoJsonFound, ParseError, ProviderError, ScriptExhausted
from review_advisor.gateway import (
    BackendSpec,
    ChatRequest,
    RemoteBackend,
    complete_parsed,
    extract_json,
    make_backend,
    sanitize,
)
from review_advisor.transport import Backoff, TransportFailure, post_json

from conftest import scripted


# -- sanitize / extract_json ---------------------------------------------------------


def test_sanitize_strips_think_and_fences():
    assert sanitize("<think>hmm {x}</think>\n```json\n{\"a\": 1}\n```") == '{"a": 1}'
    assert sanitize("reasoning cut off</think> answer") == "answer"


@given(st.text(max_size=60))
def test_sanitize_idempotent(text):
    once = sanitize(text)
    assert sanitize(once) == once


@pytest.mark.parametrize(
    "text, expected",
    [
        ('{"a": 1}', {"a": 1}),
        ('Sure! Here it is: {"a": [1, 2]} hope that helps', {"a": [1, 2]}),
        ('```json\n{"a": 1,}\n```', {"a": 1}),
        ("<think>{bad</think>[1, 2, 3]", [1, 2, 3]),
        ('{"s": "brace } inside"}', {"s": "brace } inside"}),
    ],
)
def test_extract_json(text, expected):
    assert extract_json(text) == expected


def test_extract_json_expect_skips_wrong_type():
    assert extract_json('see [1] then {"k": 2}', expect=dict) == {"k": 2}


def test_extract_json_errors():
    with pytest.raises(NoJsonFound):
        extract_json("no json here")
    with pytest.raises(ParseError):
        extract_json('{"a": }')


@given(st.dictionaries(st.text(max_size=5), st.integers(), max_size=4), st.text(alphabet="abc .!", max_size=20))
def test_extract_json_round_trips_with_prose(obj, prose):
    assert extract_json(f"{prose}\n```json\n{json.dumps(obj)}\n```\n{prose}", expect=dict) == obj


# -- scripted backend --------------------------------------------------------------------


def test_scripted_lookup_precedence_and_counters():
    b = scripted({"rec": ["generic"], "rec:track-2": ["segment"], "rec:x/track-2": ["exact"]})
    assert b.complete(ChatRequest("u", tag="rec", stream="x/track-2")).text == "exact"
    assert b.complete(ChatRequest("u", tag="rec", stream="y/track-2")).text == "segment"
    assert b.complete(ChatRequest("u", tag="rec", stream="y/track-1")).text == "generic"
    with pytest.raises(ScriptExhausted):
        b.complete(ChatRequest("u", tag="rec", stream="y/track-1"))
    with pytest.raises(ScriptExhausted):
        b.complete(ChatRequest("u", tag="other"))


def test_scripted_cycle_and_json_values():
    b = scripted({"_cycle": True, "j": [{"a": 1}, "two"]})
    got = [b.complete(ChatRequest("u", tag="j")).text for _ in range(3)]
    assert got == ['{"a": 1}', "two", '{"a": 1}']
    assert b.calls == 3 and len(b.log) == 3


def test_scripted_is_order_independent_under_threads():
    table = {"t": ["a", "b", "c"]}
    streams = [f"s{i}" for i in range(20)]

    def drive(backend):
        def one(s):
            return [backend.complete(ChatRequest("u", tag="t", stream=s)).text for _ in range(3)]

        with ThreadPoolExecutor(8) as pool:
            return dict(zip(streams, pool.map(one, streams)))

    assert drive(scripted(table)) == drive(scripted(table)) == {s: ["a", "b", "c"] for s in streams}


def test_chat_request_validation_and_messages():
    with pytest.raises(ValueError):
        ChatRequest("  ")
    assert ChatRequest("hi", system="sys").messages() == [
        {"role": "system", "content": "sys"},
        {"role": "user", "content": "hi"},
    ]


def test_backend_spec_validation():
    with pytest.raises(ValueError):
        BackendSpec("x", kind="remote")
    with pytest.raises(ValueError):
        BackendSpec("x", kind="grpc")
    assert make_backend(BackendSpec("s", kind="scripted", script={})).name == "s"


# -- repair policy -----------------------------------------------------------------------


def test_complete_parsed_repairs_then_succeeds():
    b = scripted({"t": ["not json", '{"ok": true}']})
    parsed = complete_parsed(b, ChatRequest("question", tag="t"), lambda s: extract_json(s, expect=dict))
    assert parsed.value == {"ok": True}
    assert len(parsed.repairs) == 1
    repair = b.log[1]
    assert "not json" in repair.user and repair.user.startswith("question")


def test_complete_parsed_gives_up_after_max_repairs():
    b = scripted({"t": ["x", "y", "z", '{"late": 1}']})
    with pytest.raises(NoJsonFound):
        complete_parsed(b, ChatRequest("q", tag="t"), extract_json, max_repairs=2)
    assert b.calls == 3


# -- remote backend with an in-process transport -------------------------------------------------


def _client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def _ok(content="hello"):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def test_remote_request_body_and_retry(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "sekrit")
    seen = []
    replies = iter([httpx.Response(503), _ok("fine")])

    def handler(request):
        seen.append(request)
        return next(replies)

    sleeps = []
    spec = BackendSpec("m", endpoint="http://llm/v1/", model="mod", temperature=0.7, api_key_env="TEST_KEY")
    backend = RemoteBackend(spec, sleep=sleeps.append, client=_client(handler))
    resp = backend.complete(ChatRequest("hi", temperature_override=0.0))
    assert (resp.text, resp.attempt) == ("fine", 2)
    assert str(seen[0].url) == "http://llm/v1/chat/completions"
    assert json.loads(seen[0].content) == {"model": "mod", "messages": [{"role": "user", "content": "hi"}], "temperature": 0.0}
    assert seen[0].headers["authorization"] == "Bearer sekrit"
    assert len(sleeps) == 1 and 1.0 <= sleeps[0] <= 1.1


def test_remote_exhaustion_and_client_errors():
    spec = BackendSpec("m", endpoint="http://llm", model="mod", max_retries=2)
    b = RemoteBackend(spec, sleep=lambda s: None, client=_client(lambda r: httpx.Response(429)))
    with pytest.raises(BackendExhausted) as exc:
        b.complete(ChatRequest("hi"))
    assert exc.value.attempts == 3
    b = RemoteBackend(spec, sleep=lambda s: None, client=_client(lambda r: httpx.Response(401, text="denied")))
    with pytest.raises(ProviderError) as exc:
        b.complete(ChatRequest("hi"))
    assert exc.value.status == 401
    b = RemoteBackend(spec, sleep=lambda s: None, client=_client(lambda r: httpx.Response(200, json={"x": 1})))
    with pytest.raises(ProviderError):
        b.complete(ChatRequest("hi"))


def test_post_json_transport_error_retries():
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) == 1:
            raise httpx.ConnectError("refused")
        return httpx.Response(200, json={"ok": 1})

    body, attempt = post_json(
        "http://x", {}, headers={}, max_retries=1, backoff=Backoff(), sleep=lambda s: None, client=_client(handler)
    )
    assert body == {"ok": 1} and attempt == 2
    with pytest.raises(TransportFailure) as exc:
        post_json(
            "http://x", {}, headers={}, max_retries=0, backoff=Backoff(), sleep=lambda s: None,
            client=_client(lambda r: (_ for _ in ()).throw(httpx.ConnectError("down"))),
        )
    assert exc.value.status is None and exc.value.attempts == 1


def test_backoff_is_exponential_and_seeded():
    a, b = Backoff(base=1.0, jitter=0.1, seed=5), Backoff(base=1.0, jitter=0.1, seed=5)
    delays = [a.delay(i) for i in (1, 2, 3)]
    assert delays == [b.delay(i) for i in (1, 2, 3)]
    for i, d in enumerate(delays, start=1):
        assert 2 ** (i - 1) <= d <= 1.1 * 2 ** (i - 1)
