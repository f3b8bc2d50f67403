import json

import httpx
import pytest

from clinbench.backends import (
    BackendError,
    BackendTransportError,
    ChatCompletionsBackend,
    DoctorBackend,
    LanguageModel,
    RateLimiter,
    ScriptedDoctor,
    ScriptedLM,
    SequenceLM,
    call_with_retry,
    load_doctor_backends,
)
from clinbench.prompts import placeholders, render, template
from clinbench.transcript import Message

PROMPTS = ("doctor", "emotion", "effort", "responder", "closure", "dismissal", "committee", "scorer")


def test_retry_only_transient():
    lm = SequenceLM([BackendTransportError("a"), "ok"])
    assert call_with_retry(lm.complete, "p") == "ok" and len(lm.prompts) == 2
    lm = SequenceLM([BackendError("bad request"), "ok"])
    with pytest.raises(BackendError):
        call_with_retry(lm.complete, "p")
    assert len(lm.prompts) == 1
    lm = SequenceLM([BackendTransportError("a")] * 3 + ["late"])
    with pytest.raises(BackendTransportError):
        call_with_retry(lm.complete, "p", retries=2)
    assert len(lm.prompts) == 3


def test_scripted_models_follow_protocols():
    assert isinstance(ScriptedLM("x"), LanguageModel)
    assert isinstance(ScriptedDoctor("d"), DoctorBackend)
    lm = ScriptedLM(str.upper)
    assert lm.complete("abc") == "ABC" and lm.calls == 1
    with pytest.raises(BackendError, match="exhausted"):
        SequenceLM([]).complete("p")


def test_scripted_doctor_counts_turns_from_history():
    doc = ScriptedDoctor("d", {1: "second"}, default="q{turn}")
    hist = [Message("doctor", "a", 0), Message("patient", "b", 1)]
    assert doc.complete([], "sys") == "q1"
    assert doc.complete(hist, "sys") == "second"
    assert doc.complete(hist * 2, "sys") == "q3"


def test_rate_limiter_disabled_is_free():
    RateLimiter(None).acquire()
    assert RateLimiter(4).interval == 0.25


def _client(handler, **kw):
    return ChatCompletionsBackend("m", "https://llm.example/v1", transport=httpx.MockTransport(handler), **kw)


def _ok(text="hello"):
    return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})


def test_chat_payload_and_roles(monkeypatch):
    seen = []

    def handler(request):
        seen.append((request.url.path, request.headers.get("authorization"), json.loads(request.content)))
        return _ok()

    monkeypatch.setenv("TEST_KEY", "sekrit")
    backend = _client(handler, api_key_env="TEST_KEY", params={"temperature": 0.2}, model="gpt-x")
    hist = [Message("doctor", "Hi", 0), Message("patient", "Hello", 1)]
    assert backend.complete(hist, "be kind") == "hello"
    path, auth, body = seen[0]
    assert path == "/v1/chat/completions" and auth == "Bearer sekrit"
    assert body["model"] == "gpt-x" and body["temperature"] == 0.2
    assert [m["role"] for m in body["messages"]] == ["system", "assistant", "user"]


def test_chat_retries_429_but_not_400():
    calls = []

    def flaky(request):
        calls.append(1)
        return httpx.Response(429) if len(calls) == 1 else _ok("fine")

    assert _client(flaky).complete([], "s") == "fine" and len(calls) == 2

    bad = []

    def reject(request):
        bad.append(1)
        return httpx.Response(400, text="no")

    with pytest.raises(BackendError, match="400"):
        _client(reject).complete([], "s")
    assert len(bad) == 1


def test_chat_malformed_body_and_missing_key(monkeypatch):
    with pytest.raises(BackendError, match="malformed"):
        _client(lambda r: httpx.Response(200, json={"nope": 1})).complete([], "s")
    monkeypatch.delenv("ABSENT_KEY", raising=False)
    with pytest.raises(BackendError, match="ABSENT_KEY"):
        _client(lambda r: _ok(), api_key_env="ABSENT_KEY").complete([], "s")


def test_single_prompt_view():
    lm = _client(lambda r: _ok(json.loads(r.content)["messages"][0]["content"][::-1])).as_language_model()
    assert lm.complete("abc") == "cba"


def test_load_doctor_backends(tmp_path):
    (tmp_path / "fx.json").write_text(json.dumps({"replies": {"0": "Hi"}, "default": "More?"}))
    spec = [
        {"model_id": "a", "kind": "scripted", "fixture": "fx.json"},
        {"model_id": "b", "replies": {"1": "Bye"}},
        {"model_id": "c", "kind": "chat", "base_url": "https://x/v1", "params": {"temperature": 1}},
    ]
    (tmp_path / "models.json").write_text(json.dumps(spec))
    a, b, c = load_doctor_backends(tmp_path / "models.json")
    assert a.complete([], "") == "Hi" and b.replies == {1: "Bye"} and c.params == {"temperature": 1}
    (tmp_path / "dup.json").write_text(json.dumps(spec[:2] + [spec[1]]))
    with pytest.raises(ValueError, match="duplicate"):
        load_doctor_backends(tmp_path / "dup.json")
    (tmp_path / "odd.json").write_text(json.dumps([{"model_id": "z", "kind": "carrier-pigeon"}]))
    with pytest.raises(ValueError, match="carrier-pigeon"):
        load_doctor_backends(tmp_path / "odd.json")


@pytest.mark.parametrize("name", PROMPTS)
def test_templates_render_without_leftovers(name):
    text = render(name, **{p: f"<{p}>" for p in placeholders(name)})
    assert "{{" not in text and "}}" not in text
    assert "—" not in template(name)


def test_render_requires_every_value():
    with pytest.raises(KeyError):
        render("doctor", patient_name="Jane")
