"""Backend abstraction: digests, scripted replay, recording, retries."""

from __future__ import annotations

import json

import httpx
import pytest

from evojudge.backends import (
    BackendConfig,
    Decode,
    Message,
    ModelRequest,
    ModelResponse,
    Part,
    RecordingBackend,
    RemoteBackend,
    ScriptedBackend,
    StructuredOutputError,
    TransportError,
    UnscriptedRequestError,
    build_backend,
    canonical_request,
    extract_payload,
    parse_structured_text,
    payload_block,
    request_digest,
    validate_structured,
)


def _request(text="hello", schema=None, **decode):
    return ModelRequest(
        role_hint="subagent",
        messages=(Message(role="user", parts=(Part.of_text(text),)),),
        response_schema=schema,
        decode=Decode(**decode),
    )


# ---------------------------------------------------------------------------
# Digests


def test_digest_is_deterministic_and_content_sensitive():
    assert request_digest(_request("a")) == request_digest(_request("a"))
    assert request_digest(_request("a")) != request_digest(_request("b"))
    assert request_digest(_request("a", seed=1)) != request_digest(_request("a", seed=2))


def test_digest_ignores_schema_key_order():
    a = _request("x", schema={"alpha": "int", "beta": "str"})
    b = _request("x", schema={"beta": "str", "alpha": "int"})
    assert request_digest(a) == request_digest(b)


def test_digest_covers_image_parts():
    img1 = ModelRequest(role_hint="subagent", messages=(
        Message(role="user", parts=(Part.of_text("t"), Part.of_image(b"one"))),))
    img2 = ModelRequest(role_hint="subagent", messages=(
        Message(role="user", parts=(Part.of_text("t"), Part.of_image(b"two"))),))
    assert request_digest(img1) != request_digest(img2)


def test_canonical_request_is_json_serializable():
    req = ModelRequest(role_hint="orchestrator", messages=(
        Message(role="user", parts=(Part.of_text("t"), Part.of_image(b"img", "image/png"))),),
        response_schema={"a": "int"})
    json.dumps(canonical_request(req))


# ---------------------------------------------------------------------------
# Structured output


def test_parse_structured_text_plain_and_fenced():
    schema = {"score": "int"}
    assert parse_structured_text('{"score": 4}', schema) == {"score": 4}
    fenced = 'Here you go:\n```json\n{"score": 4}\n```\nthanks'
    assert parse_structured_text(fenced, schema) == {"score": 4}


def test_parse_structured_text_rejects_bad_payloads():
    with pytest.raises(StructuredOutputError):
        parse_structured_text("no json here", {"a": "int"})
    with pytest.raises(StructuredOutputError):
        parse_structured_text('{"a": "not-int"}', {"a": "int"})
    with pytest.raises(StructuredOutputError):
        parse_structured_text('{"b": 1}', {"a": "int"})


def test_validate_structured_list_types():
    validate_structured({"xs": [1, 2]}, {"xs": "list[int]"}, "")
    with pytest.raises(StructuredOutputError):
        validate_structured({"xs": [1, True]}, {"xs": "list[int]"}, "")
    with pytest.raises(StructuredOutputError):
        validate_structured({"xs": [1, "a"]}, {"xs": "list[int]"}, "")


def test_payload_block_round_trip():
    payload = {"call": "rubric", "xs": [1, 2]}
    req = _request("Do the thing.\n" + payload_block(payload))
    assert extract_payload(req) == payload


# ---------------------------------------------------------------------------
# Scripted and recording backends


def test_scripted_backend_replays_and_rejects_unscripted():
    req = _request("scripted", schema={"score": "int"})
    backend = ScriptedBackend(entries={})
    backend.add(req, ModelResponse(text='{"score": 3}'))
    first = backend.complete(req)
    second = backend.complete(req)
    assert first.structured == {"score": 3} == second.structured
    with pytest.raises(UnscriptedRequestError):
        backend.complete(_request("never recorded"))


def test_recording_then_replay_is_identical(tmp_path):
    class Doubler(ScriptedBackend):
        def _complete(self, request):
            return ModelResponse(text=request.text_content().upper())

    transcript = tmp_path / "transcript.jsonl"
    with RecordingBackend(Doubler(), transcript) as recorder:
        live = [recorder.complete(_request(t)).text for t in ("a", "b", "c")]

    replay = ScriptedBackend(transcript_path=transcript)
    assert [replay.complete(_request(t)).text for t in ("a", "b", "c")] == live
    assert live == ["A", "B", "C"]


# ---------------------------------------------------------------------------
# Remote backend retry policy


class FakePost:
    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = 0

    def __call__(self, *args, **kwargs):
        self.calls += 1
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def _ok_response(text='{"score": 4}'):
    return httpx.Response(
        200, json={"choices": [{"message": {"content": text}}],
                   "usage": {"prompt_tokens": 1, "completion_tokens": 2}},
        request=httpx.Request("POST", "http://test"),
    )


def _remote():
    return RemoteBackend(endpoint="http://test/v1/chat", model="m", backoff_base=0.0)


def test_remote_retries_transport_errors_then_succeeds(monkeypatch):
    fake = FakePost([httpx.ConnectError("down"), httpx.ConnectError("down"), _ok_response()])
    monkeypatch.setattr(httpx, "post", fake)
    response = _remote().complete(_request("x", schema={"score": "int"}))
    assert fake.calls == 3
    assert response.structured == {"score": 4}
    assert response.usage == {"input_tokens": 1, "output_tokens": 2}


def test_remote_gives_up_after_three_attempts(monkeypatch):
    fake = FakePost([httpx.ConnectError("down")] * 3)
    monkeypatch.setattr(httpx, "post", fake)
    with pytest.raises(TransportError) as err:
        _remote().complete(_request("x"))
    assert err.value.attempts == 3
    assert fake.calls == 3


def test_remote_retries_5xx_but_not_4xx(monkeypatch):
    server_err = httpx.Response(503, text="overloaded",
                                request=httpx.Request("POST", "http://test"))
    fake = FakePost([server_err, _ok_response()])
    monkeypatch.setattr(httpx, "post", fake)
    assert _remote().complete(_request("x")).text == '{"score": 4}'
    assert fake.calls == 2

    bad_request = httpx.Response(400, text="nope",
                                 request=httpx.Request("POST", "http://test"))
    fake = FakePost([bad_request])
    monkeypatch.setattr(httpx, "post", fake)
    with pytest.raises(Exception) as err:
        _remote().complete(_request("x"))
    assert "400" in str(err.value)
    assert fake.calls == 1


def test_remote_surfaces_schema_failure_without_retry(monkeypatch):
    fake = FakePost([_ok_response(text="not json")])
    monkeypatch.setattr(httpx, "post", fake)
    with pytest.raises(StructuredOutputError):
        _remote().complete(_request("x", schema={"score": "int"}))
    assert fake.calls == 1


# ---------------------------------------------------------------------------
# Configuration


def test_backend_config_env_overrides(tmp_path, monkeypatch):
    cfg_path = tmp_path / "backend.yaml"
    cfg_path.write_text("kind: synthetic_oracle\noracle_seed: 3\n", encoding="utf-8")
    config = BackendConfig.from_file(cfg_path)
    assert config.kind == "synthetic_oracle"
    assert config.oracle_seed == 3

    monkeypatch.setenv("EVOJUDGE_ORACLE_SEED", "9")
    assert BackendConfig.from_file(cfg_path).oracle_seed == 9

    backend = build_backend(config)
    assert backend.backend_id == "synthetic_oracle"


def test_backend_config_rejects_incomplete_setups():
    with pytest.raises(ValueError):
        BackendConfig(kind="remote")
    with pytest.raises(ValueError):
        BackendConfig(kind="scripted")
    with pytest.raises(ValueError):
        BackendConfig(kind="imaginary")
