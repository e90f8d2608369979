from __future__ import annotations

import json

import pytest
import requests

from lexkg.llm_gateway import (
    CompletionRequest,
    Gateway,
    GatewayTimeout,
    HttpBackend,
    RetryPolicy,
    ScriptEntry,
    ScriptMiss,
    ScriptParseError,
    ScriptedBackend,
    TransportError,
    load_script,
    request_digest,
    script_from_audit,
    write_script,
)


def req(text="hello", model="test-model"):
    return CompletionRequest(model_id=model, user_text=text)


def make_gateway(backend, tmp_path, attempts=3):
    sleeps = []
    gateway = Gateway(
        backend,
        RetryPolicy(attempts=attempts, backoff_base_s=1.0, request_timeout_s=5.0),
        audit_path=tmp_path / "audit.jsonl",
        sleep=sleeps.append,
    )
    return gateway, sleeps


def read_audit(path):
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]


class TestCompletionRequest:
    def test_empty_user_text_rejected(self):
        with pytest.raises(ValueError):
            CompletionRequest(model_id="m", user_text="")

    def test_negative_temperature_rejected(self):
        with pytest.raises(ValueError):
            CompletionRequest(model_id="m", user_text="x", temperature=-0.1)

    def test_digest_depends_on_content(self):
        a = request_digest(req("one"))
        b = request_digest(req("two"))
        assert a != b
        assert a == request_digest(req("one"))


class TestScriptedBackend:
    def test_identical_requests_identical_text(self, tmp_path):
        entry = ScriptEntry("digest", request_digest(req()), "canned")
        gateway, _ = make_gateway(ScriptedBackend([entry]), tmp_path)
        first = gateway.complete(req())
        second = gateway.complete(req())
        assert first.text == second.text == "canned"

    def test_positional_entries_in_order(self, tmp_path):
        backend = ScriptedBackend(
            [ScriptEntry("position", 0, "r1"), ScriptEntry("position", 1, "r2")]
        )
        gateway, _ = make_gateway(backend, tmp_path)
        assert gateway.complete(req("a")).text == "r1"
        assert gateway.complete(req("b")).text == "r2"

    def test_substring_first_match_wins(self, tmp_path):
        backend = ScriptedBackend(
            [ScriptEntry("substring", "needle", "first"), ScriptEntry("substring", "need", "second")]
        )
        gateway, _ = make_gateway(backend, tmp_path)
        assert gateway.complete(req("has needle inside")).text == "first"
        assert gateway.complete(req("only needs this")).text == "second"

    def test_strict_miss_raises(self, tmp_path):
        gateway, _ = make_gateway(ScriptedBackend([]), tmp_path)
        with pytest.raises(ScriptMiss):
            gateway.complete(req())

    def test_lenient_echoes_input(self, tmp_path):
        gateway, _ = make_gateway(ScriptedBackend([], strict=False), tmp_path)
        assert gateway.complete(req("echo me")).text == "echo me"

    def test_script_miss_not_retried(self, tmp_path):
        gateway, sleeps = make_gateway(ScriptedBackend([]), tmp_path)
        with pytest.raises(ScriptMiss):
            gateway.complete(req())
        assert sleeps == []
        assert gateway.call_count == 1


class TestLoadScript:
    def write(self, tmp_path, lines):
        path = tmp_path / "script.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def entry_line(self, kind, value, response="ok"):
        return json.dumps({"match": {"kind": kind, "value": value}, "response": response})

    def test_two_entries(self, tmp_path):
        path = self.write(
            tmp_path, [self.entry_line("digest", "d1"), self.entry_line("digest", "d2")]
        )
        backend = load_script(path)
        assert backend.entry_count == 2

    def test_duplicate_digest_rejected(self, tmp_path):
        path = self.write(
            tmp_path, [self.entry_line("digest", "same"), self.entry_line("digest", "same")]
        )
        with pytest.raises(ScriptParseError) as err:
            load_script(path)
        assert err.value.line_no == 2

    def test_duplicate_position_rejected(self, tmp_path):
        path = self.write(
            tmp_path, [self.entry_line("position", 0), self.entry_line("position", 0)]
        )
        with pytest.raises(ScriptParseError):
            load_script(path)

    def test_empty_file_strict_misses(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("", encoding="utf-8")
        backend = load_script(path)
        assert backend.entry_count == 0
        gateway, _ = make_gateway(backend, tmp_path)
        with pytest.raises(ScriptMiss):
            gateway.complete(req())

    def test_bad_json_line_numbered(self, tmp_path):
        path = self.write(tmp_path, [self.entry_line("digest", "d1"), "{not json"])
        with pytest.raises(ScriptParseError) as err:
            load_script(path)
        assert err.value.line_no == 2

    def test_unknown_kind_rejected(self, tmp_path):
        path = self.write(tmp_path, [self.entry_line("regex", "x")])
        with pytest.raises(ScriptParseError):
            load_script(path)


class _FailingBackend:
    backend_id = "failing"

    def __init__(self, failures, exc_factory=None, response="recovered"):
        self.failures = failures
        self.calls = 0
        self.exc_factory = exc_factory or (lambda: requests.ConnectionError("refused"))
        self.response = response

    def complete(self, request, timeout_s):
        self.calls += 1
        if self.calls <= self.failures:
            raise self.exc_factory()
        return self.response


class TestRetries:
    def test_transport_error_carries_attempts(self, tmp_path):
        gateway, sleeps = make_gateway(_FailingBackend(failures=99), tmp_path)
        with pytest.raises(TransportError) as err:
            gateway.complete(req())
        assert err.value.attempts == 3
        assert sleeps == [1.0, 2.0]  # exponential backoff between attempts

    def test_recovers_within_budget(self, tmp_path):
        backend = _FailingBackend(failures=2)
        gateway, _ = make_gateway(backend, tmp_path)
        assert gateway.complete(req()).text == "recovered"
        assert backend.calls == 3

    def test_timeout_surfaces_as_gateway_timeout(self, tmp_path):
        backend = _FailingBackend(failures=99, exc_factory=lambda: requests.Timeout("slow"))
        gateway, _ = make_gateway(backend, tmp_path)
        with pytest.raises(GatewayTimeout) as err:
            gateway.complete(req())
        assert err.value.attempts == 3


class TestAuditLog:
    def test_every_call_logged_including_failures(self, tmp_path):
        entry = ScriptEntry("digest", request_digest(req("known")), "yes")
        gateway, _ = make_gateway(ScriptedBackend([entry]), tmp_path)
        gateway.complete(req("known"))
        with pytest.raises(ScriptMiss):
            gateway.complete(req("unknown"))
        records = read_audit(tmp_path / "audit.jsonl")
        assert len(records) == 2 == gateway.call_count
        assert "response" in records[0]
        assert "error" in records[1]

    def test_record_replay_round_trip(self, tmp_path):
        script = [
            ScriptEntry("substring", "alpha", "response-a"),
            ScriptEntry("substring", "beta", "response-b"),
        ]
        gateway, _ = make_gateway(ScriptedBackend(script), tmp_path)
        first = [gateway.complete(req(t)).text for t in ("alpha text", "beta text")]

        replay_entries = script_from_audit(tmp_path / "audit.jsonl")
        replay_path = tmp_path / "replay.jsonl"
        write_script(replay_entries, replay_path)
        replay_gateway, _ = make_gateway(load_script(replay_path), tmp_path / "other")
        (tmp_path / "other").mkdir(exist_ok=True)
        second = [replay_gateway.complete(req(t)).text for t in ("alpha text", "beta text")]
        assert first == second


class _FakeResponse:
    def __init__(self, payload, status=200):
        self._payload = payload
        self.status_code = status

    def raise_for_status(self):
        if self.status_code >= 400:
            raise requests.HTTPError(f"status {self.status_code}")

    def json(self):
        return self._payload


class _FakeSession:
    def __init__(self, payload):
        self.payload = payload
        self.posted = []

    def post(self, url, json=None, timeout=None):
        self.posted.append({"url": url, "json": json, "timeout": timeout})
        return _FakeResponse(self.payload)


class TestHttpBackend:
    def test_wire_format_and_local_style_response(self, tmp_path):
        session = _FakeSession({"message": {"content": "from model"}})
        backend = HttpBackend("http://host:11434", session=session)
        gateway, _ = make_gateway(backend, tmp_path)
        response = gateway.complete(
            CompletionRequest(model_id="m1", user_text="hi", system_text="sys", temperature=0.0)
        )
        assert response.text == "from model"
        sent = session.posted[0]
        assert sent["url"] == "http://host:11434/api/chat"
        assert sent["json"]["model"] == "m1"
        assert sent["json"]["stream"] is False
        assert sent["json"]["temperature"] == 0.0
        assert sent["json"]["messages"] == [
            {"role": "system", "content": "sys"},
            {"role": "user", "content": "hi"},
        ]

    def test_openai_style_response(self, tmp_path):
        session = _FakeSession({"choices": [{"message": {"content": "alt shape"}}]})
        backend = HttpBackend("http://host/", path="/v1/chat/completions", session=session)
        gateway, _ = make_gateway(backend, tmp_path)
        assert gateway.complete(req()).text == "alt shape"
        assert session.posted[0]["url"] == "http://host/v1/chat/completions"
