"""Uniform chat-completion interface over a live HTTP endpoint or a
deterministic scripted mock, with retry, timeout and audit logging.

Every call, including failures, appends exactly one JSON line to the audit
log, and any audit log can be converted back into a replay script, so a
live run is always convertible into a deterministic regression fixture.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import requests

DEFAULT_ENDPOINT_PATH = "/api/chat"


class GatewayError(Exception):
    pass


class TransportError(GatewayError):
    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class GatewayTimeout(TransportError):
    pass


class ScriptMiss(GatewayError):
    pass


class ScriptParseError(GatewayError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class CompletionRequest:
    model_id: str
    user_text: str
    system_text: str | None = None
    temperature: float = 0.0
    max_output_tokens: int | None = None

    def __post_init__(self) -> None:
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    latency: float
    backend_id: str


def request_digest(request: CompletionRequest) -> str:
    canonical = json.dumps(
        {
            "model": request.model_id,
            "system": request.system_text,
            "temperature": request.temperature,
            "user": request.user_text,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff_base_s: float = 1.0
    request_timeout_s: float = 120.0


# ---------------------------------------------------------------------------
# backends


class HttpBackend:
    """POSTs ``{model, messages, temperature, stream: false}`` to a chat API.

    Understands both ``{"message": {"content": ...}}`` and OpenAI-style
    ``{"choices": [{"message": {"content": ...}}]}`` response bodies.
    """

    def __init__(self, base_url: str, path: str = DEFAULT_ENDPOINT_PATH, session=None):
        self.base_url = base_url.rstrip("/")
        self.path = path
        self.backend_id = f"http:{self.base_url}"
        self._session = session or requests.Session()

    def complete(self, request: CompletionRequest, timeout_s: float) -> str:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        payload = {
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "stream": False,
        }
        if request.max_output_tokens is not None:
            payload["max_tokens"] = request.max_output_tokens
        resp = self._session.post(self.base_url + self.path, json=payload, timeout=timeout_s)
        resp.raise_for_status()
        body = resp.json()
        if isinstance(body.get("message"), dict) and "content" in body["message"]:
            return body["message"]["content"]
        choices = body.get("choices")
        if isinstance(choices, list) and choices:
            return choices[0].get("message", {}).get("content", "")
        raise GatewayError(f"unrecognized response shape from {self.backend_id}")


@dataclass(frozen=True)
class ScriptEntry:
    kind: str  # "digest", "position" or "substring"
    value: str | int
    response_text: str


class ScriptedBackend:
    """Deterministic mock resolving, in order: exact digest, call position,
    then the first substring entry (file order) matching the prompt text.

    In strict mode an unmatched request raises :class:`ScriptMiss`; in
    lenient mode the request's user text is echoed back. Position entries
    match the global call ordinal, so scripts that use them need callers to
    serialize call order (a single pipeline worker does).
    """

    def __init__(self, entries: list[ScriptEntry], strict: bool = True, backend_id: str = "mock"):
        self.backend_id = backend_id
        self.strict = strict
        self.entries = entries
        self._digest_map: dict[str, str] = {}
        self._position_map: dict[int, str] = {}
        self._substring_entries: list[tuple[str, str]] = []
        self._calls = 0
        self._lock = threading.Lock()
        for entry in entries:
            if entry.kind == "digest":
                self._digest_map[str(entry.value)] = entry.response_text
            elif entry.kind == "position":
                self._position_map[int(entry.value)] = entry.response_text
            elif entry.kind == "substring":
                self._substring_entries.append((str(entry.value), entry.response_text))
            else:
                raise ValueError(f"unknown matcher kind: {entry.kind}")

    @property
    def entry_count(self) -> int:
        return len(self.entries)

    def complete(self, request: CompletionRequest, timeout_s: float) -> str:
        with self._lock:
            position = self._calls
            self._calls += 1
        digest = request_digest(request)
        if digest in self._digest_map:
            return self._digest_map[digest]
        if position in self._position_map:
            return self._position_map[position]
        haystack = (request.system_text or "") + "\n" + request.user_text
        for needle, response_text in self._substring_entries:
            if needle in haystack:
                return response_text
        if self.strict:
            raise ScriptMiss(f"no script entry for call {position} (digest {digest[:12]})")
        return request.user_text


def load_script(path: Path, strict: bool = True) -> ScriptedBackend:
    """Load a JSON-lines script: one ``{"match": {...}, "response": ...}``
    object per line. Matcher uniqueness is enforced for digest and position
    entries."""
    entries: list[ScriptEntry] = []
    seen_digests: set[str] = set()
    seen_positions: set[int] = set()
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScriptParseError(f"invalid JSON ({exc.msg})", line_no) from None
        match = obj.get("match")
        if not isinstance(match, dict) or "kind" not in match or "value" not in match:
            raise ScriptParseError("missing match.kind or match.value", line_no)
        if "response" not in obj or not isinstance(obj["response"], str):
            raise ScriptParseError("missing string field 'response'", line_no)
        kind, value = match["kind"], match["value"]
        if kind == "digest":
            if value in seen_digests:
                raise ScriptParseError(f"duplicate digest matcher {value!r}", line_no)
            seen_digests.add(value)
        elif kind == "position":
            if not isinstance(value, int):
                raise ScriptParseError("position matcher value must be an integer", line_no)
            if value in seen_positions:
                raise ScriptParseError(f"duplicate position matcher {value}", line_no)
            seen_positions.add(value)
        elif kind != "substring":
            raise ScriptParseError(f"unknown matcher kind {kind!r}", line_no)
        entries.append(ScriptEntry(kind=kind, value=value, response_text=obj["response"]))
    return ScriptedBackend(entries, strict=strict, backend_id=f"mock:{Path(path).name}")


def write_script(entries: list[ScriptEntry], path: Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(
                json.dumps(
                    {"match": {"kind": entry.kind, "value": entry.value}, "response": entry.response_text},
                    ensure_ascii=False,
                )
                + "\n"
            )


def script_from_audit(audit_path: Path) -> list[ScriptEntry]:
    """Turn an audit log into exact-digest replay entries (successes only).

    Later responses win on digest collisions, which under temperature 0
    means identical responses anyway.
    """
    by_digest: dict[str, str] = {}
    order: list[str] = []
    for raw in Path(audit_path).read_text(encoding="utf-8").splitlines():
        if not raw.strip():
            continue
        record = json.loads(raw)
        if "response" not in record:
            continue
        if record["digest"] not in by_digest:
            order.append(record["digest"])
        by_digest[record["digest"]] = record["response"]
    return [ScriptEntry("digest", digest, by_digest[digest]) for digest in order]


# ---------------------------------------------------------------------------
# gateway


class Gateway:
    """Shareable front end adding retries, audit logging and timing."""

    def __init__(
        self,
        backend,
        policy: RetryPolicy = RetryPolicy(),
        audit_path: Path | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.policy = policy
        self.audit_path = Path(audit_path) if audit_path else None
        self._sleep = sleep
        self._audit_lock = threading.Lock()
        self.call_count = 0

    def _audit(self, request: CompletionRequest, outcome: dict) -> None:
        with self._audit_lock:
            self.call_count += 1
        if self.audit_path is None:
            return
        record = {
            "backend": self.backend.backend_id,
            "digest": request_digest(request),
            "model": request.model_id,
            "system": request.system_text,
            "temperature": request.temperature,
            "ts": time.time(),
            "user": request.user_text,
        }
        record.update(outcome)
        with self._audit_lock:
            with self.audit_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        started = time.perf_counter()
        last_exc: Exception | None = None
        timed_out = False
        for attempt in range(1, self.policy.attempts + 1):
            try:
                text = self.backend.complete(request, self.policy.request_timeout_s)
                latency = time.perf_counter() - started
                self._audit(request, {"response": text, "latency_s": round(latency, 6), "attempts": attempt})
                return CompletionResponse(text=text, latency=latency, backend_id=self.backend.backend_id)
            except ScriptMiss as exc:
                # A script miss is deterministic; retrying cannot help.
                self._audit(request, {"error": str(exc), "attempts": attempt})
                raise
            except GatewayError as exc:
                last_exc = exc
            except requests.Timeout as exc:
                last_exc = exc
                timed_out = True
            except requests.RequestException as exc:
                last_exc = exc
            if attempt < self.policy.attempts:
                self._sleep(self.policy.backoff_base_s * 2 ** (attempt - 1))
        message = f"backend failed after {self.policy.attempts} attempts: {last_exc}"
        self._audit(request, {"error": message, "attempts": self.policy.attempts})
        if timed_out:
            raise GatewayTimeout(message, attempts=self.policy.attempts) from last_exc
        raise TransportError(message, attempts=self.policy.attempts) from last_exc
