"""Chat-completion clients: remote HTTP, scripted replay, and recording.

The scripted client replays a transcript keyed by (tag, prompt hash), so
every LLM-dependent pipeline stage can run deterministically offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol

from .errors import ParseError, RateLimited, ScriptMismatch, TransportError
from .templates import TEMPLATE_TAGS

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.6
DEFAULT_MAX_RETRIES = 3


@dataclass(frozen=True)
class ChatRequest:
    prompt: str
    tag: str
    temperature: float = DEFAULT_TEMPERATURE
    max_retries: int = DEFAULT_MAX_RETRIES

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt is empty")
        if self.tag not in TEMPLATE_TAGS:
            raise ValueError(f"unknown request tag {self.tag!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


def prompt_sha256(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ChatClient(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


# --- transcript ------------------------------------------------------------


@dataclass(frozen=True)
class TranscriptEntry:
    tag: str
    prompt_sha256: str
    response: str


def load_transcript(path: str | Path) -> list[TranscriptEntry]:
    entries = []
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            entries.append(
                TranscriptEntry(
                    tag=doc["tag"],
                    prompt_sha256=doc["prompt_sha256"],
                    response=doc["response"],
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ParseError(f"bad transcript line {lineno}: {e}") from e
    return entries


def transcript_line(entry: TranscriptEntry) -> str:
    return json.dumps(
        {
            "tag": entry.tag,
            "prompt_sha256": entry.prompt_sha256,
            "response": entry.response,
        },
        ensure_ascii=False,
        sort_keys=True,
    )


# --- scripted client --------------------------------------------------------


class ScriptedChatClient:
    """Replays transcript entries matched by (tag, prompt hash).

    Entries with the same key are consumed in recording order. Matching is
    serialized internally, so concurrent callers are safe.
    """

    def __init__(self, entries: Iterable[TranscriptEntry]):
        self._queues: dict[tuple[str, str], deque[str]] = {}
        self._count = 0
        for e in entries:
            self._queues.setdefault((e.tag, e.prompt_sha256), deque()).append(e.response)
            self._count += 1
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedChatClient":
        return cls(load_transcript(path))

    def complete(self, request: ChatRequest) -> str:
        digest = prompt_sha256(request.prompt)
        with self._lock:
            queue = self._queues.get((request.tag, digest))
            if not queue:
                available = sorted(
                    h for (t, h), q in self._queues.items() if t == request.tag and q
                )
                raise ScriptMismatch(
                    f"no scripted response for tag {request.tag!r} with prompt hash "
                    f"{digest}; remaining hashes for this tag: {available[:5]}"
                )
            self._count -= 1
            return queue.popleft()

    def pending(self) -> int:
        """Entries not yet consumed; useful for asserting full coverage."""
        with self._lock:
            return self._count


class RecordingClient:
    """Wraps another client and appends every exchange to a transcript file."""

    def __init__(self, inner: ChatClient, path: str | Path):
        self._inner = inner
        self._path = Path(path)
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> str:
        response = self._inner.complete(request)
        entry = TranscriptEntry(
            tag=request.tag,
            prompt_sha256=prompt_sha256(request.prompt),
            response=response,
        )
        with self._lock:
            with self._path.open("a", encoding="utf-8") as fh:
                fh.write(transcript_line(entry) + "\n")
        return response


# --- remote client ----------------------------------------------------------

# transport(url, headers, payload, timeout) -> (status_code, body_text)
Transport = Callable[[str, dict, dict, float], tuple[int, str]]


def _requests_transport(url: str, headers: dict, payload: dict, timeout: float):
    import requests

    try:
        resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    except requests.RequestException as e:
        raise TransportError(f"request failed: {e}") from e
    return resp.status_code, resp.text


@dataclass
class HttpChatClient:
    """Chat-completion client for an OpenAI-style HTTP endpoint.

    Transient failures (connection errors, 429, 5xx) are retried with
    jittered exponential backoff up to the request's retry budget.
    """

    api_base: str
    model: str
    api_key: str = ""
    timeout: float = 120.0
    in_flight_limit: int = 4
    transport: Transport = _requests_transport
    sleeper: Callable[[float], None] = time.sleep
    _jitter: random.Random = field(default_factory=lambda: random.Random())
    _semaphore: threading.Semaphore = field(init=False, repr=False)

    def __post_init__(self):
        self._semaphore = threading.Semaphore(max(1, self.in_flight_limit))

    def complete(self, request: ChatRequest) -> str:
        url = self.api_base.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
        }
        attempts = max(1, request.max_retries)
        last_error: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                delay = (2 ** (attempt - 1)) * (1.0 + self._jitter.random() * 0.25)
                self.sleeper(delay)
            try:
                with self._semaphore:
                    status, body = self.transport(url, headers, payload, self.timeout)
            except TransportError as e:
                last_error = e
                logger.warning("attempt %d/%d failed: %s", attempt + 1, attempts, e)
                continue
            if status == 429:
                last_error = RateLimited(f"rate limited (attempt {attempt + 1})")
                logger.warning("attempt %d/%d rate limited", attempt + 1, attempts)
                continue
            if status >= 500:
                last_error = TransportError(f"server error {status}")
                logger.warning("attempt %d/%d got status %d", attempt + 1, attempts, status)
                continue
            if status != 200:
                raise TransportError(f"endpoint returned status {status}: {body[:200]}")
            return self._extract_content(body)
        assert last_error is not None
        raise last_error

    @staticmethod
    def _extract_content(body: str) -> str:
        try:
            doc = json.loads(body)
            content = doc["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as e:
            raise TransportError(f"malformed completion response: {e}") from e
        if not isinstance(content, str):
            raise TransportError("completion content is not text")
        return content
