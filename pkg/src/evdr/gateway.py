"""Chat-completion client with bounded concurrency, retries and record/replay.

The wire shape is the OpenAI-compatible ``POST {endpoint}/chat/completions``
with body ``{model, messages: [{role, content}], max_tokens, temperature}``.

Fixture modes:

- ``off``: live calls only.
- ``record``: live calls, and each response is written to the fixture store.
- ``replay``: responses come only from the fixture store; nothing touches the
  network and a missing fixture is an error.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import httpx

logger = logging.getLogger(__name__)

FIXTURE_MODES = ("off", "record", "replay")
DEFAULT_MODEL = "gpt-4o-mini"
RETRYABLE_STATUS = frozenset({408, 409, 429, 500, 502, 503, 504})


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    system_text: str
    user_text: str
    max_tokens: int = 512
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def fixture_key(self) -> str:
        """Content hash over the fields that determine a response."""
        payload = json.dumps(
            [self.model, self.system_text, self.user_text, float(self.temperature)],
            ensure_ascii=False,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def body(self) -> dict:
        messages = []
        if self.system_text:
            messages.append({"role": "system", "content": self.system_text})
        messages.append({"role": "user", "content": self.user_text})
        return {
            "model": self.model,
            "messages": messages,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        }


@dataclass(frozen=True)
class CompletionResult:
    text: str
    latency_ms: int
    attempt_count: int

    def __post_init__(self) -> None:
        if self.attempt_count < 1:
            raise ValueError("attempt_count must be >= 1")


class GatewayError(Exception):
    """A completion that could not be obtained.

    ``kind`` is one of ``timeout``, ``http_status``, ``missing_fixture`` or
    ``bad_response``.
    """

    def __init__(self, kind: str, detail: str = "", attempts: int = 1, status: int | None = None):
        self.kind = kind
        self.detail = detail
        self.attempts = attempts
        self.status = status
        super().__init__(f"{kind}: {detail} (after {attempts} attempt(s))")


class FixtureStore:
    """A directory of ``<request-hash>.json`` files.

    Reads are lock-free; writes are serialized and atomic (temp file + rename),
    so concurrent readers never see a partial file.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._write_lock = threading.Lock()

    def path_for(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, request: CompletionRequest) -> str | None:
        path = self.path_for(request.fixture_key())
        try:
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)["response"]["text"]
        except FileNotFoundError:
            return None

    def put(self, request: CompletionRequest, text: str) -> Path:
        key = request.fixture_key()
        doc = {
            "key": key,
            "request": {
                "model": request.model,
                "system_text": request.system_text,
                "user_text": request.user_text,
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
            },
            "response": {"text": text},
        }
        data = json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
        with self._write_lock:
            self.root.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(data)
            os.replace(tmp, self.path_for(key))
        return self.path_for(key)


class LLMGateway:
    """Thread-safe chat-completion client.

    Args:
        endpoint: Base URL of an OpenAI-compatible server, e.g.
            ``http://localhost:8000/v1``. ``/chat/completions`` is appended
            unless already present.
        api_key: Sent as a bearer token when given.
        model: Default model name for requests built by callers.
        mode: One of ``off``, ``record``, ``replay``.
        fixture_dir: Fixture store directory (required for record and replay).
        max_attempts: Attempts per request before giving up.
        backoff_s: First retry delay; doubles after each failure.
        timeout_s: Per-attempt HTTP timeout.
        max_concurrency: Upper bound on in-flight live requests.
        transport: Optional ``httpx`` transport, for tests.
        sleep: Delay function used between retries.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        model: str = DEFAULT_MODEL,
        mode: str = "off",
        fixture_dir: str | Path | None = None,
        max_attempts: int = 3,
        backoff_s: float = 0.5,
        timeout_s: float = 30.0,
        max_concurrency: int = 8,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if mode not in FIXTURE_MODES:
            raise ValueError(f"mode must be one of {FIXTURE_MODES}, got {mode!r}")
        if mode in ("record", "replay") and fixture_dir is None:
            raise ValueError(f"mode {mode!r} needs a fixture_dir")
        if max_attempts < 1 or max_concurrency < 1:
            raise ValueError("max_attempts and max_concurrency must be >= 1")
        self.endpoint = endpoint
        self.api_key = api_key
        self.model = model
        self.mode = mode
        self.store = FixtureStore(fixture_dir) if fixture_dir is not None else None
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self.max_concurrency = max_concurrency
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_concurrency)
        self._transport = transport
        self._client: httpx.Client | None = None
        self._client_lock = threading.Lock()

    @classmethod
    def from_env(cls, mode: str = "replay", fixture_dir: str | Path | None = None, **kwargs) -> LLMGateway:
        """Configure from ``LLM_ENDPOINT``, ``LLM_API_KEY`` and ``LLM_MODEL``."""
        return cls(
            endpoint=os.environ.get("LLM_ENDPOINT") or None,
            api_key=os.environ.get("LLM_API_KEY") or None,
            model=os.environ.get("LLM_MODEL") or DEFAULT_MODEL,
            mode=mode,
            fixture_dir=fixture_dir,
            **kwargs,
        )

    @property
    def url(self) -> str:
        if not self.endpoint:
            raise GatewayError("http_status", "no endpoint configured (set LLM_ENDPOINT)")
        base = self.endpoint.rstrip("/")
        return base if base.endswith("/chat/completions") else base + "/chat/completions"

    def _http(self) -> httpx.Client:
        with self._client_lock:
            if self._client is None:
                headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
                self._client = httpx.Client(timeout=self.timeout_s, headers=headers, transport=self._transport)
            return self._client

    def close(self) -> None:
        with self._client_lock:
            if self._client is not None:
                self._client.close()
                self._client = None

    def complete(self, request: CompletionRequest) -> CompletionResult:
        """Return the first choice's text for ``request``.

        Raises:
            GatewayError: on a replay miss, or when every attempt failed.
        """
        if self.mode == "replay":
            assert self.store is not None
            text = self.store.get(request)
            if text is None:
                raise GatewayError("missing_fixture", f"no fixture {request.fixture_key()}")
            return CompletionResult(text=text, latency_ms=0, attempt_count=1)

        url = self.url
        last: GatewayError | None = None
        start = time.perf_counter()
        for attempt in range(1, self.max_attempts + 1):
            try:
                with self._slots:
                    text = self._post(url, request)
            except GatewayError as exc:
                exc.attempts = attempt
                last = exc
                retryable = exc.kind == "timeout" or exc.status in RETRYABLE_STATUS
                logger.warning("completion attempt %d/%d failed: %s", attempt, self.max_attempts, exc.detail)
                if not retryable or attempt == self.max_attempts:
                    break
                self._sleep(self.backoff_s * 2 ** (attempt - 1))
                continue
            latency = int((time.perf_counter() - start) * 1000)
            if self.mode == "record":
                assert self.store is not None
                self.store.put(request, text)
            return CompletionResult(text=text, latency_ms=latency, attempt_count=attempt)
        assert last is not None
        raise GatewayError(last.kind, last.detail, last.attempts, last.status)

    def _post(self, url: str, request: CompletionRequest) -> str:
        try:
            resp = self._http().post(url, json=request.body())
        except httpx.TimeoutException as exc:
            raise GatewayError("timeout", str(exc) or "request timed out") from exc
        except httpx.HTTPError as exc:
            # connection refused and similar count as a failed exchange
            raise GatewayError("http_status", f"transport error: {exc}", status=503) from exc
        if resp.status_code != 200:
            raise GatewayError("http_status", f"HTTP {resp.status_code}", status=resp.status_code)
        try:
            text = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GatewayError("bad_response", f"unexpected response body: {exc!r}") from exc
        if not isinstance(text, str):
            raise GatewayError("bad_response", "message content is not a string")
        return text

    def complete_batch(self, requests: Sequence[CompletionRequest]) -> list[CompletionResult | GatewayError]:
        """Run ``requests`` with at most ``max_concurrency`` in flight.

        Results come back in input order. A failed element yields its
        ``GatewayError`` in place; the rest of the batch still runs.
        """
        if not requests:
            return []

        def one(req: CompletionRequest) -> CompletionResult | GatewayError:
            try:
                return self.complete(req)
            except GatewayError as exc:
                return exc

        with ThreadPoolExecutor(max_workers=min(self.max_concurrency, len(requests))) as pool:
            return list(pool.map(one, requests))
