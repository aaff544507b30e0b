"""Access to chat-completion and embedding backends.

All traffic speaks the OpenAI-compatible wire shape so a served fine-tuned
simulator is a drop-in for a hosted model.  Three provider flavors share one
interface:

* ``HttpChat`` / ``HttpEmbedder`` — live endpoints with retry + backoff.
* ``RecordingChat`` / ``RecordingEmbedder`` — wrap a live provider and append
  every response to a transcript.
* ``ReplayChat`` / ``ReplayEmbedder`` — serve recorded transcripts offline;
  a recorded run replays to byte-identical pipeline output.

Chat replay is keyed by (role_profile, content hash, call ordinal) so
repeated identical prompts are disambiguated; embeddings are a deterministic
function of the text, so they are keyed by content hash alone.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import numpy as np
import requests

from .errors import (
    DimensionMismatch,
    ProviderUnavailable,
    ReplayMiss,
    ResponseTruncated,
    ZeroVector,
)

logger = logging.getLogger(__name__)

ROLE_PROFILES = (
    "extractor",
    "abstractor",
    "simulator",
    "system_agent",
    "quality_judge",
    "eval_judge",
    "ranker",
)

# Roles whose completions must parse as structured verdicts; a length stop
# there means a truncated JSON body rather than a usable answer.
JUDGE_ROLES = ("quality_judge", "eval_judge")


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    top_p: float = 1.0
    max_new_tokens: int = 1024
    presence_penalty: float = 0.0
    frequency_penalty: float = 0.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


# Deployment defaults per role; the simulator samples, everyone that emits
# structured output runs greedy with a presence penalty, and the system
# agent keeps whatever the endpoint defaults to (params omitted on the wire).
DEFAULT_ROLE_PARAMS: dict[str, Optional[GenerationParams]] = {
    "extractor": GenerationParams(temperature=0.0, presence_penalty=0.6),
    "abstractor": GenerationParams(temperature=0.0, presence_penalty=0.6),
    "simulator": GenerationParams(temperature=0.7, top_p=0.9, max_new_tokens=96),
    "system_agent": None,
    "quality_judge": GenerationParams(temperature=0.0, presence_penalty=0.6),
    "eval_judge": GenerationParams(temperature=0.0, presence_penalty=0.6),
    "ranker": GenerationParams(temperature=0.0, max_new_tokens=8),
}


@dataclass(frozen=True)
class ChatRequest:
    role_profile: str
    messages: tuple[dict, ...]
    params: Optional[GenerationParams] = None

    def __post_init__(self):
        if self.role_profile not in ROLE_PROFILES:
            raise ValueError(f"unknown role profile {self.role_profile!r}")
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].get("role") not in ("system", "user"):
            raise ValueError("first message must be system or user")


def chat_request(role: str, content: str, params: Optional[GenerationParams] = None) -> ChatRequest:
    """Single user-message request under a role's default params."""
    if params is None:
        params = DEFAULT_ROLE_PARAMS.get(role)
    return ChatRequest(
        role_profile=role,
        messages=({"role": "user", "content": content},),
        params=params,
    )


def content_hash(messages: Sequence[dict]) -> str:
    canon = json.dumps(list(messages), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Vectors
# ---------------------------------------------------------------------------

def normalize(components: Sequence[float]) -> np.ndarray:
    """L2-normalize into a float64 vector; zero vectors are rejected."""
    vec = np.asarray(components, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise ValueError("vector must be one-dimensional and non-empty")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ZeroVector("cannot normalize an all-zero vector")
    return vec / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Standard cosine similarity; equals the dot product on unit vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dims {a.shape} vs {b.shape}")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine undefined for an all-zero vector")
    return float(np.dot(a, b) / (na * nb))


# ---------------------------------------------------------------------------
# Provider interfaces
# ---------------------------------------------------------------------------

class ChatProvider(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


class EmbeddingProvider(Protocol):
    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]: ...


def chat_complete(request: ChatRequest, provider: ChatProvider) -> str:
    return provider.complete(request)


@dataclass
class ChatEndpoint:
    base_url: str
    model: str
    api_key_env: str = ""
    params: Optional[GenerationParams] = None
    timeout: float = 120.0
    retries: int = 3
    backoff: float = 1.0

    def api_key(self) -> str:
        return os.environ.get(self.api_key_env, "") if self.api_key_env else ""


class HttpChat:
    """Live chat-completions client over the OpenAI-compatible wire shape.

    One instance routes all role profiles; each role maps to its own
    endpoint so the simulator can live on a different server than the
    judges.  Transient failures (connection errors, 429/5xx) retry with
    exponential backoff; each call logs role, latency, and a truncated
    content hash, never the prompt text.
    """

    def __init__(
        self,
        endpoints: dict[str, ChatEndpoint],
        transport: Optional[Callable[..., requests.Response]] = None,
    ):
        self.endpoints = endpoints
        self._post = transport or requests.post

    def complete(self, request: ChatRequest) -> str:
        endpoint = self.endpoints.get(request.role_profile)
        if endpoint is None:
            raise ProviderUnavailable(f"no endpoint configured for {request.role_profile}")
        params = request.params if request.params is not None else endpoint.params
        body: dict = {"model": endpoint.model, "messages": list(request.messages)}
        if params is not None:
            body.update(
                temperature=params.temperature,
                top_p=params.top_p,
                max_tokens=params.max_new_tokens,
                presence_penalty=params.presence_penalty,
                frequency_penalty=params.frequency_penalty,
            )
        headers = {"Content-Type": "application/json"}
        if endpoint.api_key():
            headers["Authorization"] = f"Bearer {endpoint.api_key()}"
        url = endpoint.base_url.rstrip("/") + "/chat/completions"

        last_error: Exception | None = None
        for attempt in range(endpoint.retries + 1):
            start = time.monotonic()
            try:
                response = self._post(url, headers=headers, json=body, timeout=endpoint.timeout)
                if response.status_code in (429, 500, 502, 503, 504):
                    raise requests.RequestException(f"status {response.status_code}")
                response.raise_for_status()
                payload = response.json()
                choice = payload["choices"][0]
                text = choice["message"]["content"]
                latency = time.monotonic() - start
                logger.info(
                    "chat role=%s latency=%.3fs hash=%s",
                    request.role_profile, latency, content_hash(request.messages),
                )
                if (
                    choice.get("finish_reason") == "length"
                    and request.role_profile in JUDGE_ROLES
                ):
                    raise ResponseTruncated(request.role_profile)
                return text
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                if attempt < endpoint.retries:
                    time.sleep(endpoint.backoff * (2 ** attempt))
        raise ProviderUnavailable(
            f"{request.role_profile}: {last_error}"
        ) from last_error


class HttpEmbedder:
    """Live embeddings client; vectors are L2-normalized on ingestion."""

    def __init__(
        self,
        endpoint: ChatEndpoint,
        transport: Optional[Callable[..., requests.Response]] = None,
    ):
        self.endpoint = endpoint
        self._post = transport or requests.post

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("texts must be non-empty")
        for text in texts:
            if not text:
                raise ValueError("cannot embed an empty text")
        headers = {"Content-Type": "application/json"}
        if self.endpoint.api_key():
            headers["Authorization"] = f"Bearer {self.endpoint.api_key()}"
        url = self.endpoint.base_url.rstrip("/") + "/embeddings"
        body = {"model": self.endpoint.model, "input": list(texts)}

        last_error: Exception | None = None
        for attempt in range(self.endpoint.retries + 1):
            try:
                response = self._post(url, headers=headers, json=body, timeout=self.endpoint.timeout)
                if response.status_code in (429, 500, 502, 503, 504):
                    raise requests.RequestException(f"status {response.status_code}")
                response.raise_for_status()
                payload = response.json()
                rows = sorted(payload["data"], key=lambda item: item.get("index", 0))
                return _check_batch([row["embedding"] for row in rows])
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
                if attempt < self.endpoint.retries:
                    time.sleep(self.endpoint.backoff * (2 ** attempt))
        raise ProviderUnavailable(f"embeddings: {last_error}") from last_error


def _check_batch(raw_vectors: list) -> list[np.ndarray]:
    vectors = [normalize(v) for v in raw_vectors]
    dims = {v.shape[0] for v in vectors}
    if len(dims) > 1:
        raise DimensionMismatch(f"inconsistent dims within batch: {sorted(dims)}")
    return vectors


# ---------------------------------------------------------------------------
# Record / replay
# ---------------------------------------------------------------------------

WILDCARD = "*"


class Transcript:
    """Ordered store of recorded provider responses.

    Entries are grouped by lookup key and consumed FIFO, which gives call
    ordinals implicitly.  A key of ``"*"`` matches any content for its role;
    tests use it to script responses without computing prompt hashes.
    """

    def __init__(self):
        self._entries: dict[tuple, list[dict]] = {}
        self._order: list[dict] = []
        self._cursor: dict[tuple, int] = {}
        self._lock = threading.Lock()

    @staticmethod
    def chat_key(role: str, key: str) -> tuple:
        return ("chat", role, key)

    @staticmethod
    def embed_key(key: str) -> tuple:
        return ("embed", key)

    def append(self, lookup: tuple, entry: dict) -> None:
        with self._lock:
            self._entries.setdefault(lookup, []).append(entry)
            self._order.append(entry)

    def consume(self, lookup: tuple) -> Optional[dict]:
        """Next unconsumed entry for the key; reuses the last one when
        the recorded count is exhausted (deterministic responses)."""
        with self._lock:
            entries = self._entries.get(lookup)
            if not entries:
                return None
            cursor = self._cursor.get(lookup, 0)
            entry = entries[min(cursor, len(entries) - 1)]
            self._cursor[lookup] = cursor + 1
            return entry

    def rewind(self) -> None:
        with self._lock:
            self._cursor.clear()

    # -- test scripting helpers ------------------------------------------

    def script_chat(self, role: str, response: str, finish_reason: str = "stop") -> None:
        self.append(
            self.chat_key(role, WILDCARD),
            {"kind": "chat", "role": role, "key": WILDCARD, "ordinal": 0,
             "response": response, "finish_reason": finish_reason},
        )

    def script_chat_failure(self, role: str) -> None:
        self.append(
            self.chat_key(role, WILDCARD),
            {"kind": "chat", "role": role, "key": WILDCARD, "ordinal": 0,
             "error": "unavailable"},
        )

    def script_embedding(self, text: str, components: Sequence[float]) -> None:
        self.append(
            self.embed_key(text_hash(text)),
            {"kind": "embed", "key": text_hash(text),
             "vector": [float(x) for x in components]},
        )

    # -- persistence ------------------------------------------------------

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for entry in self._order:
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        transcript = cls()
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                if entry.get("kind") == "chat":
                    lookup = cls.chat_key(entry["role"], entry["key"])
                else:
                    lookup = cls.embed_key(entry["key"])
                transcript.append(lookup, entry)
        return transcript


class RecordingChat:
    def __init__(self, inner: ChatProvider, transcript: Transcript):
        self.inner = inner
        self.transcript = transcript

    def complete(self, request: ChatRequest) -> str:
        key = content_hash(request.messages)
        lookup = Transcript.chat_key(request.role_profile, key)
        ordinal = len(self.transcript._entries.get(lookup, ()))
        try:
            text = self.inner.complete(request)
        except ProviderUnavailable:
            self.transcript.append(
                lookup,
                {"kind": "chat", "role": request.role_profile, "key": key,
                 "ordinal": ordinal, "error": "unavailable"},
            )
            raise
        self.transcript.append(
            lookup,
            {"kind": "chat", "role": request.role_profile, "key": key,
             "ordinal": ordinal, "response": text},
        )
        return text


class ReplayChat:
    """Serves chat completions from a transcript, no network."""

    def __init__(self, transcript: Transcript):
        self.transcript = transcript

    def complete(self, request: ChatRequest) -> str:
        key = content_hash(request.messages)
        entry = self.transcript.consume(Transcript.chat_key(request.role_profile, key))
        if entry is None:
            entry = self.transcript.consume(
                Transcript.chat_key(request.role_profile, WILDCARD)
            )
        if entry is None:
            raise ReplayMiss(f"no transcript entry for {request.role_profile}/{key}")
        if "error" in entry:
            raise ProviderUnavailable(f"replayed failure for {request.role_profile}")
        if (
            entry.get("finish_reason") == "length"
            and request.role_profile in JUDGE_ROLES
        ):
            raise ResponseTruncated(request.role_profile)
        return entry["response"]


class RecordingEmbedder:
    def __init__(self, inner: EmbeddingProvider, transcript: Transcript):
        self.inner = inner
        self.transcript = transcript

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        vectors = self.inner.embed_batch(texts)
        for text, vec in zip(texts, vectors):
            lookup = Transcript.embed_key(text_hash(text))
            if lookup not in self.transcript._entries:
                self.transcript.append(
                    lookup,
                    {"kind": "embed", "key": text_hash(text),
                     "vector": [float(x) for x in vec]},
                )
        return vectors


class ReplayEmbedder:
    def __init__(self, transcript: Transcript):
        self.transcript = transcript

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("texts must be non-empty")
        raw = []
        for text in texts:
            if not text:
                raise ValueError("cannot embed an empty text")
            entry = self.transcript.consume(Transcript.embed_key(text_hash(text)))
            if entry is None:
                raise ReplayMiss(f"no recorded embedding for hash {text_hash(text)}")
            raw.append(entry["vector"])
        return _check_batch(raw)


def embed_batch(texts: Sequence[str], provider: EmbeddingProvider) -> list[np.ndarray]:
    return provider.embed_batch(texts)
