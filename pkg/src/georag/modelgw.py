"""Gateway to generation, embedding, classification, and scoring backends.

All four capabilities share one JSON/HTTP wire protocol (POST /v1/generate,
/v1/embed, /v1/classify, /v1/score). A scripted stub backend implements the
same surface fully deterministically: generation answers from ordered
pattern rules with a last-prompt-line echo fallback, and embeddings hash the
token multiset into a unit vector, so pipeline runs are reproducible byte for
byte without any model service.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import threading
import time
from dataclasses import dataclass, field
from importlib import resources

import requests

from .corpus import tokenize
from .errors import ConfigurationError, ProtocolError, TransportError
from .prompt import GenerationParams

STUB_EMBED_DIM = 64


def load_protocol_schemas() -> dict:
    """Endpoint request/response JSON Schemas shared with any serving process."""
    text = resources.files("georag").joinpath("data/schema/protocol.json").read_text("utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    params: GenerationParams = GenerationParams()
    request_id: str = ""

    def __post_init__(self):
        if not self.prompt:
            raise ConfigurationError("generation prompt must be non-empty")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "stub"                 # "stub" | "remote"
    base_url: str = ""
    timeout: float = 30.0
    max_retries: int = 3
    parallelism_bound: int = 4
    bearer_token: str = ""

    def __post_init__(self):
        if self.timeout <= 0:
            raise ConfigurationError("timeout must be positive")
        if self.kind == "remote" and not self.base_url:
            raise ConfigurationError("remote backend requires base_url")


@dataclass
class StubScript:
    """Deterministic canned behavior for every capability.

    Rules are ordered (pattern, response) pairs matched by substring against
    the request text; the first match wins. Generation falls back to echoing
    the last prompt line, classification and scoring to fixed vectors.
    """

    generate_rules: list[tuple[str, str]] = field(default_factory=list)
    classify_rules: list[tuple[str, list[float]]] = field(default_factory=list)
    score_rules: list[tuple[str, list[float]]] = field(default_factory=list)
    classify_default: list[float] = field(default_factory=lambda: [0.0] * 7)
    score_default: list[float] = field(default_factory=lambda: [0.0] * 7)
    embed_seed: int = 42
    embed_dim: int = STUB_EMBED_DIM

    @classmethod
    def from_dict(cls, rec: dict) -> "StubScript":
        return cls(
            generate_rules=[(p, r) for p, r in rec.get("generate_rules", [])],
            classify_rules=[(p, list(v)) for p, v in rec.get("classify_rules", [])],
            score_rules=[(p, list(v)) for p, v in rec.get("score_rules", [])],
            classify_default=list(rec.get("classify_default", [0.0] * 7)),
            score_default=list(rec.get("score_default", [0.0] * 7)),
            embed_seed=rec.get("embed_seed", 42),
            embed_dim=rec.get("embed_dim", STUB_EMBED_DIM),
        )


def _check_probs(values, arity: int, lo: float, hi: float, what: str) -> list[float]:
    if not isinstance(values, list) or len(values) != arity:
        raise ProtocolError(f"{what} must be a list of {arity} numbers, got {values!r}")
    out = []
    for v in values:
        if not isinstance(v, (int, float)) or isinstance(v, bool) or math.isnan(float(v)):
            raise ProtocolError(f"{what} contains a non-numeric value {v!r}")
        v = float(v)
        if not (lo <= v <= hi):
            raise ProtocolError(f"{what} value {v} outside [{lo}, {hi}]")
        out.append(v)
    return out


def stub_embedding(text: str, seed: int = 42, dim: int = STUB_EMBED_DIM) -> list[float]:
    """Unit vector from the token multiset; word order never matters."""
    tokens = sorted(tokenize(text.lower()))
    if not tokens:
        raise ConfigurationError("cannot embed an empty text")
    acc = [0.0] * dim
    for tok in tokens:
        digest = hashlib.blake2b(tok.encode("utf-8"), digest_size=dim,
                                 key=str(seed).encode("utf-8")).digest()
        for i, byte in enumerate(digest):
            acc[i] += (byte - 127.5) / 127.5
    norm = math.sqrt(math.fsum(x * x for x in acc))
    if norm == 0.0:
        raise ConfigurationError("degenerate stub embedding (zero norm)")
    return [x / norm for x in acc]


class StubBackend:
    """In-process deterministic backend for all four capabilities."""

    def __init__(self, script: StubScript | None = None):
        self.script = script or StubScript()

    def generate(self, req: GenerationRequest) -> str:
        for pattern, response in self.script.generate_rules:
            if pattern in req.prompt:
                return response
        lines = req.prompt.rstrip("\n").split("\n")
        return lines[-1]

    def embed(self, texts: list[str]) -> list[list[float]]:
        return [stub_embedding(t, seed=self.script.embed_seed, dim=self.script.embed_dim)
                for t in texts]

    def classify(self, question: str) -> list[float]:
        for pattern, probs in self.script.classify_rules:
            if pattern in question:
                return _check_probs(probs, 7, 0.0, 1.0, "classify probs")
        return _check_probs(list(self.script.classify_default), 7, 0.0, 1.0, "classify probs")

    def score(self, question: str, document: str) -> list[float]:
        text = question + "\n" + document
        for pattern, scores in self.script.score_rules:
            if pattern in text:
                return _check_probs(scores, 7, -1.0, 1.0, "relevance scores")
        return _check_probs(list(self.script.score_default), 7, -1.0, 1.0, "relevance scores")


class RemoteBackend:
    """JSON/HTTP backend with bounded retries.

    Retries fire on connection errors, timeouts, and 5xx responses, with
    exponential backoff plus jitter. A 2xx response with a malformed body is
    never retried: its body was already consumed, so resending could duplicate
    work on a non-idempotent server.
    """

    def __init__(self, config: BackendConfig, session: requests.Session | None = None):
        self.config = config
        self._session = session or requests.Session()
        self._rng = random.Random()

    def _post(self, path: str, payload: dict) -> dict:
        url = self.config.base_url.rstrip("/") + path
        headers = {"Content-Type": "application/json"}
        if self.config.bearer_token:
            headers["Authorization"] = f"Bearer {self.config.bearer_token}"
        attempts = 0
        last_error: TransportError | None = None
        while attempts <= self.config.max_retries:
            attempts += 1
            try:
                resp = self._session.post(url, json=payload, headers=headers,
                                          timeout=self.config.timeout)
            except requests.Timeout:
                last_error = TransportError(f"timeout after {self.config.timeout}s on {path}",
                                            kind="timeout", attempts=attempts)
            except requests.RequestException as exc:
                last_error = TransportError(f"connection failure on {path}: {exc}",
                                            kind="connection", attempts=attempts)
            else:
                if 200 <= resp.status_code < 300:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise TransportError(
                            f"malformed response body on {path}: {exc}",
                            kind="malformed", attempts=attempts,
                            status=resp.status_code) from exc
                if 500 <= resp.status_code < 600:
                    last_error = TransportError(
                        f"server error {resp.status_code} on {path}",
                        kind="status", attempts=attempts, status=resp.status_code)
                else:
                    raise TransportError(f"request rejected with {resp.status_code} on {path}",
                                         kind="status", attempts=attempts,
                                         status=resp.status_code)
            if attempts <= self.config.max_retries:
                delay = min(2.0, 0.05 * (2 ** (attempts - 1)))
                time.sleep(delay * (1.0 + self._rng.random() * 0.25))
        assert last_error is not None
        raise last_error

    def generate(self, req: GenerationRequest) -> str:
        body = self._post("/v1/generate", {
            "prompt": req.prompt,
            "temperature": req.params.temperature,
            "max_tokens": req.params.max_tokens,
            "beam_width": req.params.beam_width,
            "length_penalty": req.params.length_penalty,
        })
        if not isinstance(body, dict) or not isinstance(body.get("text"), str):
            raise ProtocolError(f"generate response missing 'text': {body!r}")
        return body["text"]

    def embed(self, texts: list[str]) -> list[list[float]]:
        body = self._post("/v1/embed", {"texts": texts})
        vectors = body.get("vectors") if isinstance(body, dict) else None
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProtocolError(f"embed response needs {len(texts)} vectors")
        return [[float(v) for v in vec] for vec in vectors]

    def classify(self, question: str) -> list[float]:
        body = self._post("/v1/classify", {"question": question})
        probs = body.get("probs") if isinstance(body, dict) else None
        return _check_probs(probs, 7, 0.0, 1.0, "classify probs")

    def score(self, question: str, document: str) -> list[float]:
        body = self._post("/v1/score", {"question": question, "document": document})
        scores = body.get("scores") if isinstance(body, dict) else None
        return _check_probs(scores, 7, -1.0, 1.0, "relevance scores")


def build_backend(config: BackendConfig, script: StubScript | None = None):
    if config.kind == "stub":
        return StubBackend(script)
    if config.kind == "remote":
        return RemoteBackend(config)
    raise ConfigurationError(f"unknown backend kind {config.kind!r}")


class Gateway:
    """Uniform facade over per-capability backends with a parallelism bound.

    The bound applies per gateway across all capabilities; `max_in_flight`
    records the high-water mark of concurrent calls for tests.
    """

    def __init__(self, generate_backend, embed_backend=None, classify_backend=None,
                 score_backend=None, parallelism_bound: int = 4):
        if parallelism_bound < 1:
            raise ConfigurationError("parallelism_bound must be >= 1")
        self._generate = generate_backend
        self._embed = embed_backend or generate_backend
        self._classify = classify_backend or generate_backend
        self._score = score_backend or generate_backend
        self._sem = threading.BoundedSemaphore(parallelism_bound)
        self._lock = threading.Lock()
        self._in_flight = 0
        self.max_in_flight = 0

    def _tracked(self, fn, *args):
        with self._sem:
            with self._lock:
                self._in_flight += 1
                self.max_in_flight = max(self.max_in_flight, self._in_flight)
            try:
                return fn(*args)
            finally:
                with self._lock:
                    self._in_flight -= 1

    def generate(self, req: GenerationRequest) -> str:
        return self._tracked(self._generate.generate, req)

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts or any(not t for t in texts):
            raise ConfigurationError("embed requires a non-empty list of non-empty texts")
        return self._tracked(self._embed.embed, texts)

    def embed_one(self, text: str) -> list[float]:
        return self.embed([text])[0]

    def classify(self, question: str) -> list[float]:
        return self._tracked(self._classify.classify, question)

    def score(self, question: str, document: str) -> list[float]:
        return self._tracked(self._score.score, question, document)

    @classmethod
    def stub(cls, script: StubScript | None = None, parallelism_bound: int = 4) -> "Gateway":
        backend = StubBackend(script)
        return cls(backend, backend, backend, backend, parallelism_bound=parallelism_bound)
