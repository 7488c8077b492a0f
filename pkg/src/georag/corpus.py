"""Corpus ingestion: document cleaning, MinHash near-duplicate removal, chunking.

Cleaning keeps only lines that end in terminal punctuation, strips script/style
artifacts and placeholder text, then enforces document-level minimums (at least
five sentences, each longer than three words). Deduplication estimates pairwise
Jaccard similarity over word shingles with MinHash signatures and keeps one
representative per duplicate cluster.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigurationError, SchemaError

TERMINAL_PUNCTUATION = ".!?。！？…"

# Lines matching any of these are dropped as markup/script debris.
DEFAULT_ARTIFACT_PATTERNS = (
    r"function\s*\(",
    r"</?[a-zA-Z][^>]*>",
    r"\{[^{}]*;[^{}]*\}",
    r"^\s*[.#][\w-]+\s*\{",
    r"lorem ipsum",
    r"\bvar\s+\w+\s*=",
)

_CJK_RANGE = "一-鿿㐀-䶿"
_TOKEN_RE = re.compile(f"[{_CJK_RANGE}]|[^\\s{_CJK_RANGE}]+")
_SENTENCE_SPLIT_RE = re.compile(f"(?<=[{re.escape(TERMINAL_PUNCTUATION)}])\\s+")


class Source(str, Enum):
    JOURNAL = "journal"
    MONOGRAPH = "monograph"
    REPORT = "report"
    OTHER = "other"


class RejectReason(str, Enum):
    EMPTY = "Empty"
    TOO_FEW_SENTENCES = "TooFewSentences"
    SHORT_SENTENCES = "ShortSentences"
    WRONG_LANGUAGE = "WrongLanguage"


@dataclass(frozen=True)
class RawDocument:
    id: str
    source: Source
    text: str
    metadata: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_json(cls, line: str, lineno: int | None = None) -> "RawDocument":
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}", line=lineno) from exc
        if not isinstance(rec, dict) or "id" not in rec or "text" not in rec:
            raise SchemaError("document record needs 'id' and 'text'", line=lineno)
        try:
            source = Source(rec.get("source", "other"))
        except ValueError as exc:
            raise SchemaError(f"unknown source {rec['source']!r}", line=lineno) from exc
        return cls(id=str(rec["id"]), source=source, text=str(rec["text"]),
                   metadata={str(k): str(v) for k, v in rec.get("metadata", {}).items()})


@dataclass(frozen=True)
class CleanDocument:
    id: str
    sentences: tuple[str, ...]
    source: Source
    metadata: dict[str, str] = field(default_factory=dict)

    @property
    def text(self) -> str:
        return " ".join(self.sentences)

    def to_json(self) -> str:
        return json.dumps({
            "schema": "georag-clean/1", "id": self.id, "source": self.source.value,
            "sentences": list(self.sentences), "metadata": self.metadata,
        }, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str, lineno: int | None = None) -> "CleanDocument":
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}", line=lineno) from exc
        if not isinstance(rec, dict) or rec.get("schema") != "georag-clean/1":
            raise SchemaError("expected a georag-clean/1 record", line=lineno)
        return cls(id=str(rec["id"]), sentences=tuple(rec["sentences"]),
                   source=Source(rec.get("source", "other")),
                   metadata={str(k): str(v) for k, v in rec.get("metadata", {}).items()})


@dataclass(frozen=True)
class Rejection:
    doc_id: str
    reason: RejectReason
    detail: str = ""


@dataclass(frozen=True)
class CleaningPolicy:
    min_sentences: int = 5
    min_words_per_sentence: int = 4  # sentences must have > 3 words
    language: str | None = None      # None disables the language filter
    min_language_ratio: float = 0.5
    artifact_patterns: tuple[str, ...] = DEFAULT_ARTIFACT_PATTERNS

    def compiled_patterns(self) -> list[re.Pattern]:
        return [re.compile(p, re.IGNORECASE) for p in self.artifact_patterns]


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    text: str
    sentence_span: tuple[int, int]
    themes: frozenset[str] = frozenset()

    def to_json(self) -> str:
        return json.dumps({
            "schema": "georag-chunk/1", "chunk_id": self.chunk_id, "doc_id": self.doc_id,
            "text": self.text, "span": list(self.sentence_span),
            "themes": sorted(self.themes),
        }, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str, lineno: int | None = None) -> "Chunk":
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}", line=lineno) from exc
        for key in ("chunk_id", "doc_id", "text", "span"):
            if key not in rec:
                raise SchemaError(f"chunk record missing {key!r}", line=lineno)
        return cls(chunk_id=rec["chunk_id"], doc_id=rec["doc_id"], text=rec["text"],
                   sentence_span=(rec["span"][0], rec["span"][1]),
                   themes=frozenset(rec.get("themes", [])))


def tokenize(text: str) -> list[str]:
    """Whitespace word split; CJK characters count as one token each."""
    return _TOKEN_RE.findall(text)


def split_sentences(line: str) -> list[str]:
    return [s for s in (p.strip() for p in _SENTENCE_SPLIT_RE.split(line)) if s]


def _script_ratio(text: str, language: str) -> float:
    """Fraction of letter-bearing characters in the target script."""
    letters = [c for c in text if c.isalpha()]
    if not letters:
        return 0.0
    if language == "zh":
        hits = sum(1 for c in letters if "一" <= c <= "鿿" or "㐀" <= c <= "䶿")
    elif language == "en":
        hits = sum(1 for c in letters if c.isascii())
    else:
        raise ConfigurationError(f"unsupported language filter {language!r}")
    return hits / len(letters)


def clean_document(raw: RawDocument, policy: CleaningPolicy | None = None) -> CleanDocument | Rejection:
    """Apply the syntactic/semantic cleaning rules; idempotent on accepted output."""
    policy = policy or CleaningPolicy()
    if not raw.text.strip():
        return Rejection(raw.id, RejectReason.EMPTY)

    patterns = policy.compiled_patterns()
    kept_lines = []
    for line in raw.text.splitlines():
        line = line.strip()
        if not line:
            continue
        if any(p.search(line) for p in patterns):
            continue
        if line[-1] not in TERMINAL_PUNCTUATION:
            continue
        kept_lines.append(line)

    sentences: list[str] = []
    for line in kept_lines:
        sentences.extend(split_sentences(line))

    if policy.language is not None:
        joined = " ".join(sentences)
        if joined and _script_ratio(joined, policy.language) < policy.min_language_ratio:
            return Rejection(raw.id, RejectReason.WRONG_LANGUAGE,
                             f"script ratio below {policy.min_language_ratio}")

    long_enough = [s for s in sentences if len(tokenize(s)) >= policy.min_words_per_sentence]
    if len(long_enough) >= policy.min_sentences:
        return CleanDocument(id=raw.id, sentences=tuple(long_enough),
                             source=raw.source, metadata=dict(raw.metadata))
    if len(sentences) >= policy.min_sentences:
        # The document had enough sentences but too many were too short.
        return Rejection(raw.id, RejectReason.SHORT_SENTENCES,
                         f"{len(sentences) - len(long_enough)} sentences at or under "
                         f"{policy.min_words_per_sentence - 1} words")
    return Rejection(raw.id, RejectReason.TOO_FEW_SENTENCES,
                     f"{len(long_enough)} usable sentences, need {policy.min_sentences}")


# --- MinHash -----------------------------------------------------------------

# Smallest prime above 2**32; with 32-bit base hashes and 32-bit coefficients
# every a*x+b fits in uint64, so the whole family vectorizes exactly.
_MINHASH_PRIME = np.uint64(4294967311)


def shingle(text: str, width: int) -> frozenset[str]:
    """All contiguous `width`-word windows of `text`, as space-joined strings."""
    if width < 1:
        raise ConfigurationError("shingle width must be >= 1")
    tokens = tokenize(text)
    if len(tokens) < width:
        return frozenset({" ".join(tokens) if tokens else text})
    return frozenset(" ".join(tokens[i:i + width]) for i in range(len(tokens) - width + 1))


@dataclass(frozen=True)
class MinHashSignature:
    values: tuple[int, ...]
    num_hashes: int
    seed: int
    shingle_width: int

    def __post_init__(self):
        if len(self.values) != self.num_hashes:
            raise ConfigurationError("signature length must equal num_hashes")


def _hash_params(num_hashes: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    a = rng.integers(1, 1 << 32, size=num_hashes, dtype=np.uint64)
    b = rng.integers(0, 1 << 32, size=num_hashes, dtype=np.uint64)
    return a, b


def _shingle_base_hash(s: str) -> int:
    return int.from_bytes(hashlib.blake2b(s.encode("utf-8"), digest_size=4).digest(), "little")


def minhash_signature(shingles: frozenset[str] | set[str], num_hashes: int = 256,
                      seed: int = 42, shingle_width: int = 3) -> MinHashSignature:
    """Per-position minima of universal hashes over the shingle set."""
    if not shingles:
        raise ConfigurationError("cannot sign an empty shingle set")
    a, b = _hash_params(num_hashes, seed)
    base = np.array(sorted(_shingle_base_hash(s) for s in shingles), dtype=np.uint64)
    # (a*x + b) mod p, shape (shingles, hashes); uint64 arithmetic never overflows
    table = (base[:, None] * a[None, :] + b[None, :]) % _MINHASH_PRIME
    mins = table.min(axis=0)
    return MinHashSignature(values=tuple(int(v) for v in mins), num_hashes=num_hashes,
                            seed=seed, shingle_width=shingle_width)


def estimate_jaccard(a: MinHashSignature, b: MinHashSignature) -> float:
    """Fraction of signature positions with equal minima."""
    if (a.num_hashes, a.seed, a.shingle_width) != (b.num_hashes, b.seed, b.shingle_width):
        raise ConfigurationError("signatures were built with different parameters")
    equal = sum(1 for x, y in zip(a.values, b.values) if x == y)
    return equal / a.num_hashes


# --- Dedup -------------------------------------------------------------------

@dataclass(frozen=True)
class DedupConfig:
    threshold: float = 0.85
    num_hashes: int = 256
    shingle_width: int = 3
    seed: int = 42


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, x, y):
        rx, ry = self.find(x), self.find(y)
        if rx != ry:
            # anchor on the smaller id so representatives are order-independent
            if ry < rx:
                rx, ry = ry, rx
            self.parent[ry] = rx


def dedup_corpus(docs: list[CleanDocument], config: DedupConfig | None = None
                 ) -> tuple[list[CleanDocument], list[list[str]]]:
    """Drop near-duplicates, keeping the lexicographically smallest id per cluster.

    Returns (kept documents in input order, duplicate clusters of size >= 2 as
    sorted id lists). Pairwise comparison is brute force over signatures.
    """
    config = config or DedupConfig()
    if not docs:
        return [], []
    sigs = {
        doc.id: minhash_signature(shingle(doc.text, config.shingle_width),
                                  num_hashes=config.num_hashes, seed=config.seed,
                                  shingle_width=config.shingle_width)
        for doc in docs
    }
    ids = sorted(sigs)
    uf = _UnionFind(ids)
    for i, x in enumerate(ids):
        for y in ids[i + 1:]:
            if estimate_jaccard(sigs[x], sigs[y]) >= config.threshold:
                uf.union(x, y)

    clusters: dict[str, list[str]] = {}
    for doc_id in ids:
        clusters.setdefault(uf.find(doc_id), []).append(doc_id)
    representatives = {min(members) for members in clusters.values()}
    kept = [doc for doc in docs if doc.id in representatives]
    dup_clusters = sorted(sorted(m) for m in clusters.values() if len(m) > 1)
    return kept, dup_clusters


# --- Chunking ----------------------------------------------------------------

def chunk_document(doc: CleanDocument, max_sentences: int, overlap: int) -> list[Chunk]:
    """Sentence-boundary sliding window; adjacent chunks share `overlap` sentences."""
    if max_sentences < 1:
        raise ConfigurationError("max_sentences must be >= 1")
    if overlap >= max_sentences:
        raise ConfigurationError("overlap must be smaller than max_sentences")
    n = len(doc.sentences)
    step = max_sentences - overlap
    chunks: list[Chunk] = []
    start = 0
    while True:
        end = min(start + max_sentences, n)
        chunks.append(Chunk(
            chunk_id=f"{doc.id}#{start}-{end}", doc_id=doc.id,
            text=" ".join(doc.sentences[start:end]), sentence_span=(start, end)))
        if end >= n:
            break
        start += step
    return chunks
