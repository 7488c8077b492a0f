"""Embedding index with exact cosine top-k search and a thematic hierarchy.

The index is a flat exhaustive scan: every query compares against every stored
vector, so results are exact by construction. Ties on equal scores break by
ascending chunk id. The theme graph is an optional forest of content themes
with equivalence links and per-theme document attachments, supporting five
expansion modes over a query theme.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .corpus import Chunk
from .errors import ConfigurationError, MissingArtifactError, SchemaError

Vector = list[float]


def _dims_match(a: Vector, b: Vector) -> None:
    if len(a) != len(b):
        raise ConfigurationError(f"dimension mismatch: {len(a)} vs {len(b)}")


def cosine_similarity(a: Vector, b: Vector) -> float:
    """(a.b) / (|a| |b|), computed with exactly rounded summation."""
    _dims_match(a, b)
    max_a = max(map(abs, a), default=0.0)
    max_b = max(map(abs, b), default=0.0)
    if max_a == 0.0 or max_b == 0.0:
        raise ConfigurationError("cosine similarity is undefined for the zero vector")
    # squares of components beyond ~1e±150 leave float range; cosine is
    # scale-invariant, so such vectors are normalized by their largest entry
    if not 1e-150 < max_a < 1e150:
        a = [x / max_a for x in a]
    if not 1e-150 < max_b < 1e150:
        b = [y / max_b for y in b]
    dot = math.fsum(x * y for x, y in zip(a, b))
    norm_a = math.sqrt(math.fsum(x * x for x in a))
    norm_b = math.sqrt(math.fsum(y * y for y in b))
    return dot / (norm_a * norm_b)


@dataclass(frozen=True)
class RetrievalHit:
    chunk_id: str
    score: float
    rank: int

    def to_dict(self) -> dict:
        return {"chunk_id": self.chunk_id, "score": self.score, "rank": self.rank}


class VectorIndex:
    """Flat in-memory index; first upsert fixes the dimension."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.dim: int | None = None
        self._entries: dict[str, tuple[Chunk, Vector]] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def upsert(self, chunk: Chunk, vector: Vector) -> None:
        vector = [float(v) for v in vector]
        if not any(v != 0.0 for v in vector):
            raise ConfigurationError(f"chunk {chunk.chunk_id!r} has a zero embedding")
        if self.dim is None:
            self.dim = len(vector)
        elif len(vector) != self.dim:
            raise ConfigurationError(
                f"vector dim {len(vector)} does not match index dim {self.dim}")
        self._entries[chunk.chunk_id] = (chunk, vector)

    def get_chunk(self, chunk_id: str) -> Chunk:
        return self._entries[chunk_id][0]

    def get_vector(self, chunk_id: str) -> Vector:
        return list(self._entries[chunk_id][1])

    def chunks(self) -> list[Chunk]:
        return [chunk for chunk, _ in self._entries.values()]

    def retrieve_topk(self, query: Vector, k: int,
                      allowed_docs: set[str] | None = None) -> list[RetrievalHit]:
        """Top-k entries by cosine score; deterministic tie-break on chunk id."""
        if k < 1:
            raise ConfigurationError("k must be >= 1")
        if not self._entries:
            return []
        scored = []
        for chunk_id, (chunk, vector) in self._entries.items():
            if allowed_docs is not None and chunk.doc_id not in allowed_docs:
                continue
            scored.append((-cosine_similarity(query, vector), chunk_id))
        scored.sort()
        return [RetrievalHit(chunk_id=cid, score=-neg, rank=i + 1)
                for i, (neg, cid) in enumerate(scored[:k])]

    # -- persistence: header line + packed LE float32 block + JSON chunk table

    def save(self, path: str | Path) -> None:
        path = Path(path)
        ordered = sorted(self._entries)
        header = json.dumps({"schema": "georag-index/1", "dim": self.dim or 0,
                             "count": len(ordered), "seed": self.seed},
                            sort_keys=True).encode("utf-8") + b"\n"
        blob = bytearray()
        table = []
        for chunk_id in ordered:
            chunk, vector = self._entries[chunk_id]
            blob += struct.pack(f"<{len(vector)}f", *vector)
            table.append({"chunk_id": chunk.chunk_id, "doc_id": chunk.doc_id,
                          "text": chunk.text, "span": list(chunk.sentence_span),
                          "themes": sorted(chunk.themes)})
        body = json.dumps({"chunks": table}, ensure_ascii=False, sort_keys=True).encode("utf-8")
        path.write_bytes(header + bytes(blob) + body)

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(f"index file not found: {path}")
        data = path.read_bytes()
        nl = data.index(b"\n")
        try:
            header = json.loads(data[:nl])
        except json.JSONDecodeError as exc:
            raise SchemaError(f"corrupt index header: {exc}") from exc
        if header.get("schema") != "georag-index/1":
            raise SchemaError(f"unsupported index schema {header.get('schema')!r}")
        dim, count = header["dim"], header["count"]
        vec_bytes = count * dim * 4
        block = data[nl + 1:nl + 1 + vec_bytes]
        table = json.loads(data[nl + 1 + vec_bytes:])
        index = cls(seed=header.get("seed", 0))
        for i, rec in enumerate(table["chunks"]):
            vector = list(struct.unpack_from(f"<{dim}f", block, i * dim * 4))
            chunk = Chunk(chunk_id=rec["chunk_id"], doc_id=rec["doc_id"], text=rec["text"],
                          sentence_span=(rec["span"][0], rec["span"][1]),
                          themes=frozenset(rec.get("themes", [])))
            index.upsert(chunk, vector)
        return index


# --- Theme hierarchy ----------------------------------------------------------

class ExpansionMode(str, Enum):
    EQUIVALENT = "equivalent"
    DIRECT_PARENT = "direct_parent"
    INDIRECT_PARENT = "indirect_parent"
    DIRECT_CHILD = "direct_child"
    INDIRECT_CHILD = "indirect_child"


@dataclass
class ThemeGraph:
    """Forest of themes with equivalence links and document attachments."""

    nodes: set[str] = field(default_factory=set)
    parent: dict[str, str] = field(default_factory=dict)          # child -> parent
    equiv_links: list[tuple[str, str]] = field(default_factory=list)
    attachments: dict[str, set[str]] = field(default_factory=dict)  # theme -> doc ids

    def __post_init__(self):
        self._validate()

    def _validate(self) -> None:
        for child, parent in self.parent.items():
            if child not in self.nodes or parent not in self.nodes:
                raise SchemaError(f"parent edge references unknown theme: {child}->{parent}")
        for a, b in self.equiv_links:
            if a not in self.nodes or b not in self.nodes:
                raise SchemaError(f"equivalence link references unknown theme: {a}~{b}")
        for theme in self.attachments:
            if theme not in self.nodes:
                raise SchemaError(f"attachment references unknown theme: {theme}")
        # forest check: walking up from any node must terminate
        for node in self.nodes:
            seen = {node}
            cur = node
            while cur in self.parent:
                cur = self.parent[cur]
                if cur in seen:
                    raise SchemaError(f"cycle in parent edges at {cur!r}")
                seen.add(cur)

    def children(self, theme: str) -> list[str]:
        return sorted(c for c, p in self.parent.items() if p == theme)

    def ancestors(self, theme: str) -> list[str]:
        out = []
        cur = theme
        while cur in self.parent:
            cur = self.parent[cur]
            out.append(cur)
        return out

    def descendants(self, theme: str) -> list[str]:
        out: list[str] = []
        frontier = self.children(theme)
        while frontier:
            node = frontier.pop()
            out.append(node)
            frontier.extend(self.children(node))
        return out

    def equivalence_class(self, theme: str) -> set[str]:
        """Connected component of equivalence links; always contains the theme."""
        component = {theme}
        frontier = [theme]
        while frontier:
            node = frontier.pop()
            for a, b in self.equiv_links:
                for other in ((b,) if a == node else (a,) if b == node else ()):
                    if other not in component:
                        component.add(other)
                        frontier.append(other)
        return component

    def docs(self, theme: str) -> set[str]:
        return set(self.attachments.get(theme, set()))

    def to_json(self) -> str:
        return json.dumps({
            "schema": "georag-themes/1",
            "nodes": sorted(self.nodes),
            "parent_edges": sorted([c, p] for c, p in self.parent.items()),
            "equiv_links": sorted(sorted([a, b]) for a, b in self.equiv_links),
            "attachments": {t: sorted(d) for t, d in sorted(self.attachments.items())},
        }, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ThemeGraph":
        try:
            rec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid theme graph JSON: {exc}") from exc
        if rec.get("schema") != "georag-themes/1":
            raise SchemaError(f"unsupported theme graph schema {rec.get('schema')!r}")
        return cls(nodes=set(rec["nodes"]),
                   parent={c: p for c, p in rec.get("parent_edges", [])},
                   equiv_links=[(a, b) for a, b in rec.get("equiv_links", [])],
                   attachments={t: set(d) for t, d in rec.get("attachments", {}).items()})


def expand_retrieval(theme: str, mode: ExpansionMode, graph: ThemeGraph) -> set[str]:
    """Document ids reachable from `theme` under the given expansion mode."""
    if theme not in graph.nodes:
        raise ConfigurationError(f"unknown theme {theme!r}")
    mode = ExpansionMode(mode)
    if mode is ExpansionMode.EQUIVALENT:
        themes = graph.equivalence_class(theme)
    elif mode is ExpansionMode.DIRECT_PARENT:
        themes = set(graph.ancestors(theme)[:1])
    elif mode is ExpansionMode.INDIRECT_PARENT:
        themes = set(graph.ancestors(theme))
    elif mode is ExpansionMode.DIRECT_CHILD:
        themes = set(graph.children(theme))
    else:
        themes = set(graph.descendants(theme))
    out: set[str] = set()
    for t in themes:
        out |= graph.docs(t)
    return out
