"""Entity-linked corpus ingestion: documents, queries, qrels, passages.

File formats
------------
Corpus JSONL, one document per line:
    {"doc_id": str, "text": str,
     "entities": [{"entity_id": str, "mention": str, "start": int,
                   "end": int, "confidence": float}]}
Entity catalog JSONL:   {"entity_id": str, "description": str}
Queries TSV:            query_id <TAB> text
Qrels (TREC):           qid 0 docid grade   (whitespace-separated)
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable

__all__ = [
    "EntityMention",
    "EntityRecord",
    "Document",
    "Query",
    "Qrels",
    "Passage",
    "SegmenterConfig",
    "CorpusStore",
    "split_sentences",
    "load_corpus",
    "load_entity_catalog",
    "load_queries",
    "load_qrels",
    "segment_passages",
    "pool_entities",
    "transfer_labels",
]

_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list[str]:
    """Split on `.`, `!`, `?` followed by whitespace. Deterministic and
    dependency-free; swap in another splitter via the `splitter` hooks."""
    return [piece for piece in _SENTENCE_BREAK.split(text) if piece.strip()]


@dataclass(frozen=True)
class EntityMention:
    entity_id: str
    surface: str
    start: int
    end: int
    confidence: float


@dataclass(frozen=True)
class EntityRecord:
    entity_id: str
    description: str = ""


@dataclass
class Document:
    doc_id: str
    text: str
    sentences: list[str]
    mentions: list[EntityMention] = field(default_factory=list)

    def entity_ids(self) -> list[str]:
        """Distinct linked entities in first-mention order."""
        seen: dict[str, None] = {}
        for m in self.mentions:
            seen.setdefault(m.entity_id, None)
        return list(seen.keys())


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str


@dataclass
class Qrels:
    """Graded relevance judgments, (query_id, doc_id) -> grade >= 0."""

    grades: dict[str, dict[str, int]] = field(default_factory=dict)

    def add(self, query_id: str, doc_id: str, grade: int) -> None:
        if grade < 0:
            raise ValueError(f"negative grade {grade} for ({query_id}, {doc_id})")
        per_query = self.grades.setdefault(query_id, {})
        if doc_id in per_query:
            raise ValueError(f"duplicate judgment for ({query_id}, {doc_id})")
        per_query[doc_id] = grade

    def grade(self, query_id: str, doc_id: str) -> int:
        """Grade of the pair; unjudged pairs grade 0."""
        return self.grades.get(query_id, {}).get(doc_id, 0)

    def is_judged(self, query_id: str, doc_id: str) -> bool:
        return doc_id in self.grades.get(query_id, {})

    def relevant_docs(self, query_id: str) -> list[str]:
        """Doc ids judged with grade >= 1, in judgment order."""
        return [d for d, g in self.grades.get(query_id, {}).items() if g >= 1]

    def query_ids(self) -> list[str]:
        return list(self.grades.keys())


@dataclass(frozen=True)
class Passage:
    doc_id: str
    index: int
    sentence_range: tuple[int, int]
    text: str


@dataclass(frozen=True)
class SegmenterConfig:
    """Sliding window of `window` sentences advanced by `stride` sentences."""

    window: int = 10
    stride: int = 5

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if not 1 <= self.stride <= self.window:
            raise ValueError(f"stride must be in [1, window], got {self.stride}")


@dataclass
class CorpusStore:
    """Immutable-after-load document and entity-record tables."""

    documents: dict[str, Document] = field(default_factory=dict)
    entities: dict[str, EntityRecord] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.documents)

    def doc(self, doc_id: str) -> Document:
        try:
            return self.documents[doc_id]
        except KeyError:
            raise KeyError(f"doc_id {doc_id!r} not in corpus") from None

    def doc_ids(self) -> list[str]:
        return list(self.documents.keys())


def _parse_mention(raw: dict, doc_id: str, text_len: int) -> EntityMention:
    mention = EntityMention(
        entity_id=str(raw["entity_id"]),
        surface=str(raw.get("mention", "")),
        start=int(raw["start"]),
        end=int(raw["end"]),
        confidence=float(raw.get("confidence", 1.0)),
    )
    if not 0 <= mention.start < mention.end:
        raise ValueError(f"doc {doc_id!r}: mention span [{mention.start}, {mention.end}) invalid")
    if mention.end > text_len:
        raise ValueError(
            f"doc {doc_id!r}: mention end {mention.end} beyond text length {text_len}"
        )
    if not 0.0 <= mention.confidence <= 1.0:
        raise ValueError(f"doc {doc_id!r}: confidence {mention.confidence} outside [0, 1]")
    return mention


def load_corpus(
    path: str,
    catalog_path: str | None = None,
    splitter: Callable[[str], list[str]] = split_sentences,
) -> CorpusStore:
    """Load a JSONL corpus; sentences are materialized with `splitter`.

    Rejects duplicate doc_ids and mention spans outside the text. When
    `catalog_path` is given its descriptions are merged into the store's
    entity table; entities mentioned but absent from the catalog get an
    empty-description record.
    """
    store = CorpusStore()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{line_no}: malformed JSON: {e}") from e
            try:
                doc_id = str(raw["doc_id"])
                text = str(raw["text"])
            except KeyError as e:
                raise ValueError(f"{path}:{line_no}: missing field {e}") from e
            if doc_id in store.documents:
                raise ValueError(f"{path}:{line_no}: duplicate doc_id {doc_id!r}")
            mentions = [_parse_mention(m, doc_id, len(text)) for m in raw.get("entities", [])]
            doc = Document(doc_id=doc_id, text=text, sentences=splitter(text), mentions=mentions)
            store.documents[doc_id] = doc
            for m in mentions:
                store.entities.setdefault(m.entity_id, EntityRecord(m.entity_id))
    if catalog_path is not None:
        for record in load_entity_catalog(catalog_path).values():
            store.entities[record.entity_id] = record
    return store


def load_entity_catalog(path: str) -> dict[str, EntityRecord]:
    """Load the entity-id -> description catalog."""
    catalog: dict[str, EntityRecord] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                entity_id = str(raw["entity_id"])
                description = str(raw.get("description", ""))
            except (json.JSONDecodeError, KeyError) as e:
                raise ValueError(f"{path}:{line_no}: malformed catalog line: {e}") from e
            if entity_id in catalog:
                raise ValueError(f"{path}:{line_no}: duplicate entity_id {entity_id!r}")
            catalog[entity_id] = EntityRecord(entity_id, description)
    return catalog


def load_queries(path: str) -> list[Query]:
    """Load `query_id <TAB> text` topics."""
    queries: list[Query] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ValueError(f"{path}:{line_no}: expected 'query_id<TAB>text'")
            query_id, text = line.split("\t", 1)
            query_id = query_id.strip()
            text = text.strip()
            if not query_id or not text:
                raise ValueError(f"{path}:{line_no}: empty query_id or text")
            if query_id in seen:
                raise ValueError(f"{path}:{line_no}: duplicate query_id {query_id!r}")
            seen.add(query_id)
            queries.append(Query(query_id, text))
    return queries


def load_qrels(path: str) -> Qrels:
    """Load TREC qrels (`qid 0 docid grade`)."""
    qrels = Qrels()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ValueError(f"{path}:{line_no}: expected 4 columns, got {len(parts)}")
            qid, _, doc_id, grade_str = parts
            try:
                grade = int(grade_str)
            except ValueError as e:
                raise ValueError(f"{path}:{line_no}: invalid grade {grade_str!r}") from e
            try:
                qrels.add(qid, doc_id, grade)
            except ValueError as e:
                raise ValueError(f"{path}:{line_no}: {e}") from e
    return qrels


def segment_passages(doc: Document, cfg: SegmenterConfig) -> list[Passage]:
    """Slide a `cfg.window`-sentence window by `cfg.stride` sentences.

    Windows start at 0, stride, 2*stride, ...; each covers
    [start, min(start + window, n)). Emission stops with the first window
    whose end reaches the document's last sentence (that window included).
    """
    n = len(doc.sentences)
    passages: list[Passage] = []
    start = 0
    index = 0
    while start < n:
        end = min(start + cfg.window, n)
        passages.append(
            Passage(
                doc_id=doc.doc_id,
                index=index,
                sentence_range=(start, end),
                text=" ".join(doc.sentences[start:end]),
            )
        )
        if end >= n:
            break
        start += cfg.stride
        index += 1
    return passages


def pool_entities(candidates: Iterable[Document]) -> list[str]:
    """Union of linked entity ids over candidates, in first-seen order."""
    pooled: dict[str, None] = {}
    for doc in candidates:
        for m in doc.mentions:
            pooled.setdefault(m.entity_id, None)
    return list(pooled.keys())


def transfer_labels(qrels: Qrels, query_id: str, candidates: list[Document]) -> dict[str, int]:
    """Carry document relevance down to entities.

    An entity is labeled 1 iff it appears in at least one candidate with
    grade >= 1, and 0 if it appears only in grade-0 or unjudged candidates.
    The keyset equals pool_entities(candidates), in the same order.
    """
    labels: dict[str, int] = {}
    for doc in candidates:
        relevant = qrels.grade(query_id, doc.doc_id) >= 1
        for entity_id in doc.entity_ids():
            if relevant:
                labels[entity_id] = 1
            else:
                labels.setdefault(entity_id, 0)
    return labels
