"""Inverted index, BM25 scoring, RM3 expansion, and candidate retrieval.

BM25 uses the Lucene-style formulation
    idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
    score  = sum_t idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl/avgdl))
with defaults k1 = 0.9, b = 0.4. RM3 interpolates a relevance model built
from the top feedback documents with the original query model.

Ties are always broken score-descending, doc_id-ascending, so run files
are stable across executions.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import _porter
from .corpus import CorpusStore

__all__ = [
    "TokenizerConfig",
    "tokenize",
    "Bm25Params",
    "Rm3Params",
    "RunEntry",
    "Ranking",
    "InvertedIndex",
    "build_index",
    "bm25_score",
    "rm3_expand",
    "retrieve",
    "write_run",
    "load_run",
]

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = True
    stem: bool = False


def tokenize(text: str, cfg: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """Split on non-alphanumeric characters, lowercase, optionally stem."""
    tokens = _TOKEN_RE.findall(text)
    if cfg.lowercase:
        tokens = [t.lower() for t in tokens]
    if cfg.stem:
        tokens = [_porter.stem(t) for t in tokens]
    return tokens


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self) -> None:
        if self.k1 < 0:
            raise ValueError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


@dataclass(frozen=True)
class Rm3Params:
    fb_docs: int = 10
    fb_terms: int = 10
    original_weight: float = 0.5

    def __post_init__(self) -> None:
        if self.fb_docs < 1 or self.fb_terms < 1:
            raise ValueError("fb_docs and fb_terms must be >= 1")
        if not 0.0 <= self.original_weight <= 1.0:
            raise ValueError(f"original_weight must be in [0, 1], got {self.original_weight}")


@dataclass(frozen=True)
class RunEntry:
    doc_id: str
    score: float
    rank: int


@dataclass
class Ranking:
    """Per-query ordered document list: scores non-increasing, ranks 1-based."""

    query_id: str
    entries: list[RunEntry]

    @classmethod
    def from_scores(cls, query_id: str, scored: Iterable[tuple[str, float]]) -> "Ranking":
        """Sort (doc_id, score) pairs score-desc / doc_id-asc and assign ranks."""
        pairs = list(scored)
        if len({d for d, _ in pairs}) != len(pairs):
            raise ValueError(f"duplicate doc_ids in ranking for query {query_id!r}")
        pairs.sort(key=lambda item: (-item[1], item[0]))
        entries = [RunEntry(d, float(s), i + 1) for i, (d, s) in enumerate(pairs)]
        return cls(query_id, entries)

    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]

    def score_of(self, doc_id: str) -> float:
        for e in self.entries:
            if e.doc_id == doc_id:
                return e.score
        raise KeyError(f"doc_id {doc_id!r} not in ranking for query {self.query_id!r}")

    def top(self, k: int) -> "Ranking":
        return Ranking(self.query_id, self.entries[:k])

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class InvertedIndex:
    """Term -> {doc_internal_id: tf} postings plus per-document statistics."""

    doc_ids: list[str]
    doc_lengths: list[int]
    postings: dict[str, dict[int, int]]
    avg_doc_length: float
    tokenizer: TokenizerConfig
    _doc_index: dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        if not self._doc_index:
            self._doc_index = {d: i for i, d in enumerate(self.doc_ids)}

    @property
    def doc_count(self) -> int:
        return len(self.doc_ids)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def tf(self, term: str, doc_id: str) -> int:
        i = self._doc_index.get(doc_id)
        if i is None:
            raise KeyError(f"doc_id {doc_id!r} not in index")
        return self.postings.get(term, {}).get(i, 0)

    def has_doc(self, doc_id: str) -> bool:
        return doc_id in self._doc_index


def build_index(
    corpus: CorpusStore | Mapping[str, str],
    tokenizer: TokenizerConfig = TokenizerConfig(),
) -> InvertedIndex:
    """Index a corpus (or any id -> text mapping, e.g. entity descriptions)."""
    if isinstance(corpus, CorpusStore):
        texts: Mapping[str, str] = {d.doc_id: d.text for d in corpus.documents.values()}
    else:
        texts = corpus
    if not texts:
        raise ValueError("cannot build an index over an empty corpus")

    doc_ids: list[str] = []
    doc_lengths: list[int] = []
    postings: dict[str, dict[int, int]] = {}
    for doc_id, text in texts.items():
        tokens = tokenize(text, tokenizer)
        i = len(doc_ids)
        doc_ids.append(doc_id)
        doc_lengths.append(len(tokens))
        for term in tokens:
            per_term = postings.setdefault(term, {})
            per_term[i] = per_term.get(i, 0) + 1
    avg = sum(doc_lengths) / len(doc_lengths)
    return InvertedIndex(doc_ids, doc_lengths, postings, avg, tokenizer)


def _idf(index: InvertedIndex, term: str) -> float:
    df = index.df(term)
    return math.log(1.0 + (index.doc_count - df + 0.5) / (df + 0.5))


def _tf_component(tf: int, dl: int, avgdl: float, params: Bm25Params) -> float:
    if tf == 0:
        return 0.0
    norm = params.k1 * (1.0 - params.b + params.b * dl / avgdl)
    return tf * (params.k1 + 1.0) / (tf + norm)


def bm25_score(
    index: InvertedIndex,
    query_terms: list[str],
    doc_id: str,
    params: Bm25Params = Bm25Params(),
) -> float:
    """BM25 score of one document; terms absent from the doc contribute 0."""
    if not index.has_doc(doc_id):
        raise KeyError(f"doc_id {doc_id!r} not in index")
    i = index._doc_index[doc_id]
    dl = index.doc_lengths[i]
    score = 0.0
    for term in query_terms:
        tf = index.postings.get(term, {}).get(i, 0)
        if tf:
            score += _idf(index, term) * _tf_component(tf, dl, index.avg_doc_length, params)
    return score


def _score_all(
    index: InvertedIndex, weighted_terms: Mapping[str, float], params: Bm25Params
) -> list[float]:
    """Term-at-a-time accumulation of weighted BM25 over every document."""
    scores = [0.0] * index.doc_count
    for term, weight in weighted_terms.items():
        per_term = index.postings.get(term)
        if not per_term:
            continue
        idf = _idf(index, term)
        for i, tf in per_term.items():
            scores[i] += weight * idf * _tf_component(
                tf, index.doc_lengths[i], index.avg_doc_length, params
            )
    return scores


def _original_query_model(query_terms: list[str]) -> dict[str, float]:
    distinct: dict[str, None] = {}
    for t in query_terms:
        distinct.setdefault(t, None)
    if not distinct:
        raise ValueError("query has no terms")
    w = 1.0 / len(distinct)
    return {t: w for t in distinct}


def rm3_expand(
    index: InvertedIndex,
    query_terms: list[str],
    params: Rm3Params = Rm3Params(),
    bm25: Bm25Params = Bm25Params(),
) -> dict[str, float]:
    """RM3 pseudo-relevance feedback: a relevance model over the top
    `fb_docs` documents (document weights = softmax of their BM25 scores),
    truncated to `fb_terms` terms, interpolated with the uniform original
    query model at `original_weight`. Output weights sum to 1.
    """
    original = _original_query_model(query_terms)
    if params.original_weight == 1.0:
        return original
    scores = _score_all(index, original, bm25)
    matched = [(i, s) for i, s in enumerate(scores) if s > 0.0]
    if not matched:
        return original
    matched.sort(key=lambda item: (-item[1], index.doc_ids[item[0]]))
    feedback = matched[: params.fb_docs]

    # softmax-normalized doc weights over the feedback set
    max_s = max(s for _, s in feedback)
    exp_s = [(i, math.exp(s - max_s)) for i, s in feedback]
    z = sum(e for _, e in exp_s)

    term_weights: dict[str, float] = {}
    for i, e in exp_s:
        doc_weight = e / z
        dl = index.doc_lengths[i]
        if dl == 0:
            continue
        for term, per_term in index.postings.items():
            tf = per_term.get(i)
            if tf:
                term_weights[term] = term_weights.get(term, 0.0) + doc_weight * tf / dl

    top = sorted(term_weights.items(), key=lambda item: (-item[1], item[0]))[: params.fb_terms]
    total = sum(w for _, w in top)
    feedback_model = {t: w / total for t, w in top}

    alpha = params.original_weight
    combined: dict[str, float] = {}
    for t, w in original.items():
        combined[t] = alpha * w
    for t, w in feedback_model.items():
        combined[t] = combined.get(t, 0.0) + (1.0 - alpha) * w
    return {t: w for t, w in combined.items() if w > 0.0}


def retrieve(
    index: InvertedIndex,
    query: str | list[str],
    k: int = 1000,
    mode: str = "bm25",
    bm25: Bm25Params = Bm25Params(),
    rm3: Rm3Params = Rm3Params(),
    query_id: str = "",
) -> Ranking:
    """Top-k retrieval; `mode` is "bm25" or "bm25_rm3" (second-pass scoring
    with the expanded weighted query). Every indexed document is scored, so
    a k beyond the matched set is padded with zero-score documents in
    doc_id order.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if mode not in ("bm25", "bm25_rm3"):
        raise ValueError(f"unknown retrieval mode {mode!r}")
    terms = tokenize(query, index.tokenizer) if isinstance(query, str) else list(query)

    if mode == "bm25":
        # duplicate query terms accumulate per occurrence, like a bag of words
        weighted: dict[str, float] = {}
        for t in terms:
            weighted[t] = weighted.get(t, 0.0) + 1.0
    else:
        weighted = rm3_expand(index, terms, rm3, bm25)

    scores = _score_all(index, weighted, bm25)
    ranking = Ranking.from_scores(query_id, zip(index.doc_ids, scores))
    ranking.entries = ranking.entries[:k]
    return ranking


def write_run(rankings: Iterable[Ranking], path: str, tag: str = "dreq") -> None:
    """Write TREC run lines `qid Q0 docid rank score tag` (score to 6 dp)."""
    with open(path, "w", encoding="utf-8") as f:
        for ranking in rankings:
            for e in ranking.entries:
                f.write(f"{ranking.query_id} Q0 {e.doc_id} {e.rank} {e.score:.6f} {tag}\n")


def load_run(path: str) -> dict[str, Ranking]:
    """Load a TREC run file into per-query rankings (file order preserved)."""
    per_query: dict[str, list[RunEntry]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise ValueError(f"{path}:{line_no}: expected 6 columns, got {len(parts)}")
            qid, _, doc_id, rank_str, score_str, _tag = parts
            try:
                rank = int(rank_str)
                score = float(score_str)
            except ValueError as e:
                raise ValueError(f"{path}:{line_no}: bad rank/score") from e
            per_query.setdefault(qid, []).append(RunEntry(doc_id, score, rank))
    rankings: dict[str, Ranking] = {}
    for qid, entries in per_query.items():
        entries.sort(key=lambda e: e.rank)
        for i, e in enumerate(entries, start=1):
            if e.rank != i:
                raise ValueError(f"{path}: ranks for query {qid!r} not contiguous from 1")
        rankings[qid] = Ranking(qid, entries)
    return rankings
