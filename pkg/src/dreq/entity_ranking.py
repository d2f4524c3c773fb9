"""Per-query ranking of pooled candidate entities.

Three rankers share one output type: a trainable linear head over
query-conditioned entity encodings, BM25 over catalog descriptions, and
an embedding-similarity score interpolated with BM25. Raw scores are
softmax-normalized over the full pooled set, so the resulting values act
as relevance probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingStore, cosine, query_entity_key, softmax
from .retrieval import Bm25Params, InvertedIndex, Ranking, RunEntry, bm25_score, tokenize
from .training import AdamState, TrainConfig, adam_step, bce_dlogits, bce_loss

__all__ = [
    "EntityHead",
    "EntityRankingEntry",
    "EntityRanking",
    "score_entity",
    "rank_entities",
    "train_entity_head",
    "bm25_entity_rank",
    "geeer_entity_rank",
    "save_entity_head",
    "load_entity_head",
    "entity_ranking_to_run",
    "write_entity_rankings_tsv",
    "load_entity_rankings_tsv",
]


@dataclass
class EntityHead:
    """Linear scorer over a k-dim query-conditioned encoding: w1 . enc + b1."""

    w1: np.ndarray
    b1: float

    def __post_init__(self) -> None:
        if self.w1.ndim != 1:
            raise ValueError(f"w1 must be a vector, got shape {self.w1.shape}")
        if not (np.all(np.isfinite(self.w1)) and np.isfinite(self.b1)):
            raise ValueError("non-finite head parameters")

    @classmethod
    def init(cls, k: int, seed: int = 0) -> "EntityHead":
        rng = np.random.default_rng(seed)
        a = np.sqrt(6.0 / (k + 1))
        return cls(w1=rng.uniform(-a, a, size=(k,)), b1=0.0)


@dataclass(frozen=True)
class EntityRankingEntry:
    entity_id: str
    raw_score: float
    prob: float
    rank: int


@dataclass
class EntityRanking:
    """Pooled entities sorted raw-score desc / entity_id asc, with softmax
    probabilities over the full pooled set."""

    query_id: str
    entries: list[EntityRankingEntry]
    _prob: dict[str, float] = field(default_factory=dict, repr=False)
    _rank: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self._prob:
            self._prob = {e.entity_id: e.prob for e in self.entries}
            self._rank = {e.entity_id: e.rank for e in self.entries}

    @classmethod
    def from_raw_scores(
        cls, query_id: str, scored: Sequence[tuple[str, float]]
    ) -> "EntityRanking":
        if not scored:
            raise ValueError(f"no entities to rank for query {query_id!r}")
        if len({e for e, _ in scored}) != len(scored):
            raise ValueError(f"duplicate entity ids in ranking for query {query_id!r}")
        probs = softmax([s for _, s in scored])
        triples = sorted(
            ((eid, float(raw), float(p)) for (eid, raw), p in zip(scored, probs)),
            key=lambda t: (-t[1], t[0]),
        )
        entries = [
            EntityRankingEntry(eid, raw, p, i + 1) for i, (eid, raw, p) in enumerate(triples)
        ]
        return cls(query_id, entries)

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self._prob

    def __len__(self) -> int:
        return len(self.entries)

    def prob_of(self, entity_id: str) -> float:
        return self._prob[entity_id]

    def rank_of(self, entity_id: str) -> int:
        return self._rank[entity_id]


def score_entity(head: EntityHead, enc: np.ndarray) -> float:
    """Raw relevance score of one encoded entity."""
    if enc.shape != head.w1.shape:
        raise ValueError(f"encoding shape {enc.shape} != head shape {head.w1.shape}")
    return float(head.w1 @ enc + head.b1)


def rank_entities(
    head: EntityHead,
    query_id: str,
    pooled: Sequence[str],
    encoding_store: EmbeddingStore,
) -> EntityRanking:
    """Score every pooled entity with the head and softmax-normalize."""
    scored = []
    for entity_id in pooled:
        key = query_entity_key(query_id, entity_id)
        if key not in encoding_store:
            raise KeyError(
                f"no query-conditioned encoding for (query {query_id!r}, entity {entity_id!r})"
            )
        scored.append((entity_id, score_entity(head, encoding_store.get(key))))
    return EntityRanking.from_raw_scores(query_id, scored)


def train_entity_head(
    examples: Sequence[tuple[np.ndarray, int]],
    cfg: TrainConfig,
    log_rows: list | None = None,
) -> EntityHead:
    """Adam-optimized BCE fit of the linear head; deterministic given seed."""
    if not examples:
        raise ValueError("cannot train an entity head on zero examples")
    X = np.stack([np.asarray(enc, dtype=np.float64) for enc, _ in examples])
    y = np.array([label for _, label in examples], dtype=np.float64)
    k = X.shape[1]

    head = EntityHead.init(k, seed=cfg.seed)
    params = {"w1": head.w1, "b1": np.array([head.b1])}
    state = AdamState()
    rng = np.random.default_rng(cfg.seed)

    best = float("inf")
    stall = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(examples))
        total = 0.0
        for start in range(0, len(examples), cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            Xb, yb = X[idx], y[idx]
            z = Xb @ params["w1"] + params["b1"][0]
            loss = bce_loss(z, yb)
            dz = bce_dlogits(z, yb) / len(idx)
            grads = {"w1": Xb.T @ dz, "b1": np.array([np.sum(dz)])}
            adam_step(params, grads, state, cfg)
            total += loss * len(idx)
        epoch_loss = total / len(examples)
        if log_rows is not None:
            log_rows.append((0, epoch, epoch_loss))
        if best - epoch_loss < cfg.early_stop_delta:
            stall += 1
        else:
            stall = 0
        best = min(best, epoch_loss)
        if stall >= cfg.early_stop_patience:
            break
    head.b1 = float(params["b1"][0])
    return head


def bm25_entity_rank(
    query: str | list[str],
    pooled: Sequence[str],
    description_index: InvertedIndex,
    bm25: Bm25Params = Bm25Params(),
    query_id: str = "",
) -> EntityRanking:
    """Sparse alternative: BM25 of the query against catalog descriptions.

    Entities without an indexed description score 0.
    """
    terms = tokenize(query, description_index.tokenizer) if isinstance(query, str) else query
    scored = []
    for entity_id in pooled:
        if description_index.has_doc(entity_id):
            raw = bm25_score(description_index, terms, entity_id, bm25)
        else:
            raw = 0.0
        scored.append((entity_id, raw))
    return EntityRanking.from_raw_scores(query_id, scored)


def _minmax(values: Sequence[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.5] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def geeer_entity_rank(
    query_mentions: Sequence[tuple[str, float]],
    pooled: Sequence[str],
    entity_store: EmbeddingStore,
    bm25_scores: Mapping[str, float],
    lam: float = 0.5,
    query_id: str = "",
) -> EntityRanking:
    """Embedding alternative: each pooled entity scores the confidence-
    weighted sum of cosines to the query's linked entities, min-max
    normalized per query and interpolated with min-max BM25 at `lam`.
    Constant score lists normalize to 0.5.
    """
    usable = [(eid, conf) for eid, conf in query_mentions if eid in entity_store]
    if not usable:
        raise ValueError(
            f"query {query_id!r} has no linked entities with embeddings; "
            "embedding-based entity ranking is inapplicable"
        )
    query_vecs = [(entity_store.get(eid), conf) for eid, conf in usable]
    emb_scores = []
    sparse_scores = []
    for entity_id in pooled:
        vec = entity_store.get(entity_id)
        emb_scores.append(sum(conf * cosine(vec, qv) for qv, conf in query_vecs))
        sparse_scores.append(float(bm25_scores.get(entity_id, 0.0)))
    mm_emb = _minmax(emb_scores)
    mm_sparse = _minmax(sparse_scores)
    scored = [
        (eid, lam * s + (1.0 - lam) * e)
        for eid, s, e in zip(pooled, mm_sparse, mm_emb)
    ]
    return EntityRanking.from_raw_scores(query_id, scored)


# --- serialization --------------------------------------------------------------


def entity_ranking_to_run(ranking: EntityRanking) -> Ranking:
    """TREC-run view with entity_id in the docid column and prob as score."""
    entries = [RunEntry(e.entity_id, e.prob, e.rank) for e in ranking.entries]
    return Ranking(ranking.query_id, entries)


def write_entity_rankings_tsv(rankings: Mapping[str, EntityRanking], path: str) -> None:
    """Full-precision sidecar used by downstream stages (the TREC export
    rounds scores to 6 decimals)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("query_id\tentity_id\traw_score\tprob\trank\n")
        for qid in sorted(rankings):
            for e in rankings[qid].entries:
                f.write(f"{qid}\t{e.entity_id}\t{e.raw_score:.17g}\t{e.prob:.17g}\t{e.rank}\n")


def load_entity_rankings_tsv(path: str) -> dict[str, EntityRanking]:
    per_query: dict[str, list[EntityRankingEntry]] = {}
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline()
        if not header.startswith("query_id\t"):
            raise ValueError(f"{path}: missing entity-ranking header")
        for line_no, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValueError(f"{path}:{line_no}: expected 5 columns")
            qid, eid, raw, prob, rank = parts
            per_query.setdefault(qid, []).append(
                EntityRankingEntry(eid, float(raw), float(prob), int(rank))
            )
    out: dict[str, EntityRanking] = {}
    for qid, entries in per_query.items():
        entries.sort(key=lambda e: e.rank)
        out[qid] = EntityRanking(qid, entries)
    return out


def save_entity_head(head: EntityHead, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"#entity-head k={head.w1.shape[0]}\n")
        f.write(" ".join("%.17g" % x for x in head.w1) + "\n")
        f.write("%.17g\n" % head.b1)


def load_entity_head(path: str) -> EntityHead:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if not header.startswith("#entity-head k="):
            raise ValueError(f"{path}: malformed entity-head header")
        k = int(header.split("=", 1)[1])
        w1 = np.array([float(x) for x in f.readline().split()], dtype=np.float64)
        b1 = float(f.readline().strip())
    if w1.shape != (k,):
        raise ValueError(f"{path}: expected {k} weights, got {w1.shape[0]}")
    return EntityHead(w1=w1, b1=b1)
