"""Hybrid entity+text document scorer.

A document is represented by a query-specific entity-centric vector (a
weighted sum of entity embeddings), a text-centric vector (the mean of
its passage embeddings), and their linear fusion into the query space.
The relevance logit is a linear projection over the query embedding, the
fused document embedding, and their additive / subtractive / Hadamard
interactions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .corpus import Document, SegmenterConfig, segment_passages
from .embeddings import (
    DimsConfig,
    EmbeddingStore,
    linear,
    passage_key,
    sigmoid,
)
from .retrieval import Ranking

if TYPE_CHECKING:  # pragma: no cover
    from .entity_ranking import EntityRanking

__all__ = [
    "WeightingMode",
    "DreqModel",
    "ScoredDocument",
    "entity_weights",
    "entity_centric_embedding",
    "text_centric_embedding",
    "hybrid_embedding",
    "interaction_vectors",
    "score_document",
    "rerank",
    "maxsimcos_rerank",
    "save_checkpoint",
    "load_checkpoint",
]


class WeightingMode(str, Enum):
    PROBABILITY = "probability"
    UNIFORM = "uniform"
    RECIPROCAL_RANK = "reciprocal_rank"


@dataclass
class DreqModel:
    """Trainable reranker parameters.

    W2: (p, m+n) fusion matrix, b2: (p,) fusion bias,
    w3: (5p,) scoring projection, b3: scalar scoring bias.
    """

    W2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: float
    mode: WeightingMode = WeightingMode.PROBABILITY
    use_entities: bool = True
    finetune_entity_embeddings: bool = False
    dims: DimsConfig = field(default_factory=DimsConfig)

    def __post_init__(self) -> None:
        d = self.dims
        if self.W2.shape != (d.p, d.m + d.n):
            raise ValueError(f"W2 shape {self.W2.shape} != ({d.p}, {d.m + d.n})")
        if self.b2.shape != (d.p,):
            raise ValueError(f"b2 shape {self.b2.shape} != ({d.p},)")
        if self.w3.shape != (5 * d.p,):
            raise ValueError(f"w3 shape {self.w3.shape} != ({5 * d.p},)")
        for arr in (self.W2, self.b2, self.w3):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite model parameters")
        if not np.isfinite(self.b3):
            raise ValueError("non-finite model parameters")

    @classmethod
    def init(
        cls,
        dims: DimsConfig,
        mode: WeightingMode = WeightingMode.PROBABILITY,
        seed: int = 0,
        use_entities: bool = True,
        finetune_entity_embeddings: bool = False,
    ) -> "DreqModel":
        """Seeded uniform(-a, a) init with a = sqrt(6 / (fan_in + fan_out))."""
        rng = np.random.default_rng(seed)
        fan_in = dims.m + dims.n
        a2 = np.sqrt(6.0 / (fan_in + dims.p))
        W2 = rng.uniform(-a2, a2, size=(dims.p, fan_in))
        a3 = np.sqrt(6.0 / (5 * dims.p + 1))
        w3 = rng.uniform(-a3, a3, size=(5 * dims.p,))
        return cls(
            W2=W2,
            b2=np.zeros(dims.p),
            w3=w3,
            b3=0.0,
            mode=mode,
            use_entities=use_entities,
            finetune_entity_embeddings=finetune_entity_embeddings,
            dims=dims,
        )

    def copy(self) -> "DreqModel":
        return DreqModel(
            W2=self.W2.copy(),
            b2=self.b2.copy(),
            w3=self.w3.copy(),
            b3=self.b3,
            mode=self.mode,
            use_entities=self.use_entities,
            finetune_entity_embeddings=self.finetune_entity_embeddings,
            dims=self.dims,
        )


@dataclass
class ScoredDocument:
    doc_id: str
    logit: float
    prob: float
    diagnostics: dict = field(default_factory=dict)


def entity_weights(
    doc: Document, ranking: "EntityRanking", mode: WeightingMode
) -> list[tuple[str, float]]:
    """Per-document entity weights, one per distinct linked entity.

    probability:      w_e = prob_e / sum of probs over the doc's entities
    uniform:          w_e = 1
    reciprocal_rank:  w_e = 1 / rank(e) in the pooled ranking
    """
    entity_ids = doc.entity_ids()
    if not entity_ids:
        return []
    for eid in entity_ids:
        if eid not in ranking:
            raise KeyError(
                f"entity {eid!r} of doc {doc.doc_id!r} missing from the entity "
                f"ranking for query {ranking.query_id!r}"
            )
    if mode == WeightingMode.UNIFORM:
        return [(eid, 1.0) for eid in entity_ids]
    if mode == WeightingMode.RECIPROCAL_RANK:
        return [(eid, 1.0 / ranking.rank_of(eid)) for eid in entity_ids]
    probs = [ranking.prob_of(eid) for eid in entity_ids]
    total = sum(probs)
    return [(eid, prob / total) for eid, prob in zip(entity_ids, probs)]


def entity_centric_embedding(
    weights: list[tuple[str, float]], entity_store: EmbeddingStore
) -> np.ndarray:
    """Weighted sum of entity embeddings; no entities gives the zero vector."""
    v = np.zeros(entity_store.dim)
    for entity_id, w in weights:
        v = v + w * entity_store.get(entity_id)
    return v


def text_centric_embedding(passages, passage_store: EmbeddingStore) -> np.ndarray:
    """Arithmetic mean of the passage embeddings."""
    keys = [passage_key(p.doc_id, p.index) for p in passages]
    if not keys:
        raise ValueError("text_centric_embedding requires at least one passage")
    total = np.zeros(passage_store.dim)
    for key in keys:
        total = total + passage_store.get(key)
    return total / len(keys)


def hybrid_embedding(model: DreqModel, v_t: np.ndarray, v_e: np.ndarray) -> np.ndarray:
    """Fuse [text; entity] into the query space: W2 @ [v_t; v_e] + b2."""
    d = model.dims
    if v_t.shape != (d.n,):
        raise ValueError(f"v_t shape {v_t.shape} != ({d.n},)")
    if v_e.shape != (d.m,):
        raise ValueError(f"v_e shape {v_e.shape} != ({d.m},)")
    return linear(model.W2, np.concatenate([v_t, v_e]), model.b2)


def interaction_vectors(
    q: np.ndarray, d_q: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Additive, subtractive, and Hadamard interactions of query and document."""
    if q.shape != d_q.shape or q.ndim != 1:
        raise ValueError(f"interaction dims differ: {q.shape} vs {d_q.shape}")
    return q + d_q, q - d_q, q * d_q


def score_document(
    model: DreqModel,
    q_vec: np.ndarray,
    doc: Document,
    ranking: "EntityRanking",
    entity_store: EmbeddingStore,
    passage_store: EmbeddingStore,
    seg: SegmenterConfig = SegmenterConfig(),
) -> ScoredDocument:
    """Full scoring path: segmentation, Eq.-style entity aggregation, fusion,
    interactions, linear projection. With use_entities disabled the entity
    block is the zero vector and the logit is independent of the entity store.
    """
    passages = segment_passages(doc, seg)
    v_t = text_centric_embedding(passages, passage_store)
    if model.use_entities:
        weights = entity_weights(doc, ranking, model.mode)
        v_e = entity_centric_embedding(weights, entity_store)
    else:
        weights = []
        v_e = np.zeros(model.dims.m)
    d_q = hybrid_embedding(model, v_t, v_e)
    v_add, v_sub, v_mul = interaction_vectors(q_vec, d_q)
    features = np.concatenate([q_vec, d_q, v_add, v_sub, v_mul])
    logit = float(model.w3 @ features + model.b3)
    return ScoredDocument(
        doc_id=doc.doc_id,
        logit=logit,
        prob=sigmoid(logit),
        diagnostics={
            "entity_weights": weights,
            "zero_entities": model.use_entities and not weights,
            "v_e_norm": float(np.linalg.norm(v_e)),
            "v_t_norm": float(np.linalg.norm(v_t)),
            "d_q_norm": float(np.linalg.norm(d_q)),
        },
    )


def rerank(
    model: DreqModel,
    q_vec: np.ndarray,
    candidates: Ranking,
    docs,
    ranking: "EntityRanking",
    entity_store: EmbeddingStore,
    passage_store: EmbeddingStore,
    seg: SegmenterConfig = SegmenterConfig(),
) -> Ranking:
    """Reorder candidates by model logit (desc, doc_id asc on ties).

    `docs` maps doc_id -> Document for every candidate.
    """
    if not candidates.entries:
        raise ValueError(f"empty candidate list for query {candidates.query_id!r}")
    scored = []
    for entry in candidates.entries:
        doc = docs[entry.doc_id]
        sd = score_document(model, q_vec, doc, ranking, entity_store, passage_store, seg)
        scored.append((entry.doc_id, sd.logit))
    return Ranking.from_scores(candidates.query_id, scored)


def maxsimcos_rerank(
    query_entity_ids: list[str],
    candidates: Ranking,
    docs,
    entity_store: EmbeddingStore,
) -> Ranking:
    """Unsupervised baseline: a document scores the maximum cosine between
    any query entity embedding and any of its own entity embeddings.
    Documents without usable entities score -inf and sort last.
    """
    from .embeddings import cosine

    query_vecs = [entity_store.get(e) for e in query_entity_ids if e in entity_store]
    if not query_vecs:
        raise ValueError("maxsimcos requires at least one linked query entity with an embedding")
    scored = []
    for entry in candidates.entries:
        doc = docs[entry.doc_id]
        best = float("-inf")
        for eid in doc.entity_ids():
            if eid not in entity_store:
                continue
            dvec = entity_store.get(eid)
            for qvec in query_vecs:
                c = cosine(qvec, dvec)
                if c > best:
                    best = c
        scored.append((entry.doc_id, best))
    return Ranking.from_scores(candidates.query_id, scored)


# --- checkpoint serialization -------------------------------------------------

_HEADER_RE = re.compile(
    r"^#dreq-checkpoint k=(\d+) m=(\d+) n=(\d+) p=(\d+) mode=(\S+) "
    r"use_entities=([01]) finetune_entity_embeddings=([01])$"
)


def save_checkpoint(model: DreqModel, path: str) -> None:
    """Write parameters in the text block format; round-trip is bit-exact."""
    d = model.dims
    with open(path, "w", encoding="utf-8") as f:
        f.write(
            f"#dreq-checkpoint k={d.k} m={d.m} n={d.n} p={d.p} "
            f"mode={model.mode.value} "
            f"use_entities={int(model.use_entities)} "
            f"finetune_entity_embeddings={int(model.finetune_entity_embeddings)}\n"
        )
        _write_block(f, "W2", model.W2)
        _write_block(f, "b2", model.b2.reshape(1, -1))
        _write_block(f, "w3", model.w3.reshape(1, -1))
        _write_block(f, "b3", np.array([[model.b3]]))


def _write_block(f, name: str, arr: np.ndarray) -> None:
    rows, cols = arr.shape
    f.write(f"{name} {rows} {cols}\n")
    for row in arr:
        f.write(" ".join("%.17g" % x for x in row) + "\n")


def load_checkpoint(path: str) -> DreqModel:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        match = _HEADER_RE.match(header)
        if not match:
            raise ValueError(f"{path}: malformed checkpoint header {header!r}")
        k, m, n, p = (int(match.group(i)) for i in range(1, 5))
        mode = WeightingMode(match.group(5))
        use_entities = match.group(6) == "1"
        finetune = match.group(7) == "1"
        blocks: dict[str, np.ndarray] = {}
        line = f.readline()
        while line:
            name, rows_str, cols_str = line.split()
            rows, cols = int(rows_str), int(cols_str)
            data = [[float(x) for x in f.readline().split()] for _ in range(rows)]
            arr = np.array(data, dtype=np.float64)
            if arr.shape != (rows, cols):
                raise ValueError(f"{path}: block {name!r} shape mismatch")
            blocks[name] = arr
            line = f.readline()
    missing = {"W2", "b2", "w3", "b3"} - set(blocks)
    if missing:
        raise ValueError(f"{path}: missing parameter blocks {sorted(missing)}")
    return DreqModel(
        W2=blocks["W2"],
        b2=blocks["b2"].reshape(-1),
        w3=blocks["w3"].reshape(-1),
        b3=float(blocks["b3"][0, 0]),
        mode=mode,
        use_entities=use_entities,
        finetune_entity_embeddings=finetune,
        dims=DimsConfig(k=k, m=m, n=n, p=p),
    )
