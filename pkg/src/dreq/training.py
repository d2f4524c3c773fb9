"""Pointwise training: balanced example construction, query-level folds,
Adam optimization, and analytic gradients through the full scoring path.

The entity ranking is frozen while the document scorer trains, so the
per-document entity weights are constants and the gradient of the loss
w.r.t. an entity embedding is the weight-scaled gradient w.r.t. the
entity-centric document vector.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import CorpusStore, Qrels, SegmenterConfig, segment_passages
from .embeddings import EmbeddingStore, passage_key, sigmoid
from .model import DreqModel, entity_weights, rerank
from .retrieval import Ranking

logger = logging.getLogger(__name__)

__all__ = [
    "TrainingExample",
    "TrainConfig",
    "Fold",
    "FoldPlan",
    "make_folds",
    "build_doc_examples",
    "build_entity_examples",
    "bce_loss",
    "AdamState",
    "adam_step",
    "TrainData",
    "DreqBatch",
    "TrainResult",
    "train_dreq",
]

_PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class TrainingExample:
    query_id: str
    item_id: str  # doc_id for document examples, entity_id for entity examples
    label: int

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 20
    epochs: int = 20
    seed: int = 13
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    finetune_entity_embeddings: bool = False
    early_stop_delta: float = 1e-5
    early_stop_patience: int = 3

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class Fold:
    train: tuple[str, ...]
    test: tuple[str, ...]


@dataclass
class FoldPlan:
    folds: list[Fold]

    def save(self, path: str) -> None:
        payload = {"folds": [{"train": list(f.train), "test": list(f.test)} for f in self.folds]}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "FoldPlan":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls([Fold(tuple(f["train"]), tuple(f["test"])) for f in payload["folds"]])


def make_folds(query_ids: Sequence[str], k: int = 5, seed: int = 13) -> FoldPlan:
    """Seeded shuffle then round-robin split into k query-level folds.

    Test sets partition the query set; a query never appears in its own
    fold's training data.
    """
    ids = sorted(set(query_ids))
    if len(ids) != len(list(query_ids)):
        raise ValueError("duplicate query_ids in fold input")
    if len(ids) < k:
        raise ValueError(f"need at least {k} queries for {k} folds, got {len(ids)}")
    rng = random.Random(seed)
    rng.shuffle(ids)
    folds = []
    for i in range(k):
        test = tuple(ids[i::k])
        test_set = set(test)
        train = tuple(q for q in ids if q not in test_set)
        folds.append(Fold(train=train, test=test))
    return FoldPlan(folds)


def build_doc_examples(
    qrels: Qrels, candidates: Mapping[str, Ranking], seed: int = 13
) -> list[TrainingExample]:
    """Balanced pointwise document examples per query.

    Positives are the judged-relevant documents (grade >= 1); the negative
    pool is every candidate judged 0 or unjudged, sampled without
    replacement down to the positive count (all of them if the pool is
    smaller). Queries with no positives are skipped with a warning.
    """
    rng = random.Random(seed)
    examples: list[TrainingExample] = []
    for query_id in sorted(candidates):
        positives = sorted(qrels.relevant_docs(query_id))
        if not positives:
            logger.warning("query %s has no judged-relevant documents; skipped", query_id)
            continue
        pool = [d for d in candidates[query_id].doc_ids() if qrels.grade(query_id, d) == 0]
        rng.shuffle(pool)
        negatives = pool[: len(positives)]
        examples.extend(TrainingExample(query_id, d, 1) for d in positives)
        examples.extend(TrainingExample(query_id, d, 0) for d in negatives)
    return examples


def build_entity_examples(
    entity_labels: Mapping[str, int], query_id: str, seed: int = 13
) -> list[TrainingExample]:
    """Balance transferred entity labels: all positives, equally many
    sampled negatives."""
    rng = random.Random(seed)
    positives = [e for e, lab in entity_labels.items() if lab == 1]
    pool = [e for e, lab in entity_labels.items() if lab == 0]
    rng.shuffle(pool)
    negatives = pool[: len(positives)]
    return [TrainingExample(query_id, e, 1) for e in positives] + [
        TrainingExample(query_id, e, 0) for e in negatives
    ]


_LOSS_CAP = -math.log(_PROB_CLAMP)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def bce_loss(logits, labels) -> float:
    """Mean binary cross-entropy of sigmoid(logit) against {0,1} labels.

    Computed in the log domain (softplus form) so saturated logits lose no
    precision; the probability clamp at 1e-12 appears as a per-term cap of
    -ln(1e-12) on the loss.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if logits.shape != labels.shape:
        raise ValueError(f"shape mismatch: {logits.shape} vs {labels.shape}")
    if logits.size == 0:
        raise ValueError("empty batch")
    terms = np.minimum(_softplus((1.0 - 2.0 * labels) * logits), _LOSS_CAP)
    return float(np.mean(terms))


def bce_dlogits(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-example gradient of the summed capped BCE w.r.t. the logits
    (zero where the cap flattens the loss)."""
    live = (1.0 - 2.0 * labels) * logits < _LOSS_CAP
    return (sigmoid(logits) - labels) * live


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """Standard Adam update with bias correction; mutates params in place."""
    if set(params) != set(grads):
        raise ValueError(f"params/grads keys differ: {sorted(params)} vs {sorted(grads)}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {key!r}")
        m = state.m.setdefault(key, np.zeros_like(p))
        v = state.v.setdefault(key, np.zeros_like(p))
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        p -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
    return params, state


# --- batched scoring path used by the trainer ---------------------------------


@dataclass
class DreqBatch:
    """Stacked example rows: query embeddings, text-centric vectors, the
    per-row entity-weight matrix (columns index the entity table), labels."""

    Q: np.ndarray  # (B, p)
    Vt: np.ndarray  # (B, n)
    W: np.ndarray  # (B, num_entities)
    y: np.ndarray  # (B,)


def dreq_logits(model: DreqModel, batch: DreqBatch, entity_table: np.ndarray) -> np.ndarray:
    """Batched forward pass mirroring model.score_document."""
    Ve = batch.W @ entity_table  # (B, m)
    X = np.hstack([batch.Vt, Ve])  # (B, n+m)
    D = X @ model.W2.T + model.b2  # (B, p)
    F = np.hstack([batch.Q, D, batch.Q + D, batch.Q - D, batch.Q * D])
    return F @ model.w3 + model.b3


def dreq_loss(model: DreqModel, batch: DreqBatch, entity_table: np.ndarray) -> float:
    return bce_loss(dreq_logits(model, batch, entity_table), batch.y)


def dreq_loss_and_grads(
    model: DreqModel,
    batch: DreqBatch,
    entity_table: np.ndarray,
    finetune_entities: bool = False,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean BCE over the batch and its analytic gradients.

    Returns gradients for W2, b2, w3, b3 and, when `finetune_entities`,
    the full entity table (rows not hit by the batch get zero gradient).
    The gradient assumes probabilities away from the clamp bounds.
    """
    p_dim = model.dims.p
    n_dim = model.dims.n
    B = batch.y.shape[0]

    Ve = batch.W @ entity_table
    X = np.hstack([batch.Vt, Ve])
    D = X @ model.W2.T + model.b2
    F = np.hstack([batch.Q, D, batch.Q + D, batch.Q - D, batch.Q * D])
    z = F @ model.w3 + model.b3
    loss = bce_loss(z, batch.y)

    dz = bce_dlogits(z, batch.y) / B  # (B,)
    dw3 = F.T @ dz
    db3 = np.array([np.sum(dz)])
    a2 = model.w3[p_dim : 2 * p_dim]
    a3 = model.w3[2 * p_dim : 3 * p_dim]
    a4 = model.w3[3 * p_dim : 4 * p_dim]
    a5 = model.w3[4 * p_dim : 5 * p_dim]
    dD = dz[:, None] * ((a2 + a3 - a4)[None, :] + a5[None, :] * batch.Q)  # (B, p)
    dW2 = dD.T @ X
    db2 = dD.sum(axis=0)
    grads = {"W2": dW2, "b2": db2, "w3": dw3, "b3": db3}
    if finetune_entities:
        dVe = dD @ model.W2[:, n_dim:]  # (B, m)
        grads["entities"] = batch.W.T @ dVe
    return loss, grads


# --- end-to-end trainer --------------------------------------------------------


@dataclass
class TrainData:
    """Everything the trainer reads: immutable corpus, stores, precomputed
    per-query entity rankings and candidate rankings."""

    corpus: CorpusStore
    query_store: EmbeddingStore
    entity_store: EmbeddingStore
    passage_store: EmbeddingStore
    entity_rankings: Mapping[str, object]  # query_id -> EntityRanking
    candidates: Mapping[str, Ranking]
    seg: SegmenterConfig = SegmenterConfig()


@dataclass
class FoldOutcome:
    fold_index: int
    model: DreqModel
    entity_store: EmbeddingStore
    test_rankings: dict[str, Ranking]
    epoch_losses: list[float]


@dataclass
class TrainResult:
    fold_outcomes: list[FoldOutcome]
    reranked: dict[str, Ranking]
    log_rows: list[tuple[int, int, float]]  # (fold, epoch, loss)


@dataclass
class _Row:
    query_id: str
    doc_id: str
    y: int
    q: np.ndarray
    v_t: np.ndarray
    weights: list[tuple[int, float]]  # (entity table row, weight)


def _text_vector(doc, passage_store: EmbeddingStore, seg: SegmenterConfig) -> np.ndarray:
    passages = segment_passages(doc, seg)
    if not passages:
        raise ValueError(f"document {doc.doc_id!r} has no sentences to segment")
    total = np.zeros(passage_store.dim)
    for p in passages:
        total = total + passage_store.get(passage_key(p.doc_id, p.index))
    return total / len(passages)


def _prepare_rows(
    model: DreqModel, examples: Sequence[TrainingExample], data: TrainData, entity_col: dict
) -> list[_Row]:
    text_cache: dict[str, np.ndarray] = {}
    rows = []
    for ex in examples:
        doc = data.corpus.doc(ex.item_id)
        if ex.item_id not in text_cache:
            text_cache[ex.item_id] = _text_vector(doc, data.passage_store, data.seg)
        if model.use_entities:
            ranking = data.entity_rankings[ex.query_id]
            weights = [
                (entity_col[eid], w) for eid, w in entity_weights(doc, ranking, model.mode)
            ]
        else:
            weights = []
        rows.append(
            _Row(
                query_id=ex.query_id,
                doc_id=ex.item_id,
                y=ex.label,
                q=data.query_store.get(ex.query_id),
                v_t=text_cache[ex.item_id],
                weights=weights,
            )
        )
    return rows


def _stack(rows: Sequence[_Row], num_entities: int) -> DreqBatch:
    B = len(rows)
    Q = np.stack([r.q for r in rows])
    Vt = np.stack([r.v_t for r in rows])
    W = np.zeros((B, num_entities))
    for i, r in enumerate(rows):
        for col, w in r.weights:
            W[i, col] = w
    y = np.array([r.y for r in rows], dtype=np.float64)
    return DreqBatch(Q=Q, Vt=Vt, W=W, y=y)


def train_dreq(
    template: DreqModel,
    examples: Sequence[TrainingExample],
    folds: FoldPlan,
    data: TrainData,
    cfg: TrainConfig,
) -> TrainResult:
    """Per-fold training of the document scorer with out-of-fold reranking.

    Each fold copies the template parameters, trains on its training
    queries' examples, then reranks the candidate lists of its test
    queries. When entity fine-tuning is on, the fold owns a mutable copy
    of the entity table and the gradient of one embedding is the sum of
    its weight-scaled fusion gradients.
    """
    entity_ids = data.entity_store.ids()
    entity_col = {eid: i for i, eid in enumerate(entity_ids)}
    base_table = np.stack([data.entity_store.get(e) for e in entity_ids]) if entity_ids else (
        np.zeros((0, data.entity_store.dim))
    )

    rows_all = _prepare_rows(template, examples, data, entity_col)
    # fail fast if any test query lacks what reranking will need
    for fold in folds.folds:
        for qid in fold.test:
            data.query_store.get(qid)

    finetune = cfg.finetune_entity_embeddings and template.use_entities
    outcomes: list[FoldOutcome] = []
    log_rows: list[tuple[int, int, float]] = []
    merged: dict[str, Ranking] = {}

    for fold_index, fold in enumerate(folds.folds):
        model = template.copy()
        table = base_table.copy()
        train_qids = set(fold.train)
        rows = [r for r in rows_all if r.query_id in train_qids]
        if not rows:
            raise ValueError(f"fold {fold_index} has no training examples")

        params: dict[str, np.ndarray] = {
            "W2": model.W2,
            "b2": model.b2,
            "w3": model.w3,
            "b3": np.array([model.b3]),
        }
        if finetune:
            params["entities"] = table
        state = AdamState()
        rng = np.random.default_rng([cfg.seed, fold_index])

        best = float("inf")
        stall = 0
        epoch_losses: list[float] = []
        for epoch in range(cfg.epochs):
            perm = rng.permutation(len(rows))
            total_loss = 0.0
            for start in range(0, len(rows), cfg.batch_size):
                idx = perm[start : start + cfg.batch_size]
                batch = _stack([rows[i] for i in idx], len(entity_ids))
                loss, grads = dreq_loss_and_grads(model, batch, table, finetune)
                adam_step(params, grads, state, cfg)
                model.b3 = float(params["b3"][0])
                total_loss += loss * len(idx)
            epoch_loss = total_loss / len(rows)
            epoch_losses.append(epoch_loss)
            log_rows.append((fold_index, epoch, epoch_loss))
            if best - epoch_loss < cfg.early_stop_delta:
                stall += 1
            else:
                stall = 0
            best = min(best, epoch_loss)
            if stall >= cfg.early_stop_patience:
                break

        if finetune:
            tuned = EmbeddingStore(space=data.entity_store.space, dim=data.entity_store.dim)
            for i, eid in enumerate(entity_ids):
                tuned.add(eid, table[i].copy())
        else:
            tuned = data.entity_store

        test_rankings: dict[str, Ranking] = {}
        docs = data.corpus.documents
        for qid in fold.test:
            if qid not in data.candidates:
                continue
            test_rankings[qid] = rerank(
                model,
                data.query_store.get(qid),
                data.candidates[qid],
                docs,
                data.entity_rankings[qid],
                tuned,
                data.passage_store,
                data.seg,
            )
        merged.update(test_rankings)
        outcomes.append(
            FoldOutcome(
                fold_index=fold_index,
                model=model,
                entity_store=tuned,
                test_rankings=test_rankings,
                epoch_losses=epoch_losses,
            )
        )

    return TrainResult(fold_outcomes=outcomes, reranked=merged, log_rows=log_rows)


def write_training_log(log_rows, path: str) -> None:
    """TSV training log: fold, epoch, loss."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("fold\tepoch\tloss\n")
        for fold, epoch, loss in log_rows:
            f.write(f"{fold}\t{epoch}\t{loss:.10f}\n")
