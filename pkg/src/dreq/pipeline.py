"""End-to-end orchestration helpers shared by the CLI and experiments:
candidate retrieval over a query set, per-query entity pooling and label
transfer, the entity-ranking stage, and cross-validated ablation sweeps.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

from .corpus import CorpusStore, Qrels, Query, transfer_labels
from .embeddings import DimsConfig, EmbeddingStore, query_entity_key
from .entity_ranking import EntityHead, EntityRanking, rank_entities, train_entity_head
from .evaluation import MetricsReport, evaluate_run
from .model import DreqModel, WeightingMode
from .retrieval import Bm25Params, InvertedIndex, Ranking, Rm3Params, retrieve
from .synthetic import PlantedConfig, generate_planted_world
from .training import (
    FoldPlan,
    TrainConfig,
    TrainData,
    TrainingExample,
    build_doc_examples,
    build_entity_examples,
    make_folds,
    train_dreq,
)

__all__ = [
    "VARIANTS",
    "candidate_rankings",
    "pooling_docs",
    "pooled_entities_map",
    "entity_labels_map",
    "build_entity_encoding_examples",
    "entity_rankings_map",
    "AblationResult",
    "ablation_sweep",
    "run_planted_ablation",
]

# variant name -> (weighting mode, use_entities)
VARIANTS: dict[str, tuple[WeightingMode, bool]] = {
    "dreq": (WeightingMode.PROBABILITY, True),
    "uniform": (WeightingMode.UNIFORM, True),
    "reciprocal_rank": (WeightingMode.RECIPROCAL_RANK, True),
    "no_entity": (WeightingMode.PROBABILITY, False),
}

#: training settings that converge on the desk-scale planted worlds
#: (the paper-default learning rate is sized for BERT fine-tuning)
PLANTED_TRAIN = TrainConfig(learning_rate=0.03, batch_size=20, epochs=30)


def candidate_rankings(
    index: InvertedIndex,
    queries: list[Query],
    k: int = 1000,
    mode: str = "bm25_rm3",
    bm25: Bm25Params = Bm25Params(),
    rm3: Rm3Params = Rm3Params(),
    threads: int = 1,
) -> dict[str, Ranking]:
    """First-stage ranking per query; per-query scoring may run threaded,
    results are assembled in query order either way."""
    def one(q: Query) -> Ranking:
        return retrieve(index, q.text, k=k, mode=mode, bm25=bm25, rm3=rm3, query_id=q.query_id)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, queries))
    else:
        results = [one(q) for q in queries]
    return {r.query_id: r for r in results}


def pooling_docs(
    corpus: CorpusStore, candidates: Ranking, qrels: Qrels | None = None
) -> list:
    """Candidate documents plus, when qrels are given, any judged-relevant
    documents present in the corpus, so training positives always have
    ranked entities. Order: candidates by rank, then extra positives."""
    docs = [corpus.doc(d) for d in candidates.doc_ids()]
    if qrels is not None:
        seen = set(candidates.doc_ids())
        for doc_id in qrels.relevant_docs(candidates.query_id):
            if doc_id not in seen and doc_id in corpus.documents:
                docs.append(corpus.doc(doc_id))
    return docs


def pooled_entities_map(
    corpus: CorpusStore, candidates: dict[str, Ranking], qrels: Qrels | None = None
) -> dict[str, list[str]]:
    from .corpus import pool_entities

    return {
        qid: pool_entities(pooling_docs(corpus, ranking, qrels))
        for qid, ranking in candidates.items()
    }


def entity_labels_map(
    corpus: CorpusStore, candidates: dict[str, Ranking], qrels: Qrels
) -> dict[str, dict[str, int]]:
    return {
        qid: transfer_labels(qrels, qid, pooling_docs(corpus, ranking, qrels))
        for qid, ranking in candidates.items()
    }


def build_entity_encoding_examples(
    labels_map: dict[str, dict[str, int]],
    encoding_store: EmbeddingStore,
    seed: int,
) -> list[tuple]:
    """Balanced (encoding, label) pairs across all queries."""
    pairs = []
    for qid in sorted(labels_map):
        for ex in build_entity_examples(labels_map[qid], qid, seed):
            enc = encoding_store.get(query_entity_key(ex.query_id, ex.item_id))
            pairs.append((enc, ex.label))
    return pairs


def entity_rankings_map(
    head: EntityHead, pooled: dict[str, list[str]], encoding_store: EmbeddingStore
) -> dict[str, EntityRanking]:
    return {
        qid: rank_entities(head, qid, entities, encoding_store)
        for qid, entities in pooled.items()
    }


@dataclass
class AblationResult:
    candidate_report: MetricsReport
    variant_reports: dict[str, MetricsReport]
    variant_runs: dict[str, dict[str, Ranking]]


def ablation_sweep(
    variants: list[str],
    dims: DimsConfig,
    examples: list[TrainingExample],
    folds: FoldPlan,
    data: TrainData,
    cfg: TrainConfig,
    qrels: Qrels,
    init_seed: int = 0,
) -> AblationResult:
    """Train and evaluate each weighting variant with the same folds,
    examples, and entity rankings; evaluate the candidates alongside."""
    candidate_report = evaluate_run(dict(data.candidates), qrels, tag="candidates")
    reports: dict[str, MetricsReport] = {}
    runs: dict[str, dict[str, Ranking]] = {}
    for name in variants:
        mode, use_entities = VARIANTS[name]
        template = DreqModel.init(
            dims,
            mode=mode,
            seed=init_seed,
            use_entities=use_entities,
            finetune_entity_embeddings=cfg.finetune_entity_embeddings,
        )
        result = train_dreq(template, examples, folds, data, cfg)
        runs[name] = result.reranked
        reports[name] = evaluate_run(result.reranked, qrels, tag=name)
    return AblationResult(candidate_report, reports, runs)


def run_planted_ablation(
    planted: PlantedConfig,
    train_cfg: TrainConfig,
    seeds: list[int],
    variants: list[str] = ("dreq", "uniform", "no_entity"),
    retrieve_k: int = 100,
    n_folds: int = 5,
) -> dict[str, float]:
    """Seed-averaged held-out nDCG@20 per variant on planted worlds.

    Returns {"candidates": ..., variant: ...} means over the seeds.
    """
    from .retrieval import build_index

    totals = {name: 0.0 for name in list(variants) + ["candidates"]}
    for seed in seeds:
        world = generate_planted_world(replace(planted, seed=seed))
        index = build_index(world.corpus)
        cands = candidate_rankings(index, world.queries, k=retrieve_k, mode="bm25_rm3")
        pooled = pooled_entities_map(world.corpus, cands, world.qrels)
        labels = entity_labels_map(world.corpus, cands, world.qrels)
        enc_examples = build_entity_encoding_examples(labels, world.encoding_store, seed)
        head_cfg = replace(train_cfg, seed=seed)
        head = train_entity_head(enc_examples, head_cfg)
        rankings = entity_rankings_map(head, pooled, world.encoding_store)

        examples = build_doc_examples(world.qrels, cands, seed)
        folds = make_folds([q.query_id for q in world.queries], k=n_folds, seed=seed)
        data = TrainData(
            corpus=world.corpus,
            query_store=world.query_store,
            entity_store=world.entity_store,
            passage_store=world.passage_store,
            entity_rankings=rankings,
            candidates=cands,
            seg=world.seg,
        )
        outcome = ablation_sweep(
            list(variants), world.dims, examples, folds, data, head_cfg, world.qrels,
            init_seed=seed,
        )
        totals["candidates"] += outcome.candidate_report.means["ndcg@20"]
        for name in variants:
            totals[name] += outcome.variant_reports[name].means["ndcg@20"]
    return {name: total / len(seeds) for name, total in totals.items()}
