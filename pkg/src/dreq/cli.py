"""Command-line pipeline: retrieve, harness entities, rerank, evaluate.

Stages communicate through files in a work directory, so every step is
re-runnable and inspectable. Settings resolve as CLI flag > DREQ_*
environment variable > config file > default; outputs are written
atomically (temp file + rename) and each stage records a manifest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from contextlib import contextmanager

from .corpus import (
    SegmenterConfig,
    load_corpus,
    load_qrels,
    load_queries,
    segment_passages,
)
from .embeddings import (
    DimsConfig,
    EmbeddingStore,
    load_store,
    query_entity_key,
    passage_key,
    save_store,
    synthetic_embed,
)
from .entity_ranking import (
    EntityRanking,
    bm25_entity_rank,
    entity_ranking_to_run,
    geeer_entity_rank,
    load_entity_head,
    load_entity_rankings_tsv,
    rank_entities,
    save_entity_head,
    train_entity_head,
    write_entity_rankings_tsv,
)
from .evaluation import (
    build_difficulty_report,
    evaluate_run,
    wig,
    wig_terciles,
    write_difficulty_report,
    write_metrics_report,
)
from .model import (
    DreqModel,
    WeightingMode,
    load_checkpoint,
    maxsimcos_rerank,
    rerank,
    save_checkpoint,
)
from .pipeline import (
    VARIANTS,
    ablation_sweep,
    build_entity_encoding_examples,
    candidate_rankings,
    entity_labels_map,
    entity_rankings_map,
    pooled_entities_map,
)
from .retrieval import (
    Bm25Params,
    InvertedIndex,
    Rm3Params,
    TokenizerConfig,
    build_index,
    load_run,
    write_run,
)
from .training import (
    FoldPlan,
    TrainConfig,
    TrainData,
    build_doc_examples,
    make_folds,
    train_dreq,
    write_training_log,
)

ENV_PREFIX = "DREQ_"

_DEFAULTS = {
    "workdir": "work",
    "dims.k": "32",
    "dims.m": "32",
    "dims.n": "32",
    "dims.p": "32",
    "tokenizer.stem": "false",
    "bm25.k1": "0.9",
    "bm25.b": "0.4",
    "rm3.fb_docs": "10",
    "rm3.fb_terms": "10",
    "rm3.alpha": "0.5",
    "segmenter.window": "10",
    "segmenter.stride": "5",
    "retrieve.k": "1000",
    "retrieve.mode": "bm25_rm3",
    "entity.mode": "learned",
    "geeer.lambda": "0.5",
    "weighting.mode": "probability",
    "use_entities": "true",
    "finetune_entity_embeddings": "false",
    "train.learning_rate": "1e-5",
    "train.batch_size": "20",
    "train.epochs": "20",
    "folds.k": "5",
    "eval.prec_k": "20",
    "eval.ndcg_k": "20",
    "eval.recall_k": "1000",
    "wig.k": "20",
    "run.tag": "dreq",
    "seed": "13",
    "threads": "1",
}


class CliError(Exception):
    pass


def load_config_file(path: str) -> dict[str, str]:
    """Flat `key = value` file; blank lines and `#` comments ignored."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise CliError(f"{path}:{line_no}: expected 'key = value'")
            key, value = stripped.split("=", 1)
            values[key.strip()] = value.strip()
    return values


class Settings:
    """Layered configuration with typed accessors."""

    def __init__(self, args: argparse.Namespace):
        self.values = dict(_DEFAULTS)
        self.config_path = getattr(args, "config", None)
        self.config_bytes = b""
        if self.config_path:
            with open(self.config_path, "rb") as f:
                self.config_bytes = f.read()
            self.values.update(load_config_file(self.config_path))
        for key in set(self.values) | {
            "corpus", "entity_catalog", "queries", "qrels", "query_links"
        }:
            env_key = ENV_PREFIX + key.upper().replace(".", "_")
            if env_key in os.environ:
                self.values[key] = os.environ[env_key]
        for flag in ("seed", "threads", "workdir"):
            v = getattr(args, flag, None)
            if v is not None:
                self.values[flag] = str(v)
        self.args = args

    def get(self, key: str, default: str | None = None) -> str:
        if key in self.values:
            return self.values[key]
        if default is not None:
            return default
        raise CliError(f"missing required config key {key!r} (config file or {ENV_PREFIX}* env)")

    def get_int(self, key: str) -> int:
        return int(self.get(key))

    def get_float(self, key: str) -> float:
        return float(self.get(key))

    def get_bool(self, key: str) -> bool:
        v = self.get(key).lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise CliError(f"config key {key!r} is not a boolean: {v!r}")

    def path(self, key: str) -> str:
        return self.get(key)

    @property
    def workdir(self) -> str:
        return self.get("workdir")

    def workpath(self, name: str) -> str:
        return os.path.join(self.workdir, name)

    def config_digest(self) -> str:
        return hashlib.sha256(self.config_bytes).hexdigest()

    # typed bundles -----------------------------------------------------
    def dims(self) -> DimsConfig:
        return DimsConfig(
            k=self.get_int("dims.k"),
            m=self.get_int("dims.m"),
            n=self.get_int("dims.n"),
            p=self.get_int("dims.p"),
        )

    def tokenizer(self) -> TokenizerConfig:
        return TokenizerConfig(stem=self.get_bool("tokenizer.stem"))

    def bm25(self) -> Bm25Params:
        return Bm25Params(k1=self.get_float("bm25.k1"), b=self.get_float("bm25.b"))

    def rm3(self) -> Rm3Params:
        return Rm3Params(
            fb_docs=self.get_int("rm3.fb_docs"),
            fb_terms=self.get_int("rm3.fb_terms"),
            original_weight=self.get_float("rm3.alpha"),
        )

    def segmenter(self) -> SegmenterConfig:
        return SegmenterConfig(
            window=self.get_int("segmenter.window"), stride=self.get_int("segmenter.stride")
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.get_float("train.learning_rate"),
            batch_size=self.get_int("train.batch_size"),
            epochs=self.get_int("train.epochs"),
            seed=self.get_int("seed"),
            finetune_entity_embeddings=self.get_bool("finetune_entity_embeddings"),
        )


@contextmanager
def atomic_path(final: str):
    """Yield a temp path; rename onto `final` only if the body succeeds."""
    os.makedirs(os.path.dirname(final) or ".", exist_ok=True)
    tmp = final + ".tmp"
    try:
        yield tmp
        os.replace(tmp, final)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def require_artifact(path: str, produced_by: str) -> str:
    if not os.path.exists(path):
        raise CliError(f"missing artifact {path!r}; run `dreq {produced_by}` first")
    return path


def write_manifest(settings: Settings, stage: str, inputs: dict, outputs: dict, t0: float) -> None:
    manifest = {
        "stage": stage,
        "config_digest": settings.config_digest(),
        "seed": settings.get_int("seed"),
        "inputs": inputs,
        "outputs": outputs,
        "seconds": round(time.time() - t0, 3),
    }
    final = settings.workpath(os.path.join("manifests", f"{stage}.json"))
    with atomic_path(final) as tmp:
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")


# --- artifact I/O ----------------------------------------------------------------


def save_index(index: InvertedIndex, path: str) -> None:
    payload = {
        "tokenizer": {"lowercase": index.tokenizer.lowercase, "stem": index.tokenizer.stem},
        "doc_ids": index.doc_ids,
        "doc_lengths": index.doc_lengths,
        "avg_doc_length": index.avg_doc_length,
        "postings": {t: sorted(p.items()) for t, p in index.postings.items()},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True)
        f.write("\n")


def load_index(path: str) -> InvertedIndex:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    return InvertedIndex(
        doc_ids=payload["doc_ids"],
        doc_lengths=payload["doc_lengths"],
        postings={t: {int(i): tf for i, tf in p} for t, p in payload["postings"].items()},
        avg_doc_length=payload["avg_doc_length"],
        tokenizer=TokenizerConfig(**payload["tokenizer"]),
    )


def write_pooled(pooled: dict[str, list[str]], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for qid in sorted(pooled):
            for eid in pooled[qid]:
                f.write(f"{qid}\t{eid}\n")


def load_pooled(path: str) -> dict[str, list[str]]:
    pooled: dict[str, list[str]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            qid, eid = line.split("\t")
            pooled.setdefault(qid, []).append(eid)
    return pooled


def load_query_links(path: str) -> dict[str, list[tuple[str, float]]]:
    links: dict[str, list[tuple[str, float]]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CliError(f"{path}:{line_no}: expected 'qid<TAB>entity<TAB>confidence'")
            links.setdefault(parts[0], []).append((parts[1], float(parts[2])))
    return links


# --- shared loading --------------------------------------------------------------


def _load_corpus(settings: Settings):
    catalog = settings.values.get("entity_catalog")
    return load_corpus(settings.path("corpus"), catalog_path=catalog)


def _load_stores(settings: Settings) -> dict[str, EmbeddingStore]:
    stores = {}
    for name in ("query", "entity", "passage", "query_entity"):
        path = require_artifact(settings.workpath(f"stores/{name}.vec"), "synth-embed")
        stores[name] = load_store(path)
    return stores


def _candidates(settings: Settings):
    path = require_artifact(settings.workpath("candidates.run"), "retrieve")
    return load_run(path)


def _entity_rankings(settings: Settings) -> dict[str, EntityRanking]:
    path = require_artifact(settings.workpath("entity_ranking.tsv"), "rank-entities")
    return load_entity_rankings_tsv(path)


# --- subcommands -----------------------------------------------------------------


def cmd_build_index(settings: Settings) -> None:
    t0 = time.time()
    corpus = _load_corpus(settings)
    index_path = settings.workpath("index.json")
    index = build_index(corpus, settings.tokenizer())
    with atomic_path(index_path) as tmp:
        save_index(index, tmp)
    write_manifest(
        settings, "build-index", {"corpus": settings.path("corpus")}, {"index": index_path}, t0
    )
    print(f"indexed {index.doc_count} documents -> {index_path}")


def cmd_retrieve(settings: Settings) -> None:
    t0 = time.time()
    index = load_index(require_artifact(settings.workpath("index.json"), "build-index"))
    queries = load_queries(settings.path("queries"))
    k = settings.get_int("retrieve.k")
    mode = settings.get("retrieve.mode")
    cands = candidate_rankings(
        index,
        queries,
        k=k,
        mode=mode,
        bm25=settings.bm25(),
        rm3=settings.rm3(),
        threads=settings.get_int("threads"),
    )
    out = settings.workpath("candidates.run")
    with atomic_path(out) as tmp:
        write_run((cands[q.query_id] for q in queries), tmp, tag=f"{mode}")
    write_manifest(settings, "retrieve", {"queries": settings.path("queries")}, {"run": out}, t0)
    print(f"retrieved top-{k} ({mode}) for {len(queries)} queries -> {out}")


def cmd_pool_entities(settings: Settings) -> None:
    t0 = time.time()
    corpus = _load_corpus(settings)
    cands = _candidates(settings)
    qrels = load_qrels(settings.path("qrels")) if "qrels" in settings.values else None
    pooled = pooled_entities_map(corpus, cands, qrels)
    out = settings.workpath("pooled_entities.tsv")
    with atomic_path(out) as tmp:
        write_pooled(pooled, tmp)
    write_manifest(settings, "pool-entities", {"candidates": "candidates.run"}, {"pooled": out}, t0)
    total = sum(len(v) for v in pooled.values())
    print(f"pooled {total} (query, entity) pairs over {len(pooled)} queries -> {out}")


def cmd_synth_embed(settings: Settings) -> None:
    t0 = time.time()
    corpus = _load_corpus(settings)
    queries = load_queries(settings.path("queries"))
    pooled = load_pooled(require_artifact(settings.workpath("pooled_entities.tsv"), "pool-entities"))
    dims = settings.dims()
    seed = settings.get_int("seed")
    seg = settings.segmenter()

    query_store = EmbeddingStore("query", dims.p)
    for q in queries:
        query_store.add(q.query_id, synthetic_embed("query", q.query_id, dims.p, seed))
    entity_store = EmbeddingStore("entity", dims.m)
    for eid in corpus.entities:
        entity_store.add(eid, synthetic_embed("entity", eid, dims.m, seed))
    passage_store = EmbeddingStore("passage", dims.n)
    for doc in corpus.documents.values():
        for p in segment_passages(doc, seg):
            key = passage_key(p.doc_id, p.index)
            passage_store.add(key, synthetic_embed("passage", key, dims.n, seed))
    encoding_store = EmbeddingStore("query_entity", dims.k)
    for qid in sorted(pooled):
        for eid in pooled[qid]:
            key = query_entity_key(qid, eid)
            encoding_store.add(key, synthetic_embed("query_entity", key, dims.k, seed))

    outputs = {}
    for name, store in (
        ("query", query_store),
        ("entity", entity_store),
        ("passage", passage_store),
        ("query_entity", encoding_store),
    ):
        out = settings.workpath(f"stores/{name}.vec")
        with atomic_path(out) as tmp:
            save_store(store, tmp)
        outputs[name] = out
    write_manifest(settings, "synth-embed", {"pooled": "pooled_entities.tsv"}, outputs, t0)
    print(
        f"materialized stores: query={len(query_store)} entity={len(entity_store)} "
        f"passage={len(passage_store)} query_entity={len(encoding_store)}"
    )


def cmd_train_entity_ranker(settings: Settings) -> None:
    t0 = time.time()
    corpus = _load_corpus(settings)
    cands = _candidates(settings)
    qrels = load_qrels(settings.path("qrels"))
    stores = _load_stores(settings)
    labels = entity_labels_map(corpus, cands, qrels)
    examples = build_entity_encoding_examples(labels, stores["query_entity"], settings.get_int("seed"))
    if not examples:
        raise CliError("no entity training examples (are any candidates judged relevant?)")
    log_rows: list = []
    head = train_entity_head(examples, settings.train_config(), log_rows=log_rows)
    head_path = settings.workpath("entity_head.txt")
    with atomic_path(head_path) as tmp:
        save_entity_head(head, tmp)
    log_path = settings.workpath("entity_train_log.tsv")
    with atomic_path(log_path) as tmp:
        write_training_log(log_rows, tmp)
    write_manifest(
        settings, "train-entity-ranker", {"qrels": settings.path("qrels")},
        {"head": head_path, "log": log_path}, t0,
    )
    print(f"trained entity head on {len(examples)} examples -> {head_path}")


def cmd_rank_entities(settings: Settings) -> None:
    t0 = time.time()
    mode = getattr(settings.args, "mode", None) or settings.get("entity.mode")
    pooled = load_pooled(require_artifact(settings.workpath("pooled_entities.tsv"), "pool-entities"))
    queries = {q.query_id: q for q in load_queries(settings.path("queries"))}
    rankings: dict[str, EntityRanking] = {}

    if mode == "learned":
        stores = _load_stores(settings)
        head = load_entity_head(
            require_artifact(settings.workpath("entity_head.txt"), "train-entity-ranker")
        )
        rankings = entity_rankings_map(head, pooled, stores["query_entity"])
    elif mode == "bm25":
        corpus = _load_corpus(settings)
        descriptions = {
            eid: rec.description for eid, rec in corpus.entities.items() if rec.description
        }
        if not descriptions:
            raise CliError("bm25 entity ranking needs entity descriptions (entity_catalog)")
        from .retrieval import build_index

        desc_index = build_index(descriptions, settings.tokenizer())
        for qid in sorted(pooled):
            rankings[qid] = bm25_entity_rank(
                queries[qid].text, pooled[qid], desc_index, settings.bm25(), query_id=qid
            )
    elif mode == "geeer":
        corpus = _load_corpus(settings)
        stores = _load_stores(settings)
        links = load_query_links(settings.path("query_links"))
        descriptions = {
            eid: rec.description for eid, rec in corpus.entities.items() if rec.description
        }
        desc_index = None
        if descriptions:
            from .retrieval import build_index

            desc_index = build_index(descriptions, settings.tokenizer())
        lam = settings.get_float("geeer.lambda")
        for qid in sorted(pooled):
            if desc_index is not None:
                sparse = bm25_entity_rank(
                    queries[qid].text, pooled[qid], desc_index, settings.bm25(), query_id=qid
                )
                bm25_scores = {e.entity_id: e.raw_score for e in sparse.entries}
            else:
                bm25_scores = {}
            rankings[qid] = geeer_entity_rank(
                links.get(qid, []), pooled[qid], stores["entity"], bm25_scores, lam, query_id=qid
            )
    else:
        raise CliError(f"unknown entity ranking mode {mode!r}")

    tsv_path = settings.workpath("entity_ranking.tsv")
    with atomic_path(tsv_path) as tmp:
        write_entity_rankings_tsv(rankings, tmp)
    run_path = settings.workpath("entity_ranking.run")
    with atomic_path(run_path) as tmp:
        write_run(
            (entity_ranking_to_run(rankings[qid]) for qid in sorted(rankings)),
            tmp,
            tag=f"entities-{mode}",
        )
    write_manifest(
        settings, "rank-entities", {"pooled": "pooled_entities.tsv", "mode": mode},
        {"tsv": tsv_path, "run": run_path}, t0,
    )
    print(f"ranked entities ({mode}) for {len(rankings)} queries -> {tsv_path}")


def _train_data(settings: Settings, corpus, stores, rankings, cands) -> TrainData:
    return TrainData(
        corpus=corpus,
        query_store=stores["query"],
        entity_store=stores["entity"],
        passage_store=stores["passage"],
        entity_rankings=rankings,
        candidates=cands,
        seg=settings.segmenter(),
    )


def cmd_train_dreq(settings: Settings) -> None:
    t0 = time.time()
    corpus = _load_corpus(settings)
    cands = _candidates(settings)
    qrels = load_qrels(settings.path("qrels"))
    stores = _load_stores(settings)
    rankings = _entity_rankings(settings)
    seed = settings.get_int("seed")
    cfg = settings.train_config()

    examples = build_doc_examples(qrels, cands, seed)
    if not examples:
        raise CliError("no document training examples (check qrels coverage)")
    folds = make_folds(sorted(cands), k=settings.get_int("folds.k"), seed=seed)
    folds_path = settings.workpath("folds.json")
    with atomic_path(folds_path) as tmp:
        folds.save(tmp)

    template = DreqModel.init(
        settings.dims(),
        mode=WeightingMode(settings.get("weighting.mode")),
        seed=seed,
        use_entities=settings.get_bool("use_entities"),
        finetune_entity_embeddings=cfg.finetune_entity_embeddings,
    )
    result = train_dreq(template, examples, folds, _train_data(settings, corpus, stores, rankings, cands), cfg)

    outputs = {"folds": folds_path}
    for outcome in result.fold_outcomes:
        ckpt = settings.workpath(f"dreq_fold{outcome.fold_index}.ckpt")
        with atomic_path(ckpt) as tmp:
            save_checkpoint(outcome.model, tmp)
        outputs[f"fold{outcome.fold_index}"] = ckpt
        if cfg.finetune_entity_embeddings:
            tuned = settings.workpath(f"stores/entity_tuned_fold{outcome.fold_index}.vec")
            with atomic_path(tuned) as tmp:
                save_store(outcome.entity_store, tmp)
            outputs[f"entity_tuned_fold{outcome.fold_index}"] = tuned
    run_path = settings.workpath("dreq.run")
    with atomic_path(run_path) as tmp:
        write_run(
            (result.reranked[qid] for qid in sorted(result.reranked)),
            tmp,
            tag=settings.get("run.tag"),
        )
    log_path = settings.workpath("dreq_train_log.tsv")
    with atomic_path(log_path) as tmp:
        write_training_log(result.log_rows, tmp)
    outputs.update({"run": run_path, "log": log_path})
    write_manifest(settings, "train-dreq", {"candidates": "candidates.run"}, outputs, t0)
    print(
        f"trained {len(result.fold_outcomes)} folds on {len(examples)} examples; "
        f"out-of-fold run -> {run_path}"
    )


def cmd_rerank(settings: Settings) -> None:
    t0 = time.time()
    mode = settings.args.mode
    corpus = _load_corpus(settings)
    cands = _candidates(settings)
    out = settings.args.output or settings.workpath(f"rerank_{mode}.run")
    queries = load_queries(settings.path("queries"))

    if mode == "maxsimcos":
        stores = _load_stores(settings)
        links = load_query_links(settings.path("query_links"))
        rankings = {}
        for q in queries:
            if q.query_id not in cands:
                continue
            qlinks = [eid for eid, _ in links.get(q.query_id, [])]
            rankings[q.query_id] = maxsimcos_rerank(
                qlinks, cands[q.query_id], corpus.documents, stores["entity"]
            )
    elif mode == "dreq":
        stores = _load_stores(settings)
        entity_rankings = _entity_rankings(settings)
        ckpt = settings.args.checkpoint or settings.workpath("dreq_fold0.ckpt")
        model = load_checkpoint(require_artifact(ckpt, "train-dreq"))
        if settings.args.weighting:
            model.mode = WeightingMode(settings.args.weighting)
        if settings.args.no_entities:
            model.use_entities = False
        rankings = {}
        for q in queries:
            if q.query_id not in cands:
                continue
            rankings[q.query_id] = rerank(
                model,
                stores["query"].get(q.query_id),
                cands[q.query_id],
                corpus.documents,
                entity_rankings[q.query_id],
                stores["entity"],
                stores["passage"],
                settings.segmenter(),
            )
    else:
        raise CliError(f"unknown rerank mode {mode!r}")

    with atomic_path(out) as tmp:
        write_run((rankings[qid] for qid in sorted(rankings)), tmp, tag=f"rerank-{mode}")
    write_manifest(settings, "rerank", {"candidates": "candidates.run", "mode": mode}, {"run": out}, t0)
    print(f"reranked {len(rankings)} queries ({mode}) -> {out}")


def cmd_evaluate(settings: Settings) -> None:
    t0 = time.time()
    qrels = load_qrels(settings.path("qrels"))
    run_path = settings.args.run or settings.workpath("dreq.run")
    rankings = load_run(require_artifact(run_path, "train-dreq (or retrieve/rerank)"))
    tag = settings.args.tag or os.path.splitext(os.path.basename(run_path))[0]
    report = evaluate_run(
        rankings,
        qrels,
        tag=tag,
        prec_k=settings.get_int("eval.prec_k"),
        ndcg_k=settings.get_int("eval.ndcg_k"),
        recall_k=settings.get_int("eval.recall_k"),
    )
    out = settings.workpath(f"eval_{tag}.tsv")
    with atomic_path(out) as tmp:
        write_metrics_report(report, tmp)
    write_manifest(settings, "evaluate", {"run": run_path}, {"report": out}, t0)
    for metric, value in report.means.items():
        print(f"{tag}\t{metric}\t{value:.4f}")
    print(f"report -> {out}")


def cmd_qpp(settings: Settings) -> None:
    t0 = time.time()
    queries = load_queries(settings.path("queries"))
    cands = _candidates(settings)
    k = settings.get_int("wig.k")
    tok = settings.tokenizer()
    scores = {
        q.query_id: wig(q.text, cands[q.query_id], k=k, tokenizer=tok)
        for q in queries
        if q.query_id in cands
    }
    terciles = wig_terciles(scores) if len(scores) >= 3 else {}
    out = settings.workpath("wig.tsv")
    with atomic_path(out) as tmp:
        with open(tmp, "w", encoding="utf-8") as f:
            f.write("query_id\twig\ttercile\n")
            for qid in sorted(scores):
                f.write(f"{qid}\t{scores[qid]:.6f}\t{terciles.get(qid, '-')}\n")
    write_manifest(settings, "qpp", {"candidates": "candidates.run"}, {"wig": out}, t0)
    print(f"WIG@{k} for {len(scores)} queries -> {out}")


def cmd_difficulty(settings: Settings) -> None:
    t0 = time.time()
    qrels = load_qrels(settings.path("qrels"))
    baseline = load_run(require_artifact(settings.args.baseline_run, "retrieve"))
    system = load_run(require_artifact(settings.args.system_run, "train-dreq or rerank"))
    ndcg_k = settings.get_int("eval.ndcg_k")
    base_report = evaluate_run(baseline, qrels, tag="baseline", ndcg_k=ndcg_k)
    sys_report = evaluate_run(system, qrels, tag="system", ndcg_k=ndcg_k)
    metric = f"ndcg@{ndcg_k}"
    base_metric = base_report.per_query[metric]
    sys_metric = {q: sys_report.per_query[metric].get(q, 0.0) for q in base_metric}

    wig_scores = None
    wig_path = settings.args.wig or settings.workpath("wig.tsv")
    if os.path.exists(wig_path):
        wig_scores = {}
        with open(wig_path, "r", encoding="utf-8") as f:
            f.readline()
            for line in f:
                parts = line.rstrip("\n").split("\t")
                if len(parts) >= 2 and parts[0] in base_metric:
                    wig_scores[parts[0]] = float(parts[1])
        if set(wig_scores) != set(base_metric):
            wig_scores = None
    report = build_difficulty_report(base_metric, sys_metric, wig_scores)
    out = settings.workpath("difficulty.tsv")
    with atomic_path(out) as tmp:
        write_difficulty_report(report, tmp)
    write_manifest(
        settings, "difficulty",
        {"baseline": settings.args.baseline_run, "system": settings.args.system_run},
        {"report": out}, t0,
    )
    print(f"helped={report.helped} hurt={report.hurt} unchanged={report.unchanged} -> {out}")


def cmd_ablate(settings: Settings) -> None:
    t0 = time.time()
    corpus = _load_corpus(settings)
    cands = _candidates(settings)
    qrels = load_qrels(settings.path("qrels"))
    stores = _load_stores(settings)
    rankings = _entity_rankings(settings)
    seed = settings.get_int("seed")
    cfg = settings.train_config()
    examples = build_doc_examples(qrels, cands, seed)
    folds = make_folds(sorted(cands), k=settings.get_int("folds.k"), seed=seed)
    data = _train_data(settings, corpus, stores, rankings, cands)
    variants = list(VARIANTS)
    outcome = ablation_sweep(
        variants, settings.dims(), examples, folds, data, cfg, qrels, init_seed=seed
    )
    out = settings.workpath("ablate.tsv")
    ndcg_k = settings.get_int("eval.ndcg_k")

    def table_row(name: str, means: dict[str, float]) -> str:
        cols = (means["map"], means[f"ndcg@{ndcg_k}"], means["p@20"], means["recall@1000"])
        return name + "".join(f"\t{v:.4f}" for v in cols) + "\n"

    with atomic_path(out) as tmp:
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(f"system\tmap\tndcg@{ndcg_k}\tp@20\trecall@1000\n")
            f.write(table_row("candidates", outcome.candidate_report.means))
            for name in variants:
                f.write(table_row(name, outcome.variant_reports[name].means))
    outputs = {"table": out}
    for name, run in outcome.variant_runs.items():
        run_path = settings.workpath(f"ablate_{name}.run")
        with atomic_path(run_path) as tmp:
            write_run((run[qid] for qid in sorted(run)), tmp, tag=f"ablate-{name}")
        outputs[name] = run_path
    write_manifest(settings, "ablate", {"candidates": "candidates.run"}, outputs, t0)
    with open(out, "r", encoding="utf-8") as f:
        sys.stdout.write(f.read())
    print(f"ablation table -> {out}")


# --- argument parsing -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dreq",
        description="entity-aware retrieve/rerank pipeline",
    )
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, help="global RNG seed")
    parser.add_argument("--threads", type=int, help="threads for per-query stages")
    parser.add_argument("--workdir", help="artifact directory")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in (
        "build-index", "retrieve", "pool-entities", "synth-embed",
        "train-entity-ranker", "train-dreq", "qpp", "ablate",
    ):
        sub.add_parser(name)
    p = sub.add_parser("rank-entities")
    p.add_argument("--mode", choices=["learned", "bm25", "geeer"])
    p = sub.add_parser("rerank")
    p.add_argument("--mode", choices=["dreq", "maxsimcos"], default="dreq")
    p.add_argument("--checkpoint")
    p.add_argument("--weighting", choices=[m.value for m in WeightingMode])
    p.add_argument("--no-entities", action="store_true")
    p.add_argument("--output")
    p = sub.add_parser("evaluate")
    p.add_argument("--run")
    p.add_argument("--tag")
    p = sub.add_parser("difficulty")
    p.add_argument("--baseline-run", required=True)
    p.add_argument("--system-run", required=True)
    p.add_argument("--wig")
    return parser


_COMMANDS = {
    "build-index": cmd_build_index,
    "retrieve": cmd_retrieve,
    "pool-entities": cmd_pool_entities,
    "synth-embed": cmd_synth_embed,
    "train-entity-ranker": cmd_train_entity_ranker,
    "rank-entities": cmd_rank_entities,
    "train-dreq": cmd_train_dreq,
    "rerank": cmd_rerank,
    "evaluate": cmd_evaluate,
    "qpp": cmd_qpp,
    "difficulty": cmd_difficulty,
    "ablate": cmd_ablate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = Settings(args)
        _COMMANDS[args.command](settings)
    except (CliError, FileNotFoundError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
