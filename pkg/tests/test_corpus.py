import json

import pytest
from hypothesis import given, strategies as st

from dreq.corpus import (
    Document,
    Qrels,
    SegmenterConfig,
    load_corpus,
    load_entity_catalog,
    load_qrels,
    load_queries,
    pool_entities,
    segment_passages,
    split_sentences,
    transfer_labels,
)


def make_doc(doc_id, entity_ids, n_sentences=3):
    text = " ".join(f"s{i} ends." for i in range(n_sentences))
    mentions = []
    for j, eid in enumerate(entity_ids):
        mentions.append(
            {"entity_id": eid, "mention": "s0", "start": 0, "end": 2, "confidence": 0.9}
        )
    doc = {"doc_id": doc_id, "text": text, "entities": mentions}
    return doc


def write_corpus(tmp_path, docs):
    path = tmp_path / "corpus.jsonl"
    path.write_text("\n".join(json.dumps(d) for d in docs) + "\n")
    return str(path)


class TestLoadCorpus:
    def test_two_docs(self, tmp_path):
        path = write_corpus(tmp_path, [make_doc("d1", ["a"]), make_doc("d2", ["b"])])
        store = load_corpus(path)
        assert len(store) == 2
        assert store.doc("d1").entity_ids() == ["a"]

    def test_duplicate_doc_id_rejected(self, tmp_path):
        path = write_corpus(tmp_path, [make_doc("d1", []), make_doc("d1", [])])
        with pytest.raises(ValueError, match="duplicate doc_id"):
            load_corpus(path)

    def test_span_out_of_bounds_names_doc(self, tmp_path):
        doc = make_doc("dbad", [])
        doc["entities"] = [
            {"entity_id": "a", "mention": "x", "start": 5, "end": 10_000, "confidence": 0.5}
        ]
        path = write_corpus(tmp_path, [doc])
        with pytest.raises(ValueError, match="dbad"):
            load_corpus(path)

    def test_malformed_line_names_line_number(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text(json.dumps(make_doc("d1", [])) + "\n{not json\n")
        with pytest.raises(ValueError, match=":2"):
            load_corpus(str(path))

    def test_catalog_merge(self, tmp_path):
        cpath = write_corpus(tmp_path, [make_doc("d1", ["a"])])
        kpath = tmp_path / "catalog.jsonl"
        kpath.write_text(json.dumps({"entity_id": "a", "description": "alpha thing"}) + "\n")
        store = load_corpus(cpath, catalog_path=str(kpath))
        assert store.entities["a"].description == "alpha thing"

    def test_catalog_duplicate_entity_rejected(self, tmp_path):
        kpath = tmp_path / "catalog.jsonl"
        rec = json.dumps({"entity_id": "a", "description": "x"})
        kpath.write_text(rec + "\n" + rec + "\n")
        with pytest.raises(ValueError, match="duplicate entity_id"):
            load_entity_catalog(str(kpath))


class TestQueriesAndQrels:
    def test_load_queries(self, tmp_path):
        path = tmp_path / "queries.tsv"
        path.write_text("q1\tblack bear attacks\nq2\thybrid cars\n")
        queries = load_queries(str(path))
        assert [q.query_id for q in queries] == ["q1", "q2"]
        assert queries[0].text == "black bear attacks"

    def test_duplicate_query_rejected(self, tmp_path):
        path = tmp_path / "queries.tsv"
        path.write_text("q1\ta\nq1\tb\n")
        with pytest.raises(ValueError, match="duplicate query_id"):
            load_queries(str(path))

    def test_load_qrels(self, tmp_path):
        path = tmp_path / "qrels.txt"
        path.write_text("q1 0 d1 2\nq1 0 d2 0\nq2 0 d1 1\n")
        qrels = load_qrels(str(path))
        assert qrels.grade("q1", "d1") == 2
        assert qrels.grade("q1", "unjudged") == 0
        assert qrels.relevant_docs("q2") == ["d1"]

    def test_duplicate_pair_rejected(self, tmp_path):
        path = tmp_path / "qrels.txt"
        path.write_text("q1 0 d1 2\nq1 0 d1 1\n")
        with pytest.raises(ValueError, match="duplicate judgment"):
            load_qrels(str(path))

    def test_negative_grade_rejected(self, tmp_path):
        path = tmp_path / "qrels.txt"
        path.write_text("q1 0 d1 -1\n")
        with pytest.raises(ValueError, match="negative grade"):
            load_qrels(str(path))


def doc_with_sentences(n):
    sentences = [f"sentence {i}." for i in range(n)]
    text = " ".join(sentences)
    return Document(doc_id="d", text=text, sentences=split_sentences(text), mentions=[])


class TestSegmentation:
    def test_twelve_sentences_window10_stride5(self):
        passages = segment_passages(doc_with_sentences(12), SegmenterConfig(10, 5))
        assert [p.sentence_range for p in passages] == [(0, 10), (5, 12)]

    def test_short_doc_single_window(self):
        passages = segment_passages(doc_with_sentences(3), SegmenterConfig(10, 5))
        assert [p.sentence_range for p in passages] == [(0, 3)]

    def test_exact_fit_stops_emission(self):
        passages = segment_passages(doc_with_sentences(10), SegmenterConfig(10, 5))
        assert [p.sentence_range for p in passages] == [(0, 10)]

    def test_empty_doc_empty_list(self):
        doc = Document(doc_id="d", text="", sentences=[], mentions=[])
        assert segment_passages(doc, SegmenterConfig()) == []

    @given(
        n=st.integers(min_value=1, max_value=60),
        window=st.integers(min_value=1, max_value=12),
        stride_frac=st.integers(min_value=1, max_value=12),
    )
    def test_windows_cover_every_sentence(self, n, window, stride_frac):
        stride = min(stride_frac, window)
        passages = segment_passages(doc_with_sentences(n), SegmenterConfig(window, stride))
        covered = set()
        for p in passages:
            covered.update(range(*p.sentence_range))
        assert covered == set(range(n))
        # ordered, contiguous indexing
        assert [p.index for p in passages] == list(range(len(passages)))
        starts = [p.sentence_range[0] for p in passages]
        assert starts == sorted(starts)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            SegmenterConfig(0, 1)
        with pytest.raises(ValueError):
            SegmenterConfig(5, 6)


def doc_with_entities(doc_id, entity_ids):
    text = "one token."
    mentions = []
    from dreq.corpus import EntityMention

    for eid in entity_ids:
        mentions.append(EntityMention(eid, "one", 0, 3, 1.0))
    return Document(doc_id=doc_id, text=text, sentences=[text], mentions=mentions)


class TestPooling:
    def test_union_first_seen_order(self):
        docs = [doc_with_entities("d1", ["a", "b"]), doc_with_entities("d2", ["b", "c"])]
        assert pool_entities(docs) == ["a", "b", "c"]

    def test_empty(self):
        assert pool_entities([]) == []

    def test_repeated_mentions_dedup(self):
        assert pool_entities([doc_with_entities("d1", ["a", "a", "a"])]) == ["a"]

    @given(st.lists(st.lists(st.sampled_from("abcdef"), max_size=5), max_size=6))
    def test_idempotent_and_stable(self, entity_lists):
        docs = [doc_with_entities(f"d{i}", ents) for i, ents in enumerate(entity_lists)]
        first = pool_entities(docs)
        assert pool_entities(docs) == first
        assert len(set(first)) == len(first)


class TestTransferLabels:
    def qrels(self):
        q = Qrels()
        q.add("q1", "drel", 2)
        q.add("q1", "dneg", 0)
        return q

    def test_entity_in_relevant_doc(self):
        docs = [doc_with_entities("drel", ["a"])]
        assert transfer_labels(self.qrels(), "q1", docs) == {"a": 1}

    def test_entity_only_in_unjudged(self):
        docs = [doc_with_entities("dunk", ["b"])]
        assert transfer_labels(self.qrels(), "q1", docs) == {"b": 0}

    def test_positive_wins_over_negative(self):
        docs = [doc_with_entities("dneg", ["e"]), doc_with_entities("drel", ["e"])]
        assert transfer_labels(self.qrels(), "q1", docs) == {"e": 1}

    @given(st.lists(st.lists(st.sampled_from("abcd"), max_size=4), min_size=1, max_size=5))
    def test_keyset_equals_pooled(self, entity_lists):
        docs = [doc_with_entities(f"d{i}", ents) for i, ents in enumerate(entity_lists)]
        labels = transfer_labels(self.qrels(), "q1", docs)
        assert list(labels.keys()) == pool_entities(docs)
