import math

import pytest
from hypothesis import given, settings, strategies as st

from dreq import _porter
from dreq.corpus import CorpusStore, Document
from dreq.retrieval import (
    Bm25Params,
    Ranking,
    Rm3Params,
    TokenizerConfig,
    bm25_score,
    build_index,
    load_run,
    retrieve,
    rm3_expand,
    tokenize,
    write_run,
)


def corpus_of(texts: dict[str, str]) -> CorpusStore:
    store = CorpusStore()
    for doc_id, text in texts.items():
        store.documents[doc_id] = Document(doc_id, text, [text], [])
    return store


class TestTokenizer:
    def test_lowercase_split(self):
        assert tokenize("Black Bear-Attacks, 2004!") == ["black", "bear", "attacks", "2004"]

    def test_underscore_splits(self):
        assert tokenize("snake_case") == ["snake", "case"]

    def test_stemming_flag(self):
        cfg = TokenizerConfig(stem=True)
        assert tokenize("running caresses ponies", cfg) == ["run", "caress", "poni"]

    @pytest.mark.parametrize(
        "word,stemmed",
        [
            ("caresses", "caress"),
            ("ponies", "poni"),
            ("ties", "ti"),
            ("caress", "caress"),
            ("cats", "cat"),
            ("feed", "feed"),
            ("agreed", "agre"),
            ("plastered", "plaster"),
            ("motoring", "motor"),
            ("sing", "sing"),
            ("conflated", "conflat"),
            ("hopping", "hop"),
            ("falling", "fall"),
            ("hissing", "hiss"),
            ("filing", "file"),
            ("happy", "happi"),
            ("sky", "sky"),
            ("relational", "relat"),
            ("rational", "ration"),
            ("digitizer", "digit"),
            ("operator", "oper"),
            ("feudalism", "feudal"),
            ("hopefulness", "hope"),
            ("formalize", "formal"),
            ("electrical", "electr"),
            ("hopeful", "hope"),
            ("goodness", "good"),
            ("revival", "reviv"),
            ("adjustable", "adjust"),
            ("adoption", "adopt"),
            ("activate", "activ"),
            ("effective", "effect"),
            ("probate", "probat"),
            ("rate", "rate"),
            ("cease", "ceas"),
            ("controll", "control"),
            ("roll", "roll"),
        ],
    )
    def test_porter_vectors(self, word, stemmed):
        assert _porter.stem(word) == stemmed


class TestIndex:
    def test_single_doc_statistics(self):
        index = build_index(corpus_of({"d1": "a b a"}))
        assert index.df("a") == 1
        assert index.tf("a", "d1") == 2
        assert index.avg_doc_length == 3.0
        assert index.doc_count == 1

    def test_df_across_docs(self):
        index = build_index(corpus_of({"d1": "t x", "d2": "t y"}))
        assert index.df("t") == 2
        assert index.df("x") == 1

    def test_rebuild_identical(self):
        texts = {"d1": "alpha beta", "d2": "beta gamma gamma"}
        a, b = build_index(corpus_of(texts)), build_index(corpus_of(texts))
        assert a.postings == b.postings
        assert a.doc_lengths == b.doc_lengths
        assert a.avg_doc_length == b.avg_doc_length

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            build_index(corpus_of({}))

    def test_invariants(self):
        texts = {"d1": "a a b", "d2": "b c", "d3": "c c c a"}
        index = build_index(corpus_of(texts))
        total_tokens = sum(index.doc_lengths)
        for term, per_term in index.postings.items():
            assert sum(per_term.values()) <= total_tokens
            assert index.df(term) == len(per_term)
        assert index.avg_doc_length == total_tokens / index.doc_count


class TestBm25:
    def test_hand_example(self):
        # N=2, df=1, tf=2, dl=avgdl=4, k1=0.9, b=0.4 -> ln2 * 3.8/2.9
        index = build_index(corpus_of({"d1": "t t x y", "d2": "p q r s"}))
        score = bm25_score(index, ["t"], "d1", Bm25Params(k1=0.9, b=0.4))
        assert score == pytest.approx(0.9082, abs=1e-4)
        assert score == pytest.approx(math.log(2) * 3.8 / 2.9, abs=1e-12)

    def test_absent_term_scores_zero(self):
        index = build_index(corpus_of({"d1": "a b", "d2": "a c"}))
        assert bm25_score(index, ["zzz"], "d1") == 0.0

    def test_term_in_every_doc_single_doc_corpus(self):
        index = build_index(corpus_of({"d1": "solo"}))
        score = bm25_score(index, ["solo"], "d1")
        assert score > 0.0
        assert math.log(1 + 0.5 / 1.5) == pytest.approx(
            score / (1 * 1.9 / (1 + 0.9)), abs=1e-12
        )

    def test_unknown_doc_rejected(self):
        index = build_index(corpus_of({"d1": "a"}))
        with pytest.raises(KeyError):
            bm25_score(index, ["a"], "nope")

    def test_monotone_in_tf(self):
        # same doc length, increasing tf of the query term
        index = build_index(
            corpus_of({"d1": "t x x x", "d2": "t t x x", "d3": "t t t x"})
        )
        scores = [bm25_score(index, ["t"], d) for d in ("d1", "d2", "d3")]
        assert scores[0] < scores[1] < scores[2]


class TestRm3:
    def test_alpha_one_returns_original(self):
        index = build_index(corpus_of({"d1": "x y", "d2": "x z"}))
        model = rm3_expand(index, ["x"], Rm3Params(original_weight=1.0))
        assert model == {"x": 1.0}

    def test_single_feedback_doc_hand_interpolation(self):
        # one matching doc with uniform terms {x, y}; alpha = 0.5, query {x}
        index = build_index(corpus_of({"d1": "x y"}))
        model = rm3_expand(index, ["x"], Rm3Params(fb_docs=10, fb_terms=10, original_weight=0.5))
        assert model["x"] == pytest.approx(0.75, abs=1e-12)
        assert model["y"] == pytest.approx(0.25, abs=1e-12)

    def test_no_retrievable_docs_returns_original(self):
        index = build_index(corpus_of({"d1": "a b", "d2": "c d"}))
        model = rm3_expand(index, ["zzz", "qqq"], Rm3Params())
        assert model == {"zzz": 0.5, "qqq": 0.5}

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_output_is_distribution(self, seed):
        import random

        rng = random.Random(seed)
        vocab = ["a", "b", "c", "d", "e", "f"]
        texts = {
            f"d{i}": " ".join(rng.choices(vocab, k=rng.randint(2, 10))) for i in range(6)
        }
        index = build_index(corpus_of(texts))
        query = rng.sample(vocab, rng.randint(1, 3))
        model = rm3_expand(index, query, Rm3Params(fb_docs=3, fb_terms=4, original_weight=0.3))
        assert abs(sum(model.values()) - 1.0) < 1e-9
        assert all(w >= 0 for w in model.values())


def _oracle_order(index, weighted_terms, params):
    """Independent exhaustive scorer: per-document sum over weighted terms."""
    scores = {}
    for i, doc_id in enumerate(index.doc_ids):
        dl = index.doc_lengths[i]
        s = 0.0
        for term, weight in weighted_terms.items():
            tf = index.postings.get(term, {}).get(i, 0)
            if tf == 0:
                continue
            df = index.df(term)
            idf = math.log(1 + (index.doc_count - df + 0.5) / (df + 0.5))
            s += weight * idf * tf * (params.k1 + 1) / (
                tf + params.k1 * (1 - params.b + params.b * dl / index.avg_doc_length)
            )
        scores[doc_id] = s
    return [d for d, _ in sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))]


class TestRetrieve:
    def test_k_exceeding_corpus_returns_whole_corpus(self):
        index = build_index(corpus_of({"d1": "a", "d2": "b", "d3": "a b"}))
        ranking = retrieve(index, "a", k=100, mode="bm25")
        assert len(ranking) == 3

    def test_tie_broken_by_doc_id(self):
        index = build_index(corpus_of({"db": "t", "da": "t"}))
        ranking = retrieve(index, "t", k=2, mode="bm25")
        assert ranking.doc_ids() == ["da", "db"]

    def test_k_validation(self):
        index = build_index(corpus_of({"d1": "a"}))
        with pytest.raises(ValueError):
            retrieve(index, "a", k=0)

    def test_prefix_property(self):
        texts = {f"d{i}": f"common term{i % 3}" for i in range(8)}
        index = build_index(corpus_of(texts))
        full = retrieve(index, "common term1", k=8, mode="bm25")
        for k in range(1, 8):
            assert retrieve(index, "common term1", k=k, mode="bm25").doc_ids() == (
                full.doc_ids()[:k]
            )

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_matches_exhaustive_oracle(self, seed):
        import random

        rng = random.Random(seed)
        vocab = ["red", "green", "blue", "cyan", "teal", "pink"]
        n_docs = rng.randint(1, 10)
        texts = {
            f"d{i:02d}": " ".join(rng.choices(vocab, k=rng.randint(1, 12)))
            for i in range(n_docs)
        }
        index = build_index(corpus_of(texts))
        terms = rng.choices(vocab, k=rng.randint(1, 3))
        params = Bm25Params()

        weighted = {}
        for t in terms:
            weighted[t] = weighted.get(t, 0.0) + 1.0
        got = retrieve(index, list(terms), k=n_docs, mode="bm25", bm25=params)
        assert got.doc_ids() == _oracle_order(index, weighted, params)

        rm3 = Rm3Params(fb_docs=3, fb_terms=5)
        expanded = rm3_expand(index, list(terms), rm3, params)
        got_rm3 = retrieve(index, list(terms), k=n_docs, mode="bm25_rm3", rm3=rm3, bm25=params)
        assert got_rm3.doc_ids() == _oracle_order(index, expanded, params)


class TestRankingAndRunIO:
    def test_from_scores_sorts_and_ranks(self):
        r = Ranking.from_scores("q", [("d2", 0.5), ("d1", 0.9), ("d3", 0.5)])
        assert r.doc_ids() == ["d1", "d2", "d3"]
        assert [e.rank for e in r.entries] == [1, 2, 3]

    def test_duplicate_doc_rejected(self):
        with pytest.raises(ValueError):
            Ranking.from_scores("q", [("d1", 1.0), ("d1", 0.5)])

    def test_run_round_trip(self, tmp_path):
        rankings = [
            Ranking.from_scores("q1", [("d1", 2.25), ("d2", 1.5)]),
            Ranking.from_scores("q2", [("d3", 0.125)]),
        ]
        path = str(tmp_path / "out.run")
        write_run(rankings, path, tag="test")
        line = open(path).readline().rstrip("\n")
        assert line == "q1 Q0 d1 1 2.250000 test"
        loaded = load_run(path)
        assert loaded["q1"].doc_ids() == ["d1", "d2"]
        assert loaded["q2"].entries[0].score == pytest.approx(0.125)

    def test_load_rejects_non_contiguous_ranks(self, tmp_path):
        path = tmp_path / "bad.run"
        path.write_text("q1 Q0 d1 1 1.0 t\nq1 Q0 d2 3 0.5 t\n")
        with pytest.raises(ValueError, match="contiguous"):
            load_run(str(path))
