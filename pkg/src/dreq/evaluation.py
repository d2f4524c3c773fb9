"""IR metrics, paired significance testing, and query-difficulty analysis.

nDCG uses exponential gains (2^grade - 1) with a log2(rank + 1) discount,
matching the trec_eval ndcg_cut convention; queries without relevant
documents score 0. The Student-t CDF for the paired test is evaluated via
a continued-fraction regularized incomplete beta, so no statistics
dependency is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import Qrels
from .retrieval import Ranking, TokenizerConfig, tokenize

__all__ = [
    "precision_at_k",
    "ndcg_at_k",
    "average_precision",
    "recall_at_k",
    "MetricsReport",
    "evaluate_run",
    "write_metrics_report",
    "TTestResult",
    "paired_t_test",
    "student_t_two_tailed_p",
    "regularized_incomplete_beta",
    "wig",
    "wig_terciles",
    "queries_helped",
    "DifficultyBin",
    "DifficultyReport",
    "difficulty_bins",
    "build_difficulty_report",
    "write_difficulty_report",
]


def precision_at_k(ranking: Ranking, qrels: Qrels, k: int = 20) -> float:
    """|relevant in top-k| / k; short rankings count missing slots as misses."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    hits = sum(
        1 for e in ranking.entries[:k] if qrels.grade(ranking.query_id, e.doc_id) >= 1
    )
    return hits / k


def ndcg_at_k(ranking: Ranking, qrels: Qrels, k: int = 20) -> float:
    """Exponential-gain nDCG; 0 when the query has no relevant documents."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    per_query = qrels.grades.get(ranking.query_id, {})
    ideal_grades = sorted((g for g in per_query.values() if g > 0), reverse=True)[:k]
    if not ideal_grades:
        return 0.0
    dcg = 0.0
    for i, e in enumerate(ranking.entries[:k]):
        g = qrels.grade(ranking.query_id, e.doc_id)
        if g > 0:
            dcg += (2.0**g - 1.0) / math.log2(i + 2)
    idcg = sum((2.0**g - 1.0) / math.log2(i + 2) for i, g in enumerate(ideal_grades))
    return dcg / idcg


def average_precision(ranking: Ranking, qrels: Qrels) -> float:
    """Mean of precision at each relevant hit over the total relevant count;
    0 when nothing is relevant."""
    r_total = len(qrels.relevant_docs(ranking.query_id))
    if r_total == 0:
        return 0.0
    hits = 0
    acc = 0.0
    for i, e in enumerate(ranking.entries, start=1):
        if qrels.grade(ranking.query_id, e.doc_id) >= 1:
            hits += 1
            acc += hits / i
    return acc / r_total


def recall_at_k(ranking: Ranking, qrels: Qrels, k: int = 1000) -> float:
    """|relevant in top-k| / |relevant|; 0 when the query has no relevant docs."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    relevant = set(qrels.relevant_docs(ranking.query_id))
    if not relevant:
        return 0.0
    hits = sum(1 for e in ranking.entries[:k] if e.doc_id in relevant)
    return hits / len(relevant)


@dataclass
class MetricsReport:
    tag: str
    per_query: dict[str, dict[str, float]]  # metric -> query_id -> value
    means: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.means:
            self.means = {
                metric: sum(values.values()) / len(values)
                for metric, values in self.per_query.items()
                if values
            }


def evaluate_run(
    rankings: Mapping[str, Ranking],
    qrels: Qrels,
    tag: str = "system",
    prec_k: int = 20,
    ndcg_k: int = 20,
    recall_k: int = 1000,
) -> MetricsReport:
    """MAP, nDCG@k, P@k, Recall@k per query plus arithmetic means.

    Every run query must be judged; unknown query ids are an error.
    """
    unknown = sorted(q for q in rankings if q not in qrels.grades)
    if unknown:
        raise ValueError(f"run references query ids absent from qrels: {unknown}")
    metrics: dict[str, dict[str, float]] = {
        "map": {},
        f"ndcg@{ndcg_k}": {},
        f"p@{prec_k}": {},
        f"recall@{recall_k}": {},
    }
    for qid in sorted(rankings):
        r = rankings[qid]
        metrics["map"][qid] = average_precision(r, qrels)
        metrics[f"ndcg@{ndcg_k}"][qid] = ndcg_at_k(r, qrels, ndcg_k)
        metrics[f"p@{prec_k}"][qid] = precision_at_k(r, qrels, prec_k)
        metrics[f"recall@{recall_k}"][qid] = recall_at_k(r, qrels, recall_k)
    return MetricsReport(tag=tag, per_query=metrics)


def write_metrics_report(report: MetricsReport, path: str) -> None:
    """TSV rows `metric <TAB> query_id|ALL <TAB> value`."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("metric\tquery_id\tvalue\n")
        for metric in report.per_query:
            for qid in sorted(report.per_query[metric]):
                f.write(f"{metric}\t{qid}\t{report.per_query[metric][qid]:.6f}\n")
            f.write(f"{metric}\tALL\t{report.means[metric]:.6f}\n")


# --- paired significance test ---------------------------------------------------


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 500):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) to ~1e-15 relative accuracy for a, b > 0 and x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def student_t_two_tailed_p(t: float, df: int) -> float:
    """Two-tailed p-value of a Student-t statistic."""
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    significant: bool


def paired_t_test(
    per_query_a: Sequence[float], per_query_b: Sequence[float], alpha: float = 0.05
) -> TTestResult:
    """Paired t-test on aligned per-query values.

    Zero-variance differences (including identical systems) are degenerate:
    the statistic is undefined and the result reports not significant with
    t = p = nan.
    """
    if len(per_query_a) != len(per_query_b):
        raise ValueError(
            f"length mismatch: {len(per_query_a)} vs {len(per_query_b)} per-query values"
        )
    n = len(per_query_a)
    if n < 2:
        raise ValueError(f"need at least 2 paired values, got {n}")
    d = [a - b for a, b in zip(per_query_a, per_query_b)]
    mean = sum(d) / n
    var = sum((x - mean) ** 2 for x in d) / (n - 1)
    if var == 0.0:
        return TTestResult(t=float("nan"), p=float("nan"), significant=False)
    t = mean / math.sqrt(var / n)
    p = student_t_two_tailed_p(t, n - 1)
    return TTestResult(t=t, p=p, significant=p < alpha)


# --- query performance prediction and difficulty analysis -----------------------


def wig(
    query: str | list[str],
    candidates: Ranking,
    k: int = 20,
    tokenizer: TokenizerConfig = TokenizerConfig(),
) -> float:
    """Weighted information gain over the candidate list.

    (1/sqrt(|q|)) * (1/k) * sum over the top-k of (score - mean score of
    the full candidate list). The corpus-wide term of the original
    formulation is approximated by the candidate-list mean.
    """
    terms = tokenize(query, tokenizer) if isinstance(query, str) else list(query)
    if not terms:
        raise ValueError("query has no terms")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > len(candidates.entries):
        raise ValueError(f"k={k} exceeds candidate depth {len(candidates.entries)}")
    scores = [e.score for e in candidates.entries]
    mean_all = sum(scores) / len(scores)
    top = scores[:k]
    return (1.0 / math.sqrt(len(terms))) * (sum(s - mean_all for s in top) / k)


def wig_terciles(wig_scores: Mapping[str, float]) -> dict[str, str]:
    """Split queries into easy / medium / hard by descending WIG; remainders
    go to the earlier groups."""
    if len(wig_scores) < 3:
        raise ValueError(f"need at least 3 queries, got {len(wig_scores)}")
    ordered = sorted(wig_scores, key=lambda q: (-wig_scores[q], q))
    n = len(ordered)
    base, rem = divmod(n, 3)
    sizes = [base + (1 if i < rem else 0) for i in range(3)]
    labels = ["easy", "medium", "hard"]
    out: dict[str, str] = {}
    pos = 0
    for size, label in zip(sizes, labels):
        for qid in ordered[pos : pos + size]:
            out[qid] = label
        pos += size
    return out


def queries_helped(
    baseline: Mapping[str, float], system: Mapping[str, float]
) -> tuple[int, int, int]:
    """(helped, hurt, unchanged) counts under strict per-query comparison."""
    if set(baseline) != set(system):
        raise ValueError("baseline and system query sets differ")
    helped = hurt = unchanged = 0
    for qid, base in baseline.items():
        if system[qid] > base:
            helped += 1
        elif system[qid] < base:
            hurt += 1
        else:
            unchanged += 1
    return helped, hurt, unchanged


@dataclass(frozen=True)
class DifficultyBin:
    index: int
    query_ids: tuple[str, ...]
    baseline_mean: float
    system_mean: float


@dataclass
class DifficultyReport:
    bins: list[DifficultyBin]
    helped: int
    hurt: int
    unchanged: int
    terciles: dict[str, str] = field(default_factory=dict)


def difficulty_bins(
    baseline: Mapping[str, float],
    system: Mapping[str, float],
    n_bins: int = 20,
) -> list[DifficultyBin]:
    """Sort queries by baseline metric (asc, qid asc on ties) and cut into
    `n_bins` bins, spreading any remainder over the first bins."""
    if set(baseline) != set(system):
        raise ValueError("baseline and system query sets differ")
    if not baseline:
        raise ValueError("empty query set")
    ordered = sorted(baseline, key=lambda q: (baseline[q], q))
    n = len(ordered)
    base, rem = divmod(n, n_bins)
    bins: list[DifficultyBin] = []
    pos = 0
    for i in range(n_bins):
        size = base + (1 if i < rem else 0)
        qids = tuple(ordered[pos : pos + size])
        pos += size
        if not qids:
            continue
        bins.append(
            DifficultyBin(
                index=i,
                query_ids=qids,
                baseline_mean=sum(baseline[q] for q in qids) / len(qids),
                system_mean=sum(system[q] for q in qids) / len(qids),
            )
        )
    return bins


def build_difficulty_report(
    baseline: Mapping[str, float],
    system: Mapping[str, float],
    wig_scores: Mapping[str, float] | None = None,
    n_bins: int = 20,
) -> DifficultyReport:
    helped, hurt, unchanged = queries_helped(baseline, system)
    return DifficultyReport(
        bins=difficulty_bins(baseline, system, n_bins),
        helped=helped,
        hurt=hurt,
        unchanged=unchanged,
        terciles=wig_terciles(wig_scores) if wig_scores is not None else {},
    )


def write_difficulty_report(report: DifficultyReport, path: str) -> None:
    """Plot-ready TSV: one row per bin, then helped/hurt/unchanged, then
    optional per-query tercile assignments."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("bin\tn_queries\tbaseline_mean\tsystem_mean\n")
        for b in report.bins:
            f.write(f"{b.index}\t{len(b.query_ids)}\t{b.baseline_mean:.6f}\t{b.system_mean:.6f}\n")
        f.write(f"#helped\t{report.helped}\n")
        f.write(f"#hurt\t{report.hurt}\n")
        f.write(f"#unchanged\t{report.unchanged}\n")
        for qid in sorted(report.terciles):
            f.write(f"#tercile\t{qid}\t{report.terciles[qid]}\n")
