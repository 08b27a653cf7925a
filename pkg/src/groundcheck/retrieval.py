"""Sentence-level retrieval: BM25 index, qrels construction, Recall/NDCG, TREC I/O.

BM25 is implemented from the Okapi scoring definition with the
nonnegative idf variant idf(t) = ln(1 + (N - df + 0.5)/(df + 0.5)) and
defaults k1 = 1.5, b = 0.75. Tokenization is lowercase, split on
non-alphanumerics, no stemming or stopwords. Ties break by corpus order and
zero-score documents are omitted — all of which is recorded in run metadata
by the CLI.

All float accumulations that feed graded qrels use math.fsum, so grades are
independent of iteration order (exactly rounded sums).
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Sequence

from .corpus import CorpusStore
from .model import (
    BODY,
    LEAD,
    ArticleRecord,
    EvidenceAnnotation,
    SentenceRef,
    Subclaim,
)
from .analytics import EvidenceGraph

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


# -- BM25 --


@dataclass
class Bm25Index:
    doc_ids: list[Hashable]
    doc_tokens: list[list[str]]
    term_freqs: list[Counter]
    doc_freq: Counter
    lengths: list[int]
    avg_length: float
    k1: float
    b: float

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def idf(self, token: str) -> float:
        df = self.doc_freq.get(token, 0)
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))


def build_index(
    docs: Sequence[tuple[Hashable, str]], k1: float = 1.5, b: float = 0.75
) -> Bm25Index:
    """Index (doc_id, text) pairs for BM25 scoring."""
    if not docs:
        raise ValueError("cannot build an index over zero documents")
    doc_ids = [d for d, _ in docs]
    doc_tokens = [tokenize(t) for _, t in docs]
    term_freqs = [Counter(toks) for toks in doc_tokens]
    doc_freq: Counter = Counter()
    for tf in term_freqs:
        doc_freq.update(tf.keys())
    lengths = [len(toks) for toks in doc_tokens]
    avg_length = sum(lengths) / len(lengths)
    return Bm25Index(
        doc_ids=doc_ids,
        doc_tokens=doc_tokens,
        term_freqs=term_freqs,
        doc_freq=doc_freq,
        lengths=lengths,
        avg_length=avg_length,
        k1=k1,
        b=b,
    )


def search(index: Bm25Index, query: str, k: int) -> list[tuple[Hashable, float]]:
    """Top-k documents for a query.

    score(d) = sum over query token occurrences t of
    idf(t) * tf(t,d)*(k1+1) / (tf(t,d) + k1*(1 - b + b*len(d)/avglen)).
    Ties break by corpus order; zero-score documents are omitted.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q_tokens = tokenize(query)
    scored: list[tuple[float, int]] = []
    for i in range(index.n_docs):
        tf = index.term_freqs[i]
        norm = index.k1 * (1.0 - index.b + index.b * index.lengths[i] / index.avg_length)
        score = 0.0
        for t in q_tokens:
            f = tf.get(t, 0)
            if f:
                score += index.idf(t) * f * (index.k1 + 1.0) / (f + norm)
        if score > 0.0:
            scored.append((score, i))
    scored.sort(key=lambda si: (-si[0], si[1]))
    return [(index.doc_ids[i], s) for s, i in scored[:k]]


# -- qrels / runs --


@dataclass
class Qrels:
    """Relevance judgments: (query_id, doc_id) -> grade."""

    judgments: dict[tuple[str, str], float]
    kind: str  # binary | graded

    def __post_init__(self) -> None:
        if self.kind not in ("binary", "graded"):
            raise ValueError(f"unknown qrels kind {self.kind!r}")
        for (qid, did), g in self.judgments.items():
            if g < 0:
                raise ValueError(f"negative grade {g} for ({qid}, {did})")
            if self.kind == "binary" and g not in (0.0, 1.0):
                raise ValueError(f"binary qrels grade must be 0/1, got {g}")

    def by_query(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for (qid, did), g in self.judgments.items():
            out.setdefault(qid, {})[did] = g
        return out


@dataclass
class RankedRun:
    """Per-query ranked (doc_id, score) lists, scores non-increasing."""

    by_query: dict[str, list[tuple[str, float]]]

    def validate(self) -> None:
        for qid, ranking in self.by_query.items():
            ids = [d for d, _ in ranking]
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate doc_id in query {qid}")
            scores = [s for _, s in ranking]
            if any(a < b for a, b in zip(scores, scores[1:])):
                raise ValueError(f"scores increase within query {qid}")


@dataclass
class RetrievalQuery:
    """One retrieval task instance: query text plus its document universe."""

    query_id: str
    text: str
    doc_refs: list[SentenceRef]


ENTITY_QUERY_TEMPLATE = (
    "Tell me about the life of {entity}, including early life, education, "
    "career, and death."
)


def entity_query(entity_name: str) -> str:
    return ENTITY_QUERY_TEMPLATE.format(entity=entity_name)


def build_claim_qrels(
    annotations: Iterable[EvidenceAnnotation],
    claims: Mapping[str, Subclaim],
    store: CorpusStore,
    task: str,
) -> tuple[Qrels, list[RetrievalQuery]]:
    """Binary qrels for the claim tasks.

    LEAD: one query per annotated lead claim (query text: the
    decontextualized claim; universe: that article's body sentences).
    BODY: one query per (body claim, cited source) annotation (universe:
    that source's sentences). Claims with empty evidence sets are excluded.
    """
    if task not in (LEAD, BODY):
        raise ValueError(f"task must be lead or body, got {task!r}")
    judgments: dict[tuple[str, str], float] = {}
    queries: list[RetrievalQuery] = []
    seen: set[tuple[str, str]] = set()
    for ann in annotations:
        claim = claims.get(ann.claim_id)
        if claim is None or claim.scope != task:
            continue
        if (ann.claim_id, ann.owner_id) in seen:
            continue
        seen.add((ann.claim_id, ann.owner_id))
        if not ann.evidence:
            continue
        if task == LEAD:
            query_id = ann.claim_id
            article = store.article_by_id[claim.parent.owner_id]
            universe = article.body_refs()
        else:
            query_id = f"{ann.claim_id}@{ann.owner_id}"
            universe = store.source_by_id[ann.owner_id].refs()
        if not universe:
            continue
        for ref in sorted(ann.evidence):
            judgments[(query_id, ref.ref_id)] = 1.0
        queries.append(
            RetrievalQuery(query_id=query_id, text=claim.decontextualized, doc_refs=universe)
        )
    queries.sort(key=lambda q: q.query_id)
    return Qrels(judgments=judgments, kind="binary"), queries


def rel_grades(graph: EvidenceGraph, entity_id: str) -> dict[SentenceRef, float]:
    """Graded relevance of each source sentence to one entity's query.

    Rel(Q_E, S_S) sums, over the body claims C_B holding S_S as evidence,
    w(C_B) * |support(C_B)| where w(C_B) = 1 + sum of |support(C_L)| over
    the lead claims C_L holding the claim's parent sentence as evidence.
    """
    grades: dict[SentenceRef, float] = {}
    for s_s, claim_ids in graph.body_of.items():
        terms: list[float] = []
        for c_b in sorted(claim_ids):
            parent = graph.parent_of[c_b]
            if parent.owner_id != entity_id:
                continue
            weight = 1.0 + math.fsum(
                abs(graph.support_of[c_l])
                for c_l in sorted(graph.lead_of.get(parent, set()))
            )
            terms.append(weight * abs(graph.support_of[c_b]))
        total = math.fsum(terms)
        if total > 0.0:
            grades[s_s] = total
    return grades


def build_entity_qrels(
    graph: EvidenceGraph,
    articles: Sequence[ArticleRecord],
    store: CorpusStore,
) -> tuple[Qrels, list[RetrievalQuery]]:
    """Graded qrels for the entity task.

    One query per entity (the fixed biography question); universe: all
    sentences of all the entity's cited accessible sources; grades: Rel > 0
    for sentences in at least one body-claim evidence set, 0 implicitly
    otherwise.
    """
    judgments: dict[tuple[str, str], float] = {}
    queries: list[RetrievalQuery] = []
    accessible = store.accessible_sources()
    for article in sorted(articles, key=lambda a: a.entity_id):
        cited = sorted(
            {sid for refs in article.citations.values() for sid in refs if sid in accessible}
        )
        universe: list[SentenceRef] = []
        for sid in cited:
            universe.extend(accessible[sid].refs())
        if not universe:
            continue
        for ref, grade in rel_grades(graph, article.entity_id).items():
            judgments[(article.entity_id, ref.ref_id)] = grade
        queries.append(
            RetrievalQuery(
                query_id=article.entity_id,
                text=entity_query(article.entity_name),
                doc_refs=universe,
            )
        )
    return Qrels(judgments=judgments, kind="graded"), queries


# -- metrics --


@dataclass
class MetricResult:
    per_query: dict[str, float]
    mean: float


def _relevant_queries(qrels: Qrels) -> dict[str, dict[str, float]]:
    # queries whose total relevance is zero are excluded from means
    return {
        qid: rel
        for qid, rel in qrels.by_query().items()
        if any(g > 0 for g in rel.values())
    }


def ndcg_at_k(run: RankedRun, qrels: Qrels, k: int) -> MetricResult:
    """NDCG@k with linear gain; IDCG from grades sorted descending.

    Queries absent from the run score 0; queries with zero total relevance
    are excluded from the mean.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    per: dict[str, float] = {}
    for qid, rel in sorted(_relevant_queries(qrels).items()):
        ranking = run.by_query.get(qid, [])
        dcg = 0.0
        for i, (doc_id, _score) in enumerate(ranking[:k], start=1):
            dcg += rel.get(doc_id, 0.0) / math.log2(i + 1)
        ideal = sorted((g for g in rel.values() if g > 0), reverse=True)[:k]
        idcg = sum(g / math.log2(i + 1) for i, g in enumerate(ideal, start=1))
        per[qid] = dcg / idcg
    if not per:
        raise ValueError("no queries with positive relevance")
    return MetricResult(per_query=per, mean=sum(per.values()) / len(per))


def recall_at_k(run: RankedRun, qrels: Qrels, k: int) -> MetricResult:
    """Recall@k over grade > 0 documents; zero-relevance queries excluded."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    per: dict[str, float] = {}
    for qid, rel in sorted(_relevant_queries(qrels).items()):
        relevant = {d for d, g in rel.items() if g > 0}
        retrieved = {d for d, _ in run.by_query.get(qid, [])[:k]}
        per[qid] = len(relevant & retrieved) / len(relevant)
    if not per:
        raise ValueError("no queries with positive relevance")
    return MetricResult(per_query=per, mean=sum(per.values()) / len(per))


# -- TREC interchange formats --


def format_grade(g: float) -> str:
    return str(int(g)) if float(g).is_integer() else repr(float(g))


def write_run(path: str | Path, run: RankedRun, tag: str = "groundcheck") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for qid in sorted(run.by_query):
            for rank, (doc_id, score) in enumerate(run.by_query[qid], start=1):
                f.write(f"{qid} Q0 {doc_id} {rank} {format_grade(score)} {tag}\n")


def read_run(path: str | Path) -> RankedRun:
    by_query: dict[str, list[tuple[int, str, float]]] = {}
    with Path(path).open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise ValueError(f"{path}:{line_no}: expected 6 run fields, got {len(parts)}")
            qid, _q0, doc_id, rank, score, _tag = parts
            by_query.setdefault(qid, []).append((int(rank), doc_id, float(score)))
    out: dict[str, list[tuple[str, float]]] = {}
    for qid, rows in by_query.items():
        rows.sort(key=lambda r: (-r[2], r[0]))
        out[qid] = [(doc_id, score) for _rank, doc_id, score in rows]
    run = RankedRun(by_query=out)
    run.validate()
    return run


def write_qrels(path: str | Path, qrels: Qrels) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for (qid, doc_id), grade in sorted(qrels.judgments.items()):
            f.write(f"{qid} 0 {doc_id} {format_grade(grade)}\n")


def read_qrels(path: str | Path, kind: str = "graded") -> Qrels:
    judgments: dict[tuple[str, str], float] = {}
    with Path(path).open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ValueError(f"{path}:{line_no}: expected 4 qrels fields, got {len(parts)}")
            qid, _zero, doc_id, grade = parts
            judgments[(qid, doc_id)] = float(grade)
    return Qrels(judgments=judgments, kind=kind)
