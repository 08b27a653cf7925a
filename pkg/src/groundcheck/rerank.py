"""LLM reranking over first-stage runs: pointwise scoring and sliding-window
listwise reordering.

The per-task preambles are frozen verbatim; the surrounding scaffolding
(passage block, output instruction) is this artifact's own. Listwise
reranking slides a window back-to-front over the top-depth prefix (last
window first, start moving backward by the stride) so items promoted by one
window are reconsidered by the next; the output is always a permutation of
the input prefix no matter what the client returns.
"""
from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol, Sequence

from .retrieval import RankedRun, tokenize

LEAD_TASK = "LEAD"
BODY_TASK = "BODY"
ENTITY_TASK = "ENTITY"
TASKS = (LEAD_TASK, BODY_TASK, ENTITY_TASK)

RERANK_MAX_OUTPUT_TOKENS = 8_192

POINTWISE_CLAIM_PREAMBLE = (
    "The following is a claim:\n{claim}\n\n"
    "A relevant passage provides supporting or refuting evidence for the claim."
)
POINTWISE_ENTITY_PREAMBLE = (
    "I am writing an encyclopedia article about the following person: {entity}. "
    "A relevant passage contains noteworthy biographical facts about this "
    "person. For example, a passage containing facts about this person's "
    "early life, education, career, or death is relevant."
)
LISTWISE_CLAIM_PREAMBLE = (
    "The query given below is a claim. A relevant passage provides supporting "
    "or refuting evidence for the claim."
)
LISTWISE_ENTITY_PREAMBLE = (
    "I am writing an encyclopedia article about the following person given in "
    "the query below. A relevant passage contains noteworthy biographical "
    "facts about this person. For example, a passage containing facts about "
    "this person's early life, education, career, or death is relevant."
)

_POINTWISE_INSTRUCTION = (
    "Rate the passage's relevance as a number between 0 and 1. "
    "Write the number and nothing else."
)
_LISTWISE_INSTRUCTION = (
    "Rank the passages above by relevance to the query, from most to least "
    'relevant. Write the ranking as bracketed passage numbers separated by " > ", '
    "for example: [2] > [1] > [3]. Write the ranking and nothing else."
)


def build_task_prompt(
    task: str, mode: str, query_or_claim: str, passages: Sequence[str]
) -> str:
    """Render the reranker prompt for one call.

    Pointwise takes exactly one passage; listwise numbers all passages in
    window order. For the ENTITY task, pass the entity name in pointwise
    mode (it is substituted into the preamble) and the full entity query
    text in listwise mode (the preamble refers to "the query below").
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if mode == "pointwise":
        if len(passages) != 1:
            raise ValueError(f"pointwise mode takes exactly 1 passage, got {len(passages)}")
        if task == ENTITY_TASK:
            preamble = POINTWISE_ENTITY_PREAMBLE.format(entity=query_or_claim)
        else:
            preamble = POINTWISE_CLAIM_PREAMBLE.format(claim=query_or_claim)
        return f"{preamble}\n\nPassage:\n{passages[0]}\n\n{_POINTWISE_INSTRUCTION}"
    if mode == "listwise":
        if not passages:
            raise ValueError("listwise mode needs at least 1 passage")
        preamble = (
            LISTWISE_ENTITY_PREAMBLE if task == ENTITY_TASK else LISTWISE_CLAIM_PREAMBLE
        )
        block = "\n".join(f"[{i}] {p}" for i, p in enumerate(passages, start=1))
        return (
            f"{preamble}\n\nQuery: {query_or_claim}\n\nPassages:\n\n{block}\n\n"
            f"{_LISTWISE_INSTRUCTION}"
        )
    raise ValueError(f"unknown mode {mode!r}")


# -- listwise response parsing --


class ListwiseParseError(ValueError):
    """The response yields no usable window permutation."""


_BRACKETED = re.compile(r"\[(\d+)\]")


def parse_listwise_order(response: str, window_size: int) -> list[int]:
    """Parse a window permutation from text like "[3] > [1] > [2]".

    Bracketed indices are read in order; duplicates keep their first
    occurrence; missing indices are appended ascending. No indices at all,
    or any index outside 1..window_size, is an error (the caller then keeps
    the window's original order).
    """
    found = [int(m) for m in _BRACKETED.findall(response)]
    if not found:
        raise ListwiseParseError("no bracketed indices in response")
    bad = [n for n in found if not 1 <= n <= window_size]
    if bad:
        raise ListwiseParseError(f"indices {bad} outside window of size {window_size}")
    order: list[int] = []
    for n in found:
        if n not in order:
            order.append(n)
    for n in range(1, window_size + 1):
        if n not in order:
            order.append(n)
    return order


# -- clients --


class PointwiseRerankClient(Protocol):
    def score(self, prompt: str) -> float:
        """Relevance of the prompt's passage, in [0, 1]."""
        ...


class ListwiseRerankClient(Protocol):
    def complete(self, prompt: str) -> str:
        """Ranking text for the prompt's passage window."""
        ...


class IdentityListwiseClient:
    """Returns every window in its given order."""

    def complete(self, prompt: str) -> str:
        n = len(_PASSAGE_LINE.findall(_passages_block(prompt)))
        return " > ".join(f"[{i}]" for i in range(1, n + 1))


_PASSAGES_BLOCK = re.compile(r"Passages:\n\n(.*?)\n\nRank the passages", re.DOTALL)
_PASSAGE_LINE = re.compile(r"^\[(\d+)\] (.*)$", re.MULTILINE)
_QUERY_LINE = re.compile(r"Query: (.*?)\n\n", re.DOTALL)
_POINTWISE_CLAIM = re.compile(r"The following is a claim:\n(.*?)\n\n", re.DOTALL)
_POINTWISE_ENTITY = re.compile(r"following person: (.*?)\. A relevant passage")
_POINTWISE_PASSAGE = re.compile(r"Passage:\n(.*?)\n\nRate the passage", re.DOTALL)


def _passages_block(prompt: str) -> str:
    m = _PASSAGES_BLOCK.search(prompt)
    return m.group(1) if m else ""


class OverlapRerankClient:
    """Deterministic offline reranker: lexical overlap with the query.

    Serves both modes — ``score`` rates one passage, ``complete`` orders a
    window by overlap (descending, original position breaking ties).
    """

    def _overlap(self, query: str, passage: str) -> float:
        q = set(tokenize(query))
        if not q:
            return 0.0
        return len(q & set(tokenize(passage))) / len(q)

    def score(self, prompt: str) -> float:
        m = _POINTWISE_CLAIM.search(prompt) or _POINTWISE_ENTITY.search(prompt)
        p = _POINTWISE_PASSAGE.search(prompt)
        if not m or not p:
            return 0.0
        return min(1.0, self._overlap(m.group(1), p.group(1)))

    def complete(self, prompt: str) -> str:
        qm = _QUERY_LINE.search(prompt)
        query = qm.group(1) if qm else ""
        entries = _PASSAGE_LINE.findall(_passages_block(prompt))
        ranked = sorted(
            ((int(n), text) for n, text in entries),
            key=lambda e: (-self._overlap(query, e[1]), e[0]),
        )
        return " > ".join(f"[{n}]" for n, _ in ranked)


@dataclass
class HttpRerankClient:
    """Chat-completion HTTP reranker (listwise text or pointwise scalar)."""

    endpoint: str
    model: str
    api_key: str | None = None
    timeout: float = 300.0
    max_output_tokens: int = RERANK_MAX_OUTPUT_TOKENS

    def _complete(self, prompt: str) -> str:
        import httpx

        key = self.api_key if self.api_key is not None else os.environ.get(
            "GROUNDCHECK_API_KEY"
        )
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.model,
            "max_tokens": self.max_output_tokens,
            "messages": [{"role": "user", "content": prompt}],
        }
        resp = httpx.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]

    def complete(self, prompt: str) -> str:
        return self._complete(prompt)

    def score(self, prompt: str) -> float:
        text = self._complete(prompt)
        m = re.search(r"-?\d+(?:\.\d+)?", text)
        if not m:
            raise ValueError(f"no numeric score in reranker response: {text[:80]!r}")
        return min(1.0, max(0.0, float(m.group(0))))


# -- jobs --


@dataclass
class RerankJob:
    task: str  # LEAD | BODY | ENTITY
    mode: str  # pointwise | listwise
    client: Any
    depth: int = 10  # 100 for ENTITY
    window: int = 20
    stride: int = 10

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.mode not in ("pointwise", "listwise"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.window < 1 or self.stride < 1:
            raise ValueError("window and stride must be >= 1")
        if self.stride > self.window:
            raise ValueError(f"stride {self.stride} exceeds window {self.window}")


@dataclass
class RerankedList:
    query_id: str
    order: list[str]  # permutation of the input top-depth prefix
    provenance: list[dict] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)


def window_starts(depth: int, window: int, stride: int) -> list[int]:
    """Back-to-front window start offsets covering every prefix position."""
    window = min(window, depth)
    starts = [depth - window]
    while starts[-1] > 0:
        starts.append(max(0, starts[-1] - stride))
    return starts


def rerank_pointwise(
    job: RerankJob,
    run: RankedRun,
    query_texts: Mapping[str, str],
    passage_texts: Mapping[str, str],
) -> dict[str, RerankedList]:
    """Score each top-depth passage independently and reorder by score.

    Scores sort descending with the original rank breaking ties; a passage
    whose client call fails keeps its original position with the lowest
    possible priority and the failure is flagged. The below-depth tail is
    untouched (the caller reattaches it).
    """
    if job.mode != "pointwise":
        raise ValueError("job mode must be pointwise")
    out: dict[str, RerankedList] = {}
    for qid in sorted(run.by_query):
        prefix = [doc for doc, _ in run.by_query[qid][: job.depth]]
        result = RerankedList(query_id=qid, order=[])
        scored: list[tuple[float, int, str]] = []
        for orig_rank, doc_id in enumerate(prefix):
            prompt = build_task_prompt(
                job.task, "pointwise", query_texts[qid], [passage_texts[doc_id]]
            )
            try:
                s = float(job.client.score(prompt))
                if not 0.0 <= s <= 1.0:
                    raise ValueError(f"score {s} outside [0, 1]")
            except Exception as e:
                result.flags.append(f"{doc_id}: {type(e).__name__}: {e}")
                s = float("-inf")
            scored.append((s, orig_rank, doc_id))
            result.provenance.append({"doc_id": doc_id, "score": s})
        scored.sort(key=lambda t: (-t[0], t[1]))
        result.order = [doc_id for _, _, doc_id in scored]
        out[qid] = result
    return out


def rerank_listwise(
    job: RerankJob,
    run: RankedRun,
    query_texts: Mapping[str, str],
    passage_texts: Mapping[str, str],
) -> dict[str, RerankedList]:
    """Reorder each query's top-depth prefix with sliding listwise windows.

    Windows are processed back-to-front (the last window first, the start
    retreating by the stride), so each pass can promote items into the span
    the next window covers. A window whose response fails to parse keeps
    its original order and is flagged. The result is always a permutation
    of the prefix.
    """
    if job.mode != "listwise":
        raise ValueError("job mode must be listwise")
    out: dict[str, RerankedList] = {}
    for qid in sorted(run.by_query):
        order = [doc for doc, _ in run.by_query[qid][: job.depth]]
        result = RerankedList(query_id=qid, order=order)
        if not order:
            out[qid] = result
            continue
        for start in window_starts(len(order), job.window, job.stride):
            stop = min(start + job.window, len(order))
            window_docs = order[start:stop]
            prompt = build_task_prompt(
                job.task,
                "listwise",
                query_texts[qid],
                [passage_texts[d] for d in window_docs],
            )
            entry = {"window": [start, stop], "docs": list(window_docs)}
            try:
                response = job.client.complete(prompt)
                entry["response"] = response
                perm = parse_listwise_order(response, len(window_docs))
            except Exception as e:
                result.flags.append(f"window [{start}, {stop}): {type(e).__name__}: {e}")
                entry["error"] = f"{type(e).__name__}: {e}"
                result.provenance.append(entry)
                continue
            order[start:stop] = [window_docs[i - 1] for i in perm]
            result.provenance.append(entry)
        result.order = order
        out[qid] = result
    return out


def as_run(
    reranked: Mapping[str, RerankedList], original: RankedRun, depth: int
) -> RankedRun:
    """Splice reranked prefixes onto their original tails as a valid run.

    Documents are rescored N..1 descending (rank positions, not model
    scores) so the reordered prefix and untouched tail form one monotone
    ranking.
    """
    by_query: dict[str, list[tuple[str, float]]] = {}
    for qid, ranking in original.by_query.items():
        docs = [doc for doc, _ in ranking]
        if qid in reranked:
            docs = list(reranked[qid].order) + docs[depth:]
        n = len(docs)
        by_query[qid] = [(doc, float(n - i)) for i, doc in enumerate(docs)]
    run = RankedRun(by_query=by_query)
    run.validate()
    return run


def write_provenance(path, reranked: Mapping[str, RerankedList]) -> None:
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for qid in sorted(reranked):
            r = reranked[qid]
            record = {
                "query_id": r.query_id,
                "order": r.order,
                "flags": r.flags,
                "provenance": r.provenance,
            }
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
