"""Bulk evidence annotation: prompt construction, LLM clients, response parsing.

The prompt template (two evidence definitions, the two-step instructions
with guidelines, the ten worked examples, and the dictionary output format)
is frozen verbatim; only the claim and the numbered document sentences vary
per request. Responses are parsed back into evidence indices plus a scalar
support score and validated into EvidenceAnnotation records.
"""
from __future__ import annotations

import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from math import isfinite
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol

from .corpus import CorpusStore
from .model import (
    BODY,
    SOURCE,
    AnnotationError,
    EvidenceAnnotation,
    JudgeRequest,
    SentenceRef,
    Subclaim,
    read_jsonl,
)

# -- token counting --
# The input budget is enforced with a pluggable counter; the default is a
# 4-characters-per-token approximation (explicitly approximate).

TokenCounter = Callable[[str], int]


def approx_token_count(text: str) -> int:
    return (len(text) + 3) // 4


DEFAULT_TOKEN_BUDGET = 126_000
JUDGE_MAX_OUTPUT_TOKENS = 2_048


# -- prompt template --

_JUDGE_EXAMPLES: tuple[tuple[str, tuple[str, ...], str], ...] = (
    (
        "Methane Momma is a short film directed by Alain Rimbert.",
        (
            "Well, good news – last week, in the middle of one of the worst heat "
            "waves that New York has seen in recent memory, a pajama-clad (and still "
            "ripped) Van Peebles entered ex-Sun Ra bandmember Spaceman's Harlem-based "
            "studio and recorded his last takes on the rambling poem he's entitled "
            '"Methane Momma."',
        ),
        "-0.7",
    ),
    (
        "Raj Kapoor was hospitalised for about a month.",
        (
            "Suddenly, Kapoor collapsed, and was rushed to the All India Institute of "
            "Medical Sciences for treatment.",
            "The country's top cardiologists tried their best, but could not save him.",
        ),
        "-0.1",
    ),
    (
        "Ottawa is a city located in the province of Ontario, Canada, and is where "
        "Matthew Perry attended school.",
        (),
        "0",
    ),
    (
        "Paul Thomas Anderson registered himself with the Writers Guild of America "
        "under the name 'Paul Anderson.'",
        (),
        "0",
    ),
    (
        "There were exile forces opposing Idi Amin's regime.",
        (
            "Since leading his guerrilla forces to Kampala in 1986, his most impressive "
            "flexibility has been his capacity to present two concurrent faces: one is "
            "that of the democratic reformer, the other is of the fearsome military ruler.",
            "The former is the saviour of Uganda's post-colonial collapse under "
            "presidents Milton Obote and Idi Amin, patron of democracy, and emancipator "
            "of woman and ethnic and religious minorities.",
        ),
        "0.1",
    ),
    (
        "Margaret Rose Vendryes wrote about Richmond Barthé's work further in her "
        "2008 book.",
        (
            "By coincidence, Dr. Vendryes was the Schomburg's scholar-in-residence and "
            "was researching her Princeton doctorate thesis on Barthe, which evolved "
            "into her landmark book Casting Feral Benga: A Biography of Richmond "
            "Barthé's Signature Work.",
        ),
        "0.3",
    ),
    (
        "Margaret Rose Vendryes gave a lecture in 2015.",
        (
            "This Thursday, February 5 at the Jepson Center, Dr. Vendryes will give the "
            "opening lecture for the exhibition.",
        ),
        "0.5",
    ),
    (
        "The exhibit presented by The New York Public Library for the Performing Arts "
        "was extensive.",
        (
            "Curated by Doug Reside, the Lewis B. and Dorothy Cullman curator of the "
            "library's Billy Rose Theatre Division, the installation will run through "
            "March 31, 2020, and feature original costumes, set models, and archival "
            "video tied to Prince's productions, including models for several productions.",
            "The full display will honor the more than six-decade legacy of Prince.",
            "An open cabaret stage will allow viewers to perform songs from his shows "
            "or record their own stories about their experience with Prince's "
            "theatrical work to add to the live nature of the homage.",
        ),
        "0.7",
    ),
    (
        "The location of Matthew Perry's funeral was Forest Lawn Memorial Park "
        "(Hollywood Hills), a cemetery.",
        (
            "Photo: David M. Benett/Dave Benett/Getty Matthew Perry's loved ones "
            "gathered for the actor's funeral on Friday.",
            "The service was held at Forest Lawn Memorial Park in Los Angeles near "
            "Warner Bros. Studios.,",
        ),
        "0.9",
    ),
    (
        "The promotional video was 60 minutes long.",
        (
            'Microsoft made a "cyber sitcom" to promote it.',
            "The final product [debuted on VHS on August 1, 1995]"
            "(https://books.google.com/books?id=0QsEAAAAMBAJ&lpg=RA1-PA62&dq=matthew"
            "%20perry%20jennifer%20aniston%20windows%2095&pg=RA1-PA62#v=onepage&q&f=false)"
            ", satisfying everybody who wished Friends were an hour long, had four "
            "fewer friends, and involved a guide to file management.",
        ),
        "1",
    ),
)


def _render_example(n: int, claim: str, sentences: tuple[str, ...], score: str) -> str:
    if sentences:
        listing = "[" + ",\n".join(json.dumps(s, ensure_ascii=False) for s in sentences) + "]"
    else:
        listing = "[]"
    # example 9 has no blank line before its score line
    sep = "\n" if n == 9 else "\n\n"
    claim_q = json.dumps(claim, ensure_ascii=False)
    return f"###Example {n}###\n\nClaim: {claim_q}\n\nSelected sentences: {listing}{sep}Score: {score}"


JUDGE_PROMPT_HEADER = """In this task, you will be shown a claim along with a list of sentences representing a document that might provide evidence for the claim. Given this information, you will perform two steps, described below.

For both steps, rely on the following two definitions of evidence:

Definition 1: “Supporting evidence”:

A set of sentences S provides supporting evidence for a claim c if, supposing the contents of S were true, it would give you greater reason to believe that c is true, all else equal.

Definition 2: “Refuting evidence”:

A set of sentences S provides refuting evidence for a claim c if, supposing the contents of S were true, it would give you greater reason to believe that c is false, all else equal.

Step 1:

Select 0, 1, 2, or *at maximum* 3 sentence(s) from the document that provide the strongest supporting evidence or refuting evidence for the claim. If no sentences in the document provide evidence, do not select any sentences.

Additional guidelines for Step 1:

(a) You may need to use logic and common sense to *infer* that a sentence provides evidence for the claim. For example, you can use common sense to assume that a person wearing reading glasses struggles with their sight.

(b) Do not assume any parts of the claim are common knowledge. You must find evidence for all parts of the claim. For example, if the claim states that Vidya, the English chef, has poor vision, you would need to find evidence that Vidya is English and a chef, as well.

(c) A sentence might provide evidence for the claim only when combined with other sentences. For example, if Sentence A states Bob is married to Mary, and Sentence B states that Mary is a doctor, Sentences A and B together provide supporting evidence for the claim that Bob has a doctor in his family.

(d) Please make sure the entities and events in your selected sentences match those in the claim. For example, dates and names, as determined by the rest of the document, should match the claim; else, the sentences do not provide evidence.

Step 2:

Given your selected set of sentences from Step 1, score the degree to which these sentences (taken together) support or refute the claim. Determine the score according to the following definition of a scale from -1 to 1:

-1: The claim is *fully refuted*: The claim would have to be false, supposing the sentences you selected were true.

Scores between -1 and 0 (-0.9, -0.8, -0.7, -0.6, -0.5, -0.4, -0.3, -0.2, -0.1): The claim is *partially refuted*. The claim would have to be false, but some parts are likely true.

0: The claim is neither supported nor refuted. It is equally likely to be true or false.

Scores between 0 and 1 (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9): The claim is *partially supported*. The claim is likely partially true, with missing evidence. No parts of the claim are likely to be false.

1: The claim is *fully supported*: The claim would have to be fully true, supposing the sentences you selected were true.

Additional guidelines for Step 2:

(a) Use only the content of your selected sentences to make your judgment. Do not use any knowledge you may already have about the claim, nor any context from other sentences in the document. For example, even if you know that London is in England, or it is stated elsewhere in the document, you cannot judge that detail of the claim as supported unless it is stated in your selected sentences.

(b) As in Part 1, do not assume any parts of the claim are common knowledge. Assign the score based on all parts of the claim, even if they seem obviously true or false.

(c) The document might only contain evidence for a similar but distinct claim. For example, if the strongest evidence states that the president ate at a restaurant on a Friday, this is not refuting evidence for the claim that the president ate at a restaurant on Tuesday; in fact, there is no evidence to support or refute the claim.

Below are 10 examples of scoring sentences that have already been selected from a document as supporting or refuting evidence for a claim:

""" + "\n\n".join(
    _render_example(i + 1, claim, sentences, score)
    for i, (claim, sentences, score) in enumerate(_JUDGE_EXAMPLES)
)

JUDGE_PROMPT_TASK = """Finally, here are the claim and list of document sentences for your task:

Claim: {claim}

Document sentences:

{document_block}

Write your response in a dictionary in the format shown below. Write the dictionary and nothing else.

Dictionary format:

{{"sentences": [

        "[<sentence number>] <sentence selected from document>",

        ...,

    ],

    "score": <number between -1 and 1>

}}

###Your Task###

Selected sentences and score in dictionary form:
"""


def build_judge_prompt(
    request: JudgeRequest, token_counter: TokenCounter = approx_token_count
) -> str:
    """Render the full annotation prompt for one (claim, document) pair.

    Document sentences are numbered "[n] text" in order. The token budget
    bounds the numbered document block: sentences past the budget are
    truncated from the end (a prefix is always kept, at least one sentence).
    """
    claim_text = request.claim.decontextualized
    if not claim_text.strip():
        raise ValueError(f"{request.claim.claim_id}: empty claim text")
    lines: list[str] = []
    used = 0
    for i, ref in enumerate(request.document_sentences, start=1):
        line = f"[{i}] {ref.text}"
        cost = token_counter(line)
        if lines and used + cost > request.token_budget:
            break
        lines.append(line)
        used += cost
    document_block = "\n".join(lines)
    return JUDGE_PROMPT_HEADER + "\n\n" + JUDGE_PROMPT_TASK.format(
        claim=claim_text, document_block=document_block
    )


# -- response parsing --


class JudgeResponseError(ValueError):
    """Base for judge response parsing failures."""


class MalformedResponse(JudgeResponseError):
    """No well-formed response dictionary (or no usable score) was found."""


class OutOfRangeScore(JudgeResponseError):
    """The response score falls outside [-1, 1]."""


class InvalidEvidence(JudgeResponseError):
    """A selected sentence is missing its [n] tag or indexes out of bounds."""


@dataclass
class ParsedJudgment:
    indices: list[int]  # 1-based document sentence numbers, deduplicated
    support: float
    warnings: list[str] = field(default_factory=list)


_SENTENCE_TAG = re.compile(r"^\s*\[(\d+)\]\s?(.*)$", re.DOTALL)


def _first_dict(text: str) -> dict[str, Any] | None:
    decoder = json.JSONDecoder()
    pos = text.find("{")
    while pos != -1:
        try:
            obj, _ = decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            pos = text.find("{", pos + 1)
            continue
        if isinstance(obj, dict):
            return obj
        pos = text.find("{", pos + 1)
    return None


def parse_judge_response(
    text: str, document_sentences: list[SentenceRef]
) -> ParsedJudgment:
    """Extract (evidence indices, support score) from a model response.

    The first well-formed JSON dictionary in the text is used. Each selected
    sentence must carry a leading "[n]" tag addressing a document sentence;
    the index is authoritative (paraphrased text after the tag only logs a
    warning). More than 3 selections are truncated to the first 3.
    """
    obj = _first_dict(text)
    if obj is None:
        raise MalformedResponse("no response dictionary found")
    if "score" not in obj:
        raise MalformedResponse("response dictionary has no 'score'")
    raw_score = obj["score"]
    if isinstance(raw_score, bool) or not isinstance(raw_score, (int, float, str)):
        raise MalformedResponse(f"unparseable score {raw_score!r}")
    try:
        support = float(raw_score)
    except ValueError:
        raise MalformedResponse(f"unparseable score {raw_score!r}") from None
    if not isfinite(support) or not -1.0 <= support <= 1.0:
        raise OutOfRangeScore(f"score {support} outside [-1, 1]")

    raw_sentences = obj.get("sentences")
    if raw_sentences is None:
        raise MalformedResponse("response dictionary has no 'sentences'")
    if not isinstance(raw_sentences, list):
        raise MalformedResponse("'sentences' is not a list")

    warnings: list[str] = []
    indices: list[int] = []
    for entry in raw_sentences:
        if not isinstance(entry, str):
            raise InvalidEvidence(f"non-string sentence entry {entry!r}")
        m = _SENTENCE_TAG.match(entry)
        if not m:
            raise InvalidEvidence(f"sentence entry without [n] tag: {entry!r}")
        n = int(m.group(1))
        if not 1 <= n <= len(document_sentences):
            raise InvalidEvidence(
                f"sentence index {n} out of bounds (document has "
                f"{len(document_sentences)} sentences)"
            )
        if n in indices:
            warnings.append(f"duplicate sentence index {n} ignored")
            continue
        if m.group(2).strip() != document_sentences[n - 1].text.strip():
            warnings.append(f"sentence text for [{n}] differs from the document")
        indices.append(n)
    if len(indices) > 3:
        warnings.append(f"{len(indices)} sentences selected; keeping the first 3")
        indices = indices[:3]
    return ParsedJudgment(indices=indices, support=support, warnings=warnings)


def render_judge_payload(
    indices: Iterable[int], support: float, document_sentences: list[SentenceRef]
) -> str:
    """Render the response dictionary a well-behaved model would emit."""
    sentences = [f"[{n}] {document_sentences[n - 1].text}" for n in indices]
    payload = {"sentences": sentences, "score": support}
    return json.dumps(payload, ensure_ascii=False)


# -- LLM clients --


class JudgeClient(Protocol):
    def complete(self, prompt: str) -> str:
        """Return the model's text response for one prompt."""
        ...


@dataclass
class FixedResponseClient:
    """Test client: always returns the same response text."""

    response: str = '{"sentences": [], "score": 0}'
    calls: int = 0

    def complete(self, prompt: str) -> str:
        self.calls += 1
        return self.response


_PROMPT_CLAIM = re.compile(
    r"Finally, here are the claim and list of document sentences for your task:"
    r"\n\nClaim: (.*?)\n\nDocument sentences:\n\n(.*?)\n\nWrite your response",
    re.DOTALL,
)
_DOC_LINE = re.compile(r"^\[(\d+)\] (.*)$")
_WORD = re.compile(r"[a-z0-9]+")


class OverlapJudgeClient:
    """Deterministic offline judge: lexical overlap between claim and sentences.

    Recovers the claim and the numbered document block from the rendered
    prompt, selects up to 3 sentences whose token overlap with the claim
    clears a floor, and scores the best overlap on the 0.1 grid. Useful for
    exercising the full pipeline without a hosted model.
    """

    def __init__(self, min_overlap: float = 0.2) -> None:
        self.min_overlap = min_overlap
        self.calls = 0

    def complete(self, prompt: str) -> str:
        self.calls += 1
        m = _PROMPT_CLAIM.search(prompt)
        if m is None:
            return '{"sentences": [], "score": 0}'
        claim, block = m.group(1), m.group(2)
        claim_tokens = set(_WORD.findall(claim.lower()))
        scored: list[tuple[float, int, str]] = []
        for line in block.split("\n"):
            dm = _DOC_LINE.match(line)
            if not dm or not claim_tokens:
                continue
            tokens = set(_WORD.findall(dm.group(2).lower()))
            overlap = len(claim_tokens & tokens) / len(claim_tokens)
            if overlap >= self.min_overlap:
                scored.append((overlap, int(dm.group(1)), line))
        scored.sort(key=lambda t: (-t[0], t[1]))
        picked = sorted(scored[:3], key=lambda t: t[1])
        if not picked:
            return '{"sentences": [], "score": 0}'
        best = max(t[0] for t in picked)
        score = min(1.0, round(best, 1))
        return json.dumps(
            {"sentences": [line for _, _, line in picked], "score": score},
            ensure_ascii=False,
        )


API_KEY_ENV = "GROUNDCHECK_API_KEY"


@dataclass
class HttpJudgeClient:
    """Chat-completion HTTP client (temperature 0, capped output tokens)."""

    endpoint: str
    model: str
    api_key: str | None = None
    timeout: float = 300.0
    max_output_tokens: int = JUDGE_MAX_OUTPUT_TOKENS

    def complete(self, prompt: str) -> str:
        import httpx

        key = self.api_key if self.api_key is not None else os.environ.get(API_KEY_ENV)
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.model,
            "temperature": 0,
            "max_tokens": self.max_output_tokens,
            "messages": [{"role": "user", "content": prompt}],
        }
        resp = httpx.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]


@dataclass
class RetryingClient:
    """Wrap a client with bounded retries and exponential backoff."""

    inner: JudgeClient
    attempts: int = 3
    backoff: float = 1.0
    sleep: Callable[[float], None] = time.sleep

    def complete(self, prompt: str) -> str:
        delay = self.backoff
        for attempt in range(1, self.attempts + 1):
            try:
                return self.inner.complete(prompt)
            except Exception:
                if attempt == self.attempts:
                    raise
                self.sleep(delay)
                delay *= 2
        raise AssertionError("unreachable")


# -- annotation store and bulk run --


@dataclass
class JudgeDocument:
    """One document a claim is judged against."""

    judged_against: str  # body | source
    owner_id: str
    sentences: list[SentenceRef]


Resolver = Callable[[Subclaim], list[JudgeDocument]]


def corpus_resolver(store: CorpusStore) -> Resolver:
    """Default resolution: lead claims against the article body, body claims
    against each cited accessible source."""

    def resolve(claim: Subclaim) -> list[JudgeDocument]:
        if claim.scope == "lead":
            article = store.article_by_id[claim.parent.owner_id]
            body = article.body_refs()
            return [JudgeDocument(BODY, article.entity_id, body)] if body else []
        article = store.article_by_id[claim.parent.owner_id]
        cited = article.citations.get(claim.parent, set())
        docs = []
        for sid in sorted(cited):
            source = store.source_by_id.get(sid)
            if source is not None and source.accessible and source.sentences:
                docs.append(JudgeDocument(SOURCE, sid, source.refs()))
        return docs

    return resolve


class AnnotationStore:
    """Append-only annotations.jsonl keyed by (claim, document, annotator).

    Appends are validated, idempotent (an existing key is skipped), and
    serialized through a lock so concurrent annotators cannot interleave
    partial lines.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._records: list[EvidenceAnnotation] = []
        self._keys: set[tuple[str, str, str]] = set()
        if self.path.exists():
            for d in read_jsonl(self.path):
                ann = EvidenceAnnotation.from_dict(d)
                self._records.append(ann)
                self._keys.add(ann.key)

    def __contains__(self, key: tuple[str, str, str]) -> bool:
        with self._lock:
            return key in self._keys

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def annotations(self) -> list[EvidenceAnnotation]:
        with self._lock:
            return list(self._records)

    def append(self, ann: EvidenceAnnotation) -> bool:
        """Validate and store; returns False when the key already exists."""
        ann.validate()
        with self._lock:
            if ann.key in self._keys:
                return False
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as f:
                f.write(json.dumps(ann.to_dict(), ensure_ascii=False) + "\n")
            self._records.append(ann)
            self._keys.add(ann.key)
            return True


@dataclass
class AnnotationFailure:
    claim_id: str
    owner_id: str
    reason: str

    def to_dict(self) -> dict[str, str]:
        return {"claim_id": self.claim_id, "owner_id": self.owner_id, "reason": self.reason}


@dataclass
class AnnotateReport:
    requested: int
    written: int
    skipped: int
    failures: list[AnnotationFailure] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def annotate_corpus(
    claims: list[Subclaim],
    resolver: Resolver,
    client: JudgeClient,
    parallelism: int = 4,
    store: AnnotationStore | None = None,
    annotator_id: str = "model",
    token_budget: int = DEFAULT_TOKEN_BUDGET,
    token_counter: TokenCounter = approx_token_count,
) -> AnnotateReport:
    """Judge every (claim, document) pair and persist the annotations.

    One annotation per (lead claim, article body) and per (body claim,
    cited accessible source). Already-stored pairs are skipped without a
    client call. Client calls run with bounded parallelism; results are
    committed in canonical claim order regardless of completion order, so a
    deterministic client yields a byte-identical store across runs.
    Failures are recorded and the run continues; rerunning retries them.
    """
    if store is None:
        raise ValueError("an AnnotationStore is required")
    jobs: list[tuple[Subclaim, JudgeDocument]] = []
    skipped = 0
    for claim in claims:
        for doc in resolver(claim):
            if (claim.claim_id, doc.owner_id, annotator_id) in store:
                skipped += 1
            else:
                jobs.append((claim, doc))

    def run_one(claim: Subclaim, doc: JudgeDocument):
        request = JudgeRequest(
            claim=claim, document_sentences=doc.sentences, token_budget=token_budget
        )
        prompt = build_judge_prompt(request, token_counter)
        try:
            response = client.complete(prompt)
            parsed = parse_judge_response(response, doc.sentences)
        except Exception as e:  # transport or parse failure: record, keep going
            return AnnotationFailure(claim.claim_id, doc.owner_id, f"{type(e).__name__}: {e}")
        ann = EvidenceAnnotation(
            claim_id=claim.claim_id,
            evidence=[doc.sentences[n - 1] for n in parsed.indices],
            support=parsed.support,
            annotator_kind="model",
            annotator_id=annotator_id,
            judged_against=doc.judged_against,
            owner_id=doc.owner_id,
        )
        try:
            ann.validate()
        except AnnotationError as e:
            return AnnotationFailure(claim.claim_id, doc.owner_id, str(e))
        return ann, parsed.warnings

    report = AnnotateReport(requested=len(jobs), written=0, skipped=skipped)
    results: dict[int, Any] = {}
    next_flush = 0

    def flush() -> None:
        nonlocal next_flush
        while next_flush in results:
            outcome = results.pop(next_flush)
            next_flush += 1
            if isinstance(outcome, AnnotationFailure):
                report.failures.append(outcome)
            else:
                ann, warns = outcome
                if store.append(ann):
                    report.written += 1
                else:
                    report.skipped += 1
                for w in warns:
                    report.warnings.append(f"{ann.claim_id} x {ann.owner_id}: {w}")

    if parallelism <= 1:
        for idx, (claim, doc) in enumerate(jobs):
            results[idx] = run_one(claim, doc)
            flush()
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as ex:
            futures = {
                ex.submit(run_one, claim, doc): idx
                for idx, (claim, doc) in enumerate(jobs)
            }
            for fut in as_completed(futures):
                results[futures[fut]] = fut.result()
                flush()
    flush()
    return report
