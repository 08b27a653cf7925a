"""Subclaim production: target enumeration, pluggable decomposition, edit diffs.

Decomposition itself is delegated to an adapter satisfying the
``Decomposer`` contract (sentence + context -> paired contextualized /
decontextualized lists). Shipped adapters: a deterministic identity mock, an
HTTP adapter for chat-completion endpoints, and a transcript-replay adapter
for fixtures. Results are cached by (sentence text, context) so reruns are
free.
"""
from __future__ import annotations

import difflib
import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol

from .model import (
    BODY,
    LEAD,
    ArticleRecord,
    DecompositionResult,
    EditDiff,
    EditSpan,
    SchemaError,
    SentenceRef,
    SourceDocument,
    Subclaim,
    claim_id_for,
    read_jsonl,
    write_jsonl,
)


class DecompositionError(RuntimeError):
    """Adapter returned an unusable decomposition for one sentence."""


class Decomposer(Protocol):
    def __call__(self, sentence: str, context: str) -> tuple[list[str], list[str]]:
        """Return paired (contextualized, decontextualized) subclaim lists."""
        ...


def identity_decomposer(sentence: str, context: str) -> tuple[list[str], list[str]]:
    """Mock adapter: every sentence is its own single subclaim."""
    return [sentence], [sentence]


@dataclass
class HttpDecomposer:
    """Chat-completion adapter. The endpoint must return a JSON object
    {"contextualized": [...], "decontextualized": [...]} in the message body.
    """

    endpoint: str
    model: str
    api_key: str | None = None
    timeout: float = 120.0

    def __call__(self, sentence: str, context: str) -> tuple[list[str], list[str]]:
        import httpx

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        prompt = (
            "Decompose the sentence below into atomic subclaims. Return a JSON "
            'object {"contextualized": [...], "decontextualized": [...]} with '
            "paired lists of equal length: each contextualized subclaim as it "
            "reads in place, and its decontextualized rewrite that stands "
            "alone (pronouns and elided context resolved).\n\n"
            f"Context:\n{context}\n\nSentence:\n{sentence}\n"
        )
        payload = {
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        }
        resp = httpx.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
        resp.raise_for_status()
        content = resp.json()["choices"][0]["message"]["content"]
        try:
            obj = json.loads(content)
            return list(obj["contextualized"]), list(obj["decontextualized"])
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise DecompositionError(f"unparseable decomposer reply: {e}") from None


@dataclass
class TranscriptDecomposer:
    """Replay adapter: serves recorded (sentence, context) -> lists exchanges."""

    transcript: dict[tuple[str, str], tuple[list[str], list[str]]]

    @staticmethod
    def from_jsonl(path: str | Path) -> "TranscriptDecomposer":
        transcript: dict[tuple[str, str], tuple[list[str], list[str]]] = {}
        for d in read_jsonl(path):
            transcript[(d["sentence"], d["context"])] = (
                list(d["contextualized"]),
                list(d["decontextualized"]),
            )
        return TranscriptDecomposer(transcript)

    def __call__(self, sentence: str, context: str) -> tuple[list[str], list[str]]:
        try:
            return self.transcript[(sentence, context)]
        except KeyError:
            raise DecompositionError(
                f"no recorded exchange for sentence {sentence!r}"
            ) from None


def enumerate_targets(
    article: ArticleRecord, sources: dict[str, SourceDocument]
) -> list[tuple[SentenceRef, str]]:
    """List sentences requiring decomposition, each with its context string.

    Lead sentences always qualify (context: the whole lead). Body sentences
    qualify when they carry >=1 citation to an accessible source (context:
    lead + the sentence's section).
    """
    lead_text = " ".join(r.text for r in article.lead)
    targets: list[tuple[SentenceRef, str]] = [(r, lead_text) for r in article.lead]
    for heading, section_refs in article.body_sections:
        section_text = " ".join(r.text for r in section_refs)
        context = f"{lead_text}\n\n{heading}\n{section_text}" if lead_text else (
            f"{heading}\n{section_text}"
        )
        for ref in section_refs:
            cited = article.citations.get(ref, set())
            if any(sid in sources and sources[sid].accessible for sid in cited):
                targets.append((ref, context))
    return targets


class DecompositionCache:
    """Thread-safe (sentence, context) -> DecompositionResult lists cache.

    Concurrent writers may race on the same key; since adapters are
    deterministic the values are identical, and last-write-wins keeps the
    dict consistent either way. Optionally file-backed (JSONL, append-only).
    """

    def __init__(self, path: str | Path | None = None, persist: bool = True) -> None:
        self._lock = threading.Lock()
        self._data: dict[tuple[str, str], tuple[list[str], list[str]]] = {}
        self._path = Path(path) if (path is not None and persist) else None
        if path is not None and Path(path).exists():
            for d in read_jsonl(path):
                self._data[(d["sentence"], d["context"])] = (
                    list(d["contextualized"]),
                    list(d["decontextualized"]),
                )

    def get(self, sentence: str, context: str) -> tuple[list[str], list[str]] | None:
        with self._lock:
            return self._data.get((sentence, context))

    def put(
        self, sentence: str, context: str, value: tuple[list[str], list[str]]
    ) -> None:
        with self._lock:
            self._data[(sentence, context)] = value
            if self._path is not None:
                record = {
                    "sentence": sentence,
                    "context": context,
                    "contextualized": value[0],
                    "decontextualized": value[1],
                }
                with self._path.open("a", encoding="utf-8") as f:
                    f.write(json.dumps(record, ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)

    def items(self) -> list[tuple[str, str, list[str], list[str]]]:
        """Cache contents in canonical (sentence, context) order."""
        with self._lock:
            return [
                (s, c, list(v[0]), list(v[1]))
                for (s, c), v in sorted(self._data.items())
            ]

    def dump(self, path: str | Path) -> None:
        """Write the cache as sorted JSONL (deterministic regardless of the
        order entries were added)."""
        write_jsonl(
            path,
            (
                {
                    "sentence": s,
                    "context": c,
                    "contextualized": ctx,
                    "decontextualized": dectx,
                }
                for s, c, ctx, dectx in self.items()
            ),
        )


def decompose_sentence(
    target: SentenceRef,
    context: str,
    decomposer: Decomposer,
    cache: DecompositionCache | None = None,
) -> DecompositionResult:
    """Decompose one sentence via the adapter, consulting the cache first."""
    cached = cache.get(target.text, context) if cache is not None else None
    if cached is not None:
        ctx, dectx = cached
    else:
        ctx, dectx = decomposer(target.text, context)
        if not ctx or len(ctx) != len(dectx):
            raise DecompositionError(
                f"{target.ref_id}: adapter returned unpaired lists "
                f"({len(ctx)} contextualized / {len(dectx)} decontextualized)"
            )
        if cache is not None:
            cache.put(target.text, context, (list(ctx), list(dectx)))
    return DecompositionResult(
        parent=target, contextualized=list(ctx), decontextualized=list(dectx)
    )


def subclaims_of(result: DecompositionResult) -> list[Subclaim]:
    parent = result.parent
    scope = LEAD if parent.scope == LEAD else BODY
    return [
        Subclaim(
            claim_id=claim_id_for(parent, i),
            parent=parent,
            scope=scope,
            contextualized=c,
            decontextualized=d,
            ordinal=i,
        )
        for i, (c, d) in enumerate(zip(result.contextualized, result.decontextualized))
    ]


def decompose_article(
    article: ArticleRecord,
    sources: dict[str, SourceDocument],
    decomposer: Decomposer,
    cache: DecompositionCache | None = None,
    on_error: Callable[[SentenceRef, Exception], None] | None = None,
) -> list[Subclaim]:
    """Decompose every target sentence of one article into subclaims.

    Adapter failures are reported through ``on_error`` and skipped; the rest
    of the article still decomposes.
    """
    claims: list[Subclaim] = []
    for target, context in enumerate_targets(article, sources):
        try:
            result = decompose_sentence(target, context, decomposer, cache)
        except DecompositionError as e:
            if on_error is not None:
                on_error(target, e)
                continue
            raise
        claims.extend(subclaims_of(result))
    return claims


# -- edit diff (D toggle) --

_DIFF_TOKEN = re.compile(r"\s+|\S+")


def diff_decontextualization(contextualized: str, decontextualized: str) -> EditDiff:
    """Token-level diff between the two claim variants.

    Tokens are maximal whitespace / non-whitespace runs, so concatenating
    kept+removed spans reproduces the contextualized text exactly and
    kept+added the decontextualized text.
    """
    a = _DIFF_TOKEN.findall(contextualized)
    b = _DIFF_TOKEN.findall(decontextualized)
    spans: list[EditSpan] = []

    def push(kind: str, text: str) -> None:
        if not text:
            return
        if spans and spans[-1].kind == kind:
            spans[-1] = EditSpan(kind, spans[-1].text + text)
        else:
            spans.append(EditSpan(kind, text))

    matcher = difflib.SequenceMatcher(a=a, b=b, autojunk=False)
    for op, a0, a1, b0, b1 in matcher.get_opcodes():
        if op == "equal":
            push("kept", "".join(a[a0:a1]))
        elif op == "delete":
            push("removed", "".join(a[a0:a1]))
        elif op == "insert":
            push("added", "".join(b[b0:b1]))
        else:  # replace
            push("removed", "".join(a[a0:a1]))
            push("added", "".join(b[b0:b1]))
    return EditDiff(spans=spans)


# -- claims store --


def write_claims(path: str | Path, claims: Iterable[Subclaim]) -> None:
    write_jsonl(path, (c.to_dict() for c in claims))


def read_claims(path: str | Path) -> list[Subclaim]:
    return [Subclaim.from_dict(d) for d in read_jsonl(path)]
