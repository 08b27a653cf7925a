"""Shared data model: sentence references, articles, sources, claims, annotations.

Every type here round-trips through plain dicts (``to_dict`` / ``from_dict``)
so the whole pipeline can persist as JSONL. Sentence references have a stable
string form (``ref_id``) used as document ids in TREC files and as keys in
stores; entity and source ids are restricted to a conservative charset so
those composite ids stay injective and whitespace-free.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

LEAD = "lead"
BODY = "body"
SOURCE = "source"
SCOPES = (LEAD, BODY, SOURCE)

ANNOTATION_FLAGS = ("bad_source", "bad_decontextualization", "uncertain")

# ids appear whitespace-delimited in TREC files and ':'/'#'-joined in ref ids
ID_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


class SchemaError(ValueError):
    """Raised when a record violates the corpus schema."""


def check_id(kind: str, value: str) -> str:
    if not isinstance(value, str) or not ID_RE.match(value):
        raise SchemaError(
            f"{kind} {value!r} must match [A-Za-z0-9_.-]+ "
            "(ids are embedded in whitespace-delimited run files)"
        )
    return value


@dataclass(frozen=True, order=True)
class SentenceRef:
    """Corpus-wide address of one sentence.

    ``scope`` is one of lead/body/source; ``owner_id`` is the entity id for
    lead/body sentences and the source id for source sentences; ``section``
    is used only for body sentences.
    """

    scope: str
    owner_id: str
    section: int | None
    sentence: int
    text: str = field(compare=False)

    def __post_init__(self) -> None:
        if self.scope not in SCOPES:
            raise SchemaError(f"unknown scope {self.scope!r}")
        if (self.scope == BODY) != (self.section is not None):
            raise SchemaError("section index is required for body refs and only for them")

    @property
    def ref_id(self) -> str:
        if self.scope == BODY:
            return f"{BODY}:{self.owner_id}:{self.section}:{self.sentence}"
        return f"{self.scope}:{self.owner_id}:{self.sentence}"

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"scope": self.scope, "owner_id": self.owner_id}
        if self.scope == BODY:
            d["section"] = self.section
        d["sentence"] = self.sentence
        d["text"] = self.text
        return d

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "SentenceRef":
        return SentenceRef(
            scope=d["scope"],
            owner_id=d["owner_id"],
            section=d.get("section"),
            sentence=int(d["sentence"]),
            text=d.get("text", ""),
        )

    @staticmethod
    def from_ref_id(ref_id: str, text: str = "") -> "SentenceRef":
        parts = ref_id.split(":")
        if parts[0] == BODY:
            if len(parts) != 4:
                raise SchemaError(f"malformed body ref id {ref_id!r}")
            return SentenceRef(BODY, parts[1], int(parts[2]), int(parts[3]), text)
        if parts[0] in (LEAD, SOURCE) and len(parts) == 3:
            return SentenceRef(parts[0], parts[1], None, int(parts[2]), text)
        raise SchemaError(f"malformed ref id {ref_id!r}")


@dataclass
class SourceDocument:
    source_id: str
    url: str
    raw_text: str
    sentences: list[str]
    quality_score: float | None = None
    accessible: bool = True

    def refs(self) -> list[SentenceRef]:
        return [
            SentenceRef(SOURCE, self.source_id, None, i, s)
            for i, s in enumerate(self.sentences)
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "source_id": self.source_id,
            "url": self.url,
            "raw_text": self.raw_text,
            "sentences": list(self.sentences),
            "quality_score": self.quality_score,
            "accessible": self.accessible,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "SourceDocument":
        return SourceDocument(
            source_id=d["source_id"],
            url=d.get("url", ""),
            raw_text=d.get("raw_text", ""),
            sentences=list(d.get("sentences", [])),
            quality_score=d.get("quality_score"),
            accessible=bool(d.get("accessible", True)),
        )


@dataclass
class ArticleRecord:
    """One article: lead sentences, body sections, and its citation map.

    ``citations`` maps a body SentenceRef to the set of source ids cited on
    that sentence. Lead and body refs are disjoint by construction (distinct
    scopes).
    """

    entity_id: str
    entity_name: str
    lead: list[SentenceRef]
    body_sections: list[tuple[str, list[SentenceRef]]]
    citations: dict[SentenceRef, set[str]]

    def body_refs(self) -> list[SentenceRef]:
        return [ref for _, sentences in self.body_sections for ref in sentences]

    def to_dict(self) -> dict[str, Any]:
        return {
            "entity_id": self.entity_id,
            "entity_name": self.entity_name,
            "lead": [r.text for r in self.lead],
            "body": [
                {"heading": heading, "sentences": [r.text for r in sentences]}
                for heading, sentences in self.body_sections
            ],
            "citations": [
                {
                    "section": ref.section,
                    "sentence": ref.sentence,
                    "sources": sorted(sources),
                }
                for ref, sources in sorted(
                    self.citations.items(), key=lambda kv: (kv[0].section, kv[0].sentence)
                )
            ],
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "ArticleRecord":
        entity_id = check_id("entity_id", d["entity_id"])
        lead = [
            SentenceRef(LEAD, entity_id, None, i, s)
            for i, s in enumerate(d.get("lead", []))
        ]
        body_sections: list[tuple[str, list[SentenceRef]]] = []
        for si, section in enumerate(d.get("body", [])):
            refs = [
                SentenceRef(BODY, entity_id, si, i, s)
                for i, s in enumerate(section.get("sentences", []))
            ]
            body_sections.append((section.get("heading", ""), refs))
        citations: dict[SentenceRef, set[str]] = {}
        for c in d.get("citations", []):
            si, sj = int(c["section"]), int(c["sentence"])
            try:
                ref = body_sections[si][1][sj]
            except IndexError:
                raise SchemaError(
                    f"citation ({si}, {sj}) in {entity_id} does not address a body sentence"
                ) from None
            citations.setdefault(ref, set()).update(c.get("sources", []))
        return ArticleRecord(
            entity_id=entity_id,
            entity_name=d.get("entity_name", entity_id),
            lead=lead,
            body_sections=body_sections,
            citations=citations,
        )


@dataclass(frozen=True)
class SplitAssignment:
    entity_id: str
    split: str  # train | dev | test

    def to_dict(self) -> dict[str, Any]:
        return {"entity_id": self.entity_id, "split": self.split}


def claim_id_for(parent: SentenceRef, ordinal: int) -> str:
    """Injective claim id: parent ref id plus decomposition ordinal."""
    return f"{parent.ref_id}#{ordinal}"


def parent_ref_of(claim_id: str, text: str = "") -> SentenceRef:
    """Recover sent(C): the parent sentence ref encoded in a claim id."""
    ref_part, _, ordinal = claim_id.rpartition("#")
    if not ref_part or not ordinal.isdigit():
        raise SchemaError(f"malformed claim id {claim_id!r}")
    return SentenceRef.from_ref_id(ref_part, text)


@dataclass
class Subclaim:
    claim_id: str
    parent: SentenceRef
    scope: str  # lead | body
    contextualized: str
    decontextualized: str
    ordinal: int

    def __post_init__(self) -> None:
        if self.scope not in (LEAD, BODY):
            raise SchemaError(f"subclaim scope must be lead or body, got {self.scope!r}")
        if not self.contextualized or not self.decontextualized:
            raise SchemaError(f"subclaim {self.claim_id} has an empty text variant")

    def to_dict(self) -> dict[str, Any]:
        return {
            "claim_id": self.claim_id,
            "parent": self.parent.to_dict(),
            "scope": self.scope,
            "contextualized": self.contextualized,
            "decontextualized": self.decontextualized,
            "ordinal": self.ordinal,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "Subclaim":
        return Subclaim(
            claim_id=d["claim_id"],
            parent=SentenceRef.from_dict(d["parent"]),
            scope=d["scope"],
            contextualized=d["contextualized"],
            decontextualized=d["decontextualized"],
            ordinal=int(d["ordinal"]),
        )


@dataclass
class DecompositionResult:
    parent: SentenceRef
    contextualized: list[str]
    decontextualized: list[str]

    def __post_init__(self) -> None:
        if len(self.contextualized) != len(self.decontextualized) or not self.contextualized:
            raise SchemaError(
                "decomposition must return paired, non-empty subclaim lists "
                f"(got {len(self.contextualized)} / {len(self.decontextualized)})"
            )


@dataclass(frozen=True)
class EditSpan:
    kind: str  # kept | added | removed
    text: str

    def to_dict(self) -> dict[str, str]:
        return {"kind": self.kind, "text": self.text}


@dataclass
class EditDiff:
    """Token-level diff between the contextualized and decontextualized texts.

    Invariant: concatenating kept+removed spans reproduces the contextualized
    text, kept+added the decontextualized text.
    """

    spans: list[EditSpan]

    def contextualized_text(self) -> str:
        return "".join(s.text for s in self.spans if s.kind in ("kept", "removed"))

    def decontextualized_text(self) -> str:
        return "".join(s.text for s in self.spans if s.kind in ("kept", "added"))

    def to_dict(self) -> dict[str, Any]:
        return {"spans": [s.to_dict() for s in self.spans]}


class AnnotationError(ValueError):
    """Raised when an annotation violates its invariants."""


@dataclass
class EvidenceAnnotation:
    """One support judgment for one claim against one document."""

    claim_id: str
    evidence: list[SentenceRef]  # kept sorted; semantically a set, size 0-3
    support: float
    flags: set[str] = field(default_factory=set)
    annotator_kind: str = "model"  # model | human
    annotator_id: str = "model"
    judged_against: str = BODY  # body | source
    owner_id: str = ""  # entity id (body) or source id (source)

    def validate(self) -> None:
        if len({r.ref_id for r in self.evidence}) != len(self.evidence):
            raise AnnotationError(f"{self.claim_id}: duplicate evidence refs")
        if len(self.evidence) > 3:
            raise AnnotationError(f"{self.claim_id}: evidence set larger than 3")
        if not -1.0 <= self.support <= 1.0:
            raise AnnotationError(f"{self.claim_id}: support {self.support} outside [-1, 1]")
        if self.judged_against not in (BODY, SOURCE):
            raise AnnotationError(f"{self.claim_id}: judged_against {self.judged_against!r}")
        if self.annotator_kind not in ("model", "human"):
            raise AnnotationError(f"{self.claim_id}: annotator kind {self.annotator_kind!r}")
        if not set(self.flags) <= set(ANNOTATION_FLAGS):
            raise AnnotationError(f"{self.claim_id}: unknown flags {self.flags}")
        for ref in self.evidence:
            ok = (
                ref.scope == BODY and self.judged_against == BODY
                or ref.scope == SOURCE and self.judged_against == SOURCE
            ) and ref.owner_id == self.owner_id
            if not ok:
                raise AnnotationError(
                    f"{self.claim_id}: evidence {ref.ref_id} is not in the judged "
                    f"document ({self.judged_against}:{self.owner_id})"
                )

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.claim_id, self.owner_id, self.annotator_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "claim_id": self.claim_id,
            "judged_against": self.judged_against,
            "owner_id": self.owner_id,
            "evidence": [r.to_dict() for r in sorted(self.evidence)],
            "support": self.support,
            "flags": sorted(self.flags),
            "annotator_kind": self.annotator_kind,
            "annotator_id": self.annotator_id,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "EvidenceAnnotation":
        return EvidenceAnnotation(
            claim_id=d["claim_id"],
            evidence=[SentenceRef.from_dict(r) for r in d.get("evidence", [])],
            support=float(d["support"]),
            flags=set(d.get("flags", [])),
            annotator_kind=d.get("annotator_kind", "model"),
            annotator_id=d.get("annotator_id", "model"),
            judged_against=d.get("judged_against", BODY),
            owner_id=d.get("owner_id", ""),
        )


@dataclass
class JudgeRequest:
    claim: Subclaim
    document_sentences: list[SentenceRef]
    token_budget: int = 126_000

    def __post_init__(self) -> None:
        if not self.document_sentences:
            raise SchemaError("judge request needs a non-empty document")


# -- JSONL helpers --


def write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def read_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)
