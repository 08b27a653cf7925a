"""Corpus ingestion: JSONL parsing, sentence segmentation, quality filtering, splits.

The input format is UTF-8 JSONL, one article per line:

    {"entity_id": ..., "entity_name": ..., "lead": [str],
     "body": [{"heading": str, "sentences": [str]}],
     "citations": [{"section": int, "sentence": int, "sources": [source_id]}],
     "sources": [{"source_id": ..., "url": ..., "text": ...}]}

Sources may arrive pre-segmented (a "sentences" array instead of / alongside
"text"); provided boundaries are trusted. The canonical on-disk store is a
directory of articles.jsonl / sources.jsonl / splits.jsonl.
"""
from __future__ import annotations

import json
import random
import re
import warnings as _warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

from .model import (
    ArticleRecord,
    SchemaError,
    SourceDocument,
    SplitAssignment,
    check_id,
    read_jsonl,
    write_jsonl,
)

# -- sentence segmentation --

# tokens (lowercased, trailing dot stripped) that do not end a sentence
_ABBREVIATIONS = {
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "ft",
    "gen", "rep", "sen", "gov", "lt", "col", "capt", "sgt", "maj", "rev", "hon",
    "vs", "etc", "cf", "al", "approx", "no", "nos", "vol", "fig", "figs",
    "inc", "ltd", "co", "corp", "dept", "univ", "est",
    "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
    "e.g", "i.e", "u.s", "u.k", "u.n", "d.c", "a.m", "p.m", "b.c", "a.d",
    "ph.d", "b.a", "m.a", "m.sc", "b.sc", "m.d", "j.d", "d.phil",
}

_TERMINATORS = ".!?"
_CLOSERS = "\"'”’)]"
_OPENERS = "\"'“‘(["

_token_before = re.compile(r"([A-Za-z][A-Za-z.]*)$")


def _is_abbreviation(text: str, dot: int) -> bool:
    m = _token_before.search(text, 0, dot)
    if not m:
        return False
    token = m.group(1).rstrip(".").lower()
    if not token:
        return False
    # single-letter initials ("J. K. Rowling") never end a sentence
    if len(token) == 1:
        return True
    return token in _ABBREVIATIONS


def _opens_sentence(ch: str) -> bool:
    return ch.isupper() or ch.isdigit() or ch in _OPENERS


def segment_sentences(text: str) -> list[str]:
    """Split text into sentences with a rule-based boundary detector.

    A boundary is a run of terminators (plus closing quotes/brackets)
    followed by whitespace and a plausible sentence opener, unless the word
    before the terminator is a known abbreviation or a single initial.
    Deterministic; never drops non-whitespace content; idempotent on its own
    output (each produced sentence re-segments to itself).
    """
    if not text or not text.strip():
        return []
    sentences: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch not in _TERMINATORS:
            i += 1
            continue
        j = i + 1
        while j < n and text[j] in _TERMINATORS + _CLOSERS:
            j += 1
        if j < n and text[j].isspace():
            k = j
            while k < n and text[k].isspace():
                k += 1
            if k < n and _opens_sentence(text[k]) and not (ch == "." and _is_abbreviation(text, i)):
                piece = text[start:j].strip()
                if piece:
                    sentences.append(piece)
                start = k
                i = k
                continue
        i = j
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


# -- source quality heuristic --

# substrings that mark scrape failures / error pages, matched in the first
# 300 lowercased characters
ERROR_MARKERS = (
    "404", "403 forbidden", "page not found", "not found", "access denied",
    "forbidden", "an error occurred", "enable javascript",
    "javascript is required", "enable cookies", "captcha",
    "are you a robot", "sign in to continue", "subscribe to continue",
)

_TEXTY = set(".,;:!?'\"()-–—%$&/")

DEFAULT_QUALITY_THRESHOLD = 0.5

# component weights: sentence-count floor, error-marker absence, charset ratio
_W_LENGTH, _W_ERROR, _W_CHARSET = 0.4, 0.4, 0.2
_LENGTH_FLOOR = 5


def heuristic_quality_score(source: SourceDocument) -> float:
    """Score a source in [0,1]: longer, marker-free, mostly-text pages score high."""
    length = min(1.0, len(source.sentences) / _LENGTH_FLOOR)
    head = source.raw_text[:300].lower()
    error_free = 0.0 if any(m in head for m in ERROR_MARKERS) else 1.0
    text = source.raw_text
    if text:
        texty = sum(1 for c in text if c.isalnum() or c.isspace() or c in _TEXTY)
        charset = texty / len(text)
    else:
        charset = 0.0
    return _W_LENGTH * length + _W_ERROR * error_free + _W_CHARSET * charset


QualityScorer = Callable[[SourceDocument], float]


def filter_sources(
    sources: list[SourceDocument], threshold: float
) -> tuple[list[SourceDocument], list[SourceDocument]]:
    """Partition sources into (kept, dropped) by quality_score >= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"quality threshold {threshold} outside [0, 1]")
    kept: list[SourceDocument] = []
    dropped: list[SourceDocument] = []
    for s in sources:
        if s.quality_score is None:
            raise ValueError(f"source {s.source_id} has no quality_score")
        (kept if s.quality_score >= threshold else dropped).append(s)
    return kept, dropped


# -- corpus parsing --


@dataclass
class ParseResult:
    articles: list[ArticleRecord]
    sources: list[SourceDocument]
    warnings: list[str] = field(default_factory=list)


def _parse_source(d: dict[str, Any], line_no: int) -> SourceDocument:
    if "source_id" not in d:
        raise SchemaError(f"line {line_no}: source missing field 'source_id'")
    source_id = check_id("source_id", d["source_id"])
    raw_text = d.get("text", "")
    sentences = list(d["sentences"]) if "sentences" in d else segment_sentences(raw_text)
    if not raw_text:
        raw_text = " ".join(sentences)
    return SourceDocument(
        source_id=source_id,
        url=d.get("url", ""),
        raw_text=raw_text,
        sentences=sentences,
    )


def parse_corpus(
    path: str | Path,
    schema: str = "v1",
    scorer: QualityScorer = heuristic_quality_score,
) -> ParseResult:
    """Parse a JSONL corpus file into articles and quality-scored sources.

    Citations to unknown source ids are removed and reported in
    ``result.warnings`` (never silently dropped). Malformed lines and
    duplicate ids raise SchemaError naming the line.
    """
    if schema != "v1":
        raise SchemaError(f"unknown corpus schema version {schema!r}")
    path = Path(path)
    raw_lines: list[tuple[int, dict[str, Any]]] = []
    with path.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"line {line_no}: invalid JSON ({e})") from None
            if not isinstance(d, dict):
                raise SchemaError(f"line {line_no}: article record must be an object")
            raw_lines.append((line_no, d))

    # pass 1: collect sources so citations can resolve across lines
    sources: list[SourceDocument] = []
    by_id: dict[str, SourceDocument] = {}
    for line_no, d in raw_lines:
        for sd in d.get("sources", []):
            src = _parse_source(sd, line_no)
            prior = by_id.get(src.source_id)
            if prior is not None:
                if prior.raw_text != src.raw_text:
                    raise SchemaError(
                        f"line {line_no}: duplicate source_id {src.source_id!r} "
                        "with conflicting text"
                    )
                continue
            src.quality_score = scorer(src)
            by_id[src.source_id] = src
            sources.append(src)

    # pass 2: articles, with citation resolution
    articles: list[ArticleRecord] = []
    seen_entities: set[str] = set()
    warnings: list[str] = []
    for line_no, d in raw_lines:
        if "entity_id" not in d:
            raise SchemaError(f"line {line_no}: missing field 'entity_id'")
        try:
            article = ArticleRecord.from_dict(d)
        except SchemaError as e:
            raise SchemaError(f"line {line_no}: {e}") from None
        if article.entity_id in seen_entities:
            raise SchemaError(f"line {line_no}: duplicate entity_id {article.entity_id!r}")
        seen_entities.add(article.entity_id)
        for ref in list(article.citations):
            cited = article.citations[ref]
            unknown = {sid for sid in cited if sid not in by_id}
            if unknown:
                for sid in sorted(unknown):
                    warnings.append(
                        f"{article.entity_id}: citation on {ref.ref_id} references "
                        f"unknown source {sid!r}"
                    )
                cited -= unknown
                if not cited:
                    del article.citations[ref]
        articles.append(article)
    return ParseResult(articles=articles, sources=sources, warnings=warnings)


# -- split stratification --


def stratify_splits(
    articles: Iterable[ArticleRecord | str],
    lead_subclaim_counts: dict[str, int],
    ratios: tuple[float, float, float],
    seed: int,
    n_strata: int = 4,
) -> list[SplitAssignment]:
    """Assign entities to train/dev/test, stratified by lead-subclaim count.

    Entities are sorted by count and sliced into ``n_strata`` quantile
    strata; within each stratum a seeded shuffle is followed by
    largest-remainder allocation, so per-split totals are fixed by the
    ratios and only membership varies with the seed.
    """
    names = ("train", "dev", "test")
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be three positive reals, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    entity_ids = [a if isinstance(a, str) else a.entity_id for a in articles]
    missing = [e for e in entity_ids if e not in lead_subclaim_counts]
    if missing:
        raise ValueError(f"lead_subclaim_counts missing entities: {missing[:5]}")
    if len(set(entity_ids)) != len(entity_ids):
        raise ValueError("duplicate entity ids")

    n = len(entity_ids)
    if n == 0:
        return []
    if n < n_strata:
        _warnings.warn(
            f"only {n} entities for {n_strata} strata; falling back to a "
            "single proportional shuffle",
            stacklevel=2,
        )
        n_strata = 1

    ordered = sorted(entity_ids, key=lambda e: (lead_subclaim_counts[e], e))
    strata = [
        ordered[i * n // n_strata : (i + 1) * n // n_strata] for i in range(n_strata)
    ]
    rng = random.Random(seed)
    assignments: list[SplitAssignment] = []
    for stratum in strata:
        if not stratum:
            continue
        members = list(stratum)
        rng.shuffle(members)
        quotas = _largest_remainder(len(members), ratios)
        pos = 0
        for split_name, quota in zip(names, quotas):
            for e in members[pos : pos + quota]:
                assignments.append(SplitAssignment(entity_id=e, split=split_name))
            pos += quota
    assignments.sort(key=lambda a: a.entity_id)
    return assignments


def _largest_remainder(total: int, ratios: tuple[float, float, float]) -> list[int]:
    exact = [total * r for r in ratios]
    counts = [int(x) for x in exact]
    leftovers = total - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:leftovers]:
        counts[i] += 1
    return counts


# -- corpus store --


@dataclass
class CorpusStore:
    """In-memory view of the canonical store directory."""

    articles: list[ArticleRecord]
    sources: list[SourceDocument]
    splits: list[SplitAssignment] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.article_by_id = {a.entity_id: a for a in self.articles}
        self.source_by_id = {s.source_id: s for s in self.sources}

    def accessible_sources(self) -> dict[str, SourceDocument]:
        return {s.source_id: s for s in self.sources if s.accessible}


def write_store(store_dir: str | Path, store: CorpusStore) -> None:
    store_dir = Path(store_dir)
    write_jsonl(store_dir / "articles.jsonl", (a.to_dict() for a in store.articles))
    write_jsonl(store_dir / "sources.jsonl", (s.to_dict() for s in store.sources))
    write_jsonl(store_dir / "splits.jsonl", (sp.to_dict() for sp in store.splits))


def load_store(store_dir: str | Path) -> CorpusStore:
    store_dir = Path(store_dir)
    articles = [ArticleRecord.from_dict(d) for d in read_jsonl(store_dir / "articles.jsonl")]
    sources = [SourceDocument.from_dict(d) for d in read_jsonl(store_dir / "sources.jsonl")]
    splits_path = store_dir / "splits.jsonl"
    splits = (
        [SplitAssignment(entity_id=d["entity_id"], split=d["split"]) for d in read_jsonl(splits_path)]
        if splits_path.exists()
        else []
    )
    return CorpusStore(articles=articles, sources=sources, splits=splits)
