"""Shared fixtures: the 2-entity corpus, its claims, and mock annotations."""
import json
from pathlib import Path

import pytest

from groundcheck import claims as claims_mod, corpus as corpus_mod, judge

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def corpus_path() -> Path:
    return FIXTURES / "corpus.jsonl"


@pytest.fixture(scope="session")
def expected() -> dict:
    with (FIXTURES / "expected.json").open("r", encoding="utf-8") as f:
        return json.load(f)


@pytest.fixture(scope="session")
def store(corpus_path):
    result = corpus_mod.parse_corpus(corpus_path)
    _kept, dropped = corpus_mod.filter_sources(result.sources, 0.5)
    for s in dropped:
        s.accessible = False
    return corpus_mod.CorpusStore(articles=result.articles, sources=result.sources)


@pytest.fixture(scope="session")
def fixture_claims(store):
    out = []
    for article in store.articles:
        for target, context in claims_mod.enumerate_targets(
            article, store.accessible_sources()
        ):
            result = claims_mod.decompose_sentence(
                target, context, claims_mod.identity_decomposer
            )
            out.extend(claims_mod.subclaims_of(result))
    return out


@pytest.fixture(scope="session")
def fixture_annotations(store, fixture_claims, tmp_path_factory):
    path = tmp_path_factory.mktemp("annotations") / "annotations.jsonl"
    ann_store = judge.AnnotationStore(path)
    report = judge.annotate_corpus(
        fixture_claims,
        judge.corpus_resolver(store),
        judge.OverlapJudgeClient(),
        parallelism=1,
        store=ann_store,
        annotator_id="mock",
    )
    assert not report.failures
    return ann_store.annotations()
