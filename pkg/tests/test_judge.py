"""Judging layer: prompt rendering, response parsing, clients, bulk annotation."""
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groundcheck import judge as judge_mod
from groundcheck.judge import (
    AnnotationStore,
    FixedResponseClient,
    InvalidEvidence,
    MalformedResponse,
    OutOfRangeScore,
    OverlapJudgeClient,
    RetryingClient,
    annotate_corpus,
    approx_token_count,
    build_judge_prompt,
    corpus_resolver,
    parse_judge_response,
    render_judge_payload,
)
from groundcheck.model import JudgeRequest, SentenceRef, Subclaim


def _claim(text="Calloway designed tidal barriers.") -> Subclaim:
    parent = SentenceRef("lead", "e1", None, 0, text)
    return Subclaim(
        claim_id="lead:e1:0#0",
        parent=parent,
        scope="lead",
        contextualized=text,
        decontextualized=text,
        ordinal=0,
    )


def _doc(n=3) -> list[SentenceRef]:
    return [SentenceRef("body", "e1", 0, i, f"Body sentence number {i}.") for i in range(n)]


# -- prompt rendering --


def test_prompt_numbers_document_sentences():
    prompt = build_judge_prompt(JudgeRequest(claim=_claim(), document_sentences=_doc()))
    assert "[1] Body sentence number 0." in prompt
    assert "[3] Body sentence number 2." in prompt
    assert "Claim: Calloway designed tidal barriers." in prompt


def test_prompt_contains_instruction_anchors():
    prompt = build_judge_prompt(JudgeRequest(claim=_claim(), document_sentences=_doc()))
    for fragment in (
        '"score": <number between -1 and 1>',
        "Select 0, 1, 2, or *at maximum* 3 sentence(s)",
        "Selected sentences and score in dictionary form:",
        "greater reason to believe that c is true, all else equal",
        "Write the dictionary and nothing else.",
    ):
        assert fragment in prompt


def test_prompt_truncates_document_to_token_budget():
    doc = _doc(50)
    line_cost = approx_token_count("[10] Body sentence number 9.")
    request = JudgeRequest(
        claim=_claim(), document_sentences=doc, token_budget=line_cost * 10
    )
    prompt = build_judge_prompt(request)
    assert "[10] " in prompt
    assert "[11] " not in prompt
    # instructions survive truncation untouched
    assert "Write the dictionary and nothing else." in prompt


def test_prompt_keeps_at_least_one_sentence():
    request = JudgeRequest(claim=_claim(), document_sentences=_doc(), token_budget=1)
    assert "[1] Body sentence number 0." in build_judge_prompt(request)


def test_prompt_rejects_empty_claim():
    with pytest.raises(ValueError):
        build_judge_prompt(JudgeRequest(claim=_claim("  "), document_sentences=_doc()))


# -- response parsing --


def test_parse_happy_path():
    doc = _doc()
    text = '{"sentences": ["[1] Body sentence number 0.", "[3] Body sentence number 2."], "score": 0.7}'
    parsed = parse_judge_response(text, doc)
    assert parsed.indices == [1, 3]
    assert parsed.support == 0.7
    assert parsed.warnings == []


def test_parse_skips_prose_before_dictionary():
    doc = _doc()
    text = (
        "Sure! Here is my selection {not json} and the answer:\n"
        '{"sentences": ["[2] Body sentence number 1."], "score": -0.5}'
    )
    parsed = parse_judge_response(text, doc)
    assert parsed.indices == [2]
    assert parsed.support == -0.5


def test_parse_error_taxonomy():
    doc = _doc()
    with pytest.raises(MalformedResponse):
        parse_judge_response("no dictionary here", doc)
    with pytest.raises(MalformedResponse):
        parse_judge_response('{"sentences": []}', doc)  # no score
    with pytest.raises(MalformedResponse):
        parse_judge_response('{"score": 0.5}', doc)  # no sentences
    with pytest.raises(MalformedResponse):
        parse_judge_response('{"sentences": [], "score": "high"}', doc)
    with pytest.raises(OutOfRangeScore):
        parse_judge_response('{"sentences": [], "score": 1.2}', doc)
    with pytest.raises(OutOfRangeScore):
        parse_judge_response('{"sentences": [], "score": NaN}', doc)
    with pytest.raises(InvalidEvidence):
        parse_judge_response('{"sentences": ["missing tag"], "score": 0}', doc)
    with pytest.raises(InvalidEvidence):
        parse_judge_response('{"sentences": ["[9] out of range"], "score": 0}', doc)
    with pytest.raises(InvalidEvidence):
        parse_judge_response('{"sentences": [42], "score": 0}', doc)


def test_parse_warns_on_duplicates_and_paraphrase():
    doc = _doc()
    text = json.dumps(
        {"sentences": ["[1] Body sentence number 0.", "[1] reworded echo"], "score": 0.2}
    )
    parsed = parse_judge_response(text, doc)
    assert parsed.indices == [1]
    assert any("duplicate" in w for w in parsed.warnings)

    text = json.dumps({"sentences": ["[2] a paraphrase"], "score": 0.2})
    parsed = parse_judge_response(text, doc)
    assert parsed.indices == [2]
    assert any("differs" in w for w in parsed.warnings)


def test_parse_truncates_over_three_selections():
    doc = _doc(6)
    sentences = [f"[{i}] Body sentence number {i - 1}." for i in (1, 2, 3, 4, 5)]
    parsed = parse_judge_response(
        json.dumps({"sentences": sentences, "score": 0.9}), doc
    )
    assert parsed.indices == [1, 2, 3]
    assert any("keeping the first 3" in w for w in parsed.warnings)


@settings(max_examples=200, deadline=None)
@given(
    indices=st.lists(st.integers(min_value=1, max_value=8), min_size=0, max_size=3, unique=True),
    score=st.floats(min_value=-1.0, max_value=1.0, allow_nan=False),
    prefix=st.sampled_from(["", "Answer:\n", "I think {score} fits. "]),
)
def test_parse_round_trips_rendered_payloads(indices, score, prefix):
    doc = _doc(8)
    text = prefix + render_judge_payload(indices, score, doc)
    parsed = parse_judge_response(text, doc)
    assert parsed.indices == list(indices)
    assert parsed.support == score


# -- clients --


def test_fixed_client_counts_calls():
    client = FixedResponseClient()
    assert json.loads(client.complete("x"))["score"] == 0
    client.complete("y")
    assert client.calls == 2


def test_retrying_client_retries_then_succeeds():
    class Flaky:
        def __init__(self):
            self.calls = 0

        def complete(self, prompt):
            self.calls += 1
            if self.calls < 3:
                raise ConnectionError("transient")
            return "ok"

    sleeps = []
    inner = Flaky()
    client = RetryingClient(inner, attempts=3, backoff=1.0, sleep=sleeps.append)
    assert client.complete("p") == "ok"
    assert inner.calls == 3
    assert sleeps == [1.0, 2.0]  # doubling backoff


def test_retrying_client_exhausts():
    class Dead:
        def complete(self, prompt):
            raise ConnectionError("down")

    client = RetryingClient(Dead(), attempts=2, backoff=0.5, sleep=lambda s: None)
    with pytest.raises(ConnectionError):
        client.complete("p")


def test_overlap_client_matches_frozen_fixture_table(
    store, fixture_claims, fixture_annotations, expected
):
    got = {
        (a.claim_id, a.owner_id): (sorted(r.ref_id for r in a.evidence), a.support)
        for a in fixture_annotations
    }
    want = {
        (row["claim_id"], row["owner_id"]): (row["evidence"], row["support"])
        for row in expected["annotations"]
    }
    assert got == want


def test_annotation_order_is_canonical(fixture_annotations, expected):
    got = [(a.claim_id, a.owner_id) for a in fixture_annotations]
    want = [(row["claim_id"], row["owner_id"]) for row in expected["annotations"]]
    assert got == want


# -- bulk annotation --


def _run_annotate(store, claims, tmp_path, name, **kwargs):
    path = tmp_path / name
    ann_store = AnnotationStore(path)
    report = annotate_corpus(
        claims,
        corpus_resolver(store),
        kwargs.pop("client", OverlapJudgeClient()),
        store=ann_store,
        annotator_id="mock",
        **kwargs,
    )
    return path, ann_store, report


def test_annotate_is_idempotent(store, fixture_claims, tmp_path):
    path, ann_store, first = _run_annotate(
        store, fixture_claims, tmp_path, "a.jsonl", parallelism=1
    )
    assert first.written == 10 and first.skipped == 0
    before = path.read_bytes()

    client = OverlapJudgeClient()
    _, _, second = _run_annotate(
        store, fixture_claims, tmp_path, "a.jsonl", parallelism=1, client=client
    )
    assert second.written == 0 and second.skipped == 10
    assert client.calls == 0  # skipped pairs never reach the client
    assert path.read_bytes() == before


def test_annotate_parallel_matches_serial(store, fixture_claims, tmp_path):
    p1, _, _ = _run_annotate(store, fixture_claims, tmp_path, "serial.jsonl", parallelism=1)
    p4, _, r4 = _run_annotate(store, fixture_claims, tmp_path, "par.jsonl", parallelism=4)
    assert r4.written == 10
    assert p1.read_bytes() == p4.read_bytes()


def test_annotate_records_failures_and_continues(store, fixture_claims, tmp_path):
    class FailsOnce:
        def __init__(self):
            self.calls = 0
            self.inner = OverlapJudgeClient()

        def complete(self, prompt):
            self.calls += 1
            if self.calls == 2:
                raise ConnectionError("transport down")
            return self.inner.complete(prompt)

    path, ann_store, report = _run_annotate(
        store, fixture_claims, tmp_path, "f.jsonl", parallelism=1, client=FailsOnce()
    )
    assert report.written == 9
    assert len(report.failures) == 1
    assert "ConnectionError" in report.failures[0].reason

    # rerunning retries only the failed pair
    _, _, retry = _run_annotate(
        store, fixture_claims, tmp_path, "f.jsonl", parallelism=1
    )
    assert retry.written == 1 and retry.skipped == 9
    assert len(ann_store.annotations()) == 9  # old handle, pre-retry


def test_annotate_failure_on_unparseable_response(store, fixture_claims, tmp_path):
    client = FixedResponseClient(response="not a dictionary at all")
    _, _, report = _run_annotate(
        store, fixture_claims, tmp_path, "bad.jsonl", parallelism=1, client=client
    )
    assert report.written == 0
    assert len(report.failures) == 10
    assert all("MalformedResponse" in f.reason for f in report.failures)


def test_resolver_routes_claims(store, fixture_claims):
    resolve = corpus_resolver(store)
    by_id = {c.claim_id: c for c in fixture_claims}
    lead_docs = resolve(by_id["lead:mira-calloway:0#0"])
    assert [d.owner_id for d in lead_docs] == ["mira-calloway"]
    assert [d.judged_against for d in lead_docs] == ["body"]
    assert len(lead_docs[0].sentences) == 5

    body_docs = resolve(by_id["body:mira-calloway:1:1#0"])
    assert [d.owner_id for d in body_docs] == ["src_award", "src_profile"]  # sorted
    assert all(d.judged_against == "source" for d in body_docs)

    # the claim on the sentence citing only the dropped source never
    # appears among targets, so every body claim resolves to >= 1 document
    for claim in fixture_claims:
        if claim.scope == "body":
            assert resolve(claim)
