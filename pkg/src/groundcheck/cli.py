"""Unified command-line entrypoint for the audit pipeline.

Subcommands: ingest, decompose, annotate, analyze, qrels, retrieve, rerank,
eval, serve, agreement (plus manifest, a helper that builds annotation-task
manifests for the service). Every pipeline command writes deterministic
files: rerunning a command over the same inputs yields byte-identical
outputs.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import analytics, claims as claims_mod, corpus as corpus_mod, judge, rerank, retrieval
from .model import BODY, LEAD, EvidenceAnnotation, Subclaim, read_jsonl, write_jsonl
from .service import TaskService, create_app, load_manifest, manifest_from_claims


def _load_claims(path: str | Path) -> list[Subclaim]:
    return claims_mod.read_claims(path)


def _load_annotations(path: str | Path) -> list[EvidenceAnnotation]:
    return [EvidenceAnnotation.from_dict(d) for d in read_jsonl(path)]


def _dedupe_annotations(
    annotations: list[EvidenceAnnotation], annotator_id: str | None
) -> tuple[list[EvidenceAnnotation], str | None]:
    """Restrict to one annotator (default: lexicographically first) and keep
    the first record per (claim, document)."""
    ids = sorted({a.annotator_id for a in annotations})
    if not ids:
        return [], annotator_id
    chosen = annotator_id if annotator_id is not None else ids[0]
    if chosen not in ids:
        raise SystemExit(f"annotator {chosen!r} not found (present: {', '.join(ids)})")
    seen: set[tuple[str, str]] = set()
    out = []
    for a in annotations:
        if a.annotator_id != chosen:
            continue
        key = (a.claim_id, a.owner_id)
        if key in seen:
            continue
        seen.add(key)
        out.append(a)
    return out, chosen


# -- ingest --


def cmd_ingest(args: argparse.Namespace) -> int:
    result = corpus_mod.parse_corpus(args.input)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    kept, dropped = corpus_mod.filter_sources(result.sources, args.quality_threshold)
    for s in dropped:
        s.accessible = False
    ratios = tuple(float(x) for x in args.split_ratios.split(","))
    if len(ratios) != 3:
        raise SystemExit("--split-ratios needs three comma-separated values")
    # stratification proxy available at ingest time: lead sentence count
    counts = {a.entity_id: len(a.lead) for a in result.articles}
    splits = corpus_mod.stratify_splits(
        result.articles, counts, ratios, seed=args.seed, n_strata=args.strata
    )
    store = corpus_mod.CorpusStore(
        articles=result.articles, sources=result.sources, splits=splits
    )
    corpus_mod.write_store(args.out, store)
    print(
        f"ingested {len(result.articles)} articles, {len(result.sources)} sources "
        f"({len(dropped)} below quality {args.quality_threshold}), "
        f"{len(result.warnings)} warnings -> {args.out}"
    )
    return 0


# -- decompose --


def cmd_decompose(args: argparse.Namespace) -> int:
    store = corpus_mod.load_store(args.corpus)
    sources = store.accessible_sources()
    if args.adapter == "mock":
        decomposer = claims_mod.identity_decomposer
    elif args.adapter == "transcript":
        if not args.transcript:
            raise SystemExit("--transcript is required with the transcript adapter")
        decomposer = claims_mod.TranscriptDecomposer.from_jsonl(args.transcript)
    else:
        if not args.endpoint or not args.model:
            raise SystemExit("--endpoint and --model are required with the http adapter")
        import os

        decomposer = claims_mod.HttpDecomposer(
            endpoint=args.endpoint,
            model=args.model,
            api_key=os.environ.get(judge.API_KEY_ENV),
        )

    cache_path = Path(args.corpus) / "decomposition_cache.jsonl"
    cache = claims_mod.DecompositionCache(
        cache_path if cache_path.exists() else None, persist=False
    )
    targets: list[tuple] = []
    for article in store.articles:
        targets.extend(claims_mod.enumerate_targets(article, sources))

    def decompose_one(item):
        target, context = item
        try:
            return claims_mod.decompose_sentence(target, context, decomposer, cache)
        except claims_mod.DecompositionError as e:
            return e
        except Exception as e:  # adapter transport failure
            return claims_mod.DecompositionError(f"{type(e).__name__}: {e}")

    if args.parallelism > 1:
        with ThreadPoolExecutor(max_workers=args.parallelism) as ex:
            results = list(ex.map(decompose_one, targets))
    else:
        results = [decompose_one(t) for t in targets]

    all_claims: list[Subclaim] = []
    failures = 0
    for (target, _context), result in zip(targets, results):
        if isinstance(result, claims_mod.DecompositionError):
            failures += 1
            print(f"warning: {target.ref_id}: {result}", file=sys.stderr)
            continue
        all_claims.extend(claims_mod.subclaims_of(result))
    out = Path(args.out) if args.out else Path(args.corpus) / "claims.jsonl"
    claims_mod.write_claims(out, all_claims)
    cache.dump(cache_path)
    print(
        f"decomposed {len(targets) - failures}/{len(targets)} target sentences into "
        f"{len(all_claims)} subclaims -> {out}"
    )
    return 0 if failures == 0 else 1


# -- annotate --


def cmd_annotate(args: argparse.Namespace) -> int:
    store = corpus_mod.load_store(args.corpus)
    all_claims = _load_claims(args.claims)
    if args.scope != "both":
        all_claims = [c for c in all_claims if c.scope == args.scope]
    if args.adapter == "mock":
        client: judge.JudgeClient = judge.OverlapJudgeClient()
        annotator_id = args.annotator_id or "mock"
    else:
        if not args.endpoint or not args.model:
            raise SystemExit("--endpoint and --model are required with the http adapter")
        client = judge.RetryingClient(
            judge.HttpJudgeClient(endpoint=args.endpoint, model=args.model)
        )
        annotator_id = args.annotator_id or args.model
    out = Path(args.out) if args.out else Path(args.corpus) / "annotations.jsonl"
    ann_store = judge.AnnotationStore(out)
    report = judge.annotate_corpus(
        all_claims,
        judge.corpus_resolver(store),
        client,
        parallelism=args.parallelism,
        store=ann_store,
        annotator_id=annotator_id,
    )
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if report.failures:
        failures_path = out.parent / "failures.jsonl"
        write_jsonl(failures_path, (f.to_dict() for f in report.failures))
        print(f"{len(report.failures)} failures recorded -> {failures_path}", file=sys.stderr)
    print(
        f"annotated {report.written} (claim, document) pairs "
        f"({report.skipped} already stored, {len(report.failures)} failed) -> {out}"
    )
    return 0


# -- analyze --


def cmd_analyze(args: argparse.Namespace) -> int:
    store = corpus_mod.load_store(args.corpus)
    all_claims = _load_claims(args.claims)
    annotations = _load_annotations(args.annotations)
    deduped, chosen = _dedupe_annotations(annotations, args.annotator_id)
    if not deduped:
        raise SystemExit("no annotations to analyze")
    citations: dict = {}
    for a in store.articles:
        citations.update(a.citations)
    graph = analytics.build_graph(all_claims, deduped, citations=citations)

    out_dir = Path(args.out_dir) if args.out_dir else Path(args.corpus) / "analysis"
    out_dir.mkdir(parents=True, exist_ok=True)

    scores_all = [a.support for a in deduped]
    dist_all = analytics.support_distribution(scores_all, bins=args.bins, bandwidth=args.bandwidth)
    with (out_dir / "distribution.csv").open("w", encoding="utf-8") as f:
        f.write("bin,density\n")
        for x, d in dist_all.density:
            f.write(f"{x!r},{d!r}\n")

    def fractions(scores: list[float]) -> dict | None:
        if not scores:
            return None
        d = analytics.support_distribution(scores, bins=3, bandwidth=args.bandwidth)
        return {
            "n": d.n,
            "unsupported_fraction": d.unsupported_fraction,
            "partial_fraction": d.partial_fraction,
            "full_fraction": d.full_fraction,
        }

    lead_scores = [a.support for a in deduped if graph.scope_of.get(a.claim_id) == LEAD]
    body_scores = [a.support for a in deduped if graph.scope_of.get(a.claim_id) == BODY]

    lead_claims = graph.lead_claims()
    groundable: dict[str, dict[str, float]] = {"mean": {}, "product": {}}
    n_groundable = 0
    for claim_id in lead_claims:
        ok, score_mean = analytics.propagate_lead_support(claim_id, graph, "mean")
        if ok:
            n_groundable += 1
            _, score_prod = analytics.propagate_lead_support(claim_id, graph, "product")
            groundable["mean"][claim_id] = score_mean
            groundable["product"][claim_id] = score_prod

    summary = {
        "annotator_id": chosen,
        "n_articles": len(store.articles),
        "n_claims": len(all_claims),
        "n_lead_claims": len(lead_claims),
        "n_body_claims": len(graph.body_claims()),
        "n_annotations": len(deduped),
        "fractions": {
            "all": fractions(scores_all),
            "lead": fractions(lead_scores),
            "body": fractions(body_scores),
        },
        "groundable_count": n_groundable,
        "groundable_fraction": (n_groundable / len(lead_claims)) if lead_claims else None,
        "propagated_mean": {
            method: (sum(vals.values()) / len(vals) if vals else None)
            for method, vals in groundable.items()
        },
    }
    with (out_dir / "summary.json").open("w", encoding="utf-8") as f:
        json.dump(summary, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")

    rater_ids = {a.annotator_id for a in annotations}
    if len(rater_ids) >= 2:
        report = analytics.agreement_report(annotations)
        with (out_dir / "agreement.json").open("w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write("\n")
    print(f"analysis written -> {out_dir}")
    return 0


# -- qrels --


def cmd_qrels(args: argparse.Namespace) -> int:
    store = corpus_mod.load_store(args.corpus)
    all_claims = _load_claims(args.claims)
    annotations = _load_annotations(args.annotations)
    deduped, _ = _dedupe_annotations(annotations, args.annotator_id)
    claims_by_id = {c.claim_id: c for c in all_claims}

    if args.task in (LEAD, BODY):
        qrels, queries = retrieval.build_claim_qrels(deduped, claims_by_id, store, args.task)
    else:
        graph = analytics.build_graph(all_claims, deduped)
        qrels, queries = retrieval.build_entity_qrels(graph, store.articles, store)

    out_dir = Path(args.out_dir) if args.out_dir else Path(args.corpus) / "retrieval"
    out_dir.mkdir(parents=True, exist_ok=True)
    retrieval.write_qrels(out_dir / f"{args.task}.qrels", qrels)
    name_by_entity = {a.entity_id: a.entity_name for a in store.articles}
    records = []
    for q in queries:
        record = {
            "query_id": q.query_id,
            "text": q.text,
            "docs": [[r.ref_id, r.text] for r in q.doc_refs],
        }
        if args.task == "entity":
            record["entity_name"] = name_by_entity.get(q.query_id, q.query_id)
        records.append(record)
    write_jsonl(out_dir / f"{args.task}.queries.jsonl", records)
    print(
        f"{args.task}: {len(queries)} queries, {len(qrels.judgments)} judgments -> {out_dir}"
    )
    return 0


# -- retrieve --


def cmd_retrieve(args: argparse.Namespace) -> int:
    by_query: dict[str, list[tuple[str, float]]] = {}
    n = 0
    for record in read_jsonl(args.queries):
        n += 1
        docs = [(doc_id, text) for doc_id, text in record["docs"]]
        index = retrieval.build_index(docs, k1=args.k1, b=args.b)
        by_query[record["query_id"]] = [
            (doc_id, score) for doc_id, score in retrieval.search(index, record["text"], args.k)
        ]
    run = retrieval.RankedRun(by_query=by_query)
    run.validate()
    out = Path(args.out)
    retrieval.write_run(out, run, tag=args.tag)
    meta = {
        "k": args.k,
        "k1": args.k1,
        "b": args.b,
        "idf": "ln(1 + (N - df + 0.5)/(df + 0.5))",
        "tokenization": "lowercase, split on non-alphanumerics, no stemming/stopwords",
        "tie_break": "corpus order",
        "zero_score_docs": "omitted",
    }
    with out.with_suffix(out.suffix + ".meta.json").open("w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"retrieved top-{args.k} for {n} queries -> {out}")
    return 0


# -- rerank --


def cmd_rerank(args: argparse.Namespace) -> int:
    run = retrieval.read_run(args.run)
    query_texts: dict[str, str] = {}
    passage_texts: dict[str, str] = {}
    for record in read_jsonl(args.queries):
        qid = record["query_id"]
        if args.task == "ENTITY" and args.mode == "pointwise":
            query_texts[qid] = record.get("entity_name", record["text"])
        else:
            query_texts[qid] = record["text"]
        for doc_id, text in record["docs"]:
            passage_texts[doc_id] = text

    if args.adapter == "mock":
        client = rerank.OverlapRerankClient()
    else:
        if not args.endpoint or not args.model:
            raise SystemExit("--endpoint and --model are required with the http adapter")
        client = rerank.HttpRerankClient(endpoint=args.endpoint, model=args.model)

    job = rerank.RerankJob(
        task=args.task,
        mode=args.mode,
        client=client,
        depth=args.depth,
        window=args.window,
        stride=args.stride,
    )
    missing = [qid for qid in run.by_query if qid not in query_texts]
    if missing:
        raise SystemExit(f"run has queries absent from --queries: {missing[:5]}")
    if args.mode == "pointwise":
        reranked = rerank.rerank_pointwise(job, run, query_texts, passage_texts)
    else:
        reranked = rerank.rerank_listwise(job, run, query_texts, passage_texts)
    out_run = rerank.as_run(reranked, run, args.depth)
    out = Path(args.out)
    retrieval.write_run(out, out_run, tag=f"{args.mode}-rerank")
    rerank.write_provenance(
        args.provenance or out.with_suffix(out.suffix + ".provenance.jsonl"), reranked
    )
    flagged = sum(len(r.flags) for r in reranked.values())
    print(
        f"reranked {len(reranked)} queries ({args.mode}, depth {args.depth}, "
        f"{flagged} flags) -> {out}"
    )
    return 0


# -- eval --


def cmd_eval(args: argparse.Namespace) -> int:
    run = retrieval.read_run(args.run)
    qrels = retrieval.read_qrels(args.qrels, kind=args.kind)
    out: dict[str, dict] = {}
    for spec_item in args.metrics.split(","):
        name, _, k_str = spec_item.strip().partition("@")
        if not k_str.isdigit():
            raise SystemExit(f"metric {spec_item!r} must look like ndcg@5 or recall@10")
        k = int(k_str)
        if name == "ndcg":
            result = retrieval.ndcg_at_k(run, qrels, k)
        elif name == "recall":
            result = retrieval.recall_at_k(run, qrels, k)
        else:
            raise SystemExit(f"unknown metric {name!r} (ndcg and recall are supported)")
        entry: dict = {"mean": result.mean}
        if args.per_query:
            entry["per_query"] = dict(sorted(result.per_query.items()))
        out[spec_item.strip()] = entry
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"metrics -> {args.out}")
    else:
        sys.stdout.write(text)
    return 0


# -- manifest / serve / agreement --


def cmd_manifest(args: argparse.Namespace) -> int:
    store = corpus_mod.load_store(args.corpus)
    all_claims = _load_claims(args.claims)
    if args.scope != "both":
        all_claims = [c for c in all_claims if c.scope == args.scope]
    manifest = manifest_from_claims(all_claims, store, raters_per_task=args.raters_per_task)
    with Path(args.out).open("w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2)
        f.write("\n")
    print(f"{len(manifest['tasks'])} tasks -> {args.out}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    tasks, manifest_raters = load_manifest(args.manifest)
    raters = args.raters_per_task if args.raters_per_task is not None else manifest_raters
    store_dir = Path(args.store)
    store_dir.mkdir(parents=True, exist_ok=True)
    service = TaskService(tasks, store_dir / "submissions.jsonl", raters_per_task=raters)
    app = create_app(service, static_dir=args.static)
    print(f"serving {len(tasks)} tasks on {args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_agreement(args: argparse.Namespace) -> int:
    if args.annotations:
        annotations = _load_annotations(args.annotations)
    elif args.manifest and args.submissions:
        tasks, raters = load_manifest(args.manifest)
        service = TaskService(tasks, args.submissions, raters_per_task=raters)
        annotations = service.export_annotations()
    else:
        raise SystemExit("pass --annotations, or --manifest with --submissions")
    report = analytics.agreement_report(annotations)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"agreement -> {args.out}")
    else:
        sys.stdout.write(text)
    return 0


# -- parser --


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groundcheck",
        description="Claim-grounding audit pipeline: decompose, judge, analyze, retrieve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a JSONL corpus into the canonical store")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--quality-threshold", type=float, default=corpus_mod.DEFAULT_QUALITY_THRESHOLD)
    p.add_argument("--split-ratios", default="0.65,0.172,0.178")
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--strata", type=int, default=4)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("decompose", help="decompose target sentences into subclaims")
    p.add_argument("--corpus", required=True)
    p.add_argument("--adapter", choices=("mock", "http", "transcript"), default="mock")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--transcript")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("annotate", help="judge claims against their documents")
    p.add_argument("--corpus", required=True)
    p.add_argument("--claims", required=True)
    p.add_argument("--adapter", choices=("mock", "http"), default="mock")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--scope", choices=("lead", "body", "both"), default="both")
    p.add_argument("--annotator-id")
    p.add_argument("--out")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("analyze", help="support distributions, propagation, agreement")
    p.add_argument("--corpus", required=True)
    p.add_argument("--claims", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--annotator-id")
    p.add_argument("--out-dir")
    p.add_argument("--bins", type=int, default=101)
    p.add_argument("--bandwidth", type=float, default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("qrels", help="build retrieval queries and judgments")
    p.add_argument("--corpus", required=True)
    p.add_argument("--claims", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--task", choices=("lead", "body", "entity"), required=True)
    p.add_argument("--annotator-id")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_qrels)

    p = sub.add_parser("retrieve", help="run BM25 over a query file")
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--k1", type=float, default=1.5)
    p.add_argument("--b", type=float, default=0.75)
    p.add_argument("--tag", default="bm25")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("rerank", help="rerank a first-stage run with an LLM client")
    p.add_argument("--task", choices=("LEAD", "BODY", "ENTITY"), required=True)
    p.add_argument("--mode", choices=("pointwise", "listwise"), required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--stride", type=int, default=10)
    p.add_argument("--adapter", choices=("mock", "http"), default="mock")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--provenance")
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("eval", help="score a run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--metrics", default="ndcg@5,recall@10")
    p.add_argument("--kind", choices=("binary", "graded"), default="graded")
    p.add_argument("--per-query", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("manifest", help="build an annotation-task manifest")
    p.add_argument("--corpus", required=True)
    p.add_argument("--claims", required=True)
    p.add_argument("--scope", choices=("lead", "body", "both"), default="both")
    p.add_argument("--raters-per-task", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("serve", help="serve the annotation API (and UI, if built)")
    p.add_argument("--store", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--raters-per-task", type=int, default=None)
    p.add_argument("--static")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("agreement", help="inter-annotator agreement statistics")
    p.add_argument("--annotations")
    p.add_argument("--manifest")
    p.add_argument("--submissions")
    p.add_argument("--out")
    p.set_defaults(func=cmd_agreement)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
