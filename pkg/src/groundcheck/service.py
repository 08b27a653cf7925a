"""Human annotation service: task dispatch, durable submissions, HTTP API.

Tasks (one subclaim judged against one document) are loaded from a JSON
manifest; sibling subclaims of the same parent sentence and document share a
group_id so the browser UI can page through them with NEXT/BACK and submit
them together. Submissions land in an append-only JSONL log; replaying the
log reconstructs exact server state after a crash, and resubmission by the
same (task, rater) overwrites latest-wins.
"""
from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.staticfiles import StaticFiles

from .claims import diff_decontextualization
from .corpus import CorpusStore
from .judge import corpus_resolver
from .model import (
    ANNOTATION_FLAGS,
    EvidenceAnnotation,
    SentenceRef,
    Subclaim,
    read_jsonl,
)

PENDING = "pending"
ASSIGNED = "assigned"
COMPLETE = "complete"


@dataclass
class AnnotationTask:
    """One subclaim to judge against one document's numbered sentences."""

    task_id: str
    group_id: str
    claim: Subclaim
    judged_against: str  # body | source
    owner_id: str
    document_sentences: list[str]  # indices are 1-based positions
    document_refs: list[str]  # ref_id per sentence (for analytics export)
    context: str = ""

    def to_payload(self) -> dict[str, Any]:
        diff = diff_decontextualization(self.claim.contextualized, self.claim.decontextualized)
        return {
            "task_id": self.task_id,
            "group_id": self.group_id,
            "claim": {
                "claim_id": self.claim.claim_id,
                "contextualized": self.claim.contextualized,
                "decontextualized": self.claim.decontextualized,
                "ordinal": self.claim.ordinal,
                "scope": self.claim.scope,
                "diff": [s.to_dict() for s in diff.spans],
            },
            "judged_against": self.judged_against,
            "owner_id": self.owner_id,
            "document_sentences": [
                [i, text] for i, text in enumerate(self.document_sentences, start=1)
            ],
            "more_info": {
                "parent_sentence": self.claim.parent.text,
                "context": self.context,
            },
        }


def load_manifest(path: str | Path) -> tuple[list[AnnotationTask], int]:
    """Read a task manifest: {"raters_per_task": n, "tasks": [...]}."""
    with Path(path).open("r", encoding="utf-8") as f:
        doc = json.load(f)
    tasks: list[AnnotationTask] = []
    for t in doc.get("tasks", []):
        claim = Subclaim.from_dict(t["claim"])
        document = t["document"]
        sentences = list(document["sentences"])
        refs = list(document.get("refs", []))
        if refs and len(refs) != len(sentences):
            raise ValueError(f"task {t['task_id']}: refs/sentences length mismatch")
        tasks.append(
            AnnotationTask(
                task_id=t["task_id"],
                group_id=t.get("group_id")
                or f"{claim.parent.ref_id}@{document['owner_id']}",
                claim=claim,
                judged_against=document["judged_against"],
                owner_id=document["owner_id"],
                document_sentences=sentences,
                document_refs=refs,
                context=t.get("context", ""),
            )
        )
    ids = [t.task_id for t in tasks]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate task_id in manifest")
    return tasks, int(doc.get("raters_per_task", 2))


def manifest_from_claims(
    claims: Iterable[Subclaim], store: CorpusStore, raters_per_task: int = 2
) -> dict[str, Any]:
    """Build a manifest dict for the given claims over a corpus store."""
    resolve = corpus_resolver(store)
    tasks = []
    counter = 0
    for claim in claims:
        article = store.article_by_id.get(claim.parent.owner_id)
        context = " ".join(r.text for r in article.lead) if article else ""
        for doc in resolve(claim):
            counter += 1
            tasks.append(
                {
                    "task_id": f"t{counter:06d}",
                    "group_id": f"{claim.parent.ref_id}@{doc.owner_id}",
                    "claim": claim.to_dict(),
                    "document": {
                        "judged_against": doc.judged_against,
                        "owner_id": doc.owner_id,
                        "sentences": [r.text for r in doc.sentences],
                        "refs": [r.ref_id for r in doc.sentences],
                    },
                    "context": context,
                }
            )
    return {"raters_per_task": raters_per_task, "tasks": tasks}


class TaskService:
    """Task queue over an append-only submissions log.

    All state is derived from the manifest plus the log, so a restart (or
    crash) that replays the log reconstructs identical progress. Writes are
    serialized through one lock.
    """

    def __init__(
        self,
        tasks: list[AnnotationTask],
        log_path: str | Path,
        raters_per_task: int = 2,
    ) -> None:
        if raters_per_task < 1:
            raise ValueError("raters_per_task must be >= 1")
        self.tasks = sorted(tasks, key=lambda t: t.task_id)
        self.by_id = {t.task_id: t for t in self.tasks}
        self.log_path = Path(log_path)
        self.raters_per_task = raters_per_task
        self._lock = threading.Lock()
        # latest-wins submission per (task_id, rater_id)
        self.submissions: dict[tuple[str, str], dict[str, Any]] = {}
        self._replay()

    def _replay(self) -> None:
        if not self.log_path.exists():
            return
        for record in read_jsonl(self.log_path):
            key = (record["task_id"], record["rater_id"])
            if record["task_id"] in self.by_id:
                self.submissions[key] = record

    def compact(self) -> None:
        """Rewrite the log with only the latest record per (task, rater)."""
        with self._lock:
            tmp = self.log_path.with_suffix(".tmp")
            with tmp.open("w", encoding="utf-8") as f:
                for key in sorted(self.submissions):
                    f.write(json.dumps(self.submissions[key], ensure_ascii=False) + "\n")
            tmp.replace(self.log_path)

    # -- queries --

    def raters_of(self, task_id: str) -> set[str]:
        return {r for (t, r) in self.submissions if t == task_id}

    def status(self, task_id: str) -> str:
        n = len(self.raters_of(task_id))
        if n == 0:
            return PENDING
        return COMPLETE if n >= self.raters_per_task else ASSIGNED

    def next_task(self, rater_id: str) -> AnnotationTask | None:
        """Lowest-id task that is not complete and not already this rater's."""
        for task in self.tasks:
            raters = self.raters_of(task.task_id)
            if rater_id in raters:
                continue
            if len(raters) >= self.raters_per_task:
                continue
            return task
        return None

    def group_of(self, group_id: str) -> list[AnnotationTask]:
        return [t for t in self.tasks if t.group_id == group_id]

    def progress(self) -> dict[str, Any]:
        counts = {PENDING: 0, ASSIGNED: 0, COMPLETE: 0}
        for task in self.tasks:
            counts[self.status(task.task_id)] += 1
        per_rater: dict[str, int] = {}
        for (_t, rater) in self.submissions:
            per_rater[rater] = per_rater.get(rater, 0) + 1
        return {
            "total": len(self.tasks),
            "pending": counts[PENDING],
            "assigned": counts[ASSIGNED],
            "complete": counts[COMPLETE],
            "per_rater": dict(sorted(per_rater.items())),
        }

    # -- mutation --

    def submit(
        self,
        task_id: str,
        rater_id: str,
        evidence_indices: list[int],
        support: float,
        flags: list[str],
        submitted_at: float | None = None,
    ) -> dict[str, Any]:
        """Validate and durably append one submission (latest wins)."""
        task = self.by_id.get(task_id)
        if task is None:
            raise KeyError(task_id)
        problems = validate_submission(task, rater_id, evidence_indices, support, flags)
        if problems:
            raise SubmissionInvalid(problems)
        record = {
            "task_id": task_id,
            "rater_id": rater_id,
            "evidence_indices": sorted(set(int(i) for i in evidence_indices)),
            "support": float(support),
            "flags": sorted(set(flags)),
            "submitted_at": float(submitted_at if submitted_at is not None else time.time()),
        }
        with self._lock:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            with self.log_path.open("a", encoding="utf-8") as f:
                f.write(json.dumps(record, ensure_ascii=False) + "\n")
                f.flush()
            self.submissions[(task_id, rater_id)] = record
        return record

    def export_annotations(self) -> list[EvidenceAnnotation]:
        """Convert stored submissions to the shared annotation schema, so
        agreement analytics run unchanged over human data."""
        out: list[EvidenceAnnotation] = []
        for (task_id, rater_id), record in sorted(self.submissions.items()):
            task = self.by_id[task_id]
            refs = []
            for i in record["evidence_indices"]:
                text = task.document_sentences[i - 1]
                if task.document_refs:
                    refs.append(SentenceRef.from_ref_id(task.document_refs[i - 1], text))
                else:
                    refs.append(SentenceRef("source", task.owner_id, None, i - 1, text))
            out.append(
                EvidenceAnnotation(
                    claim_id=task.claim.claim_id,
                    evidence=refs,
                    support=record["support"],
                    flags=set(record["flags"]),
                    annotator_kind="human",
                    annotator_id=rater_id,
                    judged_against=task.judged_against,
                    owner_id=task.owner_id,
                )
            )
        return out


class SubmissionInvalid(ValueError):
    def __init__(self, problems: list[dict[str, str]]) -> None:
        super().__init__(f"invalid submission: {problems}")
        self.problems = problems


def validate_submission(
    task: AnnotationTask,
    rater_id: Any,
    evidence_indices: Any,
    support: Any,
    flags: Any,
) -> list[dict[str, str]]:
    """Field-level validation; returns a list of {field, error} problems."""
    problems: list[dict[str, str]] = []
    if not isinstance(rater_id, str) or not rater_id:
        problems.append({"field": "rater_id", "error": "rater_id must be a non-empty string"})
    if not isinstance(evidence_indices, list) or any(
        not isinstance(i, int) or isinstance(i, bool) for i in evidence_indices
    ):
        problems.append(
            {"field": "evidence_indices", "error": "must be a list of integers"}
        )
    else:
        distinct = set(evidence_indices)
        if len(distinct) > 3:
            problems.append(
                {"field": "evidence_indices", "error": "at most 3 evidence sentences"}
            )
        bad = [i for i in distinct if not 1 <= i <= len(task.document_sentences)]
        if bad:
            problems.append(
                {
                    "field": "evidence_indices",
                    "error": f"indices {sorted(bad)} outside document "
                    f"(1..{len(task.document_sentences)})",
                }
            )
    if not isinstance(support, (int, float)) or isinstance(support, bool):
        problems.append({"field": "support", "error": "support must be a number"})
    elif not (support == support and -1.0 <= float(support) <= 1.0):
        problems.append({"field": "support", "error": "support must lie in [-1, 1]"})
    if not isinstance(flags, list) or any(f not in ANNOTATION_FLAGS for f in flags):
        problems.append(
            {"field": "flags", "error": f"flags must be a subset of {list(ANNOTATION_FLAGS)}"}
        )
    return problems


def create_app(service: TaskService, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="groundcheck annotation service")

    def task_payload(task: AnnotationTask) -> dict[str, Any]:
        payload = task.to_payload()
        payload["status"] = service.status(task.task_id)
        return payload

    @app.get("/api/tasks/next")
    def api_next(rater: str = Query(min_length=1)) -> dict[str, Any]:
        task = service.next_task(rater)
        if task is None:
            return {"task": None, "group": []}
        return {
            "task": task_payload(task),
            "group": [task_payload(t) for t in service.group_of(task.group_id)],
        }

    @app.get("/api/tasks/{task_id}")
    def api_task(task_id: str) -> dict[str, Any]:
        task = service.by_id.get(task_id)
        if task is None:
            raise HTTPException(status_code=404, detail=f"unknown task {task_id!r}")
        return {
            "task": task_payload(task),
            "group": [task_payload(t) for t in service.group_of(task.group_id)],
        }

    @app.post("/api/tasks/{task_id}/submit")
    def api_submit(task_id: str, payload: dict[str, Any] = Body(...)) -> dict[str, Any]:
        task = service.by_id.get(task_id)
        if task is None:
            raise HTTPException(status_code=404, detail=f"unknown task {task_id!r}")
        try:
            record = service.submit(
                task_id,
                payload.get("rater_id"),
                payload.get("evidence_indices", []),
                payload.get("support"),
                payload.get("flags", []),
            )
        except SubmissionInvalid as e:
            raise HTTPException(status_code=422, detail=e.problems) from None
        return {"ok": True, "status": service.status(task_id), "stored": record}

    @app.get("/api/progress")
    def api_progress() -> dict[str, Any]:
        return service.progress()

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app
