/**
 * Wire types for the annotation service API, plus a submission validator
 * that mirrors the server's field-by-field checks so every payload is
 * validated locally before it is sent.
 */

export const ANNOTATION_FLAGS = [
  "bad_source",
  "bad_decontextualization",
  "uncertain",
] as const;

export type AnnotationFlag = (typeof ANNOTATION_FLAGS)[number];

export const MAX_EVIDENCE = 3;

export interface EditSpan {
  kind: "kept" | "added" | "removed";
  text: string;
}

export interface TaskClaim {
  claim_id: string;
  contextualized: string;
  decontextualized: string;
  ordinal: number;
  scope: string;
  diff: EditSpan[];
}

export interface TaskPayload {
  task_id: string;
  group_id: string;
  claim: TaskClaim;
  judged_against: string;
  owner_id: string;
  /** [1-based index, sentence text] pairs. */
  document_sentences: [number, string][];
  more_info: { parent_sentence: string; context: string };
  status: string;
}

export interface GroupResponse {
  task: TaskPayload | null;
  group: TaskPayload[];
}

export interface SubmissionPayload {
  rater_id: string;
  evidence_indices: number[];
  support: number;
  flags: string[];
}

export interface FieldProblem {
  field: string;
  error: string;
}

/**
 * Validate a submission against the service's schema: a non-empty rater, at
 * most three distinct 1-based integer sentence indices within the document,
 * a finite support score in [-1, 1], and known flags only.  Returns one
 * problem per offending field (empty list = valid), matching the shape the
 * server returns in a 422.
 */
export function validateSubmission(
  payload: SubmissionPayload,
  nSentences: number,
): FieldProblem[] {
  const problems: FieldProblem[] = [];

  if (typeof payload.rater_id !== "string" || payload.rater_id.length === 0) {
    problems.push({ field: "rater_id", error: "rater id must be a non-empty string" });
  }

  const indices = payload.evidence_indices;
  if (!Array.isArray(indices)) {
    problems.push({ field: "evidence_indices", error: "must be a list of sentence indices" });
  } else {
    const distinct = new Set(indices);
    if (distinct.size > MAX_EVIDENCE) {
      problems.push({
        field: "evidence_indices",
        error: `at most ${MAX_EVIDENCE} sentences may be selected`,
      });
    }
    for (const i of distinct) {
      if (typeof i !== "number" || !Number.isInteger(i) || typeof i === "boolean") {
        problems.push({ field: "evidence_indices", error: `index ${String(i)} is not an integer` });
        break;
      }
      if (i < 1 || i > nSentences) {
        problems.push({
          field: "evidence_indices",
          error: `index ${i} outside 1..${nSentences}`,
        });
        break;
      }
    }
  }

  const support = payload.support;
  if (typeof support !== "number" || !Number.isFinite(support)) {
    problems.push({ field: "support", error: "support must be a finite number" });
  } else if (support < -1 || support > 1) {
    problems.push({ field: "support", error: `support ${support} outside [-1, 1]` });
  }

  if (!Array.isArray(payload.flags)) {
    problems.push({ field: "flags", error: "flags must be a list" });
  } else {
    for (const f of payload.flags) {
      if (!(ANNOTATION_FLAGS as readonly string[]).includes(f)) {
        problems.push({ field: "flags", error: `unknown flag ${String(f)}` });
        break;
      }
    }
  }

  return problems;
}

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function parseSpan(value: unknown): EditSpan {
  if (
    !isRecord(value) ||
    typeof value.text !== "string" ||
    (value.kind !== "kept" && value.kind !== "added" && value.kind !== "removed")
  ) {
    throw new TypeError("malformed diff span");
  }
  return { kind: value.kind, text: value.text };
}

export function parseTaskPayload(value: unknown): TaskPayload {
  if (!isRecord(value)) throw new TypeError("task payload is not an object");
  const claim = value.claim;
  if (
    typeof value.task_id !== "string" ||
    typeof value.group_id !== "string" ||
    typeof value.judged_against !== "string" ||
    typeof value.owner_id !== "string" ||
    typeof value.status !== "string" ||
    !isRecord(claim) ||
    !isRecord(value.more_info) ||
    !Array.isArray(value.document_sentences) ||
    !Array.isArray(claim.diff)
  ) {
    throw new TypeError(`malformed task payload ${JSON.stringify(value).slice(0, 80)}`);
  }
  if (
    typeof claim.claim_id !== "string" ||
    typeof claim.contextualized !== "string" ||
    typeof claim.decontextualized !== "string" ||
    typeof claim.ordinal !== "number" ||
    typeof claim.scope !== "string"
  ) {
    throw new TypeError("malformed claim in task payload");
  }
  const sentences: [number, string][] = value.document_sentences.map((pair) => {
    if (!Array.isArray(pair) || typeof pair[0] !== "number" || typeof pair[1] !== "string") {
      throw new TypeError("malformed document sentence pair");
    }
    return [pair[0], pair[1]];
  });
  const info = value.more_info;
  return {
    task_id: value.task_id,
    group_id: value.group_id,
    claim: {
      claim_id: claim.claim_id,
      contextualized: claim.contextualized,
      decontextualized: claim.decontextualized,
      ordinal: claim.ordinal,
      scope: claim.scope,
      diff: claim.diff.map(parseSpan),
    },
    judged_against: value.judged_against,
    owner_id: value.owner_id,
    document_sentences: sentences,
    more_info: {
      parent_sentence: typeof info.parent_sentence === "string" ? info.parent_sentence : "",
      context: typeof info.context === "string" ? info.context : "",
    },
    status: value.status,
  };
}

export function parseGroupResponse(value: unknown): GroupResponse {
  if (!isRecord(value) || !Array.isArray(value.group)) {
    throw new TypeError("malformed group response");
  }
  return {
    task: value.task == null ? null : parseTaskPayload(value.task),
    group: value.group.map(parseTaskPayload),
  };
}
