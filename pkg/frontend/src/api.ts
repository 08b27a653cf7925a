/**
 * HTTP client for the annotation service.
 *
 * The service is the only backend this UI talks to:
 *   GET  /api/tasks/next?rater=...   -> { task, group }
 *   GET  /api/tasks/{id}             -> task payload
 *   POST /api/tasks/{id}/submit      -> { ok, status, stored } or 422 {detail}
 *   GET  /api/progress               -> counters
 *
 * Every submission is validated locally against the same rules the service
 * enforces before anything is sent; an invalid entry is annotated with field
 * errors and never POSTed.  A server-side 422 reopens the offending subclaim
 * (its field errors become visible, the view jumps to it) while the other
 * subclaims keep their state.  A network failure preserves all local state
 * and surfaces a retry prompt; entries that already succeeded are marked
 * submitted and are not POSTed again on retry.
 */

import {
  FieldProblem,
  GroupResponse,
  SubmissionPayload,
  TaskPayload,
  parseGroupResponse,
  parseTaskPayload,
  validateSubmission,
} from "./types.js";
import { SubclaimEntry, ViewState } from "./state.js";

export interface HttpResponse {
  status: number;
  json(): Promise<unknown>;
}

export interface RequestOptions {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}

/** Structural subset of window.fetch, so tests can stub the transport. */
export type Fetcher = (url: string, init?: RequestOptions) => Promise<HttpResponse>;

export const NETWORK_ERROR_MESSAGE =
  "Could not reach the annotation service. Your answers are kept locally - try submitting again.";

export async function fetchNextGroup(
  fetcher: Fetcher,
  base: string,
  rater: string,
): Promise<GroupResponse> {
  const response = await fetcher(
    `${base}/api/tasks/next?rater=${encodeURIComponent(rater)}`,
  );
  if (response.status !== 200) {
    throw new Error(`task fetch failed with status ${response.status}`);
  }
  return parseGroupResponse(await response.json());
}

export async function fetchTask(
  fetcher: Fetcher,
  base: string,
  taskId: string,
): Promise<TaskPayload> {
  const response = await fetcher(`${base}/api/tasks/${encodeURIComponent(taskId)}`);
  if (response.status !== 200) {
    throw new Error(`task ${taskId} fetch failed with status ${response.status}`);
  }
  return parseTaskPayload(await response.json());
}

export function buildSubmission(rater: string, entry: SubclaimEntry): SubmissionPayload {
  return {
    rater_id: rater,
    evidence_indices: [...entry.selections].sort((a, b) => a - b),
    support: entry.score ?? 0,
    flags: [...entry.flags],
  };
}

function parseProblems(detail: unknown): FieldProblem[] {
  if (!Array.isArray(detail)) return [{ field: "submission", error: "rejected" }];
  const problems: FieldProblem[] = [];
  for (const item of detail) {
    if (
      typeof item === "object" &&
      item !== null &&
      typeof (item as Record<string, unknown>)["field"] === "string" &&
      typeof (item as Record<string, unknown>)["error"] === "string"
    ) {
      problems.push({
        field: (item as Record<string, unknown>)["field"] as string,
        error: (item as Record<string, unknown>)["error"] as string,
      });
    }
  }
  return problems.length > 0 ? problems : [{ field: "submission", error: "rejected" }];
}

export interface SubmitOutcome {
  state: ViewState;
  /** true when every subclaim of the group has been accepted by the service. */
  allSubmitted: boolean;
  /** true when the transport failed; `state` keeps all local answers. */
  networkError: boolean;
}

/**
 * Submit every not-yet-accepted subclaim of the current group, one POST per
 * subclaim.  Returns the updated state; never mutates its input.
 */
export async function submitGroup(
  fetcher: Fetcher,
  base: string,
  state: ViewState,
): Promise<SubmitOutcome> {
  const entries = state.entries.map((e) => ({ ...e }));
  let networkError = false;

  for (let i = 0; i < entries.length; i++) {
    const entry = entries[i];
    const task = state.group[i];
    if (entry === undefined || task === undefined || entry.submitted) continue;

    const payload = buildSubmission(state.rater, entry);
    const problems = validateSubmission(payload, task.document_sentences.length);
    if (problems.length > 0) {
      entries[i] = { ...entry, fieldErrors: problems };
      continue; // never send a payload the service would reject
    }

    let response: HttpResponse;
    try {
      response = await fetcher(
        `${base}/api/tasks/${encodeURIComponent(entry.taskId)}/submit`,
        {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify(payload),
        },
      );
    } catch {
      networkError = true;
      break; // keep all local state; already-accepted entries stay submitted
    }

    if (response.status === 422) {
      const body = (await response.json()) as Record<string, unknown> | null;
      entries[i] = {
        ...entry,
        fieldErrors: parseProblems(body === null ? null : body["detail"]),
        submitted: false,
      };
    } else if (response.status === 200) {
      entries[i] = { ...entry, fieldErrors: [], submitted: true };
    } else {
      networkError = true;
      break;
    }
  }

  const firstProblem = entries.findIndex((e) => e.fieldErrors.length > 0);
  const allSubmitted = entries.length > 0 && entries.every((e) => e.submitted);
  const next: ViewState = {
    ...state,
    entries,
    current: firstProblem >= 0 ? firstProblem : state.current,
    error: networkError ? NETWORK_ERROR_MESSAGE : null,
  };
  return { state: next, allSubmitted, networkError };
}
