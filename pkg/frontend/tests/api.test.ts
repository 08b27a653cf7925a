import { describe, expect, it } from "vitest";

import {
  Fetcher,
  NETWORK_ERROR_MESSAGE,
  RequestOptions,
  buildSubmission,
  fetchNextGroup,
  submitGroup,
} from "../src/api.js";
import { ViewState, initState, reduce } from "../src/state.js";
import { SubmissionPayload, validateSubmission } from "../src/types.js";
import { makeGroup, makeTask } from "./helpers.js";

interface Recorded {
  url: string;
  init?: RequestOptions;
}

type Reply = { status: number; body: unknown } | "network-failure";

function stub(handler: (url: string, init?: RequestOptions) => Reply): {
  fetcher: Fetcher;
  requests: Recorded[];
} {
  const requests: Recorded[] = [];
  const fetcher: Fetcher = (url, init) => {
    requests.push({ url, init });
    const reply = handler(url, init);
    if (reply === "network-failure") {
      return Promise.reject(new Error("connection refused"));
    }
    return Promise.resolve({
      status: reply.status,
      json: () => Promise.resolve(reply.body),
    });
  };
  return { fetcher, requests };
}

const ACCEPT: Reply = { status: 200, body: { ok: true, status: "complete", stored: 1 } };

function postedPayload(request: Recorded): SubmissionPayload {
  return JSON.parse(request.init?.body ?? "null") as SubmissionPayload;
}

/** A three-subclaim group with every subclaim scored and some evidence picked. */
function scoredState(): ViewState {
  let state = initState("r1", makeGroup(3));
  for (let i = 0; i < 3; i++) {
    state = reduce(state, { type: "GOTO", index: i });
    state = reduce(state, { type: "SELECT_EVIDENCE", sentence: 3 });
    state = reduce(state, { type: "SELECT_EVIDENCE", sentence: 1 });
    state = reduce(state, { type: "SET_SCORE", value: 0.5 - 0.1 * i });
  }
  return state;
}

describe("fetchNextGroup", () => {
  it("parses the task-and-group response", async () => {
    const group = makeGroup(2);
    const { fetcher, requests } = stub(() => ({
      status: 200,
      body: JSON.parse(JSON.stringify({ task: group[1], group })),
    }));
    const response = await fetchNextGroup(fetcher, "", "alice");
    expect(requests[0]?.url).toBe("/api/tasks/next?rater=alice");
    expect(response.task?.task_id).toBe("t000001");
    expect(response.group).toHaveLength(2);
  });

  it("escapes the rater id and rejects non-200 responses", async () => {
    const { fetcher, requests } = stub(() => ({ status: 500, body: {} }));
    await expect(fetchNextGroup(fetcher, "", "a b&c")).rejects.toThrow("500");
    expect(requests[0]?.url).toBe("/api/tasks/next?rater=a%20b%26c");
  });
});

describe("submitGroup", () => {
  it("posts one valid submission per subclaim and reports completion", async () => {
    const { fetcher, requests } = stub(() => ACCEPT);
    const state = scoredState();

    const outcome = await submitGroup(fetcher, "", state);

    expect(requests.map((r) => r.url)).toEqual([
      "/api/tasks/t000000/submit",
      "/api/tasks/t000001/submit",
      "/api/tasks/t000002/submit",
    ]);
    for (const request of requests) {
      expect(request.init?.method).toBe("POST");
      const payload = postedPayload(request);
      // Every payload satisfies the service schema before it is sent.
      expect(validateSubmission(payload, 6)).toEqual([]);
      expect(payload.rater_id).toBe("r1");
      // Selection order (3 then 1) is normalised to ascending indices.
      expect(payload.evidence_indices).toEqual([1, 3]);
    }
    expect(outcome.allSubmitted).toBe(true);
    expect(outcome.networkError).toBe(false);
    expect(outcome.state.entries.every((e) => e.submitted)).toBe(true);
    expect(outcome.state.error).toBeNull();
  });

  it("reopens a 422ed subclaim with its field errors and keeps the rest", async () => {
    const { fetcher } = stub((url) =>
      url.includes("t000001")
        ? {
            status: 422,
            body: { detail: [{ field: "support", error: "support must lie in [-1, 1]" }] },
          }
        : ACCEPT,
    );
    const state = scoredState();

    const outcome = await submitGroup(fetcher, "", state);

    expect(outcome.allSubmitted).toBe(false);
    expect(outcome.networkError).toBe(false);
    const [first, second, third] = outcome.state.entries;
    expect(first?.submitted).toBe(true);
    expect(third?.submitted).toBe(true);
    expect(second?.submitted).toBe(false);
    expect(second?.fieldErrors).toEqual([
      { field: "support", error: "support must lie in [-1, 1]" },
    ]);
    // The rejected subclaim is reopened for editing...
    expect(outcome.state.current).toBe(1);
    // ...and nobody's local answers were touched.
    expect(second?.selections).toEqual([3, 1]);
    expect(second?.score).toBeCloseTo(0.4, 12);
    expect(third?.selections).toEqual([3, 1]);
  });

  it("preserves all local state on a network failure and retries cleanly", async () => {
    let calls = 0;
    const { fetcher } = stub(() => {
      calls += 1;
      return calls === 2 ? "network-failure" : ACCEPT;
    });
    const state = scoredState();

    const outcome = await submitGroup(fetcher, "", state);

    expect(outcome.networkError).toBe(true);
    expect(outcome.allSubmitted).toBe(false);
    expect(outcome.state.error).toBe(NETWORK_ERROR_MESSAGE);
    expect(outcome.state.entries.map((e) => e.submitted)).toEqual([true, false, false]);
    // Nothing the rater entered was lost.
    for (const entry of outcome.state.entries) {
      expect(entry.selections).toEqual([3, 1]);
      expect(entry.score).not.toBeNull();
    }

    // Retry: already-accepted subclaims are not resubmitted.
    const retry = stub(() => ACCEPT);
    const second = await submitGroup(retry.fetcher, "", outcome.state);
    expect(retry.requests.map((r) => r.url)).toEqual([
      "/api/tasks/t000001/submit",
      "/api/tasks/t000002/submit",
    ]);
    expect(second.allSubmitted).toBe(true);
    expect(second.state.error).toBeNull();
  });

  it("never posts a payload that fails local validation", async () => {
    const { fetcher, requests } = stub(() => ACCEPT);
    const state = scoredState();
    // Corrupt one entry behind the reducer's back; the transport must still
    // refuse to send it.
    const corrupted: ViewState = {
      ...state,
      entries: state.entries.map((e, i) => (i === 0 ? { ...e, score: 1.5 } : e)),
    };

    const outcome = await submitGroup(fetcher, "", corrupted);

    expect(requests.map((r) => r.url)).toEqual([
      "/api/tasks/t000001/submit",
      "/api/tasks/t000002/submit",
    ]);
    expect(outcome.allSubmitted).toBe(false);
    expect(outcome.state.entries[0]?.fieldErrors.map((p) => p.field)).toEqual(["support"]);
    expect(outcome.state.current).toBe(0);
  });
});

describe("buildSubmission", () => {
  it("sorts evidence and defaults a missing score to 0", () => {
    const state = initState("r9", [makeTask(0, 6)]);
    const entry = state.entries[0];
    if (entry === undefined) throw new Error("missing entry");
    const payload = buildSubmission("r9", { ...entry, selections: [5, 2, 4] });
    expect(payload).toEqual({
      rater_id: "r9",
      evidence_indices: [2, 4, 5],
      support: 0,
      flags: [],
    });
  });
});
