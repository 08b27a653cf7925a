import { describe, expect, it } from "vitest";
import { z } from "zod";

import {
  ANNOTATION_FLAGS,
  SubmissionPayload,
  parseGroupResponse,
  parseTaskPayload,
  validateSubmission,
} from "../src/types.js";
import { makeTask, mulberry32, pick, randInt } from "./helpers.js";

/**
 * Independent mirror of the service's submission schema, built with zod.
 * The hand-rolled validateSubmission must agree with it on validity for any
 * payload: duplicates are fine while the distinct count stays at three or
 * below, indices are 1-based integers within the document, support is a
 * finite number in [-1, 1], and flags come from the known set.
 */
function zodSchema(nSentences: number) {
  return z.object({
    rater_id: z.string().min(1),
    evidence_indices: z
      .array(z.number().int().min(1).max(nSentences))
      .refine((a) => new Set(a).size <= 3),
    support: z.number().min(-1).max(1),
    flags: z.array(z.enum(ANNOTATION_FLAGS)),
  });
}

function randomPayload(rng: () => number): SubmissionPayload {
  const raters = ["r1", "alice", "", "x"];
  const supports = [-1.5, -1, -0.30000000000000004, 0, 0.25, 1, 1.0001, NaN, Infinity];
  // Includes out-of-range, non-integer, and boolean garbage.
  const indexPool = [0, 1, 2, 3, 4, 5, 6, 7, 1.5, -2, true as unknown as number];
  const flagPool = [...ANNOTATION_FLAGS, "bogus", "uncertain"];

  const indices: number[] = [];
  const nIndices = randInt(rng, 0, 5);
  for (let i = 0; i < nIndices; i++) indices.push(pick(rng, indexPool));

  const flags: string[] = [];
  const nFlags = randInt(rng, 0, 3);
  for (let i = 0; i < nFlags; i++) flags.push(pick(rng, flagPool));

  return {
    rater_id: pick(rng, raters),
    evidence_indices: indices,
    support: pick(rng, supports),
    flags,
  };
}

describe("validateSubmission agrees with an independent zod schema", () => {
  it("matches on validity for 500 random payloads", () => {
    const rng = mulberry32(0xf00d);
    const nSentences = 6;
    const schema = zodSchema(nSentences);
    let valid = 0;
    for (let i = 0; i < 500; i++) {
      const payload = randomPayload(rng);
      const mine = validateSubmission(payload, nSentences).length === 0;
      const theirs = schema.safeParse(payload).success;
      expect(mine, JSON.stringify(payload)).toBe(theirs);
      if (mine) valid++;
    }
    // The generator must exercise both sides of the boundary.
    expect(valid).toBeGreaterThan(50);
    expect(valid).toBeLessThan(450);
  });
});

describe("validateSubmission directed cases", () => {
  const base: SubmissionPayload = {
    rater_id: "r1",
    evidence_indices: [1, 2],
    support: 0.5,
    flags: ["uncertain"],
  };
  const n = 6;

  it("accepts a canonical payload and an empty selection", () => {
    expect(validateSubmission(base, n)).toEqual([]);
    expect(
      validateSubmission({ ...base, evidence_indices: [], flags: [] }, n),
    ).toEqual([]);
  });

  it("accepts duplicated indices while the distinct count stays at three", () => {
    expect(validateSubmission({ ...base, evidence_indices: [1, 1, 2, 2] }, n)).toEqual([]);
  });

  it("rejects four distinct indices", () => {
    const problems = validateSubmission({ ...base, evidence_indices: [1, 2, 3, 4] }, n);
    expect(problems.map((p) => p.field)).toEqual(["evidence_indices"]);
  });

  it("rejects indices outside the document", () => {
    for (const badIndex of [0, n + 1, -3]) {
      const problems = validateSubmission({ ...base, evidence_indices: [badIndex] }, n);
      expect(problems.map((p) => p.field)).toEqual(["evidence_indices"]);
    }
  });

  it("rejects non-integer indices", () => {
    const problems = validateSubmission({ ...base, evidence_indices: [1.5] }, n);
    expect(problems.map((p) => p.field)).toEqual(["evidence_indices"]);
  });

  it("rejects support outside [-1, 1] but keeps the endpoints", () => {
    expect(validateSubmission({ ...base, support: 1 }, n)).toEqual([]);
    expect(validateSubmission({ ...base, support: -1 }, n)).toEqual([]);
    for (const bad of [1.0001, -1.0001, NaN, Infinity]) {
      const problems = validateSubmission({ ...base, support: bad }, n);
      expect(problems.map((p) => p.field)).toEqual(["support"]);
    }
  });

  it("rejects unknown flags and empty raters", () => {
    expect(
      validateSubmission({ ...base, flags: ["bogus"] }, n).map((p) => p.field),
    ).toEqual(["flags"]);
    expect(
      validateSubmission({ ...base, rater_id: "" }, n).map((p) => p.field),
    ).toEqual(["rater_id"]);
  });

  it("reports one problem per offending field", () => {
    const problems = validateSubmission(
      { rater_id: "", evidence_indices: [1, 2, 3, 4], support: 2, flags: ["nope"] },
      n,
    );
    expect(problems.map((p) => p.field).sort()).toEqual([
      "evidence_indices",
      "flags",
      "rater_id",
      "support",
    ]);
  });
});

describe("payload parsers", () => {
  it("round-trips a task payload through JSON", () => {
    const task = makeTask(2, 4);
    expect(parseTaskPayload(JSON.parse(JSON.stringify(task)))).toEqual(task);
  });

  it("parses a group response with a null task", () => {
    const parsed = parseGroupResponse({ task: null, group: [] });
    expect(parsed).toEqual({ task: null, group: [] });
  });

  it("parses a full group response", () => {
    const group = [makeTask(0, 3), makeTask(1, 3)];
    const parsed = parseGroupResponse({ task: group[0], group });
    expect(parsed.task?.task_id).toBe("t000000");
    expect(parsed.group).toHaveLength(2);
  });

  it("rejects malformed payloads", () => {
    expect(() => parseTaskPayload(null)).toThrow(TypeError);
    expect(() => parseTaskPayload({})).toThrow(TypeError);
    const task = JSON.parse(JSON.stringify(makeTask(0, 2))) as Record<string, unknown>;
    task["document_sentences"] = [["1", "text"]];
    expect(() => parseTaskPayload(task)).toThrow(TypeError);
    const badSpan = JSON.parse(JSON.stringify(makeTask(0, 2))) as {
      claim: { diff: unknown[] };
    };
    badSpan.claim.diff = [{ kind: "modified", text: "x" }];
    expect(() => parseTaskPayload(badSpan)).toThrow(TypeError);
    expect(() => parseGroupResponse({ group: "nope" })).toThrow(TypeError);
  });
});
