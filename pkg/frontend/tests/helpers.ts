/** Shared test fixtures: a seeded RNG and task-payload builders. */

import { TaskPayload } from "../src/types.js";

/** Deterministic 32-bit RNG (mulberry32) so property tests are replayable. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randInt(rng: () => number, lo: number, hi: number): number {
  return lo + Math.floor(rng() * (hi - lo + 1));
}

export function pick<T>(rng: () => number, items: readonly T[]): T {
  const item = items[Math.floor(rng() * items.length)];
  if (item === undefined) throw new Error("pick from empty list");
  return item;
}

export function makeTask(ordinal: number, nSentences: number): TaskPayload {
  const sentences: [number, string][] = [];
  for (let i = 1; i <= nSentences; i++) {
    sentences.push([i, `Sentence ${i} of the document.`]);
  }
  return {
    task_id: `t${String(ordinal).padStart(6, "0")}`,
    group_id: "lead:entity-a:0",
    claim: {
      claim_id: `lead:entity-a:0#${ordinal}`,
      contextualized: `It did the thing ${ordinal}.`,
      decontextualized: `The entity did the thing ${ordinal}.`,
      ordinal,
      scope: "lead",
      diff: [
        { kind: "removed", text: "It" },
        { kind: "added", text: "The entity" },
        { kind: "kept", text: ` did the thing ${ordinal}.` },
      ],
    },
    judged_against: "body",
    owner_id: "entity-a",
    document_sentences: sentences,
    more_info: {
      parent_sentence: "It did the thing, among others.",
      context: "A longer passage around the parent sentence.",
    },
    status: "pending",
  };
}

export function makeGroup(size: number, nSentences = 6): TaskPayload[] {
  const group: TaskPayload[] = [];
  for (let i = 0; i < size; i++) {
    group.push(makeTask(i, nSentences));
  }
  return group;
}
