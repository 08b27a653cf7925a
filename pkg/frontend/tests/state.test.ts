import { describe, expect, it } from "vitest";

import {
  SELECTION_LIMIT_MESSAGE,
  UiEvent,
  ViewState,
  clampScore,
  currentEntry,
  initState,
  reduce,
  snapToStep,
  submitEnabled,
} from "../src/state.js";
import { ANNOTATION_FLAGS, MAX_EVIDENCE } from "../src/types.js";
import { makeGroup, mulberry32, pick, randInt } from "./helpers.js";

function randomEvent(rng: () => number, state: ViewState): UiEvent {
  const kind = randInt(rng, 0, 8);
  switch (kind) {
    case 0:
      // Deliberately includes out-of-document indices (0, n+1, n+2).
      return { type: "SELECT_EVIDENCE", sentence: randInt(rng, 0, 8) };
    case 1:
      return {
        type: "SET_SCORE",
        value: pick(rng, [null, -2.5, -1, -0.3, 0, 0.25, 0.7, 1, 1.7, NaN]),
      };
    case 2:
      return { type: "TOGGLE_FLAG", flag: pick(rng, ANNOTATION_FLAGS) };
    case 3:
      return { type: "MARK_UNCERTAIN" };
    case 4:
      return { type: "TOGGLE_DECONTEXTUALIZED" };
    case 5:
      return { type: "TOGGLE_MORE_INFO" };
    case 6:
      return { type: "NEXT" };
    case 7:
      return { type: "BACK" };
    default:
      return { type: "GOTO", index: randInt(rng, -1, state.group.length) };
  }
}

describe("state invariants under random event streams", () => {
  it("keeps every invariant over 300 random streams", () => {
    const rng = mulberry32(0x5eed);
    for (let stream = 0; stream < 300; stream++) {
      const groupSize = randInt(rng, 1, 5);
      const nSentences = 6;
      let state = initState("rater-1", makeGroup(groupSize, nSentences));
      for (let step = 0; step < 60; step++) {
        state = reduce(state, randomEvent(rng, state));

        expect(state.current).toBeGreaterThanOrEqual(0);
        expect(state.current).toBeLessThan(state.group.length);
        for (const entry of state.entries) {
          // Never more than MAX_EVIDENCE selections, all distinct, all real.
          expect(entry.selections.length).toBeLessThanOrEqual(MAX_EVIDENCE);
          expect(new Set(entry.selections).size).toBe(entry.selections.length);
          for (const s of entry.selections) {
            expect(Number.isInteger(s)).toBe(true);
            expect(s).toBeGreaterThanOrEqual(1);
            expect(s).toBeLessThanOrEqual(nSentences);
          }
          // Scores are null or clamped into [-1, 1].
          if (entry.score !== null) {
            expect(entry.score).toBeGreaterThanOrEqual(-1);
            expect(entry.score).toBeLessThanOrEqual(1);
          }
          for (const flag of entry.flags) {
            expect(ANNOTATION_FLAGS).toContain(flag);
          }
        }
        // SUBMIT gating: enabled exactly when every subclaim is scored.
        expect(submitEnabled(state)).toBe(
          state.entries.every((e) => e.score !== null),
        );
      }
    }
  });
});

describe("evidence selection", () => {
  it("rejects a fourth distinct selection with a visible warning", () => {
    let state = initState("r", makeGroup(1));
    for (const s of [1, 2, 3]) {
      state = reduce(state, { type: "SELECT_EVIDENCE", sentence: s });
    }
    expect(currentEntry(state)?.selections).toEqual([1, 2, 3]);
    expect(state.warning).toBeNull();

    state = reduce(state, { type: "SELECT_EVIDENCE", sentence: 4 });
    expect(currentEntry(state)?.selections).toEqual([1, 2, 3]);
    expect(state.warning).toBe(SELECTION_LIMIT_MESSAGE);
  });

  it("allows swapping a selection after deselecting", () => {
    let state = initState("r", makeGroup(1));
    for (const s of [1, 2, 3, 4]) {
      state = reduce(state, { type: "SELECT_EVIDENCE", sentence: s });
    }
    state = reduce(state, { type: "SELECT_EVIDENCE", sentence: 2 }); // deselect
    expect(currentEntry(state)?.selections).toEqual([1, 3]);
    state = reduce(state, { type: "SELECT_EVIDENCE", sentence: 4 });
    expect(currentEntry(state)?.selections).toEqual([1, 3, 4]);
    expect(state.warning).toBeNull();
  });

  it("ignores selections outside the document", () => {
    let state = initState("r", makeGroup(1, 3));
    state = reduce(state, { type: "SELECT_EVIDENCE", sentence: 0 });
    state = reduce(state, { type: "SELECT_EVIDENCE", sentence: 4 });
    state = reduce(state, { type: "SELECT_EVIDENCE", sentence: 2.5 });
    expect(currentEntry(state)?.selections).toEqual([]);
  });

  it("keeps selections per subclaim when navigating", () => {
    let state = initState("r", makeGroup(3));
    state = reduce(state, { type: "SELECT_EVIDENCE", sentence: 1 });
    state = reduce(state, { type: "NEXT" });
    state = reduce(state, { type: "SELECT_EVIDENCE", sentence: 5 });
    state = reduce(state, { type: "BACK" });
    expect(currentEntry(state)?.selections).toEqual([1]);
    expect(state.entries[1]?.selections).toEqual([5]);
  });
});

describe("scores", () => {
  it("clamps out-of-range scores", () => {
    expect(clampScore(1.7)).toBe(1);
    expect(clampScore(-5)).toBe(-1);
    expect(clampScore(0.25)).toBe(0.25);
  });

  it("snaps slider values to the 0.1 step", () => {
    expect(snapToStep(0.26)).toBeCloseTo(0.3, 12);
    expect(snapToStep(-0.44)).toBeCloseTo(-0.4, 12);
    expect(snapToStep(3)).toBe(1);
  });

  it("keeps free-form decimals typed into the numeric field", () => {
    let state = initState("r", makeGroup(1));
    state = reduce(state, { type: "SET_SCORE", value: 0.25 });
    expect(currentEntry(state)?.score).toBe(0.25);
  });

  it("treats NaN as clearing the score", () => {
    let state = initState("r", makeGroup(1));
    state = reduce(state, { type: "SET_SCORE", value: 0.5 });
    state = reduce(state, { type: "SET_SCORE", value: NaN });
    expect(currentEntry(state)?.score).toBeNull();
  });
});

describe("submit gating", () => {
  it("enables SUBMIT only once every subclaim has a score", () => {
    let state = initState("r", makeGroup(3));
    expect(submitEnabled(state)).toBe(false);
    state = reduce(state, { type: "SET_SCORE", value: 0.4 });
    expect(submitEnabled(state)).toBe(false);
    state = reduce(state, { type: "NEXT" });
    state = reduce(state, { type: "SET_SCORE", value: -0.2 });
    state = reduce(state, { type: "NEXT" });
    expect(submitEnabled(state)).toBe(false);
    state = reduce(state, { type: "SET_SCORE", value: 0 });
    expect(submitEnabled(state)).toBe(true);
    // An empty evidence selection does not block submission.
    expect(currentEntry(state)?.selections).toEqual([]);
  });
});

describe("uncertain", () => {
  it("sets the flag and defaults an unset score to 0", () => {
    let state = initState("r", makeGroup(1));
    state = reduce(state, { type: "MARK_UNCERTAIN" });
    expect(currentEntry(state)?.flags).toContain("uncertain");
    expect(currentEntry(state)?.score).toBe(0);
  });

  it("never overwrites an existing score", () => {
    let state = initState("r", makeGroup(1));
    state = reduce(state, { type: "SET_SCORE", value: 0.7 });
    state = reduce(state, { type: "MARK_UNCERTAIN" });
    expect(currentEntry(state)?.score).toBe(0.7);
  });
});

describe("view toggles", () => {
  it("decontextualized toggle is an involution", () => {
    const rng = mulberry32(7);
    let state = initState("r", makeGroup(2));
    for (let i = 0; i < 20; i++) {
      state = reduce(state, randomEvent(rng, state));
    }
    const once = reduce(state, { type: "TOGGLE_DECONTEXTUALIZED" });
    const twice = reduce(once, { type: "TOGGLE_DECONTEXTUALIZED" });
    expect(once.showDecontextualized).toBe(!state.showDecontextualized);
    expect(twice).toEqual(state);
  });

  it("more-info toggle is an involution", () => {
    const state = initState("r", makeGroup(1));
    const twice = reduce(
      reduce(state, { type: "TOGGLE_MORE_INFO" }),
      { type: "TOGGLE_MORE_INFO" },
    );
    expect(twice).toEqual(state);
  });
});

describe("navigation", () => {
  it("clamps NEXT/BACK at the ends and validates GOTO", () => {
    let state = initState("r", makeGroup(2));
    state = reduce(state, { type: "BACK" });
    expect(state.current).toBe(0);
    state = reduce(state, { type: "NEXT" });
    state = reduce(state, { type: "NEXT" });
    expect(state.current).toBe(1);
    state = reduce(state, { type: "GOTO", index: 5 });
    expect(state.current).toBe(1);
    state = reduce(state, { type: "GOTO", index: 0 });
    expect(state.current).toBe(0);
  });
});
