/**
 * Pure view-state reducer for the annotator.
 *
 * All interaction goes through `reduce(state, event)`, which returns a new
 * state and never mutates its input, so invariants can be property-tested
 * with random event streams:
 *   - per-subclaim evidence selections never exceed MAX_EVIDENCE (a fourth
 *     distinct selection is rejected with a visible warning);
 *   - scores are null or clamped to [-1, 1];
 *   - SUBMIT is enabled only when every subclaim of the task has a score.
 */

import {
  AnnotationFlag,
  FieldProblem,
  MAX_EVIDENCE,
  TaskPayload,
} from "./types.js";

export interface SubclaimEntry {
  taskId: string;
  /** 1-based sentence indices, in selection order, length <= MAX_EVIDENCE. */
  selections: number[];
  /** null until the rater scores this subclaim. */
  score: number | null;
  flags: AnnotationFlag[];
  /** Per-field problems from the last rejected submission. */
  fieldErrors: FieldProblem[];
  submitted: boolean;
}

export interface ViewState {
  rater: string;
  group: TaskPayload[];
  /** Index of the subclaim currently shown, always within the group. */
  current: number;
  showDecontextualized: boolean;
  showMoreInfo: boolean;
  entries: SubclaimEntry[];
  /** Visible rejection message (e.g. selecting a fourth sentence). */
  warning: string | null;
  /** Network-failure prompt; local state is preserved while it shows. */
  error: string | null;
}

export type UiEvent =
  | { type: "SELECT_EVIDENCE"; sentence: number }
  | { type: "SET_SCORE"; value: number | null }
  | { type: "TOGGLE_FLAG"; flag: AnnotationFlag }
  | { type: "MARK_UNCERTAIN" }
  | { type: "TOGGLE_DECONTEXTUALIZED" }
  | { type: "TOGGLE_MORE_INFO" }
  | { type: "NEXT" }
  | { type: "BACK" }
  | { type: "GOTO"; index: number };

export const SELECTION_LIMIT_MESSAGE = `At most ${MAX_EVIDENCE} sentences can be selected together.`;

export function clampScore(value: number): number {
  return Math.min(1, Math.max(-1, value));
}

/** Snap a slider value to the widget's 0.1 step (typed decimals stay free-form). */
export function snapToStep(value: number): number {
  return clampScore(Math.round(value * 10) / 10);
}

export function initState(rater: string, group: TaskPayload[]): ViewState {
  return {
    rater,
    group,
    current: 0,
    // The decontextualized wording is what gets judged, so show it first.
    showDecontextualized: true,
    showMoreInfo: false,
    entries: group.map((task) => ({
      taskId: task.task_id,
      selections: [],
      score: null,
      flags: [],
      fieldErrors: [],
      submitted: false,
    })),
    warning: null,
    error: null,
  };
}

export function currentTask(state: ViewState): TaskPayload | undefined {
  return state.group[state.current];
}

export function currentEntry(state: ViewState): SubclaimEntry | undefined {
  return state.entries[state.current];
}

export function selectionCount(state: ViewState): number {
  return currentEntry(state)?.selections.length ?? 0;
}

/** SUBMIT is enabled only when every subclaim has a score (selections may be empty). */
export function submitEnabled(state: ViewState): boolean {
  return state.entries.length > 0 && state.entries.every((e) => e.score !== null);
}

function replaceEntry(
  state: ViewState,
  index: number,
  patch: Partial<SubclaimEntry>,
): ViewState {
  const entries = state.entries.map((e, i) => (i === index ? { ...e, ...patch } : e));
  return { ...state, entries };
}

export function reduce(state: ViewState, event: UiEvent): ViewState {
  const entry = currentEntry(state);
  const task = currentTask(state);
  switch (event.type) {
    case "SELECT_EVIDENCE": {
      if (entry === undefined || task === undefined) return state;
      const n = task.document_sentences.length;
      if (!Number.isInteger(event.sentence) || event.sentence < 1 || event.sentence > n) {
        return state; // sentence does not exist
      }
      if (entry.selections.includes(event.sentence)) {
        return {
          ...replaceEntry(state, state.current, {
            selections: entry.selections.filter((s) => s !== event.sentence),
            submitted: false,
          }),
          warning: null,
        };
      }
      if (entry.selections.length >= MAX_EVIDENCE) {
        return { ...state, warning: SELECTION_LIMIT_MESSAGE };
      }
      return {
        ...replaceEntry(state, state.current, {
          selections: [...entry.selections, event.sentence],
          submitted: false,
        }),
        warning: null,
      };
    }
    case "SET_SCORE": {
      if (entry === undefined) return state;
      const value =
        event.value === null || !Number.isFinite(event.value)
          ? null
          : clampScore(event.value);
      return {
        ...replaceEntry(state, state.current, { score: value, submitted: false }),
        warning: null,
      };
    }
    case "TOGGLE_FLAG": {
      if (entry === undefined) return state;
      const flags = entry.flags.includes(event.flag)
        ? entry.flags.filter((f) => f !== event.flag)
        : [...entry.flags, event.flag];
      return {
        ...replaceEntry(state, state.current, { flags, submitted: false }),
        warning: null,
      };
    }
    case "MARK_UNCERTAIN": {
      // Uncertainty is submitted, not skipped: set the flag, and default the
      // score to 0 so the subclaim counts as scored.
      if (entry === undefined) return state;
      const flags = entry.flags.includes("uncertain")
        ? entry.flags
        : [...entry.flags, "uncertain" as AnnotationFlag];
      return {
        ...replaceEntry(state, state.current, {
          flags,
          score: entry.score === null ? 0 : entry.score,
          submitted: false,
        }),
        warning: null,
      };
    }
    case "TOGGLE_DECONTEXTUALIZED":
      return { ...state, showDecontextualized: !state.showDecontextualized };
    case "TOGGLE_MORE_INFO":
      return { ...state, showMoreInfo: !state.showMoreInfo };
    case "NEXT":
      return {
        ...state,
        current: Math.min(state.group.length - 1, state.current + 1),
        warning: null,
      };
    case "BACK":
      return { ...state, current: Math.max(0, state.current - 1), warning: null };
    case "GOTO": {
      if (!Number.isInteger(event.index) || event.index < 0 || event.index >= state.group.length) {
        return state;
      }
      return { ...state, current: event.index, warning: null };
    }
  }
}
