/**
 * DOM shell for the annotator.  All behaviour lives in the pure modules
 * (state.ts, diff.ts, api.ts, types.ts); this file only wires events to the
 * reducer and redraws three columns:
 *
 *   [ source document ] [ claim + controls ] [ subclaim tiles ]
 */

import { Fetcher, NETWORK_ERROR_MESSAGE, fetchNextGroup, submitGroup } from "./api.js";
import { renderClaimView } from "./diff.js";
import {
  ViewState,
  currentEntry,
  currentTask,
  initState,
  reduce,
  snapToStep,
  submitEnabled,
  UiEvent,
} from "./state.js";
import { ANNOTATION_FLAGS, AnnotationFlag } from "./types.js";

const fetcher: Fetcher = (url, init) => window.fetch(url, init);

let state: ViewState | null = null;
let finished = false;
let busy = false;
let startupError: string | null = null;

function dispatch(event: UiEvent): void {
  if (state === null) return;
  state = reduce(state, event);
  render();
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

async function loadNext(rater: string): Promise<void> {
  busy = true;
  render();
  try {
    const response = await fetchNextGroup(fetcher, "", rater);
    if (response.task === null) {
      state = null;
      finished = true;
    } else {
      const group = response.group.length > 0 ? response.group : [response.task];
      const fresh = initState(rater, group);
      const pending = response.task.task_id;
      const index = group.findIndex((t) => t.task_id === pending);
      state = index >= 0 ? { ...fresh, current: index } : fresh;
      // Subclaims the service already has answers for show as submitted.
      state = {
        ...state,
        entries: state.entries.map((entry, i) => {
          const task = group[i];
          return task !== undefined && task.status === "complete"
            ? { ...entry, submitted: true, score: 0 }
            : entry;
        }),
      };
      finished = false;
    }
    startupError = null;
  } catch {
    startupError = NETWORK_ERROR_MESSAGE;
  } finally {
    busy = false;
    render();
  }
}

async function onSubmit(): Promise<void> {
  if (state === null || busy || !submitEnabled(state)) return;
  busy = true;
  render();
  const outcome = await submitGroup(fetcher, "", state);
  state = outcome.state;
  busy = false;
  if (outcome.allSubmitted) {
    await loadNext(state.rater);
    return;
  }
  render();
}

function renderStart(root: HTMLElement): void {
  const input = el("input", {
    id: "rater-input",
    type: "text",
    placeholder: "your rater id",
    "aria-label": "rater id",
  });
  const button = el("button", { class: "primary" }, ["Start annotating"]);
  const start = (): void => {
    const rater = input.value.trim();
    if (rater.length > 0) void loadNext(rater);
  };
  button.addEventListener("click", start);
  input.addEventListener("keydown", (ev) => {
    if (ev.key === "Enter") start();
  });
  const children: (Node | string)[] = [
    el("h1", {}, ["Claim grounding annotator"]),
    el("p", {}, [
      "Read each subclaim, select up to three sentences from the document " +
        "that bear on it, and score how strongly they support it.",
    ]),
    el("div", { class: "start-form" }, [input, button]),
  ];
  if (startupError !== null) {
    children.push(el("p", { class: "error" }, [startupError]));
  }
  root.append(el("div", { class: "start-screen" }, children));
}

function renderDone(root: HTMLElement): void {
  root.append(
    el("div", { class: "start-screen" }, [
      el("h1", {}, ["All tasks complete"]),
      el("p", {}, ["Every subclaim assigned to this queue has been annotated."]),
    ]),
  );
}

function renderSourceColumn(s: ViewState): HTMLElement {
  const task = currentTask(s);
  const entry = currentEntry(s);
  const column = el("section", { class: "column source-column" });
  if (task === undefined || entry === undefined) return column;
  column.append(
    el("h2", {}, [
      task.judged_against === "source" ? "Cited source" : "Article body",
    ]),
    el("p", { class: "hint" }, [
      "Click sentences to select them as evidence (up to three).",
    ]),
  );
  const list = el("ol", { class: "sentences" });
  for (const [index, text] of task.document_sentences) {
    const selected = entry.selections.includes(index);
    const item = el(
      "li",
      {
        class: selected ? "sentence selected" : "sentence",
        "data-index": String(index),
      },
      [el("span", { class: "sentence-number" }, [String(index)]), " ", text],
    );
    item.addEventListener("click", () =>
      dispatch({ type: "SELECT_EVIDENCE", sentence: index }),
    );
    list.append(item);
  }
  column.append(list);
  return column;
}

function flagLabel(flag: AnnotationFlag): string {
  switch (flag) {
    case "bad_source":
      return "Source is unusable";
    case "bad_decontextualization":
      return "Standalone rewrite is wrong";
    case "uncertain":
      return "Uncertain";
  }
}

function renderClaimColumn(s: ViewState): HTMLElement {
  const task = currentTask(s);
  const entry = currentEntry(s);
  const column = el("section", { class: "column claim-column" });
  if (task === undefined || entry === undefined) return column;

  column.append(
    el("h2", {}, [`Subclaim ${s.current + 1} of ${s.group.length}`]),
    el("p", { class: "meta" }, [
      `${task.claim.scope} claim - entity ${task.owner_id}`,
    ]),
  );

  // Claim text with the edit diff highlighted.
  const claimBox = el("div", { class: "claim-text" });
  for (const segment of renderClaimView(task.claim.diff, s.showDecontextualized)) {
    claimBox.append(
      el("span", { class: segment.highlighted ? "edited" : "" }, [segment.text]),
    );
  }
  const diffToggle = el("button", { class: "toggle" }, [
    s.showDecontextualized ? "Show original wording" : "Show standalone wording",
  ]);
  diffToggle.addEventListener("click", () =>
    dispatch({ type: "TOGGLE_DECONTEXTUALIZED" }),
  );
  column.append(claimBox, diffToggle);

  // Optional context for the rater.
  const infoToggle = el("button", { class: "toggle" }, [
    s.showMoreInfo ? "Hide context" : "More context",
  ]);
  infoToggle.addEventListener("click", () => dispatch({ type: "TOGGLE_MORE_INFO" }));
  column.append(infoToggle);
  if (s.showMoreInfo) {
    column.append(
      el("div", { class: "more-info" }, [
        el("p", {}, [el("strong", {}, ["Parent sentence: "]), task.more_info.parent_sentence]),
        el("p", {}, [el("strong", {}, ["Context: "]), task.more_info.context]),
      ]),
    );
  }

  // Score controls: a 0.1-step slider plus a free-form numeric field.
  const scoreRow = el("div", { class: "score-row" });
  const slider = el("input", {
    type: "range",
    min: "-1",
    max: "1",
    step: "0.1",
    value: String(entry.score ?? 0),
    "aria-label": "support score slider",
  });
  const number = el("input", {
    type: "number",
    min: "-1",
    max: "1",
    step: "0.1",
    value: entry.score === null ? "" : String(entry.score),
    "aria-label": "support score",
  });
  slider.addEventListener("change", () =>
    dispatch({ type: "SET_SCORE", value: snapToStep(Number(slider.value)) }),
  );
  slider.addEventListener("input", () => {
    number.value = slider.value; // live preview without re-rendering mid-drag
  });
  number.addEventListener("change", () => {
    const raw = number.value.trim();
    dispatch({ type: "SET_SCORE", value: raw === "" ? null : Number(raw) });
  });
  scoreRow.append(
    el("label", {}, ["Support score (-1 refutes, +1 supports)"]),
    slider,
    number,
  );
  column.append(scoreRow);

  // Flags.
  const flagsBox = el("div", { class: "flags" });
  for (const flag of ANNOTATION_FLAGS) {
    const checkbox = el("input", { type: "checkbox", id: `flag-${flag}` });
    (checkbox as HTMLInputElement).checked = entry.flags.includes(flag);
    checkbox.addEventListener("change", () => dispatch({ type: "TOGGLE_FLAG", flag }));
    flagsBox.append(
      el("label", { class: "flag", for: `flag-${flag}` }, [checkbox, flagLabel(flag)]),
    );
  }
  column.append(flagsBox);

  const uncertain = el("button", { class: "toggle" }, ["I'm uncertain"]);
  uncertain.addEventListener("click", () => dispatch({ type: "MARK_UNCERTAIN" }));
  column.append(uncertain);

  if (s.warning !== null) {
    column.append(el("p", { class: "warning", role: "alert" }, [s.warning]));
  }
  for (const problem of entry.fieldErrors) {
    column.append(
      el("p", { class: "error" }, [`${problem.field}: ${problem.error}`]),
    );
  }
  if (s.error !== null) {
    column.append(el("p", { class: "error", role: "alert" }, [s.error]));
  }

  // Navigation and submission.
  const nav = el("div", { class: "nav-row" });
  const back = el("button", {}, ["Back"]);
  back.addEventListener("click", () => dispatch({ type: "BACK" }));
  const next = el("button", {}, ["Next"]);
  next.addEventListener("click", () => dispatch({ type: "NEXT" }));
  const submit = el("button", { class: "primary" }, [
    busy ? "Submitting..." : s.error !== null ? "Retry submit" : "Submit group",
  ]);
  (submit as HTMLButtonElement).disabled = busy || !submitEnabled(s);
  submit.addEventListener("click", () => void onSubmit());
  (back as HTMLButtonElement).disabled = s.current === 0;
  (next as HTMLButtonElement).disabled = s.current === s.group.length - 1;
  nav.append(back, next, submit);
  column.append(nav);

  return column;
}

function renderTilesColumn(s: ViewState): HTMLElement {
  const column = el("section", { class: "column tiles-column" });
  column.append(el("h2", {}, ["Subclaims"]));
  const tiles = el("div", { class: "tiles" });
  s.entries.forEach((entry, index) => {
    const task = s.group[index];
    if (task === undefined) return;
    const classes = ["tile"];
    if (index === s.current) classes.push("active");
    if (entry.submitted) classes.push("submitted");
    else if (entry.score !== null) classes.push("scored");
    if (entry.fieldErrors.length > 0) classes.push("rejected");
    const status = entry.submitted
      ? "submitted"
      : entry.fieldErrors.length > 0
        ? "rejected"
        : entry.score !== null
          ? `scored ${entry.score}`
          : "unscored";
    const tile = el("button", { class: classes.join(" ") }, [
      el("span", { class: "tile-title" }, [`#${task.claim.ordinal + 1}`]),
      el("span", { class: "tile-text" }, [task.claim.decontextualized]),
      el("span", { class: "tile-status" }, [status]),
    ]);
    tile.addEventListener("click", () => dispatch({ type: "GOTO", index }));
    tiles.append(tile);
  });
  column.append(tiles);
  return column;
}

function render(): void {
  const root = document.getElementById("app");
  if (root === null) return;
  root.replaceChildren();
  if (state === null) {
    if (finished) renderDone(root);
    else renderStart(root);
    return;
  }
  const header = el("header", {}, [
    el("span", { class: "brand" }, ["groundcheck annotator"]),
    el("span", { class: "rater" }, [`rater: ${state.rater}`]),
  ]);
  const columns = el("main", { class: "columns" }, [
    renderSourceColumn(state),
    renderClaimColumn(state),
    renderTilesColumn(state),
  ]);
  root.append(header, columns);
}

render();
