import { describe, expect, it } from "vitest";

import { renderClaimView, renderedText } from "../src/diff.js";
import { EditSpan } from "../src/types.js";

const EDITED: EditSpan[] = [
  { kind: "removed", text: "It" },
  { kind: "added", text: "The index" },
  { kind: "kept", text: " rose by four points." },
];

describe("renderClaimView", () => {
  it("renders an identity diff without highlights in either view", () => {
    const spans: EditSpan[] = [{ kind: "kept", text: "The cat sat." }];
    for (const view of [true, false]) {
      const segments = renderClaimView(spans, view);
      expect(segments).toEqual([{ text: "The cat sat.", highlighted: false }]);
    }
  });

  it("shows added spans highlighted only in the decontextualized view", () => {
    const decon = renderClaimView(EDITED, true);
    expect(renderedText(decon)).toBe("The index rose by four points.");
    expect(decon.filter((s) => s.highlighted)).toEqual([
      { text: "The index", highlighted: true },
    ]);

    const context = renderClaimView(EDITED, false);
    expect(renderedText(context)).toBe("It rose by four points.");
    expect(context.filter((s) => s.highlighted)).toEqual([
      { text: "It", highlighted: true },
    ]);
  });

  it("reconstructs each wording from kept plus its own edit spans", () => {
    const spans: EditSpan[] = [
      { kind: "kept", text: "Mira Calloway " },
      { kind: "removed", text: "then " },
      { kind: "added", text: "afterwards " },
      { kind: "kept", text: "joined the board" },
      { kind: "removed", text: " there" },
      { kind: "kept", text: "." },
    ];
    expect(renderedText(renderClaimView(spans, true))).toBe(
      "Mira Calloway afterwards joined the board.",
    );
    expect(renderedText(renderClaimView(spans, false))).toBe(
      "Mira Calloway then joined the board there.",
    );
  });

  it("drops empty spans", () => {
    const spans: EditSpan[] = [
      { kind: "kept", text: "" },
      { kind: "added", text: "All of it." },
    ];
    expect(renderClaimView(spans, true)).toEqual([
      { text: "All of it.", highlighted: true },
    ]);
    expect(renderClaimView(spans, false)).toEqual([]);
  });
});
