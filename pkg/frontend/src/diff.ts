/**
 * Render a claim's edit diff in either of its two forms.
 *
 * A claim is stored with a span diff between its contextualized and
 * decontextualized wording:
 *   - "kept" spans occur in both forms,
 *   - "removed" spans occur only in the contextualized form,
 *   - "added" spans occur only in the decontextualized form.
 *
 * The decontextualized view shows kept + added text with the added spans
 * highlighted; the contextualized view shows kept + removed text with the
 * removed spans highlighted.  When the two forms are identical the diff is
 * a single kept span and neither view carries a highlight.
 */

import { EditSpan } from "./types.js";

export interface RenderedSegment {
  text: string;
  /** true when this segment should be visually highlighted as an edit. */
  highlighted: boolean;
}

export function renderClaimView(
  spans: EditSpan[],
  decontextualized: boolean,
): RenderedSegment[] {
  const segments: RenderedSegment[] = [];
  for (const span of spans) {
    if (span.text === "") continue;
    if (span.kind === "kept") {
      segments.push({ text: span.text, highlighted: false });
    } else if (decontextualized && span.kind === "added") {
      segments.push({ text: span.text, highlighted: true });
    } else if (!decontextualized && span.kind === "removed") {
      segments.push({ text: span.text, highlighted: true });
    }
  }
  return segments;
}

/** The plain text of a rendered view, for equality checks against the stored forms. */
export function renderedText(segments: RenderedSegment[]): string {
  return segments.map((s) => s.text).join("");
}
