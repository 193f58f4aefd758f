/** Turn server highlight spans into renderable segments.
 *
 * The invariant the chain editor relies on: concatenating the segment
 * texts reproduces the input byte-for-byte — highlighting styles regions,
 * it never alters content. Gold-answer spans take precedence where a
 * provenance span overlaps.
 */

import type { Span, SpanKind } from "./types.js";

export interface Segment {
  text: string;
  kind: SpanKind | null;
}

const PRIORITY: Record<SpanKind, number> = {
  provenance_hit: 1,
  gold_answer: 2,
};

export function segmentText(text: string, spans: Span[]): Segment[] {
  if (text.length === 0) {
    return [];
  }
  const kindAt: (SpanKind | null)[] = new Array(text.length).fill(null);
  for (const span of spans) {
    const start = Math.max(0, span.start);
    const end = Math.min(text.length, span.end);
    for (let i = start; i < end; i++) {
      const current = kindAt[i];
      if (current === null || PRIORITY[span.kind] > PRIORITY[current]) {
        kindAt[i] = span.kind;
      }
    }
  }
  const segments: Segment[] = [];
  let runStart = 0;
  for (let i = 1; i <= text.length; i++) {
    if (i === text.length || kindAt[i] !== kindAt[runStart]) {
      segments.push({ text: text.slice(runStart, i), kind: kindAt[runStart] });
      runStart = i;
    }
  }
  return segments;
}

/** Sanity helper used by views and tests. */
export function joinSegments(segments: Segment[]): string {
  return segments.map((s) => s.text).join("");
}
