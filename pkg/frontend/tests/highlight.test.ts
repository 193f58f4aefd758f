import { describe, expect, it } from "vitest";

import { joinSegments, segmentText } from "../src/highlight.js";
import type { Span } from "../src/types.js";

describe("segmentText", () => {
  it("marks a single span without altering text", () => {
    const text = "It is Paris.";
    const spans: Span[] = [{ start: 6, end: 11, kind: "gold_answer" }];
    const segments = segmentText(text, spans);
    expect(joinSegments(segments)).toBe(text);
    expect(segments).toEqual([
      { text: "It is ", kind: null },
      { text: "Paris", kind: "gold_answer" },
      { text: ".", kind: null },
    ]);
  });

  it("handles multiple spans of both kinds", () => {
    const text = "Paris, 11; London, 22";
    const spans: Span[] = [
      { start: 0, end: 5, kind: "gold_answer" },
      { start: 7, end: 9, kind: "provenance_hit" },
    ];
    const segments = segmentText(text, spans);
    expect(joinSegments(segments)).toBe(text);
    expect(segments.filter((s) => s.kind === "gold_answer")).toHaveLength(1);
    expect(segments.filter((s) => s.kind === "provenance_hit")).toHaveLength(1);
  });

  it("gold wins where kinds overlap", () => {
    const text = "abcdef";
    const spans: Span[] = [
      { start: 0, end: 6, kind: "provenance_hit" },
      { start: 2, end: 4, kind: "gold_answer" },
    ];
    const segments = segmentText(text, spans);
    expect(joinSegments(segments)).toBe(text);
    expect(segments.map((s) => s.kind)).toEqual([
      "provenance_hit", "gold_answer", "provenance_hit",
    ]);
  });

  it("clamps out-of-range spans and keeps text intact", () => {
    const text = "short";
    const spans: Span[] = [{ start: 3, end: 99, kind: "gold_answer" }];
    expect(joinSegments(segmentText(text, spans))).toBe(text);
  });

  it("no spans -> one unmarked segment", () => {
    expect(segmentText("plain", [])).toEqual([{ text: "plain", kind: null }]);
  });

  it("empty text -> no segments", () => {
    expect(segmentText("", [{ start: 0, end: 1, kind: "gold_answer" }])).toEqual([]);
  });

  it("preserves unicode content byte-for-byte", () => {
    const text = "naïve 漢字 answer";
    const spans: Span[] = [{ start: 0, end: 5, kind: "gold_answer" }];
    expect(joinSegments(segmentText(text, spans))).toBe(text);
  });
});
