/** View model for the run-comparison table. The server decides which cell
 * is best per metric (including lower-is-better latency rows); this only
 * formats what it said. */

import type { CompareTable } from "./types.js";

export interface CompareCell {
  runId: string;
  display: string;
  best: boolean;
}

export interface CompareViewRow {
  name: string;
  lowerIsBetter: boolean;
  cells: CompareCell[];
}

export function toCompareView(table: CompareTable): CompareViewRow[] {
  return table.metrics.map((row) => ({
    name: row.name,
    lowerIsBetter: row.lower_is_better,
    cells: table.run_ids.map((runId) => {
      const value = row.values[runId];
      return {
        runId,
        display: value == null ? "—" : value.toFixed(4),
        best: row.best === runId,
      };
    }),
  }));
}
