/** Runs tab: run listing with selection, and the server's comparison
 * table rendered with per-metric best highlighting. */

import { VNode, h } from "../dom.js";
import { CompareViewRow } from "../compare.js";
import type { RunSummary } from "../types.js";

export interface RunsHandlers {
  onToggle(runId: string): void;
  onCompare(): void;
}

export function runsView(runs: RunSummary[], selected: Set<string>,
                         compare: CompareViewRow[] | null, runIds: string[],
                         handlers: RunsHandlers): VNode {
  return h("div", { class: "runs" },
    h("table", { class: "runs-table" },
      h("thead", {},
        h("tr", {},
          ["", "run", "created", "status", "dataset"].map((t) => h("th", {}, t)))),
      h("tbody", {},
        runs.map((run) =>
          h("tr", { class: run.status },
            h("td", {},
              h("input", {
                type: "checkbox",
                checked: selected.has(run.run_id) ? "" : null,
                onchange: () => handlers.onToggle(run.run_id),
              })),
            h("td", { class: "run-id" }, run.run_id),
            h("td", {}, run.created_at),
            h("td", {}, run.status),
            h("td", {}, run.dataset_tag))))),
    h("button", {
      class: "compare",
      disabled: selected.size < 2 ? "" : null,
      onclick: () => handlers.onCompare(),
    }, `Compare ${selected.size} runs`),
    compare
      ? h("table", { class: "compare-table" },
          h("thead", {},
            h("tr", {},
              [h("th", {}, "metric"),
               ...runIds.map((rid) => h("th", { class: "run-col" }, rid.slice(-8)))])),
          h("tbody", {},
            compare.map((row) =>
              h("tr", {},
                [h("td", { class: "metric-name" },
                   row.name + (row.lowerIsBetter ? " ↓" : "")),
                 ...row.cells.map((cell) =>
                   h("td", { class: cell.best ? "cell best" : "cell" },
                     cell.display))]))))
      : null);
}
