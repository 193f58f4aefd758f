/** Develop-chain tab: per-action template editing with interpret/execute,
 * whole-chain execution, trace panels with server-computed highlighting,
 * and the selected question + gold answer pinned at the bottom. */

import { Child, VNode, h } from "../dom.js";
import { segmentText } from "../highlight.js";
import type { EditorState } from "../state.js";
import type {
  DatasetEntry,
  DatasetPage,
  HitOut,
  IndexEntry,
  Span,
  TraceOut,
} from "../types.js";

export interface EditorHandlers {
  onTemplate(k: number, source: string): void;
  onMode(k: number, mode: string): void;
  onOperator(k: number, operator: string): void;
  onRetriever(k: number, ref: string, topK: number): void;
  onAddAction(): void;
  onRemoveAction(k: number): void;
  onSave(): void;
  onPreview(k: number): void;
  onExecute(k: number): void;
  onExecuteChain(): void;
  onSelectDataset(tag: string): void;
  onPage(offset: number): void;
  onSelectInstance(i: number): void;
}

export interface DatasetPanelState {
  datasets: DatasetEntry[];
  selected: string | null;
  page: DatasetPage | null;
  offset: number;
  limit: number;
}

export function highlighted(text: string, spans: Span[]): Child[] {
  return segmentText(text, spans).map((seg) =>
    seg.kind === null
      ? (seg.text as Child)
      : h("mark", { class: `hl ${seg.kind}` }, seg.text));
}

function hitView(hit: HitOut): VNode {
  return h("div", { class: "hit" + (hit.provenance_hit ? " hit-provenance" : "") },
    h("div", { class: "hit-head" },
      h("span", { class: "hit-title" }, hit.title),
      h("span", { class: "hit-wiki" + (hit.provenance_hit ? " provenance" : "") },
        `wiki ${hit.wiki_id}`),
      h("span", { class: "hit-score" }, hit.score.toFixed(4))),
    h("div", { class: "hit-text" }, highlighted(hit.text, hit.text_spans)));
}

function traceView(trace: TraceOut): VNode {
  return h("div", { class: "trace" },
    h("div", { class: "trace-head" },
      `Action ${trace.action_index + 1} · ${trace.operator} · `
      + `${(trace.latency_s * 1000).toFixed(1)} ms`),
    h("details", { open: "" },
      h("summary", {}, "prompt sent"),
      h("pre", { class: "prompt" }, trace.rendered_prompt)),
    h("div", { class: "trace-output" },
      highlighted(trace.output, trace.highlight_spans)),
    trace.hits.length
      ? h("div", { class: "hits" }, trace.hits.map(hitView))
      : null);
}

function actionPanel(state: EditorState, k: number,
                     indices: IndexEntry[], handlers: EditorHandlers): VNode {
  const action = state.draft.actions[k];
  const preview = state.previews[k];
  const trace = state.traces[k];
  return h("section", { class: "action" },
    h("div", { class: "action-head" },
      h("span", { class: "action-label" }, `Action ${k + 1}`),
      h("select", {
        class: "operator",
        value: action.operator,
        onchange: (e: Event) =>
          handlers.onOperator(k, (e.target as HTMLSelectElement).value),
      },
        ["Retriever", "LLM", "Identity"].map((op) =>
          h("option", { value: op, selected: op === action.operator }, op))),
      h("select", {
        class: "mode",
        value: action.template.mode,
        onchange: (e: Event) =>
          handlers.onMode(k, (e.target as HTMLSelectElement).value),
      },
        ["literal", "expression"].map((m) =>
          h("option", { value: m, selected: m === action.template.mode }, m))),
      action.operator === "Retriever"
        ? h("select", {
            class: "retriever",
            value: action.retriever_ref ?? "",
            onchange: (e: Event) => handlers.onRetriever(
              k, (e.target as HTMLSelectElement).value, action.top_k ?? 5),
          },
            [h("option", { value: "" }, "choose index…"),
             ...indices.map((ix) =>
               h("option", { value: ix.index_id,
                             selected: ix.index_id === action.retriever_ref },
                 `${ix.index_id} (${ix.kind})`))])
        : null,
      action.operator === "Retriever"
        ? h("input", {
            class: "topk", type: "number", min: "1",
            value: String(action.top_k ?? 5),
            onchange: (e: Event) => handlers.onRetriever(
              k, action.retriever_ref ?? "",
              Number((e.target as HTMLInputElement).value)),
          })
        : null,
      h("button", { class: "remove", onclick: () => handlers.onRemoveAction(k) },
        "remove")),
    h("textarea", {
      class: "template",
      rows: "4",
      oninput: (e: Event) =>
        handlers.onTemplate(k, (e.target as HTMLTextAreaElement).value),
    }, action.template.source),
    h("div", { class: "action-buttons" },
      h("button", {
        class: "interpret",
        disabled: !state.canPreview(k) || state.dirty ? "" : null,
        onclick: () => handlers.onPreview(k),
      }, "Interpret prompt"),
      h("button", {
        class: "execute",
        disabled: !state.canExecute(k) ? "" : null,
        onclick: () => handlers.onExecute(k),
      }, "Interpret prompt and execute this action")),
    preview !== null
      ? h("pre", { class: "preview" }, preview)
      : h("div", { class: "preview-empty" },
          state.dirty ? "save the chain to preview" :
          k > state.executed ? `run actions 1…${k} first` : "no preview yet"),
    trace ? traceView(trace) : null);
}

function datasetPanel(panel: DatasetPanelState, state: EditorState,
                      handlers: EditorHandlers): VNode {
  return h("aside", { class: "dataset-panel" },
    h("select", {
      class: "dataset-select",
      onchange: (e: Event) =>
        handlers.onSelectDataset((e.target as HTMLSelectElement).value),
    },
      [h("option", { value: "" }, "choose dataset…"),
       ...panel.datasets.map((d) =>
         h("option", { value: d.tag, selected: d.tag === panel.selected }, d.tag))]),
    panel.page
      ? h("div", { class: "instances" },
          panel.page.instances.map((inst, i) =>
            h("div", {
              class: "instance" + (state.instance?.instance_id === inst.instance_id
                ? " selected" : ""),
              onclick: () => handlers.onSelectInstance(i),
            }, `${inst.instance_id}: ${inst.question.slice(0, 80)}`)))
      : null,
    panel.page
      ? h("div", { class: "pager" },
          h("button", {
            disabled: panel.offset === 0 ? "" : null,
            onclick: () => handlers.onPage(Math.max(0, panel.offset - panel.limit)),
          }, "prev"),
          h("span", {},
            `${panel.offset + 1}–${Math.min(panel.offset + panel.limit,
                                            panel.page.total)}`
            + ` of ${panel.page.total}`),
          h("button", {
            disabled: panel.offset + panel.limit >= panel.page.total ? "" : null,
            onclick: () => handlers.onPage(panel.offset + panel.limit),
          }, "next"))
      : null);
}

export function chainEditorView(state: EditorState, panel: DatasetPanelState,
                                indices: IndexEntry[],
                                handlers: EditorHandlers): VNode {
  return h("div", { class: "editor" },
    datasetPanel(panel, state, handlers),
    h("main", { class: "editor-main" },
      h("div", { class: "editor-toolbar" },
        h("span", { class: "chain-name" },
          state.draft.chain_id + (state.dirty ? " *" : "")),
        h("button", { class: "save", onclick: () => handlers.onSave() },
          "Save chain"),
        h("button", { class: "add-action", onclick: () => handlers.onAddAction() },
          "Add action"),
        h("button", {
          class: "execute-chain",
          disabled: state.busy || state.dirty ? "" : null,
          onclick: () => handlers.onExecuteChain(),
        }, "Execute entire chain")),
      state.lastError
        ? h("div", { class: "error" }, state.lastError)
        : null,
      state.draft.actions.map((_, k) => actionPanel(state, k, indices, handlers)),
      h("footer", { class: "instance-footer" },
        state.instance
          ? [
              h("div", { class: "question" }, `Question: ${state.instance.question}`),
              h("div", { class: "gold" },
                `Gold answer: ${state.instance.gold_answers.join(" | ")}`),
            ]
          : h("div", { class: "question" }, "No dataset question selected"))));
}
