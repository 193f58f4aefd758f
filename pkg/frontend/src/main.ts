/** Browser bootstrap: tab shell wiring state, API client, and views. */

import { ApiClient } from "./api.js";
import { ChatState } from "./chat.js";
import { toCompareView, CompareViewRow } from "./compare.js";
import { h, mount } from "./dom.js";
import { EditorState } from "./state.js";
import type { ChainDoc, DatasetPage, IndexEntry, RunSummary } from "./types.js";
import { DatasetPanelState, chainEditorView } from "./views/chain_editor.js";
import { chatView } from "./views/chat.js";
import { runsView } from "./views/runs.js";

const client = new ApiClient("");

type Tab = "develop" | "runs" | "chat";

const app = {
  tab: "develop" as Tab,
  chains: [] as ChainDoc[],
  indices: [] as IndexEntry[],
  editor: null as EditorState | null,
  panel: {
    datasets: [], selected: null, page: null, offset: 0, limit: 10,
  } as DatasetPanelState,
  runs: [] as RunSummary[],
  selectedRuns: new Set<string>(),
  compare: null as CompareViewRow[] | null,
  compareIds: [] as string[],
  chat: new ChatState(client),
};

function rerender(): void {
  const rootEl = document.getElementById("app");
  if (!rootEl) {
    return;
  }
  mount(view(), rootEl);
}

async function guard(work: () => Promise<void>): Promise<void> {
  try {
    await work();
  } catch (err) {
    console.error(err);
  } finally {
    rerender();
  }
}

function view() {
  return h("div", { class: "shell" },
    h("nav", { class: "tabs" },
      (["develop", "runs", "chat"] as Tab[]).map((tab) =>
        h("button", {
          class: app.tab === tab ? "tab active" : "tab",
          onclick: () => { app.tab = tab; rerender(); },
        }, tab))),
    app.tab === "develop" ? developView()
      : app.tab === "runs" ? runsTabView()
      : chatTabView());
}

function developView() {
  if (!app.editor) {
    return h("div", { class: "editor-empty" },
      h("p", {}, "Pick a chain to edit:"),
      h("div", {},
        app.chains.map((c) =>
          h("button", {
            class: "chain-pick",
            onclick: () => guard(async () => {
              app.editor = new EditorState(client, await client.getChain(c.chain_id));
            }),
          }, c.chain_id))));
  }
  const editor = app.editor;
  return chainEditorView(editor, app.panel, app.indices, {
    onTemplate: (k, source) => { editor.setTemplate(k, source); rerender(); },
    onMode: (k, mode) => { editor.setMode(k, mode as never); rerender(); },
    onOperator: (k, op) => { editor.setOperator(k, op as never); rerender(); },
    onRetriever: (k, ref, topK) => { editor.setRetriever(k, ref, topK); rerender(); },
    onAddAction: () => { editor.addAction(); rerender(); },
    onRemoveAction: (k) => { editor.removeAction(k); rerender(); },
    onSave: () => guard(() => editor.save()),
    onPreview: (k) => guard(async () => { await editor.preview(k); }),
    onExecute: (k) => guard(async () => { await editor.executeAction(k); }),
    onExecuteChain: () => guard(async () => { await editor.executeChain(); }),
    onSelectDataset: (tag) => guard(async () => {
      app.panel.selected = tag || null;
      app.panel.offset = 0;
      app.panel.page = tag
        ? await client.datasetInstances(tag, app.panel.limit, 0)
        : null;
    }),
    onPage: (offset) => guard(async () => {
      if (!app.panel.selected) {
        return;
      }
      app.panel.offset = offset;
      app.panel.page = await client.datasetInstances(
        app.panel.selected, app.panel.limit, offset);
    }),
    onSelectInstance: (i) => {
      const page: DatasetPage | null = app.panel.page;
      if (page) {
        editor.selectInstance(page.instances[i]);
        rerender();
      }
    },
  });
}

function runsTabView() {
  return runsView(app.runs, app.selectedRuns, app.compare, app.compareIds, {
    onToggle: (runId) => {
      if (app.selectedRuns.has(runId)) {
        app.selectedRuns.delete(runId);
      } else {
        app.selectedRuns.add(runId);
      }
      rerender();
    },
    onCompare: () => guard(async () => {
      app.compareIds = [...app.selectedRuns];
      app.compare = toCompareView(await client.compareRuns(app.compareIds));
    }),
  });
}

function chatTabView() {
  return chatView(app.chat, app.chains, {
    onStart: (chainId) => guard(async () => {
      if (chainId) {
        await app.chat.start(chainId);
      }
    }),
    onSend: (text) => guard(async () => { await app.chat.send(text); }),
  });
}

async function boot(): Promise<void> {
  const [chains, datasets, indices, runs] = await Promise.all([
    client.listChains(), client.listDatasets(), client.listIndices(),
    client.listRuns(),
  ]);
  app.chains = chains.chains;
  app.panel.datasets = datasets.datasets;
  app.indices = indices.indices;
  app.runs = runs.runs;
  rerender();
}

if (typeof document !== "undefined") {
  boot().catch((err) => console.error("boot failed", err));
}
