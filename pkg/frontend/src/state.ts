/** Chain-editor state: the draft chain, per-action previews and traces,
 * and the execution context threaded through executed actions.
 *
 * Rules the views depend on:
 *  - editing action k (template, operator, retriever, top_k) invalidates
 *    its preview and every execution result from k onward — earlier
 *    actions' outputs feed later prompts, so stale results never show;
 *  - action k can be previewed or executed only after actions 0..k-1
 *    have executed in this session (the context must hold k outputs);
 *  - previews and traces hold exactly what the server returned;
 *  - draft edits survive failed server calls untouched.
 */

import type { ApiClient } from "./api.js";
import type {
  ActionDoc,
  ChainDoc,
  ContextBody,
  DatasetInstance,
  InstanceRef,
  Operator,
  TemplateMode,
  TraceOut,
} from "./types.js";

export class EditorState {
  draft: ChainDoc;
  previews: (string | null)[];
  traces: (TraceOut | null)[];
  executed: number; // number of consecutively executed actions
  context: ContextBody;
  instance: DatasetInstance | null = null;
  lastError: string | null = null;
  dirty = false; // draft differs from the saved chain
  busy = false;  // at most one in-flight execute per editor

  constructor(private client: ApiClient, draft: ChainDoc) {
    this.draft = draft;
    this.previews = draft.actions.map(() => null);
    this.traces = draft.actions.map(() => null);
    this.executed = 0;
    this.context = this.freshContext();
  }

  private freshContext(): ContextBody {
    return {
      question: this.instance ? this.instance.question : "",
      response: [],
      wiki_id_title: [],
    };
  }

  private instanceRef(): InstanceRef | undefined {
    if (!this.instance) {
      return undefined;
    }
    return {
      golds: this.instance.gold_answers,
      provenance_ids: this.instance.provenance.flat(),
    };
  }

  selectInstance(instance: DatasetInstance | null): void {
    this.instance = instance;
    this.resetExecution();
  }

  resetExecution(): void {
    this.previews = this.draft.actions.map(() => null);
    this.traces = this.draft.actions.map(() => null);
    this.executed = 0;
    this.context = this.freshContext();
    this.lastError = null;
  }

  invalidateFrom(k: number): void {
    for (let i = k; i < this.draft.actions.length; i++) {
      this.previews[i] = null;
      this.traces[i] = null;
    }
    if (this.executed > k) {
      this.executed = k;
      this.context = {
        question: this.context.question,
        response: this.context.response.slice(0, k),
        wiki_id_title: this.context.wiki_id_title.slice(0, k),
      };
    }
  }

  setTemplate(k: number, source: string): void {
    this.draft.actions[k].template.source = source;
    this.dirty = true;
    this.invalidateFrom(k);
  }

  setMode(k: number, mode: TemplateMode): void {
    this.draft.actions[k].template.mode = mode;
    this.dirty = true;
    this.invalidateFrom(k);
  }

  setOperator(k: number, operator: Operator): void {
    const action = this.draft.actions[k];
    action.operator = operator;
    if (operator !== "Retriever") {
      delete action.retriever_ref;
      delete action.top_k;
    } else {
      action.retriever_ref = action.retriever_ref ?? "";
      action.top_k = action.top_k ?? 5;
    }
    this.dirty = true;
    this.invalidateFrom(k);
  }

  setRetriever(k: number, ref: string, topK: number): void {
    this.draft.actions[k].retriever_ref = ref;
    this.draft.actions[k].top_k = topK;
    this.dirty = true;
    this.invalidateFrom(k);
  }

  addAction(): void {
    const action: ActionDoc = {
      operator: "LLM",
      template: { mode: "literal", source: "" },
    };
    this.draft.actions.push(action);
    this.previews.push(null);
    this.traces.push(null);
    this.dirty = true;
  }

  removeAction(k: number): void {
    this.draft.actions.splice(k, 1);
    this.previews.splice(k, 1);
    this.traces.splice(k, 1);
    this.dirty = true;
    this.invalidateFrom(k);
  }

  canPreview(k: number): boolean {
    return k <= this.executed && !this.busy;
  }

  canExecute(k: number): boolean {
    return k === this.executed && !this.busy && !this.dirty;
  }

  /** Save the draft server-side; previews require a saved chain. */
  async save(): Promise<void> {
    try {
      await this.client.putChain(this.draft.chain_id, this.draft);
      this.dirty = false;
      this.lastError = null;
    } catch (e) {
      this.lastError = String((e as Error).message);
      throw e;
    }
  }

  /** Interpret-prompt: displays exactly the server render response. */
  async preview(k: number): Promise<string> {
    try {
      const out = await this.client.render(this.draft.chain_id, k, this.context);
      this.previews[k] = out.rendered_prompt;
      this.lastError = null;
      return out.rendered_prompt;
    } catch (e) {
      this.previews[k] = null;
      this.lastError = String((e as Error).message);
      throw e;
    }
  }

  async executeAction(k: number): Promise<TraceOut> {
    this.busy = true;
    try {
      const out = await this.client.executeAction(
        this.draft.chain_id, k, this.context, this.instanceRef());
      this.traces[k] = out.trace;
      this.previews[k] = out.trace.rendered_prompt;
      this.context = out.context;
      this.executed = Math.max(this.executed, k + 1);
      this.lastError = null;
      return out.trace;
    } catch (e) {
      this.lastError = String((e as Error).message);
      throw e;
    } finally {
      this.busy = false;
    }
  }

  async executeChain(): Promise<TraceOut[]> {
    this.busy = true;
    try {
      const out = await this.client.executeChain(
        this.draft.chain_id, this.context.question, this.instanceRef());
      out.traces.forEach((trace, i) => {
        this.traces[i] = trace;
        this.previews[i] = trace.rendered_prompt;
      });
      this.executed = out.traces.length;
      this.context = out.context; // server-built, including hit-list strings
      this.lastError = null;
      return out.traces;
    } catch (e) {
      this.lastError = String((e as Error).message);
      throw e;
    } finally {
      this.busy = false;
    }
  }
}
