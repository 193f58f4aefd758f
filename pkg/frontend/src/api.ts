/** Typed client for the engine's HTTP API.
 *
 * The fetch function is injectable so tests can run against canned
 * responses; the UI never computes prompts, metrics, or highlight spans
 * itself — everything displayed comes back from these calls.
 */

import type {
  ChainDoc,
  ChatSessionOut,
  ChatTurnOut,
  CompareTable,
  ContextBody,
  DatasetEntry,
  DatasetPage,
  ExecuteActionOut,
  ExecuteChainOut,
  IndexEntry,
  InstanceRef,
  JobOut,
  RenderOut,
  RunSummary,
  Span,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  code: string;
  status: number;
  span: [number, number] | null;

  constructor(status: number, code: string, message: string,
              span: [number, number] | null = null) {
    super(message);
    this.status = status;
    this.code = code;
    this.span = span;
  }
}

export class ApiClient {
  private base: string;
  private fetchFn: FetchLike;

  constructor(base = "", fetchFn: FetchLike = (url, init) => fetch(url, init)) {
    this.base = base.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchFn(`${this.base}/api/v1${path}`, init);
    const text = await resp.text();
    const data = text ? JSON.parse(text) : {};
    if (!resp.ok) {
      throw new ApiError(resp.status, data.code ?? "error",
                         data.message ?? resp.statusText,
                         data.span ?? null);
    }
    return data as T;
  }

  // chains
  listChains(): Promise<{ chains: ChainDoc[] }> {
    return this.call("GET", "/chains");
  }

  getChain(chainId: string): Promise<ChainDoc> {
    return this.call("GET", `/chains/${encodeURIComponent(chainId)}`);
  }

  saveChain(doc: ChainDoc): Promise<ChainDoc> {
    return this.call("POST", "/chains", doc);
  }

  putChain(chainId: string, doc: ChainDoc): Promise<ChainDoc> {
    return this.call("PUT", `/chains/${encodeURIComponent(chainId)}`, doc);
  }

  // rendering / execution
  render(chainId: string, k: number, context: ContextBody): Promise<RenderOut> {
    return this.call("POST",
                     `/chains/${encodeURIComponent(chainId)}/actions/${k}/render`,
                     { context });
  }

  executeAction(chainId: string, k: number, context: ContextBody,
                instance?: InstanceRef): Promise<ExecuteActionOut> {
    return this.call("POST",
                     `/chains/${encodeURIComponent(chainId)}/actions/${k}/execute`,
                     { context, instance: instance ?? null });
  }

  executeChain(chainId: string, question: string,
               instance?: InstanceRef): Promise<ExecuteChainOut> {
    return this.call("POST", `/chains/${encodeURIComponent(chainId)}/execute`,
                     { question, instance: instance ?? null });
  }

  highlight(text: string, golds: string[],
            provenanceIds: string[]): Promise<{ spans: Span[] }> {
    return this.call("POST", "/highlight",
                     { text, golds, provenance_ids: provenanceIds });
  }

  // datasets
  listDatasets(): Promise<{ datasets: DatasetEntry[] }> {
    return this.call("GET", "/datasets");
  }

  datasetInstances(tag: string, limit: number, offset: number): Promise<DatasetPage> {
    return this.call("GET",
                     `/datasets/${encodeURIComponent(tag)}/instances`
                     + `?limit=${limit}&offset=${offset}`);
  }

  // evaluation jobs
  createEval(chainId: string, dataset: string, metrics: string[],
             limit?: number): Promise<JobOut> {
    return this.call("POST", "/evals",
                     { chain_id: chainId, dataset, metrics, limit: limit ?? null });
  }

  getEval(jobId: string): Promise<JobOut> {
    return this.call("GET", `/evals/${encodeURIComponent(jobId)}`);
  }

  // runs
  listRuns(): Promise<{ runs: RunSummary[] }> {
    return this.call("GET", "/runs");
  }

  compareRuns(runIds: string[]): Promise<CompareTable> {
    return this.call("GET", `/runs/compare?ids=${runIds.map(encodeURIComponent).join(",")}`);
  }

  // indices (for the retriever selector)
  listIndices(): Promise<{ indices: IndexEntry[] }> {
    return this.call("GET", "/indices");
  }

  // chat
  createChatSession(chainId: string): Promise<ChatSessionOut> {
    return this.call("POST", "/chat/sessions", { chain_id: chainId });
  }

  sendChatMessage(sessionId: string, text: string): Promise<ChatTurnOut> {
    return this.call("POST",
                     `/chat/sessions/${encodeURIComponent(sessionId)}/messages`,
                     { text });
  }
}
