/** Shapes of the /api/v1 wire contract (mirrors the server's schemas). */

export type TemplateMode = "literal" | "expression";
export type Operator = "LLM" | "Retriever" | "Identity";
export type SpanKind = "gold_answer" | "provenance_hit";

export interface TemplateDoc {
  mode: TemplateMode;
  source: string;
}

export interface GenParamsDoc {
  max_new_tokens?: number;
  temperature?: number;
  stop_sequences?: string[];
}

export interface ActionDoc {
  operator: Operator;
  template: TemplateDoc;
  retriever_ref?: string;
  top_k?: number;
  gen_params?: GenParamsDoc | null;
}

export interface ChainDoc {
  chain_id: string;
  name?: string;
  dataset_tag?: string;
  actions: ActionDoc[];
}

export interface ContextBody {
  question: string;
  response: string[];
  wiki_id_title: string[];
}

export interface Span {
  start: number;
  end: number;
  kind: SpanKind;
}

export interface HitOut {
  passage_id: number;
  score: number;
  wiki_id: string;
  title: string;
  text: string;
  provenance_hit: boolean;
  text_spans: Span[];
}

export interface TraceOut {
  action_index: number;
  operator: Operator;
  rendered_prompt: string;
  output: string;
  hits: HitOut[];
  latency_s: number;
  highlight_spans: Span[];
}

export interface RenderOut {
  chain_id: string;
  action_index: number;
  rendered_prompt: string;
}

export interface ExecuteActionOut {
  trace: TraceOut;
  context: ContextBody;
}

export interface ExecuteChainOut {
  chain_id: string;
  question: string;
  answer: string;
  traces: TraceOut[];
  context: ContextBody;
}

export interface InstanceRef {
  golds: string[];
  provenance_ids: string[];
}

export interface DatasetInstance {
  instance_id: string;
  question: string;
  gold_answers: string[];
  provenance: string[][];
}

export interface DatasetPage {
  tag: string;
  total: number;
  instances: DatasetInstance[];
}

export interface DatasetEntry {
  tag: string;
  path: string;
}

export interface RunSummary {
  run_id: string;
  created_at: string;
  status: string;
  dataset_tag: string;
  metrics: Record<string, number>;
}

export interface CompareRow {
  name: string;
  values: Record<string, number | null>;
  best: string | null;
  lower_is_better: boolean;
}

export interface CompareTable {
  run_ids: string[];
  metrics: CompareRow[];
}

export interface JobOut {
  job_id: string;
  chain_id: string;
  dataset: string;
  state: "queued" | "running" | "done" | "failed";
  completed: number;
  total: number;
  run_id: string;
  error: string;
}

export interface ChatTurn {
  role: "user" | "assistant";
  text: string;
}

export interface ChatSessionOut {
  session_id: string;
  chain_id: string;
  turns: ChatTurn[];
}

export interface ChatTurnOut {
  session_id: string;
  reply: string;
  turns: ChatTurn[];
  traces: TraceOut[];
}

export interface IndexEntry {
  index_id: string;
  kind: string;
  corpus_id: string;
}
