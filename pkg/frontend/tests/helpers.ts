/** Test helpers: an ApiClient wired to canned responses. */

import { ApiClient, FetchLike } from "../src/api.js";

export interface Route {
  method: string;
  path: string | RegExp;
  status?: number;
  body: unknown | ((req: { path: string; body: unknown }) => unknown);
}

export interface RecordedCall {
  method: string;
  path: string;
  body: unknown;
}

export function cannedClient(routes: Route[]): {
  client: ApiClient;
  calls: RecordedCall[];
} {
  const calls: RecordedCall[] = [];
  const fetchFn: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^.*\/api\/v1/, "");
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    calls.push({ method, path, body });
    for (const route of routes) {
      const matches = typeof route.path === "string"
        ? route.path === path
        : route.path.test(path);
      if (route.method === method && matches) {
        const payload = typeof route.body === "function"
          ? (route.body as (req: { path: string; body: unknown }) => unknown)(
              { path, body })
          : route.body;
        return new Response(JSON.stringify(payload),
                            { status: route.status ?? 200 });
      }
    }
    return new Response(JSON.stringify({ code: "not_found", message: `no route ${method} ${path}` }),
                        { status: 404 });
  };
  return { client: new ApiClient("", fetchFn), calls };
}

export function emptyTrace(overrides: Partial<{
  action_index: number;
  operator: string;
  rendered_prompt: string;
  output: string;
}> = {}) {
  return {
    action_index: 0,
    operator: "LLM",
    rendered_prompt: "",
    output: "",
    hits: [],
    latency_s: 0.001,
    highlight_spans: [],
    ...overrides,
  };
}
