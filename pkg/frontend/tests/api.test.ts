import { describe, expect, it } from "vitest";

import { ApiError } from "../src/api.js";
import { cannedClient } from "./helpers.js";

describe("api client", () => {
  it("hits documented endpoints with the documented bodies", async () => {
    const { client, calls } = cannedClient([
      { method: "POST", path: "/chains/c1/actions/2/render",
        body: { chain_id: "c1", action_index: 2, rendered_prompt: "P" } },
      { method: "GET", path: "/runs/compare?ids=a,b",
        body: { run_ids: ["a", "b"], metrics: [] } },
      { method: "POST", path: "/evals",
        body: { job_id: "j", chain_id: "c1", dataset: "d", state: "queued",
                completed: 0, total: 0, run_id: "", error: "" } },
    ]);
    const ctx = { question: "q", response: ["r0", "r1"], wiki_id_title: ["", ""] };
    const out = await client.render("c1", 2, ctx);
    expect(out.rendered_prompt).toBe("P");
    expect(calls[0]).toEqual({
      method: "POST",
      path: "/chains/c1/actions/2/render",
      body: { context: ctx },
    });

    await client.compareRuns(["a", "b"]);
    expect(calls[1].path).toBe("/runs/compare?ids=a,b");

    await client.createEval("c1", "d", ["em", "f1"], 10);
    expect(calls[2].body).toEqual({
      chain_id: "c1", dataset: "d", metrics: ["em", "f1"], limit: 10,
    });
  });

  it("raises ApiError with code, status and span from the error body", async () => {
    const { client } = cannedClient([
      { method: "POST", path: "/chains/c1/actions/0/render", status: 422,
        body: { code: "template_parse_error", message: "expected ')'",
                span: [4, 5] } },
    ]);
    try {
      await client.render("c1", 0, { question: "", response: [], wiki_id_title: [] });
      expect.unreachable();
    } catch (e) {
      const err = e as ApiError;
      expect(err).toBeInstanceOf(ApiError);
      expect(err.status).toBe(422);
      expect(err.code).toBe("template_parse_error");
      expect(err.span).toEqual([4, 5]);
    }
  });

  it("encodes ids in paths", async () => {
    const { client, calls } = cannedClient([
      { method: "GET", path: "/chains/a%20b", body: { chain_id: "a b", actions: [] } },
    ]);
    await client.getChain("a b");
    expect(calls[0].path).toBe("/chains/a%20b");
  });
});
