import { describe, expect, it } from "vitest";

import { ChatState } from "../src/chat.js";
import { byClass, findAll, textOf } from "../src/dom.js";
import { chatView } from "../src/views/chat.js";
import { cannedClient, emptyTrace } from "./helpers.js";

function chatRoutes() {
  const turns: { role: string; text: string }[] = [];
  return [
    {
      method: "POST", path: "/chat/sessions",
      body: { session_id: "s1", chain_id: "open", turns: [] },
    },
    {
      method: "POST", path: "/chat/sessions/s1/messages",
      body: (req: { body: unknown }) => {
        const text = (req.body as { text: string }).text;
        turns.push({ role: "user", text });
        const reply = `reply to: ${text}`;
        turns.push({ role: "assistant", text: reply });
        return {
          session_id: "s1", reply, turns: [...turns],
          traces: [emptyTrace({ rendered_prompt: `User: ${text}`, output: reply })],
        };
      },
    },
  ];
}

describe("chat tab", () => {
  it("completes a two-turn mock conversation", async () => {
    const { client } = cannedClient(chatRoutes());
    const chat = new ChatState(client);
    await chat.start("open");
    expect(chat.sessionId).toBe("s1");

    const first = await chat.send("hello there");
    expect(first).toBe("reply to: hello there");
    expect(chat.turns).toHaveLength(2);
    expect(chat.turns.map((t) => t.role)).toEqual(["user", "assistant"]);

    const second = await chat.send("follow up");
    expect(second).toBe("reply to: follow up");
    expect(chat.turns).toHaveLength(4);
    expect(chat.turns[2]).toEqual({ role: "user", text: "follow up" });
    expect(chat.lastTraces).toHaveLength(1);
  });

  it("renders bubbles and a collapsible trace", async () => {
    const { client } = cannedClient(chatRoutes());
    const chat = new ChatState(client);
    await chat.start("open");
    await chat.send("hi");
    const view = chatView(chat, [{ chain_id: "open", actions: [] }], {
      onStart: () => undefined,
      onSend: () => undefined,
    });
    const bubbles = findAll(view, (n) =>
      typeof n.props.class === "string" &&
      /^bubble (user|assistant)$/.test(n.props.class as string));
    expect(bubbles).toHaveLength(2);
    expect(textOf(bubbles[0])).toBe("hi");
    expect(textOf(bubbles[1])).toBe("reply to: hi");
    const trace = byClass(view, "chat-trace");
    expect(trace).not.toBeNull();
    expect(trace!.tag).toBe("details");
  });

  it("failed sends surface the error and keep history consistent", async () => {
    const { client } = cannedClient([
      { method: "POST", path: "/chat/sessions",
        body: { session_id: "s1", chain_id: "open", turns: [] } },
      { method: "POST", path: "/chat/sessions/s1/messages", status: 502,
        body: { code: "backend_error", message: "llm down" } },
    ]);
    const chat = new ChatState(client);
    await chat.start("open");
    await expect(chat.send("hi")).rejects.toThrow("llm down");
    expect(chat.turns).toHaveLength(0);
    expect(chat.lastError).toContain("llm down");
  });
});
