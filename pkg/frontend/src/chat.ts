/** Chat-tab state: one session bound to one chain; every reply carries a
 * collapsible trace of the chain execution that produced it. */

import type { ApiClient } from "./api.js";
import type { ChatTurn, TraceOut } from "./types.js";

export class ChatState {
  sessionId: string | null = null;
  chainId: string | null = null;
  turns: ChatTurn[] = [];
  lastTraces: TraceOut[] = [];
  busy = false;
  lastError: string | null = null;

  constructor(private client: ApiClient) {}

  async start(chainId: string): Promise<void> {
    const session = await this.client.createChatSession(chainId);
    this.sessionId = session.session_id;
    this.chainId = chainId;
    this.turns = session.turns;
    this.lastTraces = [];
    this.lastError = null;
  }

  async send(text: string): Promise<string> {
    if (!this.sessionId) {
      throw new Error("no active chat session");
    }
    this.busy = true;
    try {
      const out = await this.client.sendChatMessage(this.sessionId, text);
      this.turns = out.turns;
      this.lastTraces = out.traces;
      this.lastError = null;
      return out.reply;
    } catch (e) {
      // server rolls the failed turn back; local history follows suit
      this.lastError = String((e as Error).message);
      throw e;
    } finally {
      this.busy = false;
    }
  }
}
