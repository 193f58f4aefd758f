/** Chat tab: user/assistant bubbles over a chain, with a collapsible
 * trace of the last exchange. */

import { VNode, h } from "../dom.js";
import type { ChatState } from "../chat.js";
import type { ChainDoc } from "../types.js";

export interface ChatHandlers {
  onStart(chainId: string): void;
  onSend(text: string): void;
}

export function chatView(state: ChatState, chains: ChainDoc[],
                         handlers: ChatHandlers): VNode {
  return h("div", { class: "chat" },
    h("div", { class: "chat-setup" },
      h("select", {
        class: "chat-chain",
        onchange: (e: Event) =>
          handlers.onStart((e.target as HTMLSelectElement).value),
      },
        [h("option", { value: "" }, "choose chain…"),
         ...chains.map((c) =>
           h("option", { value: c.chain_id,
                         selected: c.chain_id === state.chainId }, c.chain_id))])),
    h("div", { class: "bubbles" },
      state.turns.map((turn) =>
        h("div", { class: `bubble ${turn.role}` }, turn.text))),
    state.lastTraces.length
      ? h("details", { class: "chat-trace" },
          h("summary", {}, "last reply trace"),
          state.lastTraces.map((t) =>
            h("pre", { class: "prompt" },
              `[${t.operator}]\n${t.rendered_prompt}\n--\n${t.output}`)))
      : null,
    state.lastError ? h("div", { class: "error" }, state.lastError) : null,
    h("form", {
      class: "chat-form",
      onsubmit: (e: Event) => {
        e.preventDefault();
        const input = (e.target as HTMLFormElement)
          .querySelector("input") as HTMLInputElement;
        if (input.value.trim()) {
          handlers.onSend(input.value);
          input.value = "";
        }
      },
    },
      h("input", {
        type: "text", class: "chat-input", placeholder: "say something…",
        disabled: state.sessionId && !state.busy ? null : "",
      }),
      h("button", { type: "submit",
                    disabled: state.sessionId && !state.busy ? null : "" },
        "send")));
}
