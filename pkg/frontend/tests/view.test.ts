// @vitest-environment happy-dom

import { beforeEach, describe, expect, it } from "vitest";

import { ServiceClient } from "../src/api.js";
import { ChatStore } from "../src/store.js";
import { mountChatView } from "../src/view.js";
import type { ChatEvent } from "../src/types.js";

const event = (type: string, data: ChatEvent["data"], id = 1): ChatEvent => ({ id, type, data });

function makeStore(): ChatStore {
  // the view drives everything through the store; no network happens here
  const store = new ChatStore(new ServiceClient("http://unused"));
  store.chatId = "chat-1";
  store.companions = [{ name: "Anders", bio: "Harbour master.", avatar: null, kind: "npc" }];
  store.actions = [
    { id: "rewrite-style", label: "Rewrite", companionName: "Anders", disabled: false },
    {
      id: "find-theme",
      label: "Find theme",
      companionName: "Anders",
      disabled: true,
      reason: "INTERACTIONS_Anders >= 5",
    },
  ];
  return store;
}

describe("chat view", () => {
  let root: HTMLElement;
  let store: ChatStore;

  beforeEach(() => {
    document.body.innerHTML = '<div id="app"></div>';
    root = document.getElementById("app")!;
    store = makeStore();
    mountChatView(root, store);
  });

  it("renders companion cards", () => {
    expect(root.querySelector(".card strong")?.textContent).toBe("Anders");
  });

  it("appends bubbles in event order with kind-specific classes", () => {
    store.applyEvent(event("message", { sender: "Anders", body: "plain", kind: "message" }, 1));
    store.applyEvent(event("excerpt", { sender: "d", body: "block", kind: "excerpt" }, 2));
    store.applyEvent(event("quote", { sender: "d", body: "quoted", kind: "quote" }, 3));
    store.applyEvent(event("sparkle", { sender: "x", body: "odd", kind: "sparkle" }, 4));

    const bubbles = [...root.querySelectorAll(".bubble")];
    expect(bubbles.map((b) => b.querySelector(".body")?.textContent)).toEqual([
      "plain",
      "block",
      "quoted",
      "odd",
    ]);
    expect(bubbles[1]?.classList.contains("kind-excerpt")).toBe(true);
    expect(bubbles[2]?.classList.contains("kind-quote")).toBe(true);
    // unknown kinds still render as a bubble
    expect(bubbles[3]?.classList.contains("bubble")).toBe(true);
  });

  it("shows an inline answer field for a pending question", () => {
    expect(root.querySelector(".answer-form")).toBeNull();
    store.applyEvent(
      event("question", {
        sender: "style-deputy",
        body: "More text please.",
        kind: "question",
        conversationId: "chat-1:c2",
      }),
    );
    const form = root.querySelector(".answer-form");
    expect(form).not.toBeNull();
    expect(form?.querySelector("input")?.placeholder).toContain("style-deputy");
  });

  it("disables locked action buttons and exposes the reason", () => {
    const buttons = [...root.querySelectorAll("button.action")] as HTMLButtonElement[];
    const locked = buttons.find((b) => b.textContent === "Find theme")!;
    expect(locked.disabled).toBe(true);
    expect(locked.title).toContain("INTERACTIONS_Anders >= 5");
    const unlocked = buttons.find((b) => b.textContent === "Rewrite")!;
    expect(unlocked.disabled).toBe(false);
  });

  it("disables the composer while companions are talking", () => {
    store.applyEvent(event("message", { sender: "Anders", body: "x", kind: "message" }));
    store.busy = true;
    store.applyEvent(event("sparkle", {}, 2)); // any event triggers a re-render
    const input = root.querySelector(".composer input") as HTMLInputElement;
    expect(input.disabled).toBe(true);
    expect(root.querySelector(".notice")?.textContent).toContain("companions are talking");
  });
});
