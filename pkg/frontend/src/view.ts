/** DOM rendering. The store is the single source of truth; this file only
 * projects it into elements and forwards user intents back. */

import type { ChatStore } from "./store.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function mountChatView(root: HTMLElement, store: ChatStore): void {
  root.innerHTML = "";

  const roster = el("div", "roster");
  const messageList = el("div", "messages");
  const noticeBar = el("div", "notice");
  const actionBar = el("div", "actions");

  const composer = el("form", "composer");
  const input = el("input") as HTMLInputElement;
  input.placeholder = "Say something...";
  const sendButton = el("button", "", "Send");
  composer.append(input, sendButton);

  const docPanel = el("details", "doc-panel");
  docPanel.append(el("summary", "", "Working document"));
  const docArea = el("textarea") as HTMLTextAreaElement;
  docArea.placeholder = "Paste text here; it is sent along with your messages.";
  docPanel.append(docArea);

  composer.addEventListener("submit", (event) => {
    event.preventDefault();
    const body = input.value.trim();
    if (!body) return;
    input.value = "";
    void store.send(body, docArea.value.trim() || undefined);
  });

  root.append(roster, messageList, noticeBar, actionBar, docPanel, composer);

  const render = () => {
    roster.innerHTML = "";
    for (const companion of store.companions) {
      const card = el("div", "card");
      if (companion.avatar) {
        const img = el("img") as HTMLImageElement;
        img.src = companion.avatar;
        img.alt = companion.name;
        card.append(img);
      }
      card.append(el("strong", "", companion.name));
      if (companion.bio) card.append(el("small", "", companion.bio));
      roster.append(card);
    }

    messageList.innerHTML = "";
    for (const bubble of store.messages) {
      // every kind gets its own styling hook; unknown kinds fall back to plain
      const node = el("div", `bubble kind-${bubble.kind}`);
      node.append(el("span", "sender", bubble.sender));
      node.append(el("p", "body", bubble.body));
      messageList.append(node);
    }

    const pending = store.pendingQuestion;
    if (pending) {
      const answerForm = el("form", "answer-form");
      const answerInput = el("input") as HTMLInputElement;
      answerInput.placeholder = `Answer ${pending.sender}...`;
      const answerButton = el("button", "", "Answer");
      answerForm.append(answerInput, answerButton);
      answerForm.addEventListener("submit", (event) => {
        event.preventDefault();
        const body = answerInput.value.trim();
        if (body) void store.answer(body);
      });
      messageList.append(answerForm);
    }
    messageList.scrollTop = messageList.scrollHeight;

    noticeBar.textContent = store.busy ? store.notice || "companions are talking..." : store.notice;
    input.disabled = store.busy;
    sendButton.toggleAttribute("disabled", store.busy);

    actionBar.innerHTML = "";
    for (const action of store.actions) {
      const button = el("button", "action", action.label);
      button.disabled = action.disabled || store.busy;
      if (action.reason) button.title = `Locked: ${action.reason}`;
      button.addEventListener("click", () => {
        void store.trigger(action.id, docArea.value.trim() || undefined);
      });
      actionBar.append(button);
    }
  };

  store.subscribe(render);
  render();
}
