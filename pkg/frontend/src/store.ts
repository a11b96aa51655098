/** Headless chat state: everything the view renders, driven only by the SSE
 * handler and user intents. Messages append strictly in arrival order; the
 * view never reorders. */

import { ServiceClient, ServiceError } from "./api.js";
import type { ChatEvent, CompanionCard } from "./types.js";

export interface Bubble {
  sender: string;
  body: string;
  kind: string;
  conversationId: string;
}

export interface PendingQuestion {
  sender: string;
  body: string;
  conversationId: string;
}

export interface ActionButton {
  id: string;
  label: string;
  companionName: string;
  disabled: boolean;
  reason?: string;
}

export class ChatStore {
  chatId = "";
  companions: CompanionCard[] = [];
  messages: Bubble[] = [];
  actions: ActionButton[] = [];
  pendingQuestion: PendingQuestion | null = null;
  /** True while companions are talking; input stays disabled. */
  busy = false;
  notice = "";

  private listeners = new Set<() => void>();

  constructor(private client: ServiceClient) {}

  subscribe(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  async start(situation: string, participants: string[]): Promise<void> {
    this.companions = await this.client.listCompanions();
    this.chatId = await this.client.createChat(situation, participants);
    await this.refreshActions();
    this.emit();
  }

  async refreshActions(): Promise<void> {
    const unlocked = await this.client.listActions(this.chatId);
    const known = new Map(this.actions.map((a) => [a.id, a]));
    this.actions = unlocked.map((action) => ({
      id: action.id,
      label: action.label,
      companionName: action.companionName,
      disabled: false,
    }));
    // keep buttons the server stopped listing, greyed out with their reason
    for (const [id, button] of known) {
      if (button.disabled && !this.actions.some((a) => a.id === id)) {
        this.actions.push(button);
      }
    }
    this.emit();
  }

  /** One SSE event in, state out. Unknown kinds render as plain bubbles. */
  applyEvent(event: ChatEvent): void {
    const data = event.data;
    switch (event.type) {
      case "done":
        this.busy = false;
        void this.refreshActions();
        break;
      case "error":
        this.busy = false;
        this.notice = data.error ?? "something went wrong";
        break;
      case "question":
        this.pushBubble(data, "question");
        this.pendingQuestion = {
          sender: data.sender ?? "",
          body: data.body ?? "",
          conversationId: data.conversationId ?? "",
        };
        this.busy = false; // it is the user's turn to answer
        break;
      default:
        this.pushBubble(data, event.type);
    }
    this.emit();
  }

  private pushBubble(data: ChatEvent["data"], kind: string): void {
    this.messages.push({
      sender: data.sender ?? "",
      body: data.body ?? "",
      kind,
      conversationId: data.conversationId ?? "",
    });
  }

  addUserMessage(sender: string, body: string): void {
    this.messages.push({ sender, body, kind: "message", conversationId: "" });
    this.emit();
  }

  async send(body: string, document?: string): Promise<void> {
    if (this.busy) return;
    this.notice = "";
    try {
      await this.client.sendMessage(this.chatId, body, {
        text: document || undefined,
        paragraph: document || undefined,
      });
      this.busy = true;
      this.addUserMessage("you", body);
    } catch (error) {
      this.handleSendError(error);
    }
    this.emit();
  }

  /** Answer the pending deputy question; resumes the suspended exchange. */
  async answer(body: string): Promise<void> {
    const pending = this.pendingQuestion;
    if (!pending) return;
    this.notice = "";
    try {
      await this.client.sendMessage(this.chatId, body, {
        conversationId: pending.conversationId,
      });
      this.pendingQuestion = null;
      this.busy = true;
      this.addUserMessage("you", body);
    } catch (error) {
      this.handleSendError(error);
    }
    this.emit();
  }

  async trigger(actionId: string, document?: string): Promise<void> {
    if (this.busy) return;
    this.notice = "";
    try {
      await this.client.triggerAction(this.chatId, actionId, {
        text: document || undefined,
      });
      this.busy = true;
    } catch (error) {
      if (error instanceof ServiceError && error.status === 423) {
        const reason = error.condition || error.detail;
        const button = this.actions.find((a) => a.id === actionId);
        if (button) {
          button.disabled = true;
          button.reason = reason;
        } else {
          // locked actions are absent from the unlocked list; keep a greyed
          // button so the refusal is visible
          this.actions.push({
            id: actionId,
            label: actionId,
            companionName: "",
            disabled: true,
            reason,
          });
        }
      } else {
        this.handleSendError(error);
      }
    }
    this.emit();
  }

  private handleSendError(error: unknown): void {
    if (error instanceof ServiceError && error.status === 409) {
      this.busy = true;
      this.notice = "companions are talking";
    } else {
      this.notice = error instanceof Error ? error.message : String(error);
    }
  }

  /** Pump the SSE stream into the store until the stream is closed. */
  async pump(stream: AsyncIterable<ChatEvent>): Promise<void> {
    for await (const event of stream) {
      this.applyEvent(event);
    }
  }
}
