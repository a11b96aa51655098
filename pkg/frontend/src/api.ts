/** HTTP + SSE client for the companion-engine service.
 *
 * The event stream is read over fetch so we can carry the last seen event id
 * into reconnects (`lastEventId` query parameter) and replay nothing twice.
 */

import type { ActionInfo, ChatEvent, ChatTranscript, CompanionCard } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(
    public status: number,
    public detail: string,
    public condition?: string,
  ) {
    super(`${status}: ${detail}`);
  }
}

async function errorFrom(response: Response): Promise<ServiceError> {
  let detail = response.statusText;
  let condition: string | undefined;
  try {
    const body = await response.json();
    detail = body.detail ?? detail;
    condition = body.condition;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ServiceError(response.status, detail, condition);
}

export class ServiceClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) throw await errorFrom(response);
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  listCompanions(): Promise<CompanionCard[]> {
    return this.request("/api/companions");
  }

  async createChat(situation: string, participants: string[]): Promise<string> {
    const created = await this.post<{ chatId: string }>("/api/chats", {
      situation,
      participants,
    });
    return created.chatId;
  }

  getChat(chatId: string): Promise<ChatTranscript> {
    return this.request(`/api/chats/${chatId}`);
  }

  listActions(chatId: string): Promise<ActionInfo[]> {
    return this.request(`/api/chats/${chatId}/actions`);
  }

  sendMessage(
    chatId: string,
    body: string,
    options: { conversationId?: string; text?: string; paragraph?: string } = {},
  ): Promise<void> {
    return this.post(`/api/chats/${chatId}/messages`, {
      body,
      conversationId: options.conversationId ?? null,
      text: options.text ?? null,
      paragraph: options.paragraph ?? null,
    });
  }

  triggerAction(
    chatId: string,
    actionId: string,
    options: { text?: string; paragraph?: string } = {},
  ): Promise<void> {
    return this.post(`/api/chats/${chatId}/actions/${actionId}`, {
      text: options.text ?? null,
      paragraph: options.paragraph ?? null,
    });
  }

  eventStream(chatId: string): EventStream {
    return new EventStream(`${this.baseUrl}/api/chats/${chatId}/events`, this.fetchFn);
  }
}

/** Parse one SSE frame (the lines between blank lines) into a ChatEvent. */
export function parseEventFrame(lines: string[]): ChatEvent | null {
  let id: number | null = null;
  let type = "";
  const dataLines: string[] = [];
  for (const line of lines) {
    if (line.startsWith(":")) continue; // comment / keep-alive ping
    if (line.startsWith("id: ")) id = Number(line.slice(4));
    else if (line.startsWith("event: ")) type = line.slice(7);
    else if (line.startsWith("data: ")) dataLines.push(line.slice(6));
  }
  if (!type) return null;
  let data = {};
  if (dataLines.length) {
    try {
      data = JSON.parse(dataLines.join("\n"));
    } catch {
      data = { body: dataLines.join("\n") };
    }
  }
  return { id, type, data };
}

const RECONNECT_DELAY_MS = 1000;

/** Long-lived SSE subscription with automatic reconnect + replay. */
export class EventStream {
  lastEventId = 0;
  private closed = false;

  constructor(
    private url: string,
    private fetchFn: FetchLike,
    private reconnectDelayMs: number = RECONNECT_DELAY_MS,
  ) {}

  close(): void {
    this.closed = true;
  }

  private streamUrl(): string {
    const sep = this.url.includes("?") ? "&" : "?";
    return this.lastEventId > 0 ? `${this.url}${sep}lastEventId=${this.lastEventId}` : this.url;
  }

  /** Yield events until close(); connection drops trigger replayed reconnects. */
  async *events(): AsyncGenerator<ChatEvent> {
    while (!this.closed) {
      let response: Response;
      try {
        response = await this.fetchFn(this.streamUrl(), {
          headers: { accept: "text/event-stream" },
        });
      } catch {
        await delay(this.reconnectDelayMs);
        continue;
      }
      if (!response.ok || !response.body) {
        await delay(this.reconnectDelayMs);
        continue;
      }

      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      try {
        while (!this.closed) {
          const { done, value } = await reader.read();
          if (done) break;
          buffer += decoder.decode(value, { stream: true });
          let boundary;
          while ((boundary = buffer.indexOf("\n\n")) >= 0) {
            const frame = buffer.slice(0, boundary).split("\n");
            buffer = buffer.slice(boundary + 2);
            const event = parseEventFrame(frame);
            if (!event) continue;
            if (event.id !== null) this.lastEventId = event.id;
            yield event;
          }
        }
      } finally {
        reader.cancel().catch(() => undefined);
      }
      if (!this.closed) await delay(this.reconnectDelayMs);
    }
  }
}

function delay(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
