/** Wire types for the companion-engine HTTP/SSE contract. */

export interface CompanionCard {
  name: string;
  bio: string | null;
  avatar: string | null;
  kind: string;
}

export interface ActionInfo {
  id: string;
  label: string;
  deputyName: string;
  companionName: string;
}

export interface TranscriptMessage {
  sender: string;
  body: string;
  kind: string;
  conversationId: string;
  timestamp: string;
}

export interface ChatTranscript {
  chatId: string;
  situationId: string;
  participants: string[];
  messages: TranscriptMessage[];
  interactionCounts: Record<string, number>;
}

/** Payload of one SSE event; fields depend on the event type. */
export interface EventPayload {
  sender?: string;
  body?: string;
  kind?: string;
  conversationId?: string;
  error?: string;
}

export interface ChatEvent {
  id: number | null;
  type: string;
  data: EventPayload;
}
