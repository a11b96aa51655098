"""Per-exchange context envelope and the chat transcript types.

One Context is constructed per user interaction and passed between
companions, down to deputies, and into the prompter. Fields are grouped by
flow direction: downstream (toward the prompt), midstream (added by the
companion), upstream (results flowing back to the chat), plus internal
bookkeeping. An exchange can span multiple user turns (a deputy question
waiting for an answer); all turns share one conversation_id.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from datetime import datetime


@dataclass
class Context:
    # downstream: user -> companion -> prompt
    chat: str = ""          # compressed history, used by the moderator only
    knowledge: str = ""     # unlocked knowledge, precomputed upstream if set
    text: str = ""          # text provided by the client
    paragraph: str = ""     # paragraph provided by the client (or scope-selected)
    epilogue: str = ""      # always placed at the very end of the system prompt
    input: str = ""         # direct user answer to a pending question
    action: str = ""        # id of the active action, empty when none

    # midstream: companion -> prompt
    persona: str = ""       # per-prompt override of the base prompt
    job: str = ""           # the instruction handed to the model
    mood: str = ""          # per-prompt mood label override

    # upstream: companion -> user
    question: str = ""
    answer: str = ""
    excerpt: str = ""
    quote: str = ""
    message: str = ""

    # internal
    companion_names: str = ""   # the other companions around, comma-separated
    error: str = ""
    conversation_id: str = ""
    tool: str = ""              # carried for forward compatibility, unused
    recipients: list[str] = field(default_factory=list)  # forced next speakers
    summarized_from: int | None = None  # original char length before auto-summary

    def copy(self) -> "Context":
        clone = dataclasses.replace(self)
        clone.recipients = list(self.recipients)
        return clone

    def note_error(self, message: str) -> None:
        self.error = f"{self.error}; {message}" if self.error else message

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["recipients"] = list(self.recipients)
        return data


MESSAGE_KINDS = ("message", "excerpt", "quote", "question")


@dataclass(frozen=True)
class ChatMessage:
    sender: str
    body: str
    kind: str  # one of MESSAGE_KINDS, mirrors the context field that produced it
    conversation_id: str
    timestamp: datetime

    def to_dict(self) -> dict:
        return {
            "sender": self.sender,
            "body": self.body,
            "kind": self.kind,
            "conversationId": self.conversation_id,
            "timestamp": self.timestamp.isoformat(timespec="seconds"),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChatMessage":
        return cls(
            sender=data["sender"],
            body=data["body"],
            kind=data["kind"],
            conversation_id=data["conversationId"],
            timestamp=datetime.fromisoformat(data["timestamp"]),
        )


@dataclass
class ChatRecord:
    """Ordered message history of one chat room. The transcript is append-only."""

    id: str
    situation_id: str
    participants: list[str]
    messages: list[ChatMessage] = field(default_factory=list)
    interaction_counts: dict[str, int] = field(default_factory=dict)

    def append(self, message: ChatMessage) -> ChatMessage:
        self.messages.append(message)
        return message

    def last_message(self) -> ChatMessage | None:
        return self.messages[-1] if self.messages else None

    def to_dict(self) -> dict:
        return {
            "chatId": self.id,
            "situationId": self.situation_id,
            "participants": list(self.participants),
            "messages": [m.to_dict() for m in self.messages],
            "interactionCounts": dict(self.interaction_counts),
        }
