"""Prompt assembly from context + world state, and chat-format rendering.

Assembly happens in two steps: first the context, the companion's state, and
the world state are folded into a system prompt plus role/content turns;
second the concrete chat format (ChatML or Mistral instruct) is applied.
Decorators are replacement templates that tag data blobs (USER TEXT="...")
so a job can refer to them by name.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from datetime import datetime
from typing import Mapping, TYPE_CHECKING

from .config import CompanionConfig, PromptFormat
from .companion import NEUTRAL_MOOD, unlocked_knowledge, unlocked_mottos
from .context import ChatRecord, Context
from .world import WorldState

if TYPE_CHECKING:
    from .companion import CompanionRuntime

PLACEHOLDER = "{{DATA}}"


@dataclass(frozen=True)
class Decorator:
    """Replacement template labeling one piece of data inside the prompt."""

    tag: str
    template: str

    def __post_init__(self) -> None:
        if self.template.count(PLACEHOLDER) != 1:
            raise ValueError(
                f"decorator {self.tag!r} template must contain {PLACEHOLDER} exactly once"
            )


def decorate(decorator: Decorator, data: str) -> str | None:
    """Substitute the data into the template; empty data omits the decorator."""
    if not data:
        return None
    return decorator.template.replace(PLACEHOLDER, data)


DEFAULT_DECORATORS: Mapping[str, Decorator] = {
    "text": Decorator("USER TEXT", 'USER TEXT="{{DATA}}"'),
    "paragraph": Decorator("USER PARAGRAPH", 'USER PARAGRAPH="{{DATA}}"'),
    "input": Decorator("USER INPUT", 'USER INPUT="{{DATA}}"'),
    "answer": Decorator("DEPUTY ANSWER", 'DEPUTY ANSWER="{{DATA}}"'),
}


@dataclass
class PromptData:
    """Format-independent prompt: a system prompt plus ordered chat turns."""

    system_prompt: str
    turns: list[tuple[str, str]] = field(default_factory=list)
    format: PromptFormat = PromptFormat.CHATML

    def as_messages(self) -> list[tuple[str, str]]:
        return [("system", self.system_prompt)] + list(self.turns)


def _mood_piece(config: CompanionConfig, label: str) -> str | None:
    if label == NEUTRAL_MOOD:
        return None
    for mood in config.moods:
        if mood.label == label:
            return mood.prompt_piece or None
    return None


def _pick_motto(mottos: list[str], runtime_name: str, context: Context, now: datetime) -> str | None:
    """Stable pseudo-uniform choice so assembly stays pure for fixed inputs."""
    if not mottos:
        return None
    seed = f"{runtime_name}|{context.conversation_id}|{now.isoformat()}"
    digest = hashlib.sha256(seed.encode("utf-8")).digest()
    return mottos[int.from_bytes(digest[:4], "big") % len(mottos)]


def assemble_prompt(
    context: Context,
    state: WorldState,
    runtime: "CompanionRuntime",
    now: datetime,
    chat: ChatRecord | None = None,
    decorators: Mapping[str, Decorator] | None = None,
) -> PromptData:
    """Fold context, companion state, and world state into a prompt.

    The system prompt concatenates, in fixed order: base prompt (or the
    per-prompt persona override), active mood piece, the chat situation's
    piece, unlocked knowledge, one motto, who else is around, decorated data,
    the job, the current date and time, and the epilogue always last.
    Chat history becomes turns: this speaker's messages map to `assistant`,
    everyone else's to `user`, with sender names prefixed so attribution
    survives the two-role flattening.
    """
    decorators = decorators or DEFAULT_DECORATORS
    config = runtime.config
    fragments: list[str] = []

    def add(fragment: str | None) -> None:
        if fragment:
            fragments.append(fragment)

    add(context.persona or config.base_prompt)
    add(_mood_piece(config, context.mood or runtime.active_mood))

    if chat is not None:
        for situation in config.situations:
            if situation.id == chat.situation_id:
                add(situation.prompt_piece)
                break

    knowledge = context.knowledge or "\n".join(unlocked_knowledge(config, state))
    add(knowledge)
    add(_pick_motto(unlocked_mottos(config, state), runtime.name, context, now))

    if context.companion_names:
        add(f"The other companions in this chat are: {context.companion_names}.")

    for slot in ("text", "paragraph", "input", "answer"):
        decorator = decorators.get(slot)
        if decorator is not None:
            add(decorate(decorator, getattr(context, slot)))

    add(context.job)
    add(f"Current date and time: {now:%Y-%m-%d %H:%M}")
    add(context.epilogue)

    turns = []
    if chat is not None:
        for message in chat.messages:
            if message.kind != "message":
                continue
            role = "assistant" if message.sender == runtime.name else "user"
            turns.append((role, f"{message.sender}: {message.body}"))

    return PromptData(
        system_prompt="\n\n".join(fragments),
        turns=turns,
        format=runtime.model_config.prompt_format,
    )


def apply_chat_template(prompt: PromptData) -> str:
    """Render the prompt in its concrete wire format, ready for generation."""
    if prompt.format is PromptFormat.CHATML:
        return _render_chatml(prompt)
    if prompt.format is PromptFormat.MISTRAL:
        return _render_mistral(prompt)
    raise ValueError(f"unknown prompt format {prompt.format!r}")


def _render_chatml(prompt: PromptData) -> str:
    parts = [
        f"<|im_start|>{role}\n{content}<|im_end|>\n"
        for role, content in prompt.as_messages()
    ]
    parts.append("<|im_start|>assistant\n")
    return "".join(parts)


def _merge_adjacent(turns: list[tuple[str, str]]) -> list[tuple[str, str]]:
    merged: list[tuple[str, str]] = []
    for role, content in turns:
        if merged and merged[-1][0] == role:
            merged[-1] = (role, f"{merged[-1][1]}\n{content}")
        else:
            merged.append((role, content))
    return merged


def _render_mistral(prompt: PromptData) -> str:
    """Instruct format: system text merges into the first user instruction.

    Completed user/assistant pairs render as `[INST] u [/INST] a</s>`; the
    string opens with `<s>` and ends with an open instruction awaiting the
    model's reply. Non-alternating turns are merged beforehand.
    """
    turns = _merge_adjacent(prompt.turns)
    pending: str | None = prompt.system_prompt
    parts = ["<s>"]
    for role, content in turns:
        if role == "user":
            pending = f"{pending}\n\n{content}" if pending else content
        else:
            parts.append(f"[INST] {pending or ''} [/INST] {content}</s>")
            pending = None
    parts.append(f"[INST] {pending or ''} [/INST]")
    return "".join(parts)
