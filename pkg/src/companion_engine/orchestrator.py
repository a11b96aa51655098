"""Conversation orchestration: rounds, delegation, routing, and bookkeeping.

The engine owns the world state, instantiates companion runtimes per chat
session (sampling moods on the way), and drives multi-round conversations:
each round the moderator picks the next speaker(s), every selected speaker
generates a reply over the same context object, replies are routed into the
transcript, and interaction stats are counted. Actions force the deputy and
its host companion as the next speakers.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import os
import random
from dataclasses import dataclass, field as dataclass_field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable, Iterable

from .backend import Backend, JobAdminData
from .companion import (
    ChatCompanion,
    CompanionRuntime,
    ReplyEnv,
    UserProxy,
    generate_reply,
)
from .config import (
    ActionDescription,
    CompanionConfig,
    CompanionKind,
    ConfigError,
    ModelConfig,
    validate_configs,
)
from .context import ChatMessage, ChatRecord, Context
from .deputy import AnsweringDeputy, InstructionDeputy
from .moderator import ModerationPolicy, select_next_speakers
from .world import WorldState, condition_met

OnReply = Callable[[ChatMessage], None]

INTERACTIONS_PREFIX = "INTERACTIONS_"
TRANSCRIPT_SCHEMA = "chat-transcript@1"
WORLD_SCHEMA = "world-state@1"
DEFAULT_USER_NAME = "User"
DEFAULT_DEPUTY_TEMPERATURE = 0.1

BUILTIN_RUNTIME_CLASSES: dict[str, type[CompanionRuntime]] = {
    "User": UserProxy,
    "ChatCompanion": ChatCompanion,
    "InstructionDeputy": InstructionDeputy,
    "AnsweringDeputy": AnsweringDeputy,
}


class UnknownCompanionError(KeyError):
    pass


class UnknownSituationError(KeyError):
    pass


class UnknownActionError(KeyError):
    pass


class ActionLockedError(RuntimeError):
    """The action's unlock condition does not hold against the world state."""

    def __init__(self, action: ActionDescription):
        self.action = action
        self.condition = action.condition.describe() if action.condition else ""
        super().__init__(f"action {action.id!r} is locked: requires {self.condition}")


class LogicalClock:
    """Deterministic clock for replayable runs: fixed base, fixed step."""

    def __init__(self, base: datetime | None = None, step_seconds: float = 1.0):
        self.current = base or datetime(2026, 1, 1, 9, 0, 0)
        self.step = timedelta(seconds=step_seconds)

    def __call__(self) -> datetime:
        now = self.current
        self.current = now + self.step
        return now


@dataclass
class EngineSettings:
    default_model: ModelConfig = dataclass_field(
        default_factory=lambda: ModelConfig(model_id="default")
    )
    deputy_temperature: float = DEFAULT_DEPUTY_TEMPERATURE
    insufficient_input_message: str | None = None
    moderator_prompt: str | None = None


@dataclass
class ChatSession:
    """One chat room's live state: record, runtimes, and any suspended exchange."""

    chat: ChatRecord
    runtimes: dict[str, CompanionRuntime]
    pending: Context | None = None
    last_speaker: CompanionRuntime | None = None


def default_round_count(participant_count: int, rng: random.Random) -> int:
    """Uniform round count in [4, participants]; small chats clamp to 4."""
    return rng.randint(4, max(4, participant_count))


def route_reply(
    context: Context,
    sender: str,
    timestamp: datetime,
    wrote_fields: bool = False,
) -> ChatMessage | None:
    """Turn the context's upstream fields into at most one chat entry.

    Precedence: question > quote > excerpt > message. ``wrote_fields`` marks
    turns that legitimately produced no entry (a deputy handing its job to the
    host); otherwise an entirely empty reply is noted as an error.
    """
    for field_name, kind in (
        ("question", "question"),
        ("quote", "quote"),
        ("excerpt", "excerpt"),
        ("message", "message"),
    ):
        body = getattr(context, field_name)
        if body:
            return ChatMessage(
                sender=sender,
                body=body,
                kind=kind,
                conversation_id=context.conversation_id,
                timestamp=timestamp,
            )
    if not wrote_fields:
        context.note_error(f"turn of {sender!r} produced no chat entry")
    return None


def transcript_lines(chat: ChatRecord) -> list[str]:
    """Transcript serialization: one header line, then one line per message."""
    header = {
        "schema": TRANSCRIPT_SCHEMA,
        "chatId": chat.id,
        "situationId": chat.situation_id,
        "participants": list(chat.participants),
    }
    lines = [json.dumps(header, ensure_ascii=False, sort_keys=True)]
    lines += [
        json.dumps(m.to_dict(), ensure_ascii=False, sort_keys=True) for m in chat.messages
    ]
    return lines


class ChatStore:
    """Append-only JSONL persistence for transcripts plus world snapshots."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, chat_id: str) -> Path:
        return self.directory / f"{chat_id}.jsonl"

    def create(self, chat: ChatRecord) -> None:
        self._path(chat.id).write_text(transcript_lines(chat)[0] + "\n", encoding="utf-8")

    def append(self, chat: ChatRecord, message: ChatMessage) -> None:
        with self._path(chat.id).open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(message.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")

    def sync(self, chat: ChatRecord) -> None:
        with self._path(chat.id).open("a", encoding="utf-8") as fh:
            fh.flush()
            os.fsync(fh.fileno())

    def load(self, chat_id: str, user_name: str | None = None) -> ChatRecord:
        lines = self._path(chat_id).read_text(encoding="utf-8").splitlines()
        header = json.loads(lines[0])
        if header.get("schema") != TRANSCRIPT_SCHEMA:
            raise ValueError(f"unexpected transcript schema {header.get('schema')!r}")
        chat = ChatRecord(
            id=header["chatId"],
            situation_id=header["situationId"],
            participants=list(header["participants"]),
        )
        for line in lines[1:]:
            chat.append(ChatMessage.from_dict(json.loads(line)))
        for message in chat.messages:
            if message.sender == user_name:
                continue
            chat.interaction_counts[message.sender] = (
                chat.interaction_counts.get(message.sender, 0) + 1
            )
        return chat

    def save_world(self, world: WorldState) -> None:
        payload = {"schema": WORLD_SCHEMA, "entries": world.to_dict()}
        (self.directory / "world.json").write_text(
            json.dumps(payload, ensure_ascii=False, sort_keys=True), encoding="utf-8"
        )

    def load_world(self) -> WorldState:
        payload = json.loads((self.directory / "world.json").read_text(encoding="utf-8"))
        if payload.get("schema") != WORLD_SCHEMA:
            raise ValueError(f"unexpected world schema {payload.get('schema')!r}")
        return WorldState.from_dict(payload["entries"])


class Engine:
    """Binds configs, world state, backend, and clock into one orchestrator.

    All mutation runs through one session's loop at a time; a fixed seed plus
    a scripted backend plus a logical clock makes entire runs replayable.
    """

    def __init__(
        self,
        configs: Iterable[CompanionConfig],
        backend: Backend,
        *,
        seed: int | None = None,
        clock: Callable[[], datetime] | None = None,
        settings: EngineSettings | None = None,
        store: ChatStore | None = None,
        policy: ModerationPolicy | None = None,
        custom_classes: dict[str, type[CompanionRuntime]] | None = None,
    ):
        configs = list(configs)
        self.registry = dict(BUILTIN_RUNTIME_CLASSES)
        if custom_classes:
            self.registry.update(custom_classes)
        errors = validate_configs(configs, custom_classes or ())
        if errors:
            raise ConfigError(
                "invalid companion configuration:\n" + "\n".join(str(e) for e in errors)
            )

        self.configs: dict[str, CompanionConfig] = {c.name: c for c in configs}
        user_configs = [c for c in configs if c.kind is CompanionKind.USER]
        if user_configs:
            self.user_name = user_configs[0].name
        else:
            # Exactly one user must exist per engine; synthesize the default.
            self.user_name = DEFAULT_USER_NAME
            self.configs[self.user_name] = CompanionConfig(
                name=self.user_name,
                class_name="User",
                description="The human participant",
                base_prompt="",
                kind=CompanionKind.USER,
            )

        self.backend = backend
        self.world = WorldState()
        self.rng = random.Random(seed)
        self.clock = clock or datetime.now
        self.settings = settings or EngineSettings()
        self.store = store
        self.policy = policy or ModerationPolicy()
        self.sessions: dict[str, ChatSession] = {}
        self._chat_ids = itertools.count(1)
        self._conversation_ids = itertools.count(1)
        self._job_ids = itertools.count(1)

    # --- construction helpers ------------------------------------------

    def known_situations(self) -> set[str]:
        return {s.id for c in self.configs.values() for s in c.situations}

    def resolve_model_config(self, config: CompanionConfig) -> ModelConfig:
        base = config.model_override or self.settings.default_model
        if config.temperature is not None:
            return dataclasses.replace(base, temperature=config.temperature)
        if config.kind is CompanionKind.SHELL and config.model_override is None:
            # Structured deputy inferences default to a low temperature.
            return dataclasses.replace(base, temperature=self.settings.deputy_temperature)
        return base

    def _build_runtime(self, config: CompanionConfig) -> CompanionRuntime:
        runtime_class = self.registry[config.class_name]
        return runtime_class(config, self.rng, self.resolve_model_config(config))

    def new_admin(self, chat_id: str) -> Callable[[str], JobAdminData]:
        def factory(speaker: str) -> JobAdminData:
            return JobAdminData(
                job_id=f"job-{next(self._job_ids)}",
                chat_id=chat_id,
                speaker_name=speaker,
                created_at=self.clock(),
            )

        return factory

    def _env(self, session: ChatSession) -> ReplyEnv:
        env = ReplyEnv(
            world=self.world,
            backend=self.backend,
            rng=self.rng,
            now=self.clock,
            new_admin=self.new_admin(session.chat.id),
            chat=session.chat,
        )
        if self.settings.insufficient_input_message:
            env.insufficient_input_message = self.settings.insufficient_input_message
        return env

    def create_chat(
        self,
        situation_id: str,
        participants: list[str],
        chat_id: str | None = None,
    ) -> ChatSession:
        """Create a chat room and instantiate fresh runtimes (moods sampled here)."""
        for name in participants:
            if name not in self.configs:
                raise UnknownCompanionError(name)
        if situation_id and situation_id not in self.known_situations():
            raise UnknownSituationError(situation_id)

        roster = list(participants)
        if self.user_name not in roster:
            roster.insert(0, self.user_name)

        chat = ChatRecord(
            id=chat_id or f"chat-{next(self._chat_ids)}",
            situation_id=situation_id,
            participants=roster,
        )
        runtimes = {
            name: self._build_runtime(config) for name, config in self.configs.items()
        }
        session = ChatSession(chat=chat, runtimes=runtimes)
        self.sessions[chat.id] = session
        if self.store:
            self.store.create(chat)
        return session

    # --- conversation flow ----------------------------------------------

    def new_conversation_id(self, chat: ChatRecord) -> str:
        return f"{chat.id}:c{next(self._conversation_ids)}"

    def post_user_message(
        self,
        session: ChatSession,
        body: str,
        conversation_id: str | None = None,
        text: str | None = None,
        paragraph: str | None = None,
        on_reply: OnReply | None = None,
        max_rounds: int | None = None,
    ) -> Context:
        """Append the user's message and run (or resume) the conversation."""
        pending = session.pending
        if (
            pending is not None
            and conversation_id
            and conversation_id == pending.conversation_id
        ):
            context = pending
            session.pending = None
            context.input = body
            context.question = ""
            if max_rounds is None and context.action:
                # Resuming a suspended action: one round finishes it.
                max_rounds = 1
        else:
            context = Context(
                conversation_id=self.new_conversation_id(session.chat),
                text=text or "",
                paragraph=paragraph or "",
            )
        if text:
            context.text = text
        if paragraph:
            context.paragraph = paragraph

        self._append(
            session,
            ChatMessage(
                sender=self.user_name,
                body=body,
                kind="message",
                conversation_id=context.conversation_id,
                timestamp=self.clock(),
            ),
            on_reply=None,  # the caller already has their own message
        )

        if max_rounds is None:
            speakers = [
                p
                for p in session.chat.participants
                if self.configs[p].kind is not CompanionKind.SHELL
            ]
            max_rounds = default_round_count(len(speakers), self.rng)
        context = self.run_conversation(session, context, max_rounds, on_reply)
        if context.question:
            session.pending = context
        return context

    def run_conversation(
        self,
        session: ChatSession,
        context: Context,
        max_rounds: int,
        on_reply: OnReply | None = None,
    ) -> Context:
        """Run up to max_rounds moderated rounds over one shared context.

        The loop ends early when the moderator hands the floor to the user,
        when a deputy suspends the exchange with a question, or when an error
        is recorded on the context.
        """
        chat = session.chat
        for _ in range(max_rounds):
            speakers = select_next_speakers(
                chat,
                context,
                self.policy,
                self.configs,
                self.backend,
                self.rng,
                self.settings.default_model,
                moderator_prompt=self.settings.moderator_prompt,
                new_admin=self.new_admin(chat.id),
            )
            if not speakers or speakers[0] == self.user_name:
                break
            speakers = [s for s in speakers if s != self.user_name]
            context = self.run_chat_round(session, context, speakers, on_reply)
            if context.error or context.question:
                break
            context.recipients = []
        return context

    def run_chat_round(
        self,
        session: ChatSession,
        context: Context,
        speakers: list[str],
        on_reply: OnReply | None = None,
    ) -> Context:
        """Let each selected speaker reply in turn, routing and counting as we go."""
        chat = session.chat
        env = self._env(session)
        for name in speakers:
            runtime = session.runtimes.get(name)
            if runtime is None:
                context.note_error(f"cannot resolve speaker {name!r}")
                continue
            context.companion_names = ", ".join(
                p
                for p in chat.participants
                if p != name and self.configs[p].kind is not CompanionKind.SHELL
            )
            job_before, answer_before = context.job, context.answer
            context = generate_reply(runtime, context, session.last_speaker, env)
            wrote_fields = context.job != job_before or context.answer != answer_before
            message = route_reply(context, name, self.clock(), wrote_fields=wrote_fields)
            if message is not None:
                self._append(session, message, on_reply)
                context.message = context.excerpt = context.quote = ""
            session.last_speaker = runtime
            if context.question or context.error:
                break
        if self.store:
            self.store.sync(chat)
        return context

    def _append(
        self, session: ChatSession, message: ChatMessage, on_reply: OnReply | None
    ) -> None:
        session.chat.append(message)
        if message.sender != self.user_name:
            counts = session.chat.interaction_counts
            counts[message.sender] = counts.get(message.sender, 0) + 1
            runtime = session.runtimes.get(message.sender)
            if runtime is not None:
                runtime.interaction_count += 1
            self.world.increment(f"{INTERACTIONS_PREFIX}{message.sender}", 1)
        if self.store:
            self.store.append(session.chat, message)
        if on_reply is not None and message.sender != self.user_name:
            on_reply(message)

    # --- actions ----------------------------------------------------------

    def find_action(self, action_id: str) -> ActionDescription:
        for config in self.configs.values():
            for action in config.actions:
                if action.id == action_id:
                    return action
        raise UnknownActionError(action_id)

    def action_unlocked(self, action: ActionDescription) -> bool:
        return condition_met(action.condition, self.world)

    def available_actions(self, session: ChatSession) -> list[ActionDescription]:
        """Unlocked actions hosted by this chat's participants."""
        actions = []
        for name in session.chat.participants:
            for action in self.configs[name].actions:
                if self.action_unlocked(action):
                    actions.append(action)
        return actions

    def trigger_action(
        self,
        session: ChatSession,
        action_id: str,
        text: str | None = None,
        paragraph: str | None = None,
        on_reply: OnReply | None = None,
    ) -> Context:
        """Run one explicit action: the deputy speaks first, its host follows up."""
        action = self.find_action(action_id)
        if not self.action_unlocked(action):
            raise ActionLockedError(action)
        context = Context(
            conversation_id=self.new_conversation_id(session.chat),
            action=action.id,
            recipients=[action.deputy_name, action.companion_name],
            text=text or "",
            paragraph=paragraph or "",
        )
        context = self.run_conversation(session, context, max_rounds=1, on_reply=on_reply)
        if context.question:
            session.pending = context
        else:
            context.action = ""
            context.recipients = []
        return context
