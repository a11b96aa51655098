"""Runtime behavior of companions: mood sampling, reply triggers, reply chains.

Every companion owns an ordered list of (trigger, reply function) pairs. On a
turn the pairs run one by one; each firing function may edit the context, and
the first one that reports the turn handled ends the chain. That ordering is
what lets a summarising step boil down an oversized context before the step
that actually talks to the model.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from datetime import datetime
from typing import Callable, Mapping, Optional, TYPE_CHECKING

from .backend import Backend, BackendError, Job, JobAdminData
from .config import CompanionConfig, CompanionKind, ModelConfig, MoodSpec
from .context import ChatRecord, Context
from .world import WorldState, condition_met

if TYPE_CHECKING:
    from .prompter import Decorator

NEUTRAL_MOOD = "neutral"

DEFAULT_INSUFFICIENT_INPUT_MESSAGE = (
    "I need a bit more material to work with. Please provide some text first."
)

# (context, last speaker, env) -> (handled, context). Functions must hand the
# context back even when not handled, so edits flow down the chain.
ReplyFunction = Callable[[Context, Optional["CompanionRuntime"], "ReplyEnv"], tuple[bool, Context]]


@dataclass
class ReplyEnv:
    """Everything a reply function may need beyond the context itself."""

    world: WorldState
    backend: Backend
    rng: random.Random
    now: Callable[[], datetime]
    new_admin: Callable[[str], JobAdminData]
    chat: ChatRecord | None = None
    decorators: Mapping[str, "Decorator"] | None = None
    insufficient_input_message: str = DEFAULT_INSUFFICIENT_INPUT_MESSAGE


@dataclass(frozen=True)
class ReplyTrigger:
    """Condition deciding whether a reply function fires on this turn."""

    kind: str  # action_id | sender_name | companion_identity | predicate | random_threshold | always
    payload: object = None

    @classmethod
    def action(cls, action_id: str) -> "ReplyTrigger":
        return cls("action_id", action_id)

    @classmethod
    def sender(cls, name: str) -> "ReplyTrigger":
        return cls("sender_name", name)

    @classmethod
    def identity(cls, runtime: "CompanionRuntime") -> "ReplyTrigger":
        return cls("companion_identity", runtime)

    @classmethod
    def predicate(cls, fn: Callable[[Context, object], bool]) -> "ReplyTrigger":
        return cls("predicate", fn)

    @classmethod
    def random(cls, threshold: float) -> "ReplyTrigger":
        if not 0 <= threshold <= 1:
            raise ValueError("random threshold must be in [0, 1]")
        return cls("random_threshold", threshold)

    @classmethod
    def always(cls) -> "ReplyTrigger":
        return cls("always")


def sample_mood(moods: list[MoodSpec], roll: float) -> str:
    """Pick a mood by cumulative probability interval; the remainder is neutral."""
    cumulative = 0.0
    for mood in moods:
        cumulative += mood.probability
        if roll < cumulative:
            return mood.label
    return NEUTRAL_MOOD


def unlocked_knowledge(config: CompanionConfig, state: WorldState) -> list[str]:
    """Knowledge lines whose condition is absent or currently met, in config order.

    A condition that cannot be evaluated (non-numeric stored value) counts as
    locked rather than failing the whole lookup.
    """
    return [k.line for k in config.knowledge if condition_met(k.condition, state)]


def unlocked_mottos(config: CompanionConfig, state: WorldState) -> list[str]:
    return [m.line for m in config.mottos if condition_met(m.condition, state)]


def evaluate_reply_trigger(
    trigger: ReplyTrigger,
    context: Context,
    last_speaker: object,
    rng: random.Random,
) -> bool:
    """Decide whether one trigger fires given the context and the last speaker."""
    if trigger.kind == "always":
        return True
    if trigger.kind == "action_id":
        return bool(context.action) and context.action == trigger.payload
    if trigger.kind == "sender_name":
        return getattr(last_speaker, "name", None) == trigger.payload
    if trigger.kind == "companion_identity":
        return last_speaker is trigger.payload
    if trigger.kind == "random_threshold":
        return trigger.payload < rng.random()
    if trigger.kind == "predicate":
        try:
            return bool(trigger.payload(context, last_speaker))
        except Exception as exc:  # noqa: BLE001 - a broken predicate must not kill the turn
            context.note_error(f"reply trigger predicate failed: {exc}")
            return False
    raise ValueError(f"unknown trigger kind {trigger.kind!r}")


class CompanionRuntime:
    """Live state of one companion inside a single chat session.

    Moods are sampled once, at instantiation, so they change on reload. The
    model configuration arrives already resolved (overrides applied) from the
    engine that built the runtime.
    """

    def __init__(self, config: CompanionConfig, rng: random.Random, model_config: ModelConfig):
        self.config = config
        self.model_config = model_config
        self.active_mood = sample_mood(config.moods, rng.random())
        self.interaction_count = 0
        self.reply_functions: list[tuple[ReplyTrigger, ReplyFunction]] = []
        self._register_reply_functions()
        if config.kind is not CompanionKind.USER and not self.reply_functions:
            raise ValueError(
                f"{type(self).__name__} {config.name!r} registered no reply functions; "
                "NPCs and shells need at least the catch-all"
            )

    @property
    def name(self) -> str:
        return self.config.name

    @property
    def kind(self) -> CompanionKind:
        return self.config.kind

    def _register_reply_functions(self) -> None:
        """Subclasses install their built-in chain here."""

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name!r} mood={self.active_mood}>"


class UserProxy(CompanionRuntime):
    """Stands in for the human participant; never generates replies."""


class ChatCompanion(CompanionRuntime):
    """An NPC: summarises oversized context if needed, then chats via the backend."""

    def _register_reply_functions(self) -> None:
        from .deputy import make_summarize_reply, oversized_predicate

        self.reply_functions = [
            (ReplyTrigger.predicate(oversized_predicate(self.model_config)),
             make_summarize_reply(self.model_config)),
            (ReplyTrigger.always(), self._chat_reply),
        ]

    def _chat_reply(self, context: Context, last_speaker, env: ReplyEnv) -> tuple[bool, Context]:
        result = env.backend.complete(build_job(self, context, env))
        context.message = result.text
        return True, context


def build_job(runtime: CompanionRuntime, context: Context, env: ReplyEnv) -> Job:
    """Assemble and render this speaker's prompt, packaged with admin data."""
    from .prompter import apply_chat_template, assemble_prompt

    prompt = assemble_prompt(
        context, env.world, runtime, env.now(), chat=env.chat, decorators=env.decorators
    )
    return Job(
        context=context.copy(),
        model_config=runtime.model_config,
        rendered_prompt=apply_chat_template(prompt),
        admin=env.new_admin(runtime.name),
        turns=tuple(prompt.as_messages()),
    )


def generate_reply(
    runtime: CompanionRuntime,
    context: Context,
    last_speaker: object,
    env: ReplyEnv,
) -> Context:
    """Run the companion's reply chain until the first function handles the turn.

    Functions whose trigger fires run in registration order and each receives
    the context as edited by its predecessors. A backend failure aborts the
    exchange by recording the error on the context; an exhausted chain records
    "unhandled".
    """
    handled = False
    for trigger, reply_fn in runtime.reply_functions:
        if not evaluate_reply_trigger(trigger, context, last_speaker, env.rng):
            continue
        try:
            handled, context = reply_fn(context, last_speaker, env)
        except BackendError as exc:
            context.note_error(f"backend failure: {exc}")
            return context
        if handled:
            break
    if not handled:
        context.note_error("unhandled")
    return context
