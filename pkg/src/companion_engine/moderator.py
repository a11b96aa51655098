"""Speaker selection for each conversation round.

Candidate rules run in a fixed priority order and the first rule that
survives post-filtering wins. The post-filters drop excluded speakers, the
previous speaker when repeats are disabled, and shells whenever no action is
active; the user may only be returned where the rules explicitly allow it.
A rule whose output is filtered away falls through to the next one.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Callable, Mapping

from .backend import Backend, BackendError, Job, JobAdminData
from .config import CompanionConfig, CompanionKind, ModelConfig
from .context import ChatRecord, Context

HISTORY_WINDOW = 8

MODE_AUTO = "auto"
MODE_ROUND_ROBIN = "round_robin"
MODE_RANDOM = "random"


@dataclass(frozen=True)
class ModerationPolicy:
    selection_mode: str = MODE_AUTO
    excluded_speakers: frozenset[str] = frozenset()
    allow_repeat: bool = True


def load_default_moderator_prompt() -> str:
    from importlib.resources import files

    return files("companion_engine").joinpath("assets/moderator_prompt.txt").read_text("utf-8")


def _default_admin(speaker: str) -> JobAdminData:
    return JobAdminData(
        job_id="moderator", chat_id="", speaker_name=speaker, created_at=datetime.now()
    )


def _whole_word(name: str) -> re.Pattern:
    return re.compile(rf"(?<!\w){re.escape(name)}(?!\w)")


def _mentions(body: str, participants: list[str]) -> list[str]:
    """Participants named in the body, ordered by first occurrence."""
    hits = []
    for name in participants:
        match = _whole_word(name).search(body)
        if match:
            hits.append((match.start(), name))
    return [name for _, name in sorted(hits)]


def _parse_speaker_reply(reply: str, participants: list[str], user_name: str) -> str | None:
    """Earliest case-insensitive participant name in the reply; 'user' counts."""
    hits = []
    for name in participants:
        match = re.search(rf"(?<!\w){re.escape(name)}(?!\w)", reply, re.IGNORECASE)
        if match:
            hits.append((match.start(), name))
    match = re.search(r"(?<!\w)user(?!\w)", reply, re.IGNORECASE)
    if match:
        hits.append((match.start(), user_name))
    if not hits:
        return None
    return min(hits)[1]


def select_next_speakers(
    chat: ChatRecord,
    context: Context,
    policy: ModerationPolicy,
    companions: Mapping[str, CompanionConfig],
    backend: Backend | None,
    rng: random.Random,
    model_config: ModelConfig,
    moderator_prompt: str | None = None,
    new_admin: Callable[[str], JobAdminData] = _default_admin,
) -> list[str]:
    """Pick the next speaker(s) for one round, in strict rule priority.

    Rules, first survivor wins: (1) recipients forced by the context,
    (2) the only other participant in a 1:1 chat, (3) participants mentioned
    in the last message in mention order, (4) round-robin when that mode is
    set, (5) a random speaker when that mode is set, (6) a backend call over
    recent history picking the next logical speaker, (7) a uniform random
    fallback. The user can only be returned by rules 3 and 6; `auto` mode
    skips 4 and 5.
    """

    def kind_of(name: str) -> CompanionKind:
        config = companions.get(name)
        return config.kind if config else CompanionKind.NPC

    user_name = next(
        (p for p in chat.participants if kind_of(p) is CompanionKind.USER), None
    )
    action_active = bool(context.action)
    last = chat.last_message()
    previous_speaker = last.sender if last else None

    def filtered(names: list[str], allow_user: bool) -> list[str]:
        out: list[str] = []
        for name in names:
            if name in out:
                continue
            if name in policy.excluded_speakers:
                continue
            if not policy.allow_repeat and name == previous_speaker:
                continue
            if name == user_name:
                if allow_user:
                    out.append(name)
                continue
            if kind_of(name) is CompanionKind.SHELL and not action_active:
                continue
            if name not in chat.participants and kind_of(name) is not CompanionKind.SHELL:
                continue
            out.append(name)
        return out

    # Free-speaking pool used by the positional rules: shells only join it
    # while an action is active, and the user never does.
    pool = [
        p
        for p in chat.participants
        if p != user_name
        and (kind_of(p) is not CompanionKind.SHELL or action_active)
    ]

    # Rule 1: recipients forced by the context (an action activating a deputy).
    if context.recipients:
        result = filtered(list(context.recipients), allow_user=False)
        if result:
            return result

    # Rule 2: the only other participant in a 1:1 chat.
    npc_pool = [p for p in pool if kind_of(p) is not CompanionKind.SHELL]
    if len(npc_pool) == 1:
        result = filtered(npc_pool, allow_user=False)
        if result:
            return result

    # Rule 3: participants mentioned in the last message, in mention order.
    if last is not None:
        result = filtered(_mentions(last.body, chat.participants), allow_user=True)
        if result:
            return result

    # Rule 4: round robin.
    if policy.selection_mode == MODE_ROUND_ROBIN and pool:
        start = pool.index(previous_speaker) + 1 if previous_speaker in pool else 0
        rotation = [pool[(start + i) % len(pool)] for i in range(len(pool))]
        result = filtered(rotation, allow_user=False)
        if result:
            return result[:1]

    # Rule 5: random speaker.
    if policy.selection_mode == MODE_RANDOM and pool:
        result = filtered([rng.choice(pool)], allow_user=False)
        if result:
            return result

    # Rule 6: ask the backend to pick the next logical speaker.
    if backend is not None:
        choice = _llm_pick(
            chat, context, companions, backend, model_config,
            moderator_prompt, new_admin, user_name,
        )
        if choice is not None:
            result = filtered([choice], allow_user=True)
            if result:
                return result

    # Rule 7: uniform random fallback.
    candidates = filtered(pool, allow_user=False)
    if not candidates:
        return []
    return [rng.choice(candidates)]


def _llm_pick(
    chat: ChatRecord,
    context: Context,
    companions: Mapping[str, CompanionConfig],
    backend: Backend,
    model_config: ModelConfig,
    moderator_prompt: str | None,
    new_admin: Callable[[str], JobAdminData],
    user_name: str | None,
) -> str | None:
    template = moderator_prompt or load_default_moderator_prompt()
    roster = []
    for name in chat.participants:
        config = companions.get(name)
        description = config.description if config else ""
        roster.append(f"- {name}: {description}" if description else f"- {name}")
    history = [
        f"{m.sender}: {m.body}" for m in chat.messages[-HISTORY_WINDOW:] if m.kind == "message"
    ]
    context.chat = "\n".join(history)
    prompt = template.replace("{{PARTICIPANTS}}", "\n".join(roster)).replace(
        "{{HISTORY}}", context.chat
    )
    job = Job(
        context=context.copy(),
        model_config=replace(model_config, temperature=0.1),
        rendered_prompt=prompt,
        admin=new_admin("moderator"),
    )
    try:
        reply = backend.complete(job).text
    except BackendError:
        return None
    return _parse_speaker_reply(reply, list(chat.participants), user_name or "user")
