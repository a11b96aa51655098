"""Companion configuration: schema types, strict JSON parsing, and validation.

A configuration file is a single JSON document holding an array of companion
objects (see ``schemas/companion_config.schema.json``). Parsing is strict:
unknown fields are rejected so typos surface instead of silently disabling a
feature. Parsing yields dataclasses; :func:`validate_configs` then checks the
semantic invariants (unique names, mood probability budget, cross-references)
and returns a stable, ordered error list instead of raising.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable

from .world import COMPARATORS, Condition


class CompanionKind(str, Enum):
    USER = "user"
    NPC = "npc"
    SHELL = "shell"


class DeputyScope(str, Enum):
    """Slice of the provided document a deputy operates on."""

    LAST_SENTENCE = "last_sentence"
    LAST_PARAGRAPH = "last_paragraph"
    RANDOM_PARAGRAPH = "random_paragraph"
    SOME = "some"
    FULL_DOCUMENT = "full_document"


class PromptFormat(str, Enum):
    CHATML = "chatml"
    MISTRAL = "mistral"


@dataclass(frozen=True)
class MoodSpec:
    label: str
    probability: float
    prompt_piece: str


@dataclass(frozen=True)
class ConditionalLine:
    line: str
    condition: Condition | None = None


@dataclass(frozen=True)
class SituationPrompt:
    id: str
    prompt_piece: str


@dataclass(frozen=True)
class ActionDescription:
    id: str
    label: str
    deputy_name: str
    companion_name: str
    condition: Condition | None = None


@dataclass(frozen=True)
class ModelConfig:
    model_id: str
    temperature: float = 0.7
    max_tokens: int = 512
    context_token_budget: int = 8192
    prompt_format: PromptFormat = PromptFormat.CHATML
    stop_sequences: tuple[str, ...] = ()


@dataclass
class CompanionConfig:
    """Declarative identity of one companion: prompts, moods, knowledge, actions."""

    name: str
    class_name: str
    description: str
    base_prompt: str
    kind: CompanionKind
    bio: str | None = None
    avatar: str | None = None
    job: str | None = None
    situations: list[SituationPrompt] = field(default_factory=list)
    knowledge: list[ConditionalLine] = field(default_factory=list)
    mottos: list[ConditionalLine] = field(default_factory=list)
    moods: list[MoodSpec] = field(default_factory=list)
    actions: list[ActionDescription] = field(default_factory=list)
    # Parsed and carried for forward compatibility; no runtime behavior yet.
    triggers: list[dict] = field(default_factory=list)
    scope: DeputyScope | None = None
    model_override: ModelConfig | None = None
    temperature: float | None = None


@dataclass(frozen=True)
class ValidationError:
    """One invariant violation: which config, which field, and why."""

    config: str
    field: str
    code: str
    reason: str

    def __str__(self) -> str:
        return f"{self.config}: {self.field}: {self.reason}"


class ConfigError(ValueError):
    """Structural problem in a configuration document (bad JSON shape, unknown field)."""


# Runtime classes that ship with the engine. ``class_name`` in a config must
# name one of these or a class registered by the embedding application.
BUILTIN_CLASS_NAMES = frozenset({"User", "ChatCompanion", "InstructionDeputy", "AnsweringDeputy"})

# Deputy classes whose behavior is fully defined by their configured job.
JOB_DRIVEN_CLASS_NAMES = frozenset({"InstructionDeputy", "AnsweringDeputy"})

SCHEMA_VERSION = "companion-config@1"


# --- strict JSON -> dataclass parsing -------------------------------------

_CONFIG_FIELDS = {
    "name", "className", "description", "basePrompt", "kind", "bio", "avatar",
    "job", "situations", "knowledge", "mottos", "moods", "actions", "triggers",
    "scope", "modelOverride", "temperature",
}
_REQUIRED_FIELDS = ("name", "className", "description", "basePrompt", "kind")


def _expect(obj: Any, type_: type, where: str) -> Any:
    if not isinstance(obj, type_):
        raise ConfigError(f"{where}: expected {type_.__name__}, got {type(obj).__name__}")
    return obj


def _parse_condition(obj: Any, where: str) -> Condition:
    _expect(obj, dict, where)
    unknown = set(obj) - {"key", "comparator", "value"}
    if unknown:
        raise ConfigError(f"{where}: unknown fields {sorted(unknown)}")
    key = _expect(obj.get("key", ""), str, f"{where}.key")
    comparator = _expect(obj.get("comparator", ""), str, f"{where}.comparator")
    value = obj.get("value")
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{where}.value: expected number")
    if comparator not in COMPARATORS:
        raise ConfigError(f"{where}.comparator: unknown comparator {comparator!r}")
    if not key:
        raise ConfigError(f"{where}.key: must be non-empty")
    return Condition(key=key, comparator=comparator, value=float(value))


def _parse_conditional_line(obj: Any, where: str) -> ConditionalLine:
    _expect(obj, dict, where)
    unknown = set(obj) - {"line", "condition"}
    if unknown:
        raise ConfigError(f"{where}: unknown fields {sorted(unknown)}")
    line = _expect(obj.get("line", ""), str, f"{where}.line")
    condition = None
    if obj.get("condition") is not None:
        condition = _parse_condition(obj["condition"], f"{where}.condition")
    return ConditionalLine(line=line, condition=condition)


def _parse_model_config(obj: Any, where: str) -> ModelConfig:
    _expect(obj, dict, where)
    known = {"modelId", "temperature", "maxTokens", "contextTokenBudget", "promptFormat", "stopSequences"}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"{where}: unknown fields {sorted(unknown)}")
    fmt = obj.get("promptFormat", "chatml")
    try:
        prompt_format = PromptFormat(fmt)
    except ValueError:
        raise ConfigError(f"{where}.promptFormat: must be one of {[f.value for f in PromptFormat]}")
    return ModelConfig(
        model_id=_expect(obj.get("modelId", ""), str, f"{where}.modelId"),
        temperature=float(obj.get("temperature", 0.7)),
        max_tokens=int(obj.get("maxTokens", 512)),
        context_token_budget=int(obj.get("contextTokenBudget", 8192)),
        prompt_format=prompt_format,
        stop_sequences=tuple(_expect(obj.get("stopSequences", []), list, f"{where}.stopSequences")),
    )


def parse_companion_config(obj: Any, where: str = "companion") -> CompanionConfig:
    """Parse one companion object; raises ConfigError on structural problems."""
    _expect(obj, dict, where)
    unknown = set(obj) - _CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"{where}: unknown fields {sorted(unknown)}")
    missing = [f for f in _REQUIRED_FIELDS if f not in obj]
    if missing:
        raise ConfigError(f"{where}: missing required fields {missing}")

    name = _expect(obj["name"], str, f"{where}.name")
    where = f"companion {name!r}" if name else where
    try:
        kind = CompanionKind(_expect(obj["kind"], str, f"{where}.kind"))
    except ValueError:
        raise ConfigError(f"{where}.kind: must be one of {[k.value for k in CompanionKind]}")

    scope = None
    if obj.get("scope") is not None:
        try:
            scope = DeputyScope(_expect(obj["scope"], str, f"{where}.scope"))
        except ValueError:
            raise ConfigError(f"{where}.scope: must be one of {[s.value for s in DeputyScope]}")

    def parse_list(key: str, fn) -> list:
        raw = obj.get(key) or []
        _expect(raw, list, f"{where}.{key}")
        return [fn(item, f"{where}.{key}[{i}]") for i, item in enumerate(raw)]

    def parse_situation(item: Any, w: str) -> SituationPrompt:
        _expect(item, dict, w)
        unknown = set(item) - {"id", "promptPiece"}
        if unknown:
            raise ConfigError(f"{w}: unknown fields {sorted(unknown)}")
        return SituationPrompt(
            id=_expect(item.get("id", ""), str, f"{w}.id"),
            prompt_piece=_expect(item.get("promptPiece", ""), str, f"{w}.promptPiece"),
        )

    def parse_mood(item: Any, w: str) -> MoodSpec:
        _expect(item, dict, w)
        unknown = set(item) - {"label", "probability", "promptPiece"}
        if unknown:
            raise ConfigError(f"{w}: unknown fields {sorted(unknown)}")
        probability = item.get("probability")
        if not isinstance(probability, (int, float)) or isinstance(probability, bool):
            raise ConfigError(f"{w}.probability: expected number")
        return MoodSpec(
            label=_expect(item.get("label", ""), str, f"{w}.label"),
            probability=float(probability),
            prompt_piece=_expect(item.get("promptPiece", ""), str, f"{w}.promptPiece"),
        )

    def parse_action(item: Any, w: str) -> ActionDescription:
        _expect(item, dict, w)
        unknown = set(item) - {"id", "label", "deputyName", "companionName", "condition"}
        if unknown:
            raise ConfigError(f"{w}: unknown fields {sorted(unknown)}")
        condition = None
        if item.get("condition") is not None:
            condition = _parse_condition(item["condition"], f"{w}.condition")
        return ActionDescription(
            id=_expect(item.get("id", ""), str, f"{w}.id"),
            label=_expect(item.get("label", ""), str, f"{w}.label"),
            deputy_name=_expect(item.get("deputyName", ""), str, f"{w}.deputyName"),
            companion_name=_expect(item.get("companionName", ""), str, f"{w}.companionName"),
            condition=condition,
        )

    temperature = obj.get("temperature")
    if temperature is not None and (not isinstance(temperature, (int, float)) or isinstance(temperature, bool)):
        raise ConfigError(f"{where}.temperature: expected number")

    return CompanionConfig(
        name=name,
        class_name=_expect(obj["className"], str, f"{where}.className"),
        description=_expect(obj["description"], str, f"{where}.description"),
        base_prompt=_expect(obj["basePrompt"], str, f"{where}.basePrompt"),
        kind=kind,
        bio=obj.get("bio"),
        avatar=obj.get("avatar"),
        job=obj.get("job"),
        situations=parse_list("situations", parse_situation),
        knowledge=parse_list("knowledge", _parse_conditional_line),
        mottos=parse_list("mottos", _parse_conditional_line),
        moods=parse_list("moods", parse_mood),
        actions=parse_list("actions", parse_action),
        triggers=list(obj.get("triggers") or []),
        scope=scope,
        model_override=_parse_model_config(obj["modelOverride"], f"{where}.modelOverride")
        if obj.get("modelOverride") is not None
        else None,
        temperature=float(temperature) if temperature is not None else None,
    )


def parse_companion_configs(document: Any) -> list[CompanionConfig]:
    """Parse the top-level array of companion objects."""
    _expect(document, list, "configuration document")
    return [parse_companion_config(item, f"companion[{i}]") for i, item in enumerate(document)]


def load_companion_configs(path: str | Path) -> list[CompanionConfig]:
    """Read and strictly parse a configuration file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_companion_configs(document)


# --- semantic validation ---------------------------------------------------


def validate_configs(
    configs: Iterable[CompanionConfig],
    custom_classes: Iterable[str] = (),
) -> list[ValidationError]:
    """Check every config invariant plus cross-references; empty list means valid.

    Pure and order-stable: the same input list always yields the same error
    list in the same order. ``custom_classes`` names deputy classes registered
    by the embedding application beyond the built-ins.
    """
    configs = list(configs)
    known_classes = BUILTIN_CLASS_NAMES | set(custom_classes)
    errors: list[ValidationError] = []

    def err(config: str, field: str, code: str, reason: str) -> None:
        errors.append(ValidationError(config=config, field=field, code=code, reason=reason))

    seen: dict[str, int] = {}
    for cfg in configs:
        if not cfg.name:
            err(cfg.name, "name", "empty_name", "companion name must be non-empty")
            continue
        seen[cfg.name] = seen.get(cfg.name, 0) + 1
    for name, count in seen.items():
        if count > 1:
            err(name, "name", "duplicate_name", f"duplicate companion name {name!r} ({count} occurrences)")

    users = [c for c in configs if c.kind is CompanionKind.USER]
    if len(users) > 1:
        err(users[1].name, "kind", "duplicate_user",
            f"at most one companion of kind 'user' is allowed, found {len(users)}")

    by_name = {c.name: c for c in configs}

    for cfg in configs:
        if cfg.class_name not in known_classes:
            err(cfg.name, "className", "unknown_class",
                f"unknown companion class {cfg.class_name!r}")

        if cfg.kind is CompanionKind.NPC and not cfg.base_prompt.strip():
            err(cfg.name, "basePrompt", "missing_base_prompt",
                "an NPC must have a non-empty basePrompt")

        if cfg.kind is CompanionKind.SHELL:
            has_job = bool(cfg.job and cfg.job.strip())
            custom = cfg.class_name in known_classes and cfg.class_name not in (
                JOB_DRIVEN_CLASS_NAMES | {"User", "ChatCompanion"}
            )
            if not has_job and not custom:
                err(cfg.name, "job", "missing_job",
                    "a shell needs a non-empty job or a registered custom class")

        mood_sum = 0.0
        for i, mood in enumerate(cfg.moods):
            if not mood.label:
                err(cfg.name, f"moods[{i}].label", "empty_mood_label", "mood label must be non-empty")
            if mood.probability < 0 or mood.probability > 1:
                err(cfg.name, f"moods[{i}].probability", "mood_probability_range",
                    f"mood probability {mood.probability} outside [0, 1]")
            else:
                mood_sum += mood.probability
        if mood_sum > 1.0 + 1e-9:
            err(cfg.name, "moods", "mood_probability_sum",
                f"mood probabilities sum to {mood_sum:g} > 1.0")

        for field_name, lines in (("knowledge", cfg.knowledge), ("mottos", cfg.mottos)):
            for i, entry in enumerate(lines):
                if not entry.line:
                    err(cfg.name, f"{field_name}[{i}].line", "empty_line",
                        f"{field_name} line must be non-empty")

        for i, situation in enumerate(cfg.situations):
            if not situation.id:
                err(cfg.name, f"situations[{i}].id", "empty_situation_id",
                    "situation id must be non-empty")

        if cfg.temperature is not None and not (0 <= cfg.temperature <= 2):
            err(cfg.name, "temperature", "temperature_range",
                f"temperature {cfg.temperature} outside [0, 2]")

        if cfg.model_override is not None:
            mc = cfg.model_override
            if mc.max_tokens <= 0:
                err(cfg.name, "modelOverride.maxTokens", "max_tokens_positive",
                    "maxTokens must be positive")
            if mc.context_token_budget <= mc.max_tokens:
                err(cfg.name, "modelOverride.contextTokenBudget", "budget_too_small",
                    f"contextTokenBudget {mc.context_token_budget} must exceed maxTokens {mc.max_tokens}")

        for i, action in enumerate(cfg.actions):
            deputy = by_name.get(action.deputy_name)
            if deputy is None or deputy.kind is not CompanionKind.SHELL:
                err(cfg.name, f"actions[{i}].deputyName", "unresolved_deputy",
                    f"action {action.id!r} names deputy {action.deputy_name!r} "
                    "which is not a configured shell")
            host = by_name.get(action.companion_name)
            if host is None or host.kind is not CompanionKind.NPC:
                err(cfg.name, f"actions[{i}].companionName", "unresolved_companion",
                    f"action {action.id!r} names companion {action.companion_name!r} "
                    "which is not a configured NPC")

    return errors
