"""Global key-value world state and the condition checks that gate unlocks.

The world state is a single flat store of tracked stats (interaction
counters, external app stats). Unlock conditions compare one stored value
against a threshold; a key that was never written compares as 0, so fresh
installs behave as "no interactions yet".
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Union

Value = Union[int, float, str]

COMPARATORS = {
    "<": operator.lt,
    "<=": operator.le,
    "==": operator.eq,
    ">=": operator.ge,
    ">": operator.gt,
}


class WorldStateTypeError(TypeError):
    """A numeric operation hit a non-numeric stored value."""


class ConditionTypeError(WorldStateTypeError):
    """A condition comparator was applied to a non-numeric stored value."""


@dataclass(frozen=True)
class Condition:
    """Threshold test against one world-state key, e.g. INTERACTIONS_Anders >= 3."""

    key: str
    comparator: str
    value: float

    def __post_init__(self) -> None:
        if not self.key:
            raise ValueError("condition key must be non-empty")
        if self.comparator not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.comparator!r}")

    def describe(self) -> str:
        return f"{self.key} {self.comparator} {self.value:g}"


def _is_number(value: object) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass
class WorldState:
    """Flat map of case-sensitive keys to numbers or strings.

    Mutation is serialized through the orchestration loop that owns the
    instance; values are plain data and safe to copy across threads.
    """

    entries: dict[str, Value] = field(default_factory=dict)

    def get(self, key: str) -> Value | None:
        return self.entries.get(key)

    def set(self, key: str, value: Value) -> None:
        if not key:
            raise ValueError("world-state key must be non-empty")
        self.entries[key] = value

    def increment(self, key: str, delta: float = 1) -> Value:
        """Add ``delta`` (must be positive) to a numeric counter, absent counts as 0."""
        if not key:
            raise ValueError("world-state key must be non-empty")
        if not _is_number(delta) or delta <= 0:
            raise ValueError("increment delta must be a positive number")
        current = self.entries.get(key, 0)
        if not _is_number(current):
            raise WorldStateTypeError(
                f"cannot increment {key!r}: stored value {current!r} is not numeric"
            )
        updated = current + delta
        self.entries[key] = updated
        return updated

    def to_dict(self) -> dict[str, Value]:
        """Snapshot export as a flat JSON-compatible object."""
        return dict(self.entries)

    @classmethod
    def from_dict(cls, data: dict[str, Value]) -> "WorldState":
        state = cls()
        for key, value in data.items():
            state.set(key, value)
        return state


def evaluate_condition(condition: Condition, state: WorldState) -> bool:
    """Apply the condition's comparator to (stored value, threshold).

    An absent key compares as 0. A non-numeric stored value raises
    ConditionTypeError; callers that gate unlocks treat that as "not met".
    """
    stored = state.get(condition.key)
    if stored is None:
        stored = 0
    if not _is_number(stored):
        raise ConditionTypeError(
            f"condition on {condition.key!r} hit non-numeric value {stored!r}"
        )
    return COMPARATORS[condition.comparator](stored, condition.value)


def condition_met(condition: Condition | None, state: WorldState) -> bool:
    """Like evaluate_condition but: no condition means unlocked, type errors mean locked."""
    if condition is None:
        return True
    try:
        return evaluate_condition(condition, state)
    except ConditionTypeError:
        return False
