import pytest
from hypothesis import given, strategies as st

from companion_engine.world import (
    Condition,
    ConditionTypeError,
    WorldState,
    WorldStateTypeError,
    condition_met,
    evaluate_condition,
)


def test_set_then_get_returns_value():
    state = WorldState()
    state.set("USERNAME", "Kim")
    assert state.get("USERNAME") == "Kim"


def test_get_absent_key_is_none():
    assert WorldState().get("MISSING") is None


def test_increment_twice_from_absent():
    state = WorldState()
    state.increment("INTERACTIONS_Anders", 1)
    state.increment("INTERACTIONS_Anders", 1)
    assert state.get("INTERACTIONS_Anders") == 2


def test_increment_on_string_value_is_type_error():
    state = WorldState.from_dict({"X": "a"})
    with pytest.raises(WorldStateTypeError):
        state.increment("X", 1)


def test_increment_rejects_non_positive_delta():
    state = WorldState()
    with pytest.raises(ValueError):
        state.increment("K", 0)
    with pytest.raises(ValueError):
        state.increment("K", -1)


def test_empty_key_rejected():
    state = WorldState()
    with pytest.raises(ValueError):
        state.set("", 1)


def test_snapshot_roundtrip():
    state = WorldState.from_dict({"A": 1, "B": "two"})
    assert WorldState.from_dict(state.to_dict()).entries == state.entries


def test_condition_examples():
    assert evaluate_condition(
        Condition("INTERACTIONS_Anders", ">=", 3),
        WorldState.from_dict({"INTERACTIONS_Anders": 5}),
    )
    # absent key compares as 0
    assert not evaluate_condition(Condition("MISSING", ">", 0), WorldState())
    assert evaluate_condition(Condition("X", "==", 2), WorldState.from_dict({"X": 2}))


def test_condition_on_string_value_raises_and_counts_as_locked():
    state = WorldState.from_dict({"X": "a"})
    condition = Condition("X", ">", 0)
    with pytest.raises(ConditionTypeError):
        evaluate_condition(condition, state)
    assert condition_met(condition, state) is False


def test_condition_rejects_bad_comparator_and_empty_key():
    with pytest.raises(ValueError):
        Condition("K", "!=", 1)
    with pytest.raises(ValueError):
        Condition("", ">", 1)


keys = st.text(min_size=1, max_size=8)
values = st.one_of(st.integers(-1000, 1000), st.text(max_size=8))


@given(keys, values)
def test_get_after_set_property(key, value):
    state = WorldState()
    state.set(key, value)
    assert state.get(key) == value


@given(keys, st.integers(0, 100), st.integers(0, 100), st.integers(0, 100))
def test_ge_condition_is_monotone_in_counters(key, threshold, base, growth):
    """Once a >= condition holds, growing the counter can never re-lock it."""
    condition = Condition(key, ">=", threshold)
    state = WorldState.from_dict({key: base})
    grown = WorldState.from_dict({key: base + growth})
    if evaluate_condition(condition, state):
        assert evaluate_condition(condition, grown)
