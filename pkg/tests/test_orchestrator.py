import random
from datetime import datetime

import pytest

from companion_engine.backend import ScriptedBackend, ScriptEntry
from companion_engine.companion import CompanionRuntime, ReplyTrigger
from companion_engine.context import Context
from companion_engine.orchestrator import (
    ActionLockedError,
    ChatStore,
    LogicalClock,
    UnknownActionError,
    UnknownCompanionError,
    UnknownSituationError,
    default_round_count,
    route_reply,
    transcript_lines,
)
from companion_engine.world import WorldState

from tests.conftest import make_engine

NOW = datetime(2026, 1, 1, 9, 0)


class TestRouteReply:
    def test_message_becomes_message_entry(self):
        msg = route_reply(Context(message="M", conversation_id="c"), "Anders", NOW)
        assert (msg.kind, msg.body, msg.sender) == ("message", "M", "Anders")

    def test_question_beats_message(self):
        context = Context(question="Q?", message="M", conversation_id="c")
        msg = route_reply(context, "deputy", NOW)
        assert (msg.kind, msg.body) == ("question", "Q?")

    def test_quote_beats_excerpt(self):
        context = Context(quote="Q", excerpt="E", conversation_id="c")
        assert route_reply(context, "d", NOW).kind == "quote"

    def test_all_empty_is_error_note(self):
        context = Context(conversation_id="c")
        assert route_reply(context, "Anders", NOW) is None
        assert "no chat entry" in context.error

    def test_job_handoff_turn_is_not_an_error(self):
        context = Context(job="do it", conversation_id="c")
        assert route_reply(context, "deputy", NOW, wrote_fields=True) is None
        assert context.error == ""


class TestDefaultRoundCount:
    def test_six_participants_draws_in_range(self):
        seen = set()
        for seed in range(300):
            value = default_round_count(6, random.Random(seed))
            assert 4 <= value <= 6
            seen.add(value)
        assert seen == {4, 5, 6}

    def test_seeded_draw_is_reproducible(self):
        assert default_round_count(6, random.Random(9)) == default_round_count(6, random.Random(9))

    def test_small_chats_clamp_to_four(self):
        assert default_round_count(2, random.Random(0)) == 4
        assert default_round_count(4, random.Random(0)) == 4


class TestCreateChat:
    def test_user_is_auto_added(self, configs):
        engine = make_engine(configs)
        session = engine.create_chat("water-cooler", ["Anders"])
        assert session.chat.participants == ["Alex", "Anders"]

    def test_unknown_companion_rejected(self, configs):
        engine = make_engine(configs)
        with pytest.raises(UnknownCompanionError):
            engine.create_chat("water-cooler", ["Nobody"])

    def test_unknown_situation_rejected(self, configs):
        engine = make_engine(configs)
        with pytest.raises(UnknownSituationError):
            engine.create_chat("moon-base", ["Anders"])

    def test_chats_are_independent(self, configs):
        engine = make_engine(configs)
        first = engine.create_chat("water-cooler", ["Anders"])
        second = engine.create_chat("water-cooler", ["Anders"])
        assert first.chat.id != second.chat.id

    def test_moods_sampled_at_chat_creation(self, configs):
        engine = make_engine(configs)
        session = engine.create_chat("water-cooler", ["Anders", "Greta"])
        assert session.runtimes["Anders"].active_mood in {"cheerful", "grumpy", "neutral"}


class TestRunConversation:
    def test_one_to_one_single_round(self, configs):
        engine = make_engine(configs)
        session = engine.create_chat("water-cooler", ["Anders"])
        replies = []
        engine.post_user_message(session, "Hello", on_reply=replies.append, max_rounds=1)
        assert [m.sender for m in replies] == ["Anders"]
        assert [m.sender for m in session.chat.messages] == ["Alex", "Anders"]
        assert session.chat.interaction_counts == {"Anders": 1}
        assert engine.world.get("INTERACTIONS_Anders") == 1

    def test_moderator_returning_user_ends_conversation(self, configs):
        backend = ScriptedBackend(
            script=[
                ScriptEntry("next logical speaker", "Greta"),
                ScriptEntry("next logical speaker", "user"),
            ],
            default_reply="a harmless reply",
        )
        engine = make_engine(configs, backend=backend)
        session = engine.create_chat("water-cooler", ["Anders", "Greta"])
        engine.post_user_message(session, "no names in here", max_rounds=5)
        senders = [m.sender for m in session.chat.messages]
        assert senders == ["Alex", "Greta"]

    def test_callback_fires_before_next_speaker(self, configs):
        order = []
        backend = ScriptedBackend(default_reply="mhm")
        engine = make_engine(configs, backend=backend)
        session = engine.create_chat("water-cooler", ["Anders", "Greta"])

        def on_reply(message):
            order.append((message.sender, len(backend.prompts)))

        engine.post_user_message(session, "Greta, then Anders?", on_reply=on_reply, max_rounds=1)
        # Greta's reply was delivered after her own inference (1 moderator-free
        # prompt) and before Anders's inference ran.
        assert order[0][0] == "Greta" and order[0][1] == 1
        assert order[1][0] == "Anders" and order[1][1] == 2

    def test_same_context_passed_along_speakers(self, configs):
        engine = make_engine(configs)
        session = engine.create_chat("water-cooler", ["Anders", "Greta"])
        context = engine.post_user_message(session, "Greta, then Anders?", max_rounds=1)
        ids = {m.conversation_id for m in session.chat.messages}
        assert ids == {context.conversation_id}

    def test_interaction_counts_match_non_user_entries(self, configs):
        engine = make_engine(configs)
        session = engine.create_chat("water-cooler", ["Anders", "Greta"])
        engine.post_user_message(session, "Anders and Greta!", max_rounds=2)
        engine.post_user_message(session, "Greta and Anders!", max_rounds=1)
        for name in ("Anders", "Greta"):
            expected = sum(1 for m in session.chat.messages if m.sender == name)
            assert session.chat.interaction_counts.get(name, 0) == expected

    def test_transcript_is_append_only(self, configs):
        engine = make_engine(configs)
        session = engine.create_chat("water-cooler", ["Anders"])
        engine.post_user_message(session, "Hello", max_rounds=1)
        snapshot = list(session.chat.messages)
        engine.post_user_message(session, "More", max_rounds=1)
        assert session.chat.messages[: len(snapshot)] == snapshot

    def test_deterministic_replay(self, configs):
        def run():
            backend = ScriptedBackend(default_reply="a steady reply")
            engine = make_engine(configs, backend=backend, seed=123)
            session = engine.create_chat("water-cooler", ["Anders", "Greta"])
            engine.post_user_message(session, "Hello both")
            engine.post_user_message(session, "And again")
            return "\n".join(transcript_lines(session.chat))

        assert run() == run()

    def test_error_mid_round_terminates(self, configs):
        class ExplodingRuntime(CompanionRuntime):
            def _register_reply_functions(self):
                self.reply_functions = [
                    (ReplyTrigger.always(), self._fail),
                ]

            def _fail(self, context, last, env):
                context.note_error("synthetic failure")
                return True, context

        engine = make_engine(configs, custom_classes={"Exploding": ExplodingRuntime})
        # swap Anders's runtime class in a fresh session
        session = engine.create_chat("water-cooler", ["Anders", "Greta"])
        session.runtimes["Anders"] = ExplodingRuntime(
            engine.configs["Anders"], random.Random(0), engine.settings.default_model
        )
        context = engine.post_user_message(session, "Anders and Greta!", max_rounds=3)
        assert "synthetic failure" in context.error
        # Greta (second mentioned speaker) never ran
        assert [m.sender for m in session.chat.messages] == ["Alex"]


class TestActions:
    def test_action_flow_host_speaks_with_deputy_job(self, configs):
        backend = ScriptedBackend(default_reply="rewritten!")
        engine = make_engine(configs, backend=backend)
        session = engine.create_chat("writing-desk", ["Anders", "Greta"])
        replies = []
        engine.trigger_action(
            session, "rewrite-style", text="P1\n\nP2", on_reply=replies.append
        )
        assert [m.sender for m in replies] == ["Anders"]
        assert replies[0].kind == "message"
        host_prompt = backend.prompts[-1]
        assert "Rewrite the USER PARAGRAPH in the voice of the host companion" in host_prompt
        assert 'USER PARAGRAPH="P1\n\nP2"' in host_prompt

    def test_unknown_action(self, configs):
        engine = make_engine(configs)
        session = engine.create_chat("water-cooler", ["Anders"])
        with pytest.raises(UnknownActionError):
            engine.trigger_action(session, "no-such-action")

    def test_locked_action_raises_with_condition(self, configs):
        engine = make_engine(configs)
        session = engine.create_chat("water-cooler", ["Anders"])
        with pytest.raises(ActionLockedError) as exc_info:
            engine.trigger_action(session, "find-theme", text="some text")
        assert "INTERACTIONS_Anders >= 5" in str(exc_info.value)

    def test_action_unlocks_as_interactions_grow(self, configs):
        engine = make_engine(configs)
        session = engine.create_chat("water-cooler", ["Anders"])
        assert [a.id for a in engine.available_actions(session)] == ["rewrite-style"]
        engine.world.set("INTERACTIONS_Anders", 5)
        assert {a.id for a in engine.available_actions(session)} == {"rewrite-style", "find-theme"}

    def test_insufficient_input_suspends_then_resumes(self, configs):
        backend = ScriptedBackend(default_reply="done with your text")
        engine = make_engine(configs, backend=backend)
        session = engine.create_chat("writing-desk", ["Anders"])
        events = []
        context = engine.trigger_action(session, "rewrite-style", on_reply=events.append)

        assert events[0].kind == "question"
        assert events[0].sender == "style-deputy"
        assert session.pending is context
        conversation_id = context.conversation_id

        resumed = engine.post_user_message(
            session,
            "Here is the passage about the sea.",
            conversation_id=conversation_id,
            on_reply=events.append,
        )
        assert resumed.conversation_id == conversation_id
        assert session.pending is None
        assert events[-1].sender == "Anders"
        assert events[-1].kind == "message"
        # the deputy worked on the supplied answer
        assert 'USER PARAGRAPH="Here is the passage about the sea."' in backend.prompts[-1]

    def test_deputy_quote_enters_chat_alongside_host_message(self, configs):
        from companion_engine.deputy import InstructionDeputy

        class QuoteDeputy(InstructionDeputy):
            def _apply_job(self, context, last, env):
                handled, context = super()._apply_job(context, last, env)
                context.quote = "Q"
                return handled, context

        engine = make_engine(configs, custom_classes={"QuoteDeputy": QuoteDeputy})
        session = engine.create_chat("writing-desk", ["Anders"])
        session.runtimes["style-deputy"] = QuoteDeputy(
            engine.configs["style-deputy"], random.Random(0), engine.settings.default_model
        )
        engine.trigger_action(session, "rewrite-style", text="some text")
        kinds = [(m.sender, m.kind) for m in session.chat.messages]
        assert ("style-deputy", "quote") in kinds
        assert ("Anders", "message") in kinds
        # quote precedes the host's message
        assert kinds.index(("style-deputy", "quote")) < kinds.index(("Anders", "message"))

    def test_answering_deputy_feeds_host_prompt(self, configs):
        backend = ScriptedBackend(
            script=[ScriptEntry("Name the central theme", "THEME: stubborn hope")],
            default_reply="host reply",
        )
        engine = make_engine(configs, backend=backend)
        engine.world.set("INTERACTIONS_Anders", 5)
        session = engine.create_chat("writing-desk", ["Anders"])
        engine.trigger_action(session, "find-theme", text="A long story.")
        assert 'DEPUTY ANSWER="THEME: stubborn hope"' in backend.prompts[-1]


class TestPersistence:
    def test_store_roundtrip(self, configs, tmp_path):
        store = ChatStore(tmp_path)
        engine = make_engine(configs, store=store)
        session = engine.create_chat("water-cooler", ["Anders"])
        engine.post_user_message(session, "Hello", max_rounds=1)

        loaded = store.load(session.chat.id, user_name="Alex")
        assert loaded.to_dict() == session.chat.to_dict()

    def test_transcript_has_versioned_header(self, configs, tmp_path):
        store = ChatStore(tmp_path)
        engine = make_engine(configs, store=store)
        session = engine.create_chat("water-cooler", ["Anders"])
        engine.post_user_message(session, "Hello", max_rounds=1)
        first_line = (tmp_path / f"{session.chat.id}.jsonl").read_text().splitlines()[0]
        assert '"schema": "chat-transcript@1"' in first_line

    def test_world_snapshot_roundtrip(self, tmp_path):
        store = ChatStore(tmp_path)
        world = WorldState.from_dict({"USERNAME": "Kim", "INTERACTIONS_Anders": 2})
        store.save_world(world)
        assert store.load_world().entries == world.entries


def test_logical_clock_steps_deterministically():
    clock = LogicalClock()
    first, second = clock(), clock()
    assert (second - first).total_seconds() == 1.0
    assert LogicalClock()() == LogicalClock()()
