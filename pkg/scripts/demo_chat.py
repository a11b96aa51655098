#!/usr/bin/env python3
"""Offline demo: a seeded multi-companion chat plus a deputised action.

Runs entirely against the scripted backend, so no credentials or network are
needed. Useful as a quick smoke run and as a worked example of the engine API.
"""

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from companion_engine.backend import ScriptedBackend, ScriptEntry
from companion_engine.config import ModelConfig, load_companion_configs
from companion_engine.orchestrator import Engine, EngineSettings, LogicalClock


def main(seed: int = 7) -> None:
    configs = load_companion_configs(ROOT / "tests" / "data" / "companions.json")
    backend = ScriptedBackend(
        script=[
            ScriptEntry("next logical speaker", "Greta"),
            ScriptEntry("next logical speaker", "Anders"),
            ScriptEntry("next logical speaker", "user"),
            ScriptEntry("Rewrite the USER PARAGRAPH", "A rope is a rope; your prose now says so too.", repeat=True),
        ],
        default_reply="Mm. The harbour agrees with you there.",
    )
    engine = Engine(
        configs,
        backend,
        seed=seed,
        clock=LogicalClock(),
        settings=EngineSettings(default_model=ModelConfig(model_id="demo-model")),
    )

    session = engine.create_chat("water-cooler", ["Anders", "Greta"])
    print(f"== chat {session.chat.id} ({session.chat.situation_id})")
    for name, runtime in session.runtimes.items():
        if engine.configs[name].moods:
            print(f"   {name} woke up in a {runtime.active_mood} mood")

    engine.post_user_message(session, "Morning, you two. Anything worth hearing?")
    engine.trigger_action(
        session,
        "rewrite-style",
        text="The vessel experienced an unanticipated interaction with the quay.",
    )

    print("== transcript")
    for message in session.chat.messages:
        print(f"   [{message.kind:8}] {message.sender}: {message.body}")
    print("== interaction counts:", dict(session.chat.interaction_counts))
    print("== world state:", engine.world.to_dict())


if __name__ == "__main__":
    main(seed=int(sys.argv[1]) if len(sys.argv) > 1 else 7)
