"""Operator entry points: validate configs, replay scripted runs, serve the API.

Exit codes are a stable contract: 0 success, 1 semantic failure (validation
errors, failed assertions), 2 I/O failure (unreadable files).

A scenario file drives `run` headlessly and deterministically:

    {
      "chat": {"situation": "water-cooler", "participants": ["Anders", "Greta"]},
      "steps": [
        {"message": {"body": "Hello", "rounds": 1}},
        {"action": {"id": "rewrite-style", "text": "P1\n\nP2"}},
        {"message": {"body": "an answer", "resume": true}}
      ],
      "backend": {"script": [{"match": "...", "reply": "..."}], "default": "...", "strict": false},
      "assertions": {"speakerOrder": ["Anders"], "kinds": ["message"], "minReplies": 1}
    }
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .backend import API_KEY_ENV_VAR, OpenAICompatibleBackend, ScriptedBackend
from .config import ConfigError, load_companion_configs, validate_configs
from .context import ChatMessage
from .orchestrator import ChatStore, Engine, EngineSettings, LogicalClock, transcript_lines

EXIT_OK = 0
EXIT_SEMANTIC = 1
EXIT_IO = 2


def _read_json(path: str) -> dict | list:
    text = Path(path).read_text(encoding="utf-8")
    return json.loads(text)


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        configs = load_companion_configs(args.config)
    except OSError as exc:
        print(f"cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_SEMANTIC
    errors = validate_configs(configs)
    if errors:
        for error in errors:
            print(str(error), file=sys.stderr)
        return EXIT_SEMANTIC
    print(f"OK: {len(configs)} companions")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    try:
        configs = load_companion_configs(args.config)
        scenario = _read_json(args.script)
    except OSError as exc:
        print(f"cannot read input: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, json.JSONDecodeError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_SEMANTIC

    backend = ScriptedBackend.from_dict(scenario.get("backend", {}))
    engine = Engine(
        configs,
        backend,
        seed=args.seed,
        clock=LogicalClock(),
        settings=EngineSettings(),
    )
    chat_spec = scenario.get("chat", {})
    session = engine.create_chat(
        chat_spec.get("situation", ""), chat_spec.get("participants", [])
    )

    replies: list[ChatMessage] = []
    for step in scenario.get("steps", []):
        if "message" in step:
            spec = step["message"]
            conversation_id = None
            if spec.get("resume") and session.pending is not None:
                conversation_id = session.pending.conversation_id
            engine.post_user_message(
                session,
                spec.get("body", ""),
                conversation_id=conversation_id,
                text=spec.get("text"),
                paragraph=spec.get("paragraph"),
                on_reply=replies.append,
                max_rounds=spec.get("rounds"),
            )
        elif "action" in step:
            spec = step["action"]
            engine.trigger_action(
                session,
                spec["id"],
                text=spec.get("text"),
                paragraph=spec.get("paragraph"),
                on_reply=replies.append,
            )

    if args.transcript:
        Path(args.transcript).write_text(
            "\n".join(transcript_lines(session.chat)) + "\n", encoding="utf-8"
        )

    if not args.quiet:
        for message in session.chat.messages:
            print(f"[{message.kind}] {message.sender}: {message.body}")

    return _check_assertions(scenario.get("assertions"), session, replies)


def _check_assertions(assertions: dict | None, session, replies: list[ChatMessage]) -> int:
    if not assertions:
        return EXIT_OK

    def fail(name: str, expected, actual) -> int:
        print(f"assertion {name} failed:\n  expected: {expected}\n  actual:   {actual}",
              file=sys.stderr)
        return EXIT_SEMANTIC

    if "speakerOrder" in assertions:
        actual = [m.sender for m in replies]
        if actual != assertions["speakerOrder"]:
            return fail("speakerOrder", assertions["speakerOrder"], actual)
    if "kinds" in assertions:
        actual = [m.kind for m in replies]
        if actual != assertions["kinds"]:
            return fail("kinds", assertions["kinds"], actual)
    if "minReplies" in assertions:
        if len(replies) < assertions["minReplies"]:
            return fail("minReplies", assertions["minReplies"], len(replies))
    if "counts" in assertions:
        actual_counts = dict(session.chat.interaction_counts)
        if actual_counts != assertions["counts"]:
            return fail("counts", assertions["counts"], actual_counts)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        configs = load_companion_configs(args.config)
    except OSError as exc:
        print(f"cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_SEMANTIC

    settings_doc: dict = {}
    if args.settings:
        try:
            settings_doc = _read_json(args.settings)
        except OSError as exc:
            print(f"cannot read {args.settings}: {exc}", file=sys.stderr)
            return EXIT_IO

    backend_conf = settings_doc.get("backend", {})
    base_url = args.base_url or backend_conf.get("baseUrl")
    model_id = args.model_id or backend_conf.get("modelId")

    if args.backend == "mock":
        script_doc = {}
        if args.script:
            try:
                script_doc = _read_json(args.script)
            except OSError as exc:
                print(f"cannot read {args.script}: {exc}", file=sys.stderr)
                return EXIT_IO
        backend = ScriptedBackend.from_dict(
            script_doc.get("backend", script_doc) if script_doc else {"default": "..."}
        )
    else:
        if not os.getenv(API_KEY_ENV_VAR):
            print(
                f"live backend requires the {API_KEY_ENV_VAR} environment variable",
                file=sys.stderr,
            )
            return EXIT_SEMANTIC
        if not base_url:
            print("live backend requires --base-url or backend.baseUrl", file=sys.stderr)
            return EXIT_SEMANTIC
        backend = OpenAICompatibleBackend(base_url, model_id=model_id)

    store = ChatStore(args.state) if args.state else None
    engine = Engine(configs, backend, seed=args.seed, store=store)

    from .service import create_app

    server_conf = settings_doc.get("server", {})
    port = args.port or int(server_conf.get("port", 8000))
    cors = args.cors_origin or server_conf.get("corsOrigin", "*")
    app = create_app(engine, cors_origin=cors)

    import uvicorn

    try:
        uvicorn.run(app, host=args.host, port=port, log_level="warning")
    except (OSError, SystemExit) as exc:
        print(f"server failed to start: {exc}", file=sys.stderr)
        return EXIT_SEMANTIC
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="companion-engine",
        description="Orchestrate narrative multi-companion chats over LLM backends.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="validate a companion configuration file")
    p_validate.add_argument("config")
    p_validate.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", help="run a scripted conversation headlessly")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--script", required=True, help="scenario JSON file")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--transcript", help="write the JSONL transcript here")
    p_run.add_argument("--quiet", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_serve = sub.add_parser("serve", help="serve the HTTP chat API")
    p_serve.add_argument("--config", required=True)
    p_serve.add_argument("--port", type=int, default=None)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--backend", choices=["mock", "live"], default="mock")
    p_serve.add_argument("--script", help="backend script JSON for mock mode")
    p_serve.add_argument("--settings", help="engine settings JSON")
    p_serve.add_argument("--base-url", help="live backend base URL")
    p_serve.add_argument("--model-id", help="live backend model id")
    p_serve.add_argument("--cors-origin", default=None)
    p_serve.add_argument("--state", help="directory for transcript persistence")
    p_serve.add_argument("--seed", type=int, default=None)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
