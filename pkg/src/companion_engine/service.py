"""HTTP facade: chat management over JSON plus streaming reply delivery via SSE.

Each chat gets an event bus; companion replies are published in production
order and streamed to subscribers as server-sent events with monotonically
increasing ids, so clients can reconnect and replay from the last id they
saw. A chat runs at most one conversation at a time; concurrent message
posts are rejected with 409.
"""

from __future__ import annotations

import json
import logging
import threading
from collections import deque
from dataclasses import dataclass, field

from fastapi import FastAPI, Header, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from .config import CompanionKind
from .context import ChatMessage
from .orchestrator import (
    ActionLockedError,
    ChatSession,
    Engine,
    UnknownActionError,
    UnknownCompanionError,
    UnknownSituationError,
)

log = logging.getLogger(__name__)

EVENT_BUFFER_SIZE = 1000
STREAM_POLL_SECONDS = 0.5


@dataclass
class EventBus:
    """Per-chat buffered fan-out of SSE events; oldest events drop beyond the cap."""

    events: deque = field(default_factory=lambda: deque(maxlen=EVENT_BUFFER_SIZE))
    next_id: int = 1
    condition: threading.Condition = field(default_factory=threading.Condition)

    def publish(self, event_type: str, data: dict) -> None:
        with self.condition:
            self.events.append((self.next_id, event_type, data))
            self.next_id += 1
            self.condition.notify_all()

    def events_after(self, last_id: int) -> list[tuple[int, str, dict]]:
        with self.condition:
            return [e for e in self.events if e[0] > last_id]

    def wait(self, timeout: float) -> None:
        with self.condition:
            self.condition.wait(timeout)


@dataclass
class SessionState:
    """Service-side state for one chat: its engine session, bus, and run flag."""

    session: ChatSession
    bus: EventBus = field(default_factory=EventBus)
    running: bool = False


class CreateChatRequest(BaseModel):
    situation: str
    participants: list[str]


class PostMessageRequest(BaseModel):
    body: str
    conversationId: str | None = None
    text: str | None = None
    paragraph: str | None = None


class ActionBody(BaseModel):
    text: str | None = None
    paragraph: str | None = None


def message_payload(message: ChatMessage) -> dict:
    return {
        "sender": message.sender,
        "body": message.body,
        "kind": message.kind,
        "conversationId": message.conversation_id,
    }


def create_app(engine: Engine, cors_origin: str = "*") -> FastAPI:
    app = FastAPI(title="companion-engine")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[cors_origin],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    states: dict[str, SessionState] = {}
    state_lock = threading.Lock()

    def get_state(chat_id: str) -> SessionState | None:
        with state_lock:
            return states.get(chat_id)

    def begin_run(state: SessionState) -> bool:
        with state_lock:
            if state.running:
                return False
            state.running = True
            return True

    def run_in_thread(state: SessionState, work) -> None:
        def runner() -> None:
            bus = state.bus
            try:
                context = work(lambda m: bus.publish(m.kind, message_payload(m)))
                if context.error:
                    bus.publish("error", {"error": context.error})
                bus.publish("done", {"conversationId": context.conversation_id})
            except Exception as exc:  # noqa: BLE001 - surface to subscribers, not the socket
                log.exception("conversation run failed")
                bus.publish("error", {"error": str(exc)})
                bus.publish("done", {})
            finally:
                with state_lock:
                    state.running = False

        threading.Thread(target=runner, daemon=True).start()

    @app.post("/api/chats", status_code=201)
    def create_chat(request: CreateChatRequest):
        try:
            session = engine.create_chat(request.situation, request.participants)
        except UnknownCompanionError as exc:
            return JSONResponse(
                status_code=400, content={"detail": f"unknown companion: {exc.args[0]}"}
            )
        except UnknownSituationError as exc:
            return JSONResponse(
                status_code=400, content={"detail": f"unknown situation: {exc.args[0]}"}
            )
        with state_lock:
            states[session.chat.id] = SessionState(session=session)
        return {"chatId": session.chat.id}

    @app.get("/api/companions")
    def list_companions():
        cards = []
        for config in engine.configs.values():
            if config.kind is not CompanionKind.NPC:
                continue
            cards.append(
                {
                    "name": config.name,
                    "bio": config.bio,
                    "avatar": config.avatar,
                    "kind": config.kind.value,
                }
            )
        return cards

    @app.get("/api/chats/{chat_id}")
    def get_chat(chat_id: str):
        state = get_state(chat_id)
        if state is None:
            return JSONResponse(status_code=404, content={"detail": "unknown chat"})
        return {"schema": "chat-transcript@1", **state.session.chat.to_dict()}

    @app.post("/api/chats/{chat_id}/messages", status_code=202)
    def post_message(chat_id: str, request: PostMessageRequest):
        state = get_state(chat_id)
        if state is None:
            return JSONResponse(status_code=404, content={"detail": "unknown chat"})
        if not begin_run(state):
            return JSONResponse(status_code=409, content={"detail": "a run is already active"})
        run_in_thread(
            state,
            lambda on_reply: engine.post_user_message(
                state.session,
                request.body,
                conversation_id=request.conversationId,
                text=request.text,
                paragraph=request.paragraph,
                on_reply=on_reply,
            ),
        )
        return {"status": "accepted"}

    @app.get("/api/chats/{chat_id}/actions")
    def list_actions(chat_id: str):
        state = get_state(chat_id)
        if state is None:
            return JSONResponse(status_code=404, content={"detail": "unknown chat"})
        return [
            {
                "id": action.id,
                "label": action.label,
                "deputyName": action.deputy_name,
                "companionName": action.companion_name,
            }
            for action in engine.available_actions(state.session)
        ]

    @app.post("/api/chats/{chat_id}/actions/{action_id}", status_code=202)
    def post_action(chat_id: str, action_id: str, request: ActionBody | None = None):
        state = get_state(chat_id)
        if state is None:
            return JSONResponse(status_code=404, content={"detail": "unknown chat"})
        try:
            action = engine.find_action(action_id)
        except UnknownActionError:
            return JSONResponse(status_code=404, content={"detail": "unknown action"})
        if not engine.action_unlocked(action):
            condition = action.condition.describe() if action.condition else ""
            return JSONResponse(
                status_code=423,
                content={"detail": "action is locked", "condition": condition},
            )
        if not begin_run(state):
            return JSONResponse(status_code=409, content={"detail": "a run is already active"})
        body = request or ActionBody()
        run_in_thread(
            state,
            lambda on_reply: engine.trigger_action(
                state.session,
                action_id,
                text=body.text,
                paragraph=body.paragraph,
                on_reply=on_reply,
            ),
        )
        return {"status": "accepted"}

    @app.get("/api/chats/{chat_id}/events")
    def event_stream(
        chat_id: str,
        request: Request,
        until_done: bool = Query(False, alias="untilDone"),
        last_event_id: int | None = Query(None, alias="lastEventId"),
        last_event_id_header: str | None = Header(None, alias="Last-Event-ID"),
    ):
        state = get_state(chat_id)
        if state is None:
            return JSONResponse(status_code=404, content={"detail": "unknown chat"})

        cursor = last_event_id or 0
        if last_event_id_header:
            try:
                cursor = int(last_event_id_header)
            except ValueError:
                pass

        def stream(cursor: int):
            bus = state.bus
            while True:
                batch = bus.events_after(cursor)
                for event_id, event_type, data in batch:
                    cursor = event_id
                    yield (
                        f"id: {event_id}\n"
                        f"event: {event_type}\n"
                        f"data: {json.dumps(data, ensure_ascii=False)}\n\n"
                    )
                    if until_done and event_type == "done":
                        return
                if not batch:
                    bus.wait(STREAM_POLL_SECONDS)
                    yield ": ping\n\n"

        return StreamingResponse(
            stream(cursor),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    return app
