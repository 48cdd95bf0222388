"""HTTP/WebSocket surface for observation and steering.

GET endpoints are strict observers: they read atomically-published snapshots
and never touch loop state. All mutation funnels through POST handlers into
the decision loop. WebSocket subscribers are lossy: each gets a bounded
queue, slow consumers drop oldest events and never block the loop.
"""
from __future__ import annotations

import asyncio
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles

from .errors import InvalidOverride, NoActiveSession
from .iam import OverrideCommand

WS_QUEUE_SIZE = 256
FRAME_WS_INTERVAL_MS = 500  # downsample 10 Hz frames to 2 Hz on the socket


class Broadcaster:
    """Fan-out of pipeline events to WebSocket subscribers, drop-oldest."""

    def __init__(self):
        self._subs: dict[int, tuple[asyncio.AbstractEventLoop, asyncio.Queue]] = {}
        self._next_id = 0
        self._last_frame_ms: Optional[int] = None

    def register(self) -> tuple[int, asyncio.Queue]:
        loop = asyncio.get_running_loop()
        q: asyncio.Queue = asyncio.Queue(maxsize=WS_QUEUE_SIZE)
        sub_id = self._next_id
        self._next_id += 1
        self._subs[sub_id] = (loop, q)
        return sub_id, q

    def unregister(self, sub_id: int) -> None:
        self._subs.pop(sub_id, None)

    def publish(self, kind: str, obj: Any) -> None:
        if not self._subs:
            return
        if kind == "frame":
            t = obj.t
            if self._last_frame_ms is not None and t - self._last_frame_ms < FRAME_WS_INTERVAL_MS:
                return
            self._last_frame_ms = t

        record = obj if isinstance(obj, dict) else obj.to_record() if hasattr(obj, "to_record") else obj.to_payload()
        event = {"type": kind, "data": record}

        try:
            running = asyncio.get_running_loop()
        except RuntimeError:
            running = None
        for loop, q in list(self._subs.values()):
            def _put(q: asyncio.Queue = q) -> None:
                if q.full():
                    try:
                        q.get_nowait()
                    except asyncio.QueueEmpty:
                        pass
                q.put_nowait(event)

            if running is loop:
                _put()
            else:
                loop.call_soon_threadsafe(_put)


def create_app(hub) -> FastAPI:
    """Build the API over a hub (anything exposing pipeline/plan/rules/...)."""
    app = FastAPI(title="rehabloop", docs_url=None, redoc_url=None)
    broadcaster: Broadcaster = hub.broadcaster

    @app.get("/api/sessions")
    async def list_sessions() -> list[dict]:
        return hub.list_sessions()

    @app.get("/api/sessions/{session_id}/summary")
    async def session_summary(session_id: str) -> dict:
        summary = hub.session_summary(session_id)
        if summary is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return summary

    @app.get("/api/state")
    async def get_state() -> dict:
        p = hub.pipeline
        return {
            "session_id": p.session_id,
            "state": p.last_state.to_record() if p.last_state else None,
            "directive": p.loop.current.to_payload(),
            "paused": p.loop.paused,
            "alerts": [a.to_record() for a in p.alerts.active if not a.acknowledged],
        }

    @app.get("/api/plan")
    async def get_plan() -> dict:
        return hub.pipeline.plan.to_json()

    @app.post("/api/plan")
    async def set_plan(body: dict) -> dict:
        try:
            plan = hub.update_plan(body)
        except (ValueError, TypeError) as e:
            raise HTTPException(status_code=400, detail=str(e))
        return plan.to_json()

    @app.get("/api/rules")
    async def get_rules() -> dict:
        return hub.pipeline.rules.to_json()

    @app.post("/api/override")
    async def post_override(body: dict) -> dict:
        cmd = OverrideCommand(
            kind=body.get("kind", ""),
            value=body.get("value"),
            issued_by=body.get("issued_by", "operator"),
            t=hub.now_ms(),
        )
        try:
            directive = hub.pipeline.on_override(cmd)
        except InvalidOverride as e:
            raise HTTPException(status_code=400, detail=str(e))
        except NoActiveSession as e:
            raise HTTPException(status_code=409, detail=str(e))
        return {"directive": directive.to_payload()}

    @app.post("/api/ack-alert")
    async def ack_alert(body: dict) -> dict:
        alert_id = body.get("alert_id")
        if not isinstance(alert_id, int) or not hub.pipeline.alerts.acknowledge(alert_id):
            raise HTTPException(status_code=404, detail=f"unknown alert {alert_id!r}")
        return {"acknowledged": alert_id}

    @app.websocket("/ws/live")
    async def ws_live(ws: WebSocket) -> None:
        await ws.accept()
        sub_id, queue = broadcaster.register()
        try:
            while True:
                event = await queue.get()
                await ws.send_json(event)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            broadcaster.unregister(sub_id)

    static_dir = getattr(hub, "static_dir", None)
    if static_dir and Path(static_dir).is_dir():
        index = Path(static_dir) / "index.html"

        @app.get("/")
        def root():
            return FileResponse(index)

        app.mount("/", StaticFiles(directory=str(static_dir)), name="static")

    return app
