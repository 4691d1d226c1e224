"""HTTP control surface: slots, sessions, e-stop, console state and socket."""

from __future__ import annotations

import asyncio
from pathlib import Path

from fastapi import Depends, FastAPI, Header, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from telelab.gateway.sessions import (
    AuthFailed,
    Expired,
    GatewayError,
    OutsideWindow,
    PermissionDenied,
    SlotNotBooked,
    TestbedBusy,
)
from telelab.safety.monitor import ReleaseRefused
from telelab.slots.service import (
    AlreadyBooked,
    IllegalTransition,
    NotActivated,
    NotFound,
    OverlapConflict,
    SlotError,
)

_CONFLICTS = (SlotNotBooked, OutsideWindow, TestbedBusy, IllegalTransition,
              NotActivated, OverlapConflict, AlreadyBooked)

FALLBACK_CONSOLE = """<!doctype html>
<title>telelab console</title>
<p>The operator console bundle is not built. Build it with
<code>npm run build</code> in <code>frontend/</code> and point
<code>console_dir</code> at the output.</p>
"""


def create_app(platform) -> FastAPI:
    app = FastAPI(title="telelab", docs_url=None, redoc_url=None)

    def operator(x_operator_key: str | None = Header(default=None)) -> None:
        if x_operator_key != platform.config.operator_key:
            raise HTTPException(401, "operator key required")

    def _http_error(e: Exception) -> HTTPException:
        if isinstance(e, NotFound):
            return HTTPException(404, str(e))
        if isinstance(e, _CONFLICTS) or isinstance(e, ReleaseRefused):
            return HTTPException(409, str(e))
        if isinstance(e, PermissionDenied):
            return HTTPException(403, str(e))
        if isinstance(e, (AuthFailed, Expired)):
            return HTTPException(401, str(e))
        return HTTPException(400, str(e))

    # --- slots ------------------------------------------------------------------

    @app.post("/api/slots", status_code=201)
    def create_slot(body: dict, _: None = Depends(operator)):
        try:
            slot = platform.slots.create_slot(float(body["start"]),
                                              float(body.get("duration", 3600.0)))
        except (SlotError, KeyError, TypeError, ValueError) as e:
            raise _http_error(e) from None
        return slot.as_dict()

    @app.get("/api/slots")
    def list_slots():
        return [s.as_dict() for s in platform.slots.list_slots()]

    @app.post("/api/slots/{slot_id}/activate")
    def activate(slot_id: str, _: None = Depends(operator)):
        try:
            return platform.slots.activate_slot(slot_id).as_dict()
        except SlotError as e:
            raise _http_error(e) from None

    @app.post("/api/slots/{slot_id}/deactivate")
    def deactivate(slot_id: str, _: None = Depends(operator)):
        try:
            return platform.slots.deactivate_slot(slot_id).as_dict()
        except SlotError as e:
            raise _http_error(e) from None

    @app.post("/api/slots/{slot_id}/book")
    def book(slot_id: str, body: dict):
        try:
            return platform.slots.book_slot(slot_id, body["team_id"],
                                            body.get("display_name", "")).as_dict()
        except (SlotError, KeyError) as e:
            raise _http_error(e) from None

    @app.get("/api/slots/export.csv")
    def export_csv():
        return PlainTextResponse(platform.slots.export_spreadsheet(),
                                 media_type="text/csv")

    # --- sessions -----------------------------------------------------------------

    @app.post("/api/sessions", status_code=201)
    def open_session(body: dict):
        try:
            s = platform.gateway.open_session(body["slot_id"],
                                              body.get("mode", "STUDENT_SIDE"))
        except (GatewayError, SlotError, KeyError) as e:
            raise _http_error(e) from None
        # the token is returned exactly once, here
        return {"session_id": s.id, "token": s.token, "team_id": s.team_id,
                "mode": s.mode, "namespace": s.namespace,
                "expires_at_us": s.expires_at_us, "bus_port": platform.config.bus_port}

    @app.delete("/api/sessions/{session_id}")
    def close_session(session_id: str, _: None = Depends(operator)):
        try:
            return platform.gateway.close_session(session_id, "OPERATOR")
        except GatewayError as e:
            raise _http_error(e) from None

    @app.get("/api/sessions/{session_id}/report")
    def report(session_id: str):
        rep = platform.gateway.report(session_id)
        if rep is None:
            if platform.gateway.session(session_id) is None:
                raise HTTPException(404, f"no session {session_id}")
            raise HTTPException(409, "session still open; no report yet")
        return rep

    # --- safety ---------------------------------------------------------------------

    @app.post("/api/estop")
    def estop(body: dict, _: None = Depends(operator)):
        try:
            if body.get("engage", True):
                st = platform.monitor.engage_estop("OPERATOR")
            else:
                st = platform.monitor.release_estop("OPERATOR")
        except ReleaseRefused as e:
            raise _http_error(e) from None
        return {"engaged": st.engaged, "engaged_by": st.engaged_by, "since_us": st.since_us}

    @app.get("/api/state")
    def state():
        return platform.state_summary()

    # --- console ----------------------------------------------------------------------

    @app.websocket("/ws/console")
    async def ws_console(ws: WebSocket):
        await ws.accept()
        q = platform.console_hub.register()
        import json as _json
        try:
            last_state = 0.0
            loop = asyncio.get_event_loop()
            while True:
                now = loop.time()
                if now - last_state >= 0.25:
                    last_state = now
                    await ws.send_text(_json.dumps(
                        {"type": "state", "data": platform.state_summary()},
                        separators=(",", ":")))
                sent = False
                while q:
                    await ws.send_text(q.popleft())
                    sent = True
                if not sent:
                    await asyncio.sleep(0.02)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            platform.console_hub.unregister(q)

    console_dir = platform.config.console_dir
    if console_dir and Path(console_dir).is_dir():
        app.mount("/console", StaticFiles(directory=console_dir, html=True), name="console")
    else:
        @app.get("/console")
        def console_placeholder():
            return HTMLResponse(FALLBACK_CONSOLE)

    return app
