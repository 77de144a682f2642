"""FastAPI service around a running Bridge.

REST endpoints expose health, diagnostics, the page, transcript stats and a
transcode helper; the WebSocket endpoint speaks the UI protocol: a snapshot
first, then incremental print/carriage/state/bell events, and (in sim mode)
key messages back from the client.
"""

from __future__ import annotations

import asyncio
import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from pydantic import BaseModel, Field

from .codec import CharEvent, ControlEvent, ControlKind, UnknownEvent, decode_bytes, encode_text
from .gateway import Bridge, DeviceOwned
from .simulator import UnencodableKey

log = logging.getLogger(__name__)

_CONTROL_NAMES = {kind.value: kind for kind in ControlKind}


class PagePayload(BaseModel):
    width: int
    rows: list[str]
    carriage_row: int
    carriage_col: int


class HealthResponse(BaseModel):
    status: str = "ok"


class DiagnosticsResponse(BaseModel):
    state: str
    mode: str
    flow: str
    dispatched: int
    printed: int
    archived: int
    archive_failures: int
    apologies: int
    dropped_input: int
    substituted_chars: int
    session_id: str
    model: str


class StatsResponse(BaseModel):
    total: int
    malformed: int
    mean_latency_ms: float
    categories: dict[str, int]


class TranscodeRequest(BaseModel):
    direction: str = Field(pattern="^(encode|decode)$")
    text: str | None = None
    data: list[int] | None = None


class TranscodeResponse(BaseModel):
    data: list[int] | None = None
    text: str | None = None
    substitutions: list[dict] | None = None


def create_app(bridge: Bridge, *, manage_bridge: bool = True) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if manage_bridge:
            bridge.start()
        try:
            yield
        finally:
            if manage_bridge:
                bridge.stop()

    app = FastAPI(title="erika-bridge", lifespan=lifespan)
    app.state.bridge = bridge

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse()

    @app.get("/state", response_model=DiagnosticsResponse)
    def state() -> DiagnosticsResponse:
        return DiagnosticsResponse(**bridge.diagnostics())

    @app.get("/page", response_model=PagePayload)
    def page() -> PagePayload:
        return PagePayload(**bridge.page_snapshot())

    @app.get("/stats", response_model=StatsResponse)
    def stats() -> StatsResponse:
        return StatsResponse(**bridge.store.stats().to_payload())

    @app.post("/transcode", response_model=TranscodeResponse)
    def transcode(request: TranscodeRequest) -> TranscodeResponse:
        if request.direction == "encode":
            if request.text is None:
                raise HTTPException(422, "encode needs 'text'")
            result = encode_text(bridge.codepage, request.text)
            return TranscodeResponse(
                data=list(result.data),
                substitutions=[
                    {"position": s.position, "char": s.char} for s in result.substitutions
                ],
            )
        if request.data is None:
            raise HTTPException(422, "decode needs 'data'")
        if any(not 0 <= b <= 255 for b in request.data):
            raise HTTPException(422, "bytes must be 0..255")
        return TranscodeResponse(text=render_events(bridge.codepage, request.data))

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket) -> None:
        await ws.accept()
        loop = asyncio.get_running_loop()
        outbox: asyncio.Queue = asyncio.Queue()

        def listener(msg: dict) -> None:
            loop.call_soon_threadsafe(outbox.put_nowait, msg)

        for msg in bridge.add_listener(listener):
            await ws.send_json(msg)
        recv_task: asyncio.Task | None = None
        send_task: asyncio.Task | None = None
        try:
            recv_task = asyncio.create_task(ws.receive_json())
            send_task = asyncio.create_task(outbox.get())
            while True:
                done, _ = await asyncio.wait(
                    {recv_task, send_task}, return_when=asyncio.FIRST_COMPLETED
                )
                if recv_task in done:
                    try:
                        incoming = recv_task.result()
                    except WebSocketDisconnect:
                        break
                    reply = handle_client_message(bridge, incoming)
                    if reply is not None:
                        await ws.send_json(reply)
                    recv_task = asyncio.create_task(ws.receive_json())
                if send_task in done:
                    await ws.send_json(send_task.result())
                    send_task = asyncio.create_task(outbox.get())
        except WebSocketDisconnect:
            pass
        except Exception:
            log.exception("websocket client failed; dropping it")
        finally:
            bridge.remove_listener(listener)
            for task in (recv_task, send_task):
                if task is not None:
                    task.cancel()

    return app


def handle_client_message(bridge: Bridge, msg) -> dict | None:
    """Apply one client→server message; returns an error reply or None."""
    if not isinstance(msg, dict) or msg.get("type") != "key":
        return {"type": "error", "reason": "unknown-message"}
    if "ch" in msg:
        key = msg["ch"]
        if not isinstance(key, str) or len(key) != 1:
            return {"type": "error", "reason": "bad-key"}
    elif "ctrl" in msg:
        key = _CONTROL_NAMES.get(msg["ctrl"])
        if key is None:
            return {"type": "error", "reason": "bad-key"}
    else:
        return {"type": "error", "reason": "bad-key"}
    try:
        bridge.inject_key(key)
    except DeviceOwned:
        return {"type": "error", "reason": "device-owned"}
    except UnencodableKey:
        return {"type": "error", "reason": "unencodable"}
    return None


def render_events(codepage, data: list[int]) -> str:
    """Human-readable decode: characters verbatim, controls/unknowns bracketed."""
    out = []
    for ev in decode_bytes(codepage, data):
        if isinstance(ev, CharEvent):
            out.append(ev.char)
        elif isinstance(ev, ControlEvent):
            out.append(f"<{ev.kind.value}>")
        elif isinstance(ev, UnknownEvent):
            out.append(f"<0x{ev.byte:02X}>")
    return "".join(out)
