"""Play service: session management and the realtime stream over WebSocket.

Endpoints: POST /sessions (create-session), WS /sessions/{id}/stream,
GET /sessions/{id}/stats, POST /train-iteration, POST /adapt-stack,
GET /models (list-models), GET /health. Messages are JSON with the fixed
field names (type, t, pos, quat, ball, joints, score, events); malformed
client messages are rejected and counted without killing the loop.
"""

from __future__ import annotations

import asyncio
import json
import time

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect

from ..config import RunConfig
from ..control import ControlStack
from ..strategy import CvaeModel
from .finetune import InsufficientDataError, adapt_skill_stack, finetune_strategy
from .session import Session, SessionState

SCHEMA_VERSION = 1


class ServiceHub:
    """Holds loaded models, live sessions and the model registry."""

    def __init__(self, cfg: RunConfig, stack: ControlStack | None, strategy: CvaeModel | None, refs=None):
        self.cfg = cfg
        self.stack = stack
        self.refs = refs
        self.sessions: dict[str, Session] = {}
        self.models: dict[str, CvaeModel] = {}
        self.stacks: dict[str, ControlStack] = {}
        if strategy is not None:
            self.models[strategy.version] = strategy
        if stack is not None:
            self.stacks[stack.version] = stack
        self.latest_model = strategy.version if strategy is not None else None

    def create_session(self, mode: str, pace: str, seed: int) -> Session:
        if self.stack is None:
            raise RuntimeError("models not loaded")
        strategy = self.models.get(self.latest_model) if self.latest_model else None
        session = Session(self.stack, strategy, self.cfg, mode=mode, pace=pace, seed=seed)
        if strategy is not None:
            session.stats.model_version = strategy.version
        session.stats.stack_version = self.stack.version
        self.sessions[session.id] = session
        return session

    def train_iteration(self, mode: str, session_ids: list[str], rng_seed: int = 0) -> str:
        logs = []
        for sid in session_ids:
            if sid not in self.sessions:
                raise KeyError(f"unknown session {sid}")
            logs.extend(self.sessions[sid].rally_logs)
        base = self.models.get(self.latest_model) if self.latest_model else None
        if base is None:
            from ..strategy import make_cvae

            base = make_cvae(self.cfg.nets, np.random.default_rng(rng_seed))
            base.version = "v0"
        new = finetune_strategy(base, logs, mode, self.cfg, np.random.default_rng(rng_seed))
        self.models[new.version] = new
        self.latest_model = new.version
        for sid in session_ids:
            self.sessions[sid].swap_strategy(new)
        return new.version

    def adapt_stack(self, session_ids: list[str], budget: int | None, rng_seed: int = 0):
        logs = []
        for sid in session_ids:
            if sid not in self.sessions:
                raise KeyError(f"unknown session {sid}")
            logs.extend(self.sessions[sid].rally_logs)
        adapted, est = adapt_skill_stack(
            self.stack, logs, self.cfg, np.random.default_rng(rng_seed),
            refs=self.refs, budget=budget,
        )
        self.stacks[adapted.version] = adapted
        return adapted.version, est


def build_app(hub: ServiceHub) -> FastAPI:
    app = FastAPI(title="deskpong play service")
    app.state.hub = hub

    @app.get("/health")
    def health():
        return {
            "ok": True,
            "schema": SCHEMA_VERSION,
            "sessions": len(hub.sessions),
            "models_loaded": hub.stack is not None,
        }

    @app.get("/models")
    def list_models():
        return {
            "strategies": sorted(hub.models.keys()),
            "stacks": sorted(hub.stacks.keys()),
            "latest": hub.latest_model,
        }

    @app.post("/sessions")
    def create_session(body: dict):
        mode = body.get("mode", "competition")
        pace = body.get("pace", "realtime")
        seed = int(body.get("seed", int(time.time()) % 100000))
        if mode not in ("competition", "cooperation"):
            raise HTTPException(422, f"unknown mode {mode!r}")
        if hub.stack is None:
            raise HTTPException(503, "models not loaded")
        session = hub.create_session(mode, pace, seed)
        return {
            "session": session.id,
            "stream": f"/sessions/{session.id}/stream",
            "schema": SCHEMA_VERSION,
            "mode": mode,
        }

    @app.get("/sessions/{sid}/stats")
    def session_stats(sid: str):
        if sid not in hub.sessions:
            raise HTTPException(404, "unknown session")
        s = hub.sessions[sid]
        payload = s.stats.payload()
        payload["dropped_poses"] = s.dropped_poses
        payload["rejected_messages"] = s.rejected_messages
        payload["state"] = s.state.value
        return payload

    @app.post("/train-iteration")
    def train_iteration(body: dict):
        mode = body.get("mode", "competition")
        ids = body.get("sessions", [])
        try:
            version = hub.train_iteration(mode, ids, int(body.get("seed", 0)))
        except InsufficientDataError as exc:
            raise HTTPException(409, str(exc)) from exc
        except KeyError as exc:
            raise HTTPException(404, str(exc)) from exc
        return {"model_version": version}

    @app.post("/adapt-stack")
    def adapt_stack(body: dict):
        ids = body.get("sessions", [])
        budget = body.get("budget")
        try:
            version, est = hub.adapt_stack(ids, budget, int(body.get("seed", 0)))
        except InsufficientDataError as exc:
            raise HTTPException(409, str(exc)) from exc
        except KeyError as exc:
            raise HTTPException(404, str(exc)) from exc
        return {"stack_version": version, "estimate": est}

    @app.websocket("/sessions/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        await ws.accept()
        hub = ws.app.state.hub
        session = hub.sessions.get(sid)
        if session is None:
            await ws.send_text(json.dumps({"type": "error", "error": "unknown session"}))
            await ws.close()
            return
        await ws.send_text(
            json.dumps(
                {
                    "type": "hello",
                    "schema": SCHEMA_VERSION,
                    "session": sid,
                    "mode": session.mode.value,
                    "frame_hz": hub.cfg.service.frame_hz,
                }
            )
        )
        frame_dt = 1.0 / hub.cfg.service.frame_hz
        next_frame = time.monotonic()
        try:
            while session.state is not SessionState.CLOSED:
                # drain pending client messages without blocking
                while True:
                    try:
                        raw = await asyncio.wait_for(ws.receive_text(), timeout=0.0001)
                    except asyncio.TimeoutError:
                        break
                    _handle_client_message(session, raw)
                frame = session.advance_frame()
                await ws.send_text(json.dumps(frame))
                if session.pace == "realtime":
                    next_frame += frame_dt
                    delay = next_frame - time.monotonic()
                    if delay > 0:
                        await asyncio.sleep(delay)
                    else:
                        next_frame = time.monotonic()
                else:
                    await asyncio.sleep(0)
        except WebSocketDisconnect:
            pass
        finally:
            session.close()

    return app


def _handle_client_message(session: Session, raw: str) -> None:
    """Parse one client message; anything malformed is counted, never fatal."""
    try:
        msg = json.loads(raw)
        if not isinstance(msg, dict):
            raise ValueError("not an object")
        kind = msg.get("type")
        if kind == "paddle":
            session.ingest_paddle(msg["pos"], msg.get("quat", [1, 0, 0, 0]), float(msg["t"]))
        elif kind == "serve":
            session.request_serve()
        elif kind == "mode":
            session.set_mode(msg["mode"])
        elif kind == "close":
            session.close()
        else:
            raise ValueError(f"unknown message type {kind!r}")
    except Exception:
        session.rejected_messages += 1
