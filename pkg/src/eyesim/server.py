"""Interactive session service.

Each session owns one SimState stream: an initial scenario plus an
append-only action log. Stepping is atomic (a failed action changes
nothing) and strictly serialized per session; distinct sessions step in
parallel. Persistence is the log itself — replaying it from the initial
state reproduces the current state bitwise, because the transition
function is pure.

The wire layer (FastAPI) exposes request/response endpoints for
create/reset/export/ood and a websocket for low-latency step streams.
Rasters travel as base64 PNG, graphs as inline JSON; every message carries
a protocol version.
"""
from __future__ import annotations

import base64
import io
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import EyesimError, UnknownSession
from .geometry import CoordinateMap
from .renderer import CLASS_NAMES, analytic_flow
from .scenegraph import SceneGraph, build_graph
from .simulator import Action, ScenarioSpec, Simulator, generate_ood_scenario
from .state import KinematicScript, SimState, default_anatomy
from .tools import ToolClass

PROTOCOL_VERSION = "1.0"


def _png_b64(arr: np.ndarray, mode: str) -> str:
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


@dataclass
class Session:
    session_id: str
    spec: ScenarioSpec
    sim: Simulator
    state: SimState
    log: list[Action] = field(default_factory=list)
    created: float = field(default_factory=time.time)
    updated: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionManager:
    """In-process session registry; the wire layer is a thin shim over it."""

    def __init__(self, coord_map: CoordinateMap | None = None):
        self.coord_map = coord_map or CoordinateMap(128, 128, 1.0)
        self._sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()

    # ------------------------------------------------------------- sessions

    def create(self, spec: ScenarioSpec | None = None) -> str:
        if spec is None:
            spec = ScenarioSpec(initial_state=SimState(anatomy=default_anatomy()))
        sim = Simulator(coord_map=self.coord_map, bounds=spec.bounds)
        session = Session(
            session_id=uuid.uuid4().hex,
            spec=spec,
            sim=sim,
            state=spec.initial_state,
        )
        with self._registry_lock:
            self._sessions[session.session_id] = session
        return session.session_id

    def get(self, session_id: str) -> Session:
        with self._registry_lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSession(f"no session {session_id!r}")
        return session

    def ids(self):
        with self._registry_lock:
            return list(self._sessions)

    # ----------------------------------------------------------- operations

    def observe(self, session_id: str) -> dict:
        """Observation bundle for the current frame (no transition)."""
        session = self.get(session_id)
        with session.lock:
            return self._bundle(session, session.state, prev_state=None)

    def step(self, session_id: str, action: Action) -> dict:
        """Apply one transition; atomic — on error the session is untouched."""
        session = self.get(session_id)
        with session.lock:
            prev = session.state
            new_state, _raster = session.sim.transition(prev, action, want_raster=False)
            # commit only after the transition fully succeeded
            session.state = new_state
            session.log.append(action)
            session.updated = time.time()
            return self._bundle(session, new_state, prev_state=prev)

    def reset(self, session_id: str) -> dict:
        session = self.get(session_id)
        with session.lock:
            session.state = session.spec.initial_state
            session.log.clear()
            session.updated = time.time()
            return self._bundle(session, session.state, prev_state=None)

    def export(self, session_id: str, fps: float = 4.0) -> KinematicScript:
        """Action log -> replayable script (one frame per visited state)."""
        session = self.get(session_id)
        with session.lock:
            states = self.replay_log(session.spec, list(session.log))
        frames = tuple((s.anatomy, s.tools) for s in states)
        return KinematicScript(
            fps=fps, frames=frames, source_id=f"session:{session_id}"
        )

    def replay_log(self, spec: ScenarioSpec, log) -> list[SimState]:
        """Pure replay of an action log from the scenario's initial state."""
        sim = Simulator(coord_map=self.coord_map, bounds=spec.bounds)
        state = spec.initial_state
        states = [state]
        for action in log:
            state, _ = sim.transition(state, action, want_raster=False)
            states.append(state)
        return states

    # -------------------------------------------------------------- bundles

    def _bundle(self, session: Session, state: SimState, prev_state: SimState | None) -> dict:
        raster, frame = session.sim.render(state)
        if prev_state is not None:
            # incoming motion of this frame, painted on this frame's raster
            flow = analytic_flow(prev_state, state, raster, self.coord_map)
        else:
            from .renderer import FlowField

            zeros = np.zeros(raster.labels.shape)
            flow = FlowField(zeros, zeros)
        graph = build_graph(raster, flow, frame_index=state.frame_index)
        return {
            "protocol_version": PROTOCOL_VERSION,
            "session_id": session.session_id,
            "frame_index": state.frame_index,
            "state": state.to_jsonable(),
            "label_png": _png_b64(raster.labels, "L"),
            "sim_png": _png_b64(frame, "RGB"),
            "graph": graph.to_jsonable(),
        }

    def handshake(self) -> dict:
        m = self.coord_map
        return {
            "protocol_version": PROTOCOL_VERSION,
            "width": m.image_width,
            "height": m.image_height,
            "sim_scale": m.sim_scale,
            "px_per_unit": m.px_per_unit,
            "class_names": {str(k): v for k, v in CLASS_NAMES.items()},
            "tool_classes": {cls.name: cls.label_id for cls in ToolClass},
        }


# ------------------------------------------------------------------- wire


def create_app(manager: SessionManager | None = None, frontend_dir=None):
    """FastAPI application over a SessionManager."""
    # imported lazily so the in-process SessionManager stays usable without
    # the web stack; the names are published to module globals because the
    # route signatures' postponed annotations resolve there
    global FastAPI, WebSocket, WebSocketDisconnect
    from fastapi import FastAPI, WebSocket, WebSocketDisconnect
    from fastapi.responses import JSONResponse

    manager = manager or SessionManager()
    app = FastAPI(title="eyesim session service")
    app.state.manager = manager

    def error_response(exc: Exception, status: int = 400):
        return JSONResponse(
            status_code=status,
            content={
                "protocol_version": PROTOCOL_VERSION,
                "error": type(exc).__name__,
                "detail": str(exc),
            },
        )

    @app.exception_handler(EyesimError)
    async def _engine_error(_request, exc: EyesimError):
        status = 404 if isinstance(exc, UnknownSession) else 400
        return error_response(exc, status)

    @app.get("/api/handshake")
    def handshake():
        return manager.handshake()

    @app.post("/api/sessions")
    def create_session(body: dict | None = None):
        spec = None
        if body and body.get("spec"):
            spec = ScenarioSpec.from_jsonable(body["spec"])
        sid = manager.create(spec)
        return {
            "protocol_version": PROTOCOL_VERSION,
            "session_id": sid,
            "handshake": manager.handshake(),
            "observation": manager.observe(sid),
        }

    @app.get("/api/sessions/{sid}")
    def query_session(sid: str):
        session = manager.get(sid)
        return {
            "protocol_version": PROTOCOL_VERSION,
            "session_id": sid,
            "frame_index": session.state.frame_index,
            "log_length": len(session.log),
            "created": session.created,
            "updated": session.updated,
        }

    @app.post("/api/sessions/{sid}/step")
    def step_session(sid: str, body: dict):
        try:
            action = Action.from_jsonable(body["action"])
        except (KeyError, TypeError, ValueError) as exc:
            return error_response(exc)
        return manager.step(sid, action)

    @app.post("/api/sessions/{sid}/reset")
    def reset_session(sid: str):
        return manager.reset(sid)

    @app.get("/api/sessions/{sid}/export")
    def export_session(sid: str):
        script = manager.export(sid)
        return {
            "protocol_version": PROTOCOL_VERSION,
            "session_id": sid,
            "script": script.to_jsonable(),
        }

    @app.post("/api/ood")
    def ood(body: dict):
        try:
            classes = [ToolClass[name] for name in body["tool_classes"]]
            angles = [float(a) for a in body["entry_angles"]]
            primitive = body.get("primitive", "approach")
            seed = int(body.get("seed", 0))
            num_frames = int(body.get("num_frames", 48))
        except (KeyError, TypeError, ValueError) as exc:
            return error_response(exc)
        script = generate_ood_scenario(
            classes, angles, primitive, seed=seed, num_frames=num_frames
        )
        return {"protocol_version": PROTOCOL_VERSION, "script": script.to_jsonable()}

    @app.websocket("/api/sessions/{sid}/ws")
    async def session_stream(websocket: WebSocket, sid: str):
        await websocket.accept()
        try:
            while True:
                msg = await websocket.receive_json()
                try:
                    if msg.get("type") != "step":
                        raise ValueError(f"unknown message type {msg.get('type')!r}")
                    action = Action.from_jsonable(msg["action"])
                    bundle = manager.step(sid, action)
                    await websocket.send_json({"type": "frame", **bundle})
                except (EyesimError, KeyError, TypeError, ValueError) as exc:
                    await websocket.send_json(
                        {
                            "type": "error",
                            "protocol_version": PROTOCOL_VERSION,
                            "error": type(exc).__name__,
                            "detail": str(exc),
                        }
                    )
        except WebSocketDisconnect:
            pass

    if frontend_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app


def serve(host: str = "127.0.0.1", port: int = 8631, coord_map=None, frontend_dir=None):
    """Blocking uvicorn server entry point."""
    import uvicorn

    app = create_app(SessionManager(coord_map), frontend_dir=frontend_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
