"""Live-session endpoint for the browser console.

One background thread owns the simulator and paces it against the wall
clock; WebSocket handlers never touch it directly. Commands go through a
bounded queue and are applied between control steps; state flows back as
immutable snapshots published by reference into a latest-value slot, so a
slow consumer skips frames instead of queueing them.

Wire protocol (JSON, ``protocol: 1``): client sends ``apply_force``
{target, magnitude, direction?, duration}, ``set_controller``
{controller}, ``set_gains`` {gains}; server sends ``hello``, ``ack``,
``error``, and ``snapshot`` frames at a fixed rate.
"""

import asyncio
import contextlib
import json
import os
import queue
import threading
import time
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import uvicorn
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles

from .control import ControllerGains, with_overrides
from .errors import ConfigError
from .model import RobotModel
from .sim import ForceEvent, Scenario, SimConfig, Simulator, SimSnapshot
from .taxels import TaxelArray

PROTOCOL_VERSION = 1
CONSOLE_DIR_ENV = "TACTILEWBC_CONSOLE_DIR"

# pacing: never run more than this many control steps per scheduler tick,
# and forgive any backlog beyond it so a stall does not cause a sprint
MAX_CATCHUP_STEPS = 10
LIVE_SESSION_SECONDS = 86400.0


def live_scenario(controller: str = "impedance") -> Scenario:
    """Open-ended quiet scenario: no scripted inputs, interaction only."""
    return Scenario(name="live", controller=controller, duration=LIVE_SESSION_SECONDS)


class SimSession(threading.Thread):
    """Owns the simulator; steps it in wall-clock time until stopped."""

    def __init__(self, sim: Simulator, name: str = "sim-session"):
        super().__init__(name=name, daemon=True)
        self.sim = sim
        self.commands: "queue.Queue[Tuple[str, dict]]" = queue.Queue(maxsize=256)
        self._latest: Optional[Tuple[int, SimSnapshot, str]] = None
        self._halt = threading.Event()
        self.error: Optional[BaseException] = None

    # -- called from handler threads ----------------------------------------

    @property
    def latest(self) -> Optional[Tuple[int, SimSnapshot, str]]:
        return self._latest

    def post(self, kind: str, payload: dict) -> bool:
        """Queue a validated command; False if the session is saturated."""
        try:
            self.commands.put_nowait((kind, payload))
            return True
        except queue.Full:
            return False

    def stop(self) -> None:
        self._halt.set()

    # -- sim thread ----------------------------------------------------------

    def _apply(self, kind: str, payload: dict) -> None:
        sim = self.sim
        if kind == "apply_force":
            now = sim.t
            sim.inject_event(ForceEvent(
                t_start=now,
                t_end=now + float(payload["duration"]),
                target=payload["target"],
                magnitude=float(payload["magnitude"]),
                direction=payload.get("direction"),
            ))
        elif kind == "set_controller":
            sim.set_controller(payload["controller"])
        elif kind == "set_gains":
            sim.set_gains(payload["gains"])

    def run(self) -> None:
        sim = self.sim
        seq = 0
        done = 0
        start = time.monotonic()
        try:
            # publish the initial state so clients see something immediately
            self._latest = (seq, sim.step(), sim._controller)
            done += 1
            while not self._halt.is_set():
                while True:
                    try:
                        kind, payload = self.commands.get_nowait()
                    except queue.Empty:
                        break
                    self._apply(kind, payload)
                target = (time.monotonic() - start) / sim.dt
                pending = target - done
                if pending > MAX_CATCHUP_STEPS:
                    done = int(target) - MAX_CATCHUP_STEPS
                    pending = target - done
                if pending < 1.0:
                    time.sleep(sim.dt / 2.0)
                    continue
                snap = None
                for _ in range(min(int(pending), MAX_CATCHUP_STEPS)):
                    snap = sim.step()
                    done += 1
                seq += 1
                self._latest = (seq, snap, sim._controller)
        except BaseException as exc:  # surface divergence to connected clients
            self.error = exc


def snapshot_frame(seq: int, snap: SimSnapshot, controller: str) -> dict:
    return {
        "kind": "snapshot",
        "protocol": PROTOCOL_VERSION,
        "seq": seq,
        "t": snap.t,
        "controller": controller,
        "q_B": [float(v) for v in snap.state.q_B],
        "dq_B": [float(v) for v in snap.state.dq_B],
        "q_A": [float(v) for v in snap.state.q_A],
        "dq_A": [float(v) for v in snap.state.dq_A],
        "ee": [float(v) for v in snap.ee.as_vector()],
        "x_d": [float(v) for v in snap.x_d.as_vector()],
        "taxels": [
            {"index": r.index, "raw": float(r.raw), "force": float(r.force)}
            for r in snap.readings
        ],
        "tau_v_ext": [float(v) for v in snap.tau_v_ext],
        "tau_v": [float(v) for v in snap.out.tau_v],
        "F_cmd": [float(v) for v in snap.out.F],
        "F_ee_ext": [float(v) for v in snap.F_ee_ext],
    }


# ---------------------------------------------------------------------------
# message validation (handler side, so rejections answer immediately)


def _validated(msg: dict, array: TaxelArray, gains: ControllerGains) -> Tuple[str, dict]:
    if not isinstance(msg, dict):
        raise ValueError("message must be a JSON object")
    kind = msg.get("kind")
    if kind == "apply_force":
        target = msg.get("target")
        if target != "ee":
            if not isinstance(target, int) or target not in set(array.indices):
                raise ValueError(f"target must be 'ee' or one of {array.indices}")
        magnitude = float(msg.get("magnitude", 0.0))
        duration = float(msg.get("duration", 0.0))
        if duration <= 0.0:
            raise ValueError("duration must be positive")
        direction = msg.get("direction")
        if target == "ee":
            direction = np.asarray(direction, dtype=float).reshape(3)
            if not np.linalg.norm(direction) > 0.0:
                raise ValueError("ee pushes need a nonzero direction")
            direction = direction / np.linalg.norm(direction)
        elif direction is not None:
            raise ValueError("taxel pushes act along the surface normal; drop direction")
        return "apply_force", {"target": target, "magnitude": magnitude,
                               "duration": duration, "direction": direction}
    if kind == "set_controller":
        controller = msg.get("controller")
        if controller not in ("impedance", "follow_me"):
            raise ValueError("controller must be 'impedance' or 'follow_me'")
        return "set_controller", {"controller": controller}
    if kind == "set_gains":
        overrides = msg.get("gains")
        if not isinstance(overrides, dict) or not overrides:
            raise ValueError("gains must be a non-empty object")
        with_overrides(gains, overrides)  # dry run: bad keys/shapes raise
        return "set_gains", {"gains": overrides}
    raise ValueError(f"unknown message kind {kind!r}")


# ---------------------------------------------------------------------------
# app assembly


def create_app(model: RobotModel, gains: ControllerGains, array: TaxelArray,
               scenario: Optional[Scenario] = None, snapshot_rate: float = 30.0,
               config: SimConfig = SimConfig(dt=2e-3), console_dir: Optional[str] = None) -> FastAPI:
    """FastAPI app hosting one shared live simulation session."""
    scenario = scenario if scenario is not None else live_scenario()
    session = SimSession(Simulator(scenario, model, gains, array, config=config))

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        session.start()
        try:
            yield
        finally:
            session.stop()
            session.join(timeout=2.0)

    app = FastAPI(title="tactilewbc live session", lifespan=lifespan)
    app.state.session = session

    @app.get("/health")
    def health():
        latest = session.latest
        return {"ok": session.error is None and session.is_alive(),
                "t": latest[1].t if latest else None}

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        await ws.send_json({
            "kind": "hello",
            "protocol": PROTOCOL_VERSION,
            "dt": session.sim.dt,
            "snapshot_rate": snapshot_rate,
            "controller": session.sim._controller,
            "taxels": list(array.indices),
            "scenario": scenario.name,
        })

        async def sender():
            last_sent = -1
            period = 1.0 / snapshot_rate
            try:
                while True:
                    if session.error is not None:
                        await ws.send_json({"kind": "error", "protocol": PROTOCOL_VERSION,
                                            "fatal": True, "message": str(session.error)})
                        await ws.close()
                        return
                    latest = session.latest
                    if latest is not None and latest[0] != last_sent:
                        await ws.send_json(snapshot_frame(*latest))
                        last_sent = latest[0]
                    await asyncio.sleep(period)
            except (WebSocketDisconnect, RuntimeError):
                return  # peer went away mid-send; receive loop shuts us down

        send_task = asyncio.create_task(sender())
        try:
            while True:
                raw = await ws.receive_text()
                reply: dict = {"protocol": PROTOCOL_VERSION}
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError as exc:
                    reply.update(kind="error", message=f"not JSON: {exc}")
                    await ws.send_json(reply)
                    continue
                if isinstance(msg, dict) and "id" in msg:
                    reply["id"] = msg["id"]
                try:
                    kind, payload = _validated(msg, array, session.sim.gains)
                except (TypeError, ValueError, ConfigError) as exc:
                    reply.update(kind="error", message=str(exc))
                    await ws.send_json(reply)
                    continue
                if session.post(kind, payload):
                    reply.update(kind="ack", **{"for": kind})
                else:
                    reply.update(kind="error", message="session busy, command dropped")
                await ws.send_json(reply)
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await send_task

    static_dir = console_dir or os.environ.get(CONSOLE_DIR_ENV)
    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")

    return app


def serve(model: RobotModel, gains: ControllerGains, array: TaxelArray,
          scenario: Optional[Scenario] = None, host: str = "127.0.0.1", port: int = 8765,
          snapshot_rate: float = 30.0) -> None:
    app = create_app(model, gains, array, scenario=scenario, snapshot_rate=snapshot_rate)
    uvicorn.run(app, host=host, port=port, log_level="warning")
