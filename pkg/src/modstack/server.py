"""Live teleoperation server: websocket bridge between browser consoles
and operator nodes.

Protocol (JSON text frames):
  client -> server  {"type": "input", "op": "down"|"up", "target": str, "speed": number}
  server -> client  {"type": "telemetry", "frame": {...}}
                    {"type": "joint", "name": str, "angle": number, "target": number|null}

Joint state messages are throttled to at most 20 Hz. A closing or
dropping socket releases every key that session was holding: the server
never keeps motion alive for a client that is gone.
"""

from __future__ import annotations

import asyncio
import json

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import kin
from .bus import MessageBus
from .ops import _apply_world_config, _default_operator, _params_from, validate_scenario
from .plant import PlantWorld
from .stack import OperatorNode, Runtime, launch

__all__ = ["LiveSim", "create_app", "serve"]

BROADCAST_PERIOD = 0.05  # 20 Hz ceiling


class LiveSim:
    """One scenario stepped in near-real time by the server loop."""

    def __init__(self, scenario: dict):
        self.scenario = scenario
        self.desc = validate_scenario(scenario)
        self.params = _params_from(scenario)
        seed = scenario.get("seed", 0)
        self.bus = MessageBus(seed=seed)
        self.world = PlantWorld(self.desc, seed=seed,
                                sensor_noise=scenario.get("world", {}).get("sensor_noise", 0.0))
        _apply_world_config(self.world, scenario.get("world", {}))
        self.role_table = scenario["role_table"]
        self.runtime = Runtime(self.desc, self.bus, self.world, self.params, self.role_table)
        for node_id in self.role_table:
            launch(node_id, self.desc, self.role_table, self.runtime)
        self.default_operator = _default_operator(self.role_table)
        self.telemetry_frames: list[dict] = []
        for node_id in self.role_table:
            self.bus.tap(f"telemetry/{node_id}",
                         lambda topic, payload, src, t: self.telemetry_frames.append(payload))

    def operators(self) -> list[str]:
        return [nid for nid, e in self.role_table.items() if 5 in e.get("levels", ())]

    def operator_node(self, node_id: str) -> OperatorNode | None:
        for node in self.runtime.launched.get(node_id, ()):
            if isinstance(node, OperatorNode):
                return node
        return None

    def input_event(self, operator: str, event: dict) -> None:
        node = self.operator_node(operator)
        if node is not None:
            node.input_event(event)

    def step(self) -> None:
        now = self.bus.clock.now
        self.runtime.tick_all(now)
        for limb, chain in self.desc.chains.items():
            q = np.array([self.world.joint(j.name).angle for j in chain.joints])
            pose = kin.forward_kinematics(chain, q)
            module = self.world.modules[limb]
            if chain.tip_frame in module.grippers:
                module.grippers[chain.tip_frame].tip_pose = pose
        self.world.step(self.params.tick)
        self.bus.advance(self.params.tick)

    def joint_states(self) -> list[dict]:
        states = []
        for mid in sorted(self.world.modules):
            module = self.world.modules[mid]
            for name in sorted(module.joints):
                joint = module.joints[name]
                target = None
                if joint.held is not None and joint.held.kind == "position":
                    target = joint.held.value
                states.append({"type": "joint", "name": name,
                               "angle": joint.sensor(), "target": target})
        return states

    def drain_telemetry(self) -> list[dict]:
        frames, self.telemetry_frames = self.telemetry_frames, []
        return frames


def create_app(scenario: dict, pace: float | None = None) -> FastAPI:
    """Build the live server app. pace overrides the per-tick sleep
    (0 collapses to as-fast-as-possible, handy under test)."""
    app = FastAPI()
    sim = LiveSim(scenario)
    app.state.sim = sim
    sleep_for = sim.params.tick if pace is None else pace
    clients: dict[int, WebSocket] = {}
    next_id = {"n": 0}

    async def _sim_loop():
        last_broadcast = 0.0
        while True:
            sim.step()
            now = sim.bus.clock.now
            if now - last_broadcast >= BROADCAST_PERIOD:
                last_broadcast = now
                await _broadcast()
            await asyncio.sleep(sleep_for)

    async def _broadcast():
        if not clients:
            sim.drain_telemetry()
            return
        messages = [json.dumps(s) for s in sim.joint_states()]
        messages += [json.dumps({"type": "telemetry", "frame": f}) for f in sim.drain_telemetry()]
        dead = []
        for cid, ws in clients.items():
            try:
                for m in messages:
                    await ws.send_text(m)
            except Exception:
                dead.append(cid)
        for cid in dead:
            clients.pop(cid, None)

    @app.on_event("startup")
    async def _start():
        app.state.loop_task = asyncio.create_task(_sim_loop())

    @app.on_event("shutdown")
    async def _stop():
        app.state.loop_task.cancel()

    @app.get("/operators")
    async def operators():
        return {"operators": sim.operators()}

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        operator = websocket.query_params.get("operator", sim.default_operator)
        cid = next_id["n"]
        next_id["n"] += 1
        clients[cid] = websocket
        held: set[str] = set()
        try:
            while True:
                text = await websocket.receive_text()
                msg = json.loads(text)
                if msg.get("type") != "input":
                    continue
                event = {"op": msg["op"], "target": msg["target"]}
                if "speed" in msg:
                    event["speed"] = msg["speed"]
                if msg["op"] == "down":
                    held.add(msg["target"])
                else:
                    held.discard(msg["target"])
                sim.input_event(operator, event)
        except WebSocketDisconnect:
            pass
        finally:
            clients.pop(cid, None)
            # release guarantee, server side: a vanished console holds no keys
            for target in sorted(held):
                sim.input_event(operator, {"op": "up", "target": target})

    return app


def serve(scenario: dict, port: int = 8700, host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(create_app(scenario), host=host, port=port, log_level="warning")
