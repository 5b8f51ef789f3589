"""The control stack: five node levels wired over the message bus.

Level 1 (joint) forwards the newest valid command per joint to the plant
and holds position at the last sensor reading when commands go silent.
Level 2 (ik) turns tip-space targets and nudges into per-joint position
commands, each passed through a clamped integral in joint space. Level 3
(limb) streams trajectory setpoints just in time, never pre-loading
motion into lower levels. Level 4 (mover) synchronizes multi-limb moves
to a common duration. Level 5 (operator) maps held buttons to velocity
targets and runs the configured remote-controller strategy.

Wheels bypass the stack entirely: speed commands go straight to the
drive node, which deliberately has no silence watchdog (a documented
trade-off; slow continuous spinning was judged acceptable).

A calibrator node homes one joint against its photo reflector using a
send-one-target-per-fresh-sensor handshake, which is what makes homing
fail stop under network loss: no sensor, no next target, no motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kin
from .bus import MessageBus
from .ctrl import (
    CommandOut,
    StrategyInput,
    StrategyState,
    make_state,
    sign,
    strategy_step,
)
from .model import KinematicChain, RobotDescription, chain_for_node
from .plant import PlantWorld

__all__ = [
    "SimParams",
    "Runtime",
    "Node",
    "JointNode",
    "IkNode",
    "LimbNode",
    "MoverNode",
    "OperatorNode",
    "CalibratorNode",
    "WheelDriverNode",
    "MissionControlNode",
    "LimbTrajectory",
    "MoverPlan",
    "mover_sync",
    "launch",
    "DuplicateLaunchError",
    "cmd_topic",
    "sensor_topic",
    "wheel_topic",
    "traj_topic",
    "telemetry_topic",
    "calib_topic",
    "ik_topic",
    "MOVER_PLAN_TOPIC",
]

MOVER_PLAN_TOPIC = "mover/plan"


def _split_joint(joint_name: str) -> tuple[str, str]:
    module, local = joint_name.split(".", 1)
    return module, local


def cmd_topic(joint_name: str) -> str:
    module, local = _split_joint(joint_name)
    return f"cmd/{module}/{local}"


def sensor_topic(joint_name: str) -> str:
    module, local = _split_joint(joint_name)
    return f"sensor/{module}/{local}"


def wheel_topic(module_id: str) -> str:
    return f"wheel/{module_id}/speed"


def traj_topic(limb_id: str) -> str:
    return f"traj/{limb_id}"


def telemetry_topic(node_id: str) -> str:
    return f"telemetry/{node_id}"


def calib_topic(joint_name: str) -> str:
    return f"calib/{joint_name}"


def ik_topic(limb_id: str) -> str:
    return f"ik/{limb_id}"


class DuplicateLaunchError(RuntimeError):
    """A node id was launched twice."""


@dataclass
class SimParams:
    tick: float = 0.02
    silence_timeout: float | None = 0.3   # None disables the level-1 watchdog
    delta_e: float = 0.05
    delta_offset: float = 0.3
    telemetry_period: float = 1.0
    ik_damping: float = 1e-3
    default_strategy: str = "clamped"


class Runtime:
    """Shared wiring for one simulation: description, bus, plant, nodes."""

    def __init__(self, desc: RobotDescription, bus: MessageBus, world: PlantWorld,
                 params: SimParams | None = None, role_table: dict | None = None):
        self.desc = desc
        self.bus = bus
        self.world = world
        self.params = params or SimParams()
        self.role_table = role_table or {}
        self.launched: dict[str, list] = {}
        self.nodes: list[Node] = []
        self.crashed: set[str] = set()
        self.mission_id = None
        for node_id, entry in (role_table or {}).items():
            if "mission-control" in entry.get("levels", ()) or 4 in entry.get("levels", ()):
                self.mission_id = self.mission_id or node_id

    def crash(self, node_id: str) -> None:
        self.crashed.add(node_id)

    def node_online(self, node: "Node") -> bool:
        if node.node_id in self.crashed:
            return False
        if node.battery_module is not None:
            module = self.world.modules.get(node.battery_module)
            if module is not None and not module.battery.online:
                return False
        return True

    def tick_all(self, now: float) -> None:
        for node in self.nodes:
            if self.node_online(node):
                node.tick(now)
            else:
                node.inbox.clear()


class Node:
    """One single-threaded event-loop participant on the bus."""

    def __init__(self, node_id: str, runtime: Runtime):
        self.node_id = node_id
        self.runtime = runtime
        self.bus = runtime.bus
        self.inbox: list = []
        self.events: list[dict] = []
        self.battery_module: str | None = None
        self._last_telemetry = -math.inf

    def subscribe(self, topic: str) -> None:
        self.bus.subscribe(topic, self.node_id, self.inbox.append)

    def publish(self, topic: str, payload) -> None:
        self.bus.publish(topic, payload, self.node_id)

    def drain(self) -> list:
        # the bus holds a reference to this exact list; clear in place
        msgs = self.inbox[:]
        self.inbox.clear()
        return msgs

    def tick(self, now: float) -> None:
        raise NotImplementedError

    # -- telemetry ----------------------------------------------------------

    def telemetry_extra(self) -> dict:
        return {}

    def maybe_publish_telemetry(self, now: float) -> None:
        if now - self._last_telemetry < self.runtime.params.telemetry_period:
            return
        self._last_telemetry = now
        frame = {
            "t": round(now, 9),
            "node": self.node_id,
            "ping": True,
            "link_quality": self._uplink_quality(),
            "cpu": 0.15,  # display stub
            "battery": self._battery_level(),
            "address": self.node_id,
            "events": self.events[-8:],
        }
        frame.update(self.telemetry_extra())
        self.publish(telemetry_topic(self.node_id), frame)

    def _uplink_quality(self):
        mission = self.runtime.mission_id
        if mission is None or mission == self.node_id:
            return 1.0
        return self.bus.link_quality(self.node_id, mission)

    def _battery_level(self):
        if self.battery_module is None:
            return 100.0
        module = self.runtime.world.modules.get(self.battery_module)
        return module.battery.level if module else 100.0


class JointNode(Node):
    """Level 1. Owns the CAN side of one chain's joints."""

    # structural invariant: at most this many queued future targets per joint
    max_future_targets = 1

    def __init__(self, node_id: str, runtime: Runtime, chain: KinematicChain):
        super().__init__(node_id, runtime)
        self.chain = chain
        self.module_id = _split_joint(chain.joints[0].name)[0]
        self.battery_module = self.module_id
        self.limits = {j.name: j.limits for j in chain.joints}
        self.held: dict[str, CommandOut | None] = {j.name: None for j in chain.joints}
        self.last_rx: dict[str, float] = {j.name: -math.inf for j in chain.joints}
        self.holding: dict[str, bool] = {j.name: False for j in chain.joints}
        self.rejected = 0
        for j in chain.joints:
            self.subscribe(cmd_topic(j.name))

    def tick(self, now: float) -> None:
        world = self.runtime.world
        for env in self.drain():
            data = env.data()
            name = data.get("joint")
            if name not in self.held:
                self.rejected += 1
                self.events.append({"type": "unknown-joint", "joint": name, "t": now})
                continue
            value = float(data["value"])
            if data["kind"] == "position":
                lo, hi = self.limits[name]
                value = min(max(value, lo), hi)
            self.held[name] = CommandOut(data["kind"], value)
            self.last_rx[name] = now
            self.holding[name] = False

        timeout = self.runtime.params.silence_timeout
        for j in self.chain.joints:
            name = j.name
            plant = world.joint(name)
            cmd = self.held[name]
            if timeout is not None and now - self.last_rx[name] > timeout and not self.holding[name]:
                # watchdog: freeze at the last sensed angle; velocity -> 0
                cmd = CommandOut("position", plant.sensor())
                self.held[name] = cmd
                self.holding[name] = True
            plant.apply(cmd)
            self.publish(sensor_topic(name), {
                "joint": name,
                "angle": plant.sensor(),
                "velocity": plant.velocity,
                "reflector": plant.reflector.state(plant.angle) if plant.reflector else False,
                "t": round(now, 9),
            })
        self.maybe_publish_telemetry(now)

    def telemetry_extra(self) -> dict:
        world = self.runtime.world
        joints = {j.name: round(world.joint(j.name).sensor(), 9) for j in self.chain.joints}
        module = world.modules.get(self.module_id)
        return {"joints": joints, "neighbors": sorted(module.neighbors) if module else []}


class IkNode(Node):
    """Level 2. Tip-space control of one limb chain."""

    def __init__(self, node_id: str, runtime: Runtime, chain: KinematicChain):
        super().__init__(node_id, runtime)
        self.chain = chain
        self.limb_id = _split_joint(chain.joints[0].name)[0]
        self.battery_module = self.limb_id
        self.names = [j.name for j in chain.joints]
        self.y: dict[str, float] = {}
        self.u: dict[str, float] = {}
        self.goal: np.ndarray | None = None
        self.subscribe(ik_topic(self.limb_id))
        for name in self.names:
            self.subscribe(sensor_topic(name))

    def _ready(self) -> bool:
        return all(name in self.y for name in self.names)

    def tick(self, now: float) -> None:
        nudge = np.zeros(6)
        target_msg = None
        for env in self.drain():
            data = env.data()
            if env.topic.startswith("sensor/"):
                self.y[data["joint"]] = data["angle"]
            elif data.get("kind") == "nudge":
                nudge[:3] += np.asarray(data.get("delta", (0, 0, 0)), dtype=float)
                nudge[3:] += np.asarray(data.get("drot", (0, 0, 0)), dtype=float)
            elif data.get("kind") == "target":
                target_msg = data
        if not self._ready():
            self.maybe_publish_telemetry(now)
            return
        q = np.array([self.y[name] for name in self.names])
        if not self.u:
            self.u = {name: self.y[name] for name in self.names}

        if target_msg is not None:
            self._accept_target(target_msg, q, now)

        du = np.zeros(len(self.names))
        if np.any(nudge != 0.0):
            du = self._nudge_step(q, nudge)
        elif self.goal is not None:
            dt = self.runtime.params.tick
            for i, j in enumerate(self.chain.joints):
                err = self.goal[i] - self.u[j.name]
                du[i] = min(max(err, -j.v_max * dt), j.v_max * dt)

        if np.any(du != 0.0) or self.goal is not None:
            delta_e = self.runtime.params.delta_e
            for i, j in enumerate(self.chain.joints):
                name = j.name
                raw = self.u[name] + du[i]
                u = max(self.y[name] - delta_e, min(self.y[name] + delta_e, raw))
                u = min(max(u, j.limits[0]), j.limits[1])
                self.u[name] = u
                self.publish(cmd_topic(name), {
                    "joint": name, "kind": "position", "value": u, "t": round(now, 9),
                })
        self.maybe_publish_telemetry(now)

    def _accept_target(self, data: dict, q: np.ndarray, now: float) -> None:
        position = np.asarray(data["position"], dtype=float)
        orientation = np.asarray(data.get("orientation", (0.0, 0.0, 0.0, 1.0)), dtype=float)
        mask = tuple(data.get("mask", (1, 1, 1, 1, 1, 1)))
        target = kin.Pose(position, orientation)
        if np.linalg.norm(position) > self.chain.reach + 1e-9:
            self.goal = None
            self.events.append({"type": "ik-unreachable", "t": now, "reason": "beyond-reach"})
            return
        try:
            self.goal = kin.inverse_kinematics(
                self.chain, target, seed=q,
                opts=kin.IKOptions(mask=mask, damping=self.runtime.params.ik_damping),
            )
        except kin.IKError as e:
            self.goal = None
            self.events.append({"type": "ik-unreachable", "t": now, "reason": e.reason})

    def _nudge_step(self, q: np.ndarray, nudge: np.ndarray) -> np.ndarray:
        jac = kin.jacobian(self.chain, q)
        lam = self.runtime.params.ik_damping
        jjt = jac @ jac.T + (lam ** 2) * np.eye(6)
        return jac.T @ np.linalg.solve(jjt, nudge)


@dataclass(frozen=True)
class LimbTrajectory:
    limb_id: str
    waypoints: tuple  # ((q tuple, t_rel), ...), t strictly increasing

    def __post_init__(self):
        prev = 0.0
        for _, t in self.waypoints:
            if t <= prev:
                raise ValueError("waypoint times must be strictly increasing and positive")
            prev = t

    @property
    def duration(self) -> float:
        return self.waypoints[-1][1] if self.waypoints else 0.0


class LimbNode(Node):
    """Level 3. Streams trajectory setpoints just in time."""

    def __init__(self, node_id: str, runtime: Runtime, chain: KinematicChain):
        super().__init__(node_id, runtime)
        self.chain = chain
        self.limb_id = _split_joint(chain.joints[0].name)[0]
        self.battery_module = self.limb_id
        self.names = [j.name for j in chain.joints]
        self.y: dict[str, float] = {}
        self.active: LimbTrajectory | None = None
        self.started_at = 0.0
        self.q0: np.ndarray | None = None
        self.subscribe(traj_topic(self.limb_id))
        for name in self.names:
            self.subscribe(sensor_topic(name))

    def tick(self, now: float) -> None:
        for env in self.drain():
            data = env.data()
            if env.topic.startswith("sensor/"):
                self.y[data["joint"]] = data["angle"]
            else:
                self._accept(data, now)
        if self.active is None:
            self.maybe_publish_telemetry(now)
            return
        t_rel = now - self.started_at
        q_cmd = self._interpolate(t_rel)
        for name, value in zip(self.names, q_cmd):
            self.publish(cmd_topic(name), {
                "joint": name, "kind": "position", "value": float(value), "t": round(now, 9),
            })
        if t_rel >= self.active.duration:
            self.events.append({"type": "traj-done", "limb": self.limb_id, "t": now})
            self.active = None
        self.maybe_publish_telemetry(now)

    def _accept(self, data: dict, now: float) -> None:
        waypoints = tuple((tuple(wp["q"]), float(wp["t"])) for wp in data.get("waypoints", ()))
        if not waypoints:
            self.events.append({"type": "traj-done", "limb": self.limb_id, "t": now, "empty": True})
            return
        if not all(name in self.y for name in self.names):
            self.events.append({"type": "traj-rejected", "reason": "no-sensor-state", "t": now})
            return
        try:
            traj = LimbTrajectory(self.limb_id, waypoints)
        except ValueError as e:
            self.events.append({"type": "traj-rejected", "reason": str(e), "t": now})
            return
        for q, _ in waypoints:
            for value, joint in zip(q, self.chain.joints):
                lo, hi = joint.limits
                if not lo <= value <= hi:
                    self.events.append({
                        "type": "traj-rejected", "reason": f"{joint.name} out of limits", "t": now,
                    })
                    return
        self.active = traj
        self.started_at = now
        self.q0 = np.array([self.y[name] for name in self.names])

    def _interpolate(self, t_rel: float) -> np.ndarray:
        points = [(self.q0, 0.0)] + [(np.asarray(q), t) for q, t in self.active.waypoints]
        if t_rel >= points[-1][1]:
            return points[-1][0]
        for (qa, ta), (qb, tb) in zip(points, points[1:]):
            if ta <= t_rel < tb:
                alpha = (t_rel - ta) / (tb - ta)
                return qa + alpha * (qb - qa)
        return points[0][0]


@dataclass(frozen=True)
class MoverPlan:
    common_duration: float
    trajectories: dict[str, LimbTrajectory]


def mover_sync(chains: dict[str, KinematicChain], current: dict[str, np.ndarray],
               targets: dict[str, np.ndarray], tick: float) -> MoverPlan:
    """Plan synchronized multi-limb moves sharing one duration.

    The common duration is the slowest limb's max per-joint travel time at
    its speed limit. All-or-nothing: one bad target rejects the whole plan.
    """
    if not targets:
        raise ValueError("mover plan needs at least one limb target")
    durations = {}
    for limb, target in targets.items():
        chain = chains[limb]
        q_now = np.asarray(current[limb], dtype=float)
        q_tgt = np.asarray(target, dtype=float)
        if q_tgt.shape != (len(chain.joints),):
            raise ValueError(f"{limb}: target length mismatch")
        for value, joint in zip(q_tgt, chain.joints):
            lo, hi = joint.limits
            if not lo <= value <= hi:
                raise ValueError(f"{limb}: {joint.name} target {value} out of limits")
        per_joint = [abs(t - c) / j.v_max for t, c, j in zip(q_tgt, q_now, chain.joints)]
        durations[limb] = max(per_joint)
    common = max(max(durations.values()), tick)
    trajectories = {
        limb: LimbTrajectory(limb, ((tuple(float(v) for v in np.asarray(targets[limb], dtype=float)), common),))
        for limb in targets
    }
    return MoverPlan(common_duration=common, trajectories=trajectories)


class MoverNode(Node):
    """Level 4. Accepts multi-limb target requests, emits per-limb trajectories."""

    def __init__(self, node_id: str, runtime: Runtime):
        super().__init__(node_id, runtime)
        self.chains = dict(runtime.desc.chains)
        self.y: dict[str, float] = {}
        self.subscribe(MOVER_PLAN_TOPIC)
        for chain in self.chains.values():
            for j in chain.joints:
                self.subscribe(sensor_topic(j.name))

    def tick(self, now: float) -> None:
        for env in self.drain():
            data = env.data()
            if env.topic.startswith("sensor/"):
                self.y[data["joint"]] = data["angle"]
            elif data.get("type") == "request":
                self._plan(data, now)
        self.maybe_publish_telemetry(now)

    def _plan(self, data: dict, now: float) -> None:
        targets = {limb: np.asarray(q, dtype=float) for limb, q in sorted(data["targets"].items())}
        current = {}
        for limb in targets:
            chain = self.chains.get(limb)
            if chain is None:
                self.events.append({"type": "plan-rejected", "reason": f"unknown limb {limb}", "t": now})
                return
            names = [j.name for j in chain.joints]
            if not all(n in self.y for n in names):
                self.events.append({"type": "plan-rejected", "reason": f"no state for {limb}", "t": now})
                return
            current[limb] = np.array([self.y[n] for n in names])
        try:
            plan = mover_sync(self.chains, current, targets, self.runtime.params.tick)
        except ValueError as e:
            self.events.append({"type": "plan-rejected", "reason": str(e), "t": now})
            return
        self.publish(MOVER_PLAN_TOPIC, {
            "type": "plan",
            "common_duration": plan.common_duration,
            "limbs": sorted(plan.trajectories),
            "t": round(now, 9),
        })
        for limb in sorted(plan.trajectories):
            traj = plan.trajectories[limb]
            self.publish(traj_topic(limb), {
                "limb": limb,
                "waypoints": [{"q": list(q), "t": t} for q, t in traj.waypoints],
                "t": round(now, 9),
            })


class OperatorNode(Node):
    """Level 5. Maps held buttons to velocity targets and runs the strategy."""

    def __init__(self, node_id: str, runtime: Runtime, strategy: str = "clamped",
                 speed_setting: float = 0.2):
        super().__init__(node_id, runtime)
        self.strategy = strategy
        self.speed_setting = speed_setting
        self.pressed: dict[str, float] = {}       # target -> signed rate
        self.targets_seen: list[str] = []         # dispatch order, stable
        self.states: dict[str, StrategyState] = {}
        self.prev_sign: dict[str, float] = {}
        self.y: dict[str, float] = {}
        self.rejected: list[str] = []
        self._subscribed_sensors: set[str] = set()

    # -- input events --------------------------------------------------------

    def input_event(self, event: dict) -> None:
        """Key/button transition from the input device (script or console)."""
        target = event["target"]
        if not self._target_exists(target):
            self.rejected.append(target)
            self.events.append({"type": "unknown-target", "target": target})
            return
        if event["op"] == "down":
            speed = float(event.get("speed", self.speed_setting))
            self.pressed[target] = speed
            if target not in self.targets_seen:
                self.targets_seen.append(target)
            self._ensure_sensor_sub(target)
        else:
            self.pressed.pop(target, None)

    def _target_exists(self, target: str) -> bool:
        desc = self.runtime.desc
        base = target.split(":", 1)[0]
        if base.startswith("ik"):
            limb = target.split(":")[1]
            return limb in desc.chains
        if "." in base:
            module, _ = _split_joint(base)
            if not desc.has_module(module):
                return False
            return any(any(j.name == base for j in m.joints) for m in desc.modules)
        return desc.has_module(base)

    def _ensure_sensor_sub(self, target: str) -> None:
        base = target.split(":", 1)[0]
        if "." in base and base not in self._subscribed_sensors:
            self._subscribed_sensors.add(base)
            self.subscribe(sensor_topic(base))

    # -- per-tick ------------------------------------------------------------

    def tick(self, now: float) -> None:
        for env in self.drain():
            data = env.data()
            if env.topic.startswith("sensor/"):
                self.y[data["joint"]] = data["angle"]
        # every target ever touched keeps getting a command: the held rate
        # while pressed, an explicit zero (hold) once released
        for target in self.targets_seen:
            rate = self.pressed.get(target, 0.0)
            self._dispatch(target, rate, now)
        self.maybe_publish_telemetry(now)

    def _dispatch(self, target: str, rate: float, now: float) -> None:
        base = target.split(":", 1)[0]
        if target.startswith("ik:"):
            self._ik_nudge(target, rate, now)
        elif "." in base:
            self._joint_command(target, base, rate, now)
        else:
            self._wheel_command(target, base, rate, now)

    def _joint_command(self, target: str, joint: str, rate: float, now: float) -> None:
        y = self.y.get(joint)
        if y is None:
            return  # no sensor reading yet; nothing safe to send
        state = self.states.get(target)
        if state is None:
            state = make_state(self.strategy, u0=y, t0=now - self.runtime.params.tick,
                               delta_offset=self.runtime.params.delta_offset,
                               delta_e=self.runtime.params.delta_e)
            self.states[target] = state
        if self.strategy == "offset":
            # edge triggered: one fixed-offset target per press, nothing on
            # hold or release, so a press moves exactly delta_offset
            prev = self.prev_sign.get(target, 0.0)
            self.prev_sign[target] = sign(rate)
            if sign(rate) == 0.0 or sign(rate) == prev:
                return
        else:
            self.prev_sign[target] = sign(rate)
        if now <= state.t_prev:
            return
        out = strategy_step(state, StrategyInput(t=now, y=y, r_dot=rate))
        self.publish(cmd_topic(joint), {
            "joint": joint, "kind": out.kind, "value": out.value, "t": round(now, 9),
        })

    def _ik_nudge(self, target: str, rate: float, now: float) -> None:
        _, limb, axis = target.split(":")
        direction = {"+x": (1, 0, 0), "-x": (-1, 0, 0), "+y": (0, 1, 0),
                     "-y": (0, -1, 0), "+z": (0, 0, 1), "-z": (0, 0, -1)}[axis]
        self.prev_sign[target] = sign(rate)
        if rate == 0.0:
            return
        dt = self.runtime.params.tick
        delta = [d * rate * dt for d in direction]
        self.publish(ik_topic(limb), {"limb": limb, "kind": "nudge", "delta": delta,
                                      "drot": [0.0, 0.0, 0.0], "t": round(now, 9)})

    def _wheel_command(self, target: str, module: str, rate: float, now: float) -> None:
        side = target.split(":", 1)[1] if ":" in target else "both"
        left = rate if side in ("both", "left") else 0.0
        right = rate if side in ("both", "right") else 0.0
        if side == "turn":
            left, right = -rate, rate
        self.prev_sign[target] = sign(rate)
        self.publish(wheel_topic(module), {
            "module": module, "left": left, "right": right, "t": round(now, 9),
        })


class WheelDriverNode(Node):
    """Wheel bypass: forwards speed commands straight to the drive motors.

    Deliberately no watchdog: on link loss the wheel keeps its last speed.
    """

    def __init__(self, node_id: str, runtime: Runtime, wheel_module: str):
        super().__init__(node_id, runtime)
        self.wheel_module = wheel_module
        self.battery_module = wheel_module
        self.subscribe(wheel_topic(wheel_module))

    def tick(self, now: float) -> None:
        world = self.runtime.world
        for env in self.drain():
            data = env.data()
            wheel = world.modules[self.wheel_module].wheel
            if wheel is not None:
                wheel.command(float(data["left"]), float(data["right"]))
        self.maybe_publish_telemetry(now)

    def telemetry_extra(self) -> dict:
        module = self.runtime.world.modules.get(self.wheel_module)
        return {"neighbors": sorted(module.neighbors) if module else []}


class CalibratorNode(Node):
    """Homes one joint against its photo reflector.

    Protocol rule: exactly one incremental target per fresh sensor
    message. Loss of the link stops the stream of targets, so the
    (potentially dangerous) homing motion stalls on its own.
    """

    # the marching setpoint may lead the sensed angle by at most this much,
    # so a stalled plant (hard stop, jam) stalls the sweep too
    max_lead = 0.02

    def __init__(self, node_id: str, runtime: Runtime, joint: str,
                 homing_speed: float = -0.05, sweep_margin: float = 0.2):
        super().__init__(node_id, runtime)
        self.joint = joint
        self.homing_speed = homing_speed
        self.sweep_margin = sweep_margin
        self.phase = "seeking"
        self.offset: float | None = None
        self.edge_angle: float | None = None
        self.frontier: float | None = None
        self.prev_reflector: bool | None = None
        self.prev_t: float | None = None
        self.travel = 0.0
        self.subscribe(sensor_topic(joint))

    def tick(self, now: float) -> None:
        for env in self.drain():
            data = env.data()
            if self.phase in ("done", "halted"):
                continue
            self._on_sensor(data, now)
        self.maybe_publish_telemetry(now)

    def _on_sensor(self, data: dict, now: float) -> None:
        y = float(data["angle"])
        reflector = bool(data["reflector"])
        t = float(data["t"])
        if self.prev_reflector is None:
            self.prev_reflector = reflector
            self.prev_t = t
            self.frontier = y
            if reflector:
                # already in the zero window: current angle is the reference
                self._finish(y, now)
            return
        if self.phase == "seeking":
            if reflector and not self.prev_reflector:
                self.edge_angle = y
                self.phase = "backoff"
                self.publish(calib_topic(self.joint), {
                    "joint": self.joint, "phase": "backoff", "edge": y, "t": round(now, 9),
                })
            else:
                dt = max(t - self.prev_t, 0.0)
                step = self.homing_speed * dt
                self.travel += abs(step)
                if self.travel > self._limit_span() + self.sweep_margin:
                    self.phase = "halted"
                    self.events.append({"type": "reflector-not-found", "joint": self.joint, "t": now})
                    self.publish(calib_topic(self.joint), {
                        "joint": self.joint, "phase": "halted",
                        "error": "reflector-not-found", "t": round(now, 9),
                    })
                else:
                    # march an absolute setpoint at the homing speed, never
                    # leading the sensed angle by more than max_lead
                    proposed = self.frontier + step
                    self.frontier = min(max(proposed, y - self.max_lead), y + self.max_lead)
                    self.publish(cmd_topic(self.joint), {
                        "joint": self.joint, "kind": "position",
                        "value": self.frontier, "t": round(now, 9),
                    })
        elif self.phase == "backoff":
            # settle exactly on the recorded edge angle
            if abs(y - self.edge_angle) < 1e-4:
                self._finish(self.edge_angle, now)
            else:
                self.publish(cmd_topic(self.joint), {
                    "joint": self.joint, "kind": "position", "value": self.edge_angle, "t": round(now, 9),
                })
        self.prev_reflector = reflector
        self.prev_t = t

    def _limit_span(self) -> float:
        world = self.runtime.world
        lo, hi = world.joint(self.joint).limits
        return hi - lo

    def _finish(self, offset: float, now: float) -> None:
        self.offset = offset
        self.phase = "done"
        self.publish(calib_topic(self.joint), {
            "joint": self.joint, "phase": "done", "offset": offset, "t": round(now, 9),
        })


class MissionControlNode(Node):
    """Aggregates telemetry frames and joint states from every known node."""

    def __init__(self, node_id: str, runtime: Runtime):
        super().__init__(node_id, runtime)
        self.frames: dict[str, dict] = {}
        self.joints: dict[str, float] = {}
        for other in runtime.role_table:
            if other != node_id:
                self.subscribe(telemetry_topic(other))
        for chain in runtime.desc.chains.values():
            for j in chain.joints:
                self.subscribe(sensor_topic(j.name))

    def tick(self, now: float) -> None:
        for env in self.drain():
            data = env.data()
            if env.topic.startswith("telemetry/"):
                self.frames[data["node"]] = data
            else:
                self.joints[data["joint"]] = data["angle"]
        self.maybe_publish_telemetry(now)


_LEVEL_BUILDERS = {}


def launch(node_id: str, desc: RobotDescription, role_table: dict, runtime: Runtime) -> list[Node]:
    """Instantiate exactly the stack levels assigned to one computer.

    The node set is a pure function of (desc, role_table, node_id);
    launching the same id twice is an error.
    """
    if node_id in runtime.launched:
        raise DuplicateLaunchError(f"node {node_id!r} already launched")
    role = chain_for_node(desc, node_id, role_table)
    entry = role_table[node_id]
    nodes: list[Node] = []
    for lv in role.levels:
        if lv == 1:
            nodes.append(JointNode(node_id, runtime, role.chain))
        elif lv == 2:
            nodes.append(IkNode(node_id, runtime, role.chain))
        elif lv == 3:
            nodes.append(LimbNode(node_id, runtime, role.chain))
        elif lv == 4:
            nodes.append(MoverNode(node_id, runtime))
        elif lv == 5:
            nodes.append(OperatorNode(node_id, runtime,
                                      strategy=entry.get("strategy", runtime.params.default_strategy),
                                      speed_setting=entry.get("speed_setting", 0.2)))
        elif lv == "wheel-direct":
            nodes.append(WheelDriverNode(node_id, runtime, entry["wheel"]))
        elif lv == "calibrator":
            nodes.append(CalibratorNode(node_id, runtime, entry["joint"],
                                        homing_speed=entry.get("homing_speed", -0.05)))
        elif lv == "mission-control":
            nodes.append(MissionControlNode(node_id, runtime))
    runtime.launched[node_id] = nodes
    runtime.nodes.extend(nodes)
    return nodes
