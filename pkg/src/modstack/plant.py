"""Simulated robot hardware: the ground truth every safety claim is tested against.

Joints are kinematic (velocity-saturated, hard-stopped at limits) with no
torque or inertia model; the control story is semi-static and kinematic
plants keep every run deterministic. Each joint may carry a photo
reflector marking its zero window and an uncalibrated sensor offset.
Grippers close at a fixed speed onto grapple fixtures; a successful grasp
is confirmed by an infrared identity exchange that tells the grasped
module who is holding it. Wheels are ideal differential drive.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from . import kin
from .ctrl import CommandOut, JointMotion, local_joint_step
from .model import RobotDescription, V_MAX_DEFAULT

__all__ = [
    "Reflector",
    "JointPlant",
    "GripperPlant",
    "WheelPlant",
    "Battery",
    "ModulePlant",
    "PlantWorld",
    "GRIPPER_MAX_OPENING",
    "GRIPPER_SPEED",
    "FIXTURE_WIDTH",
    "GRASP_POS_TOL",
    "GRASP_ROT_TOL",
    "WHEEL_RADIUS",
    "WHEEL_TRACK",
]

GRIPPER_MAX_OPENING = 0.080   # m
GRIPPER_SPEED = 0.009         # m/s
FIXTURE_WIDTH = 0.060         # m, grapple fixture across the jaws
GRASP_POS_TOL = 0.02          # m
GRASP_ROT_TOL = 0.1           # rad
WHEEL_RADIUS = 0.24           # m (480 mm diameter)
WHEEL_TRACK = 0.638           # m
REFLECTOR_WIDTH = 0.02        # rad


@dataclass
class Reflector:
    """Binary zero-position sensor: true while the true angle is in-window."""

    window: tuple = (0.0, REFLECTOR_WIDTH)

    def state(self, angle: float) -> bool:
        lo, hi = self.window
        return lo <= angle < hi


@dataclass
class JointPlant:
    name: str
    angle: float = 0.0            # ground truth, radians
    velocity: float = 0.0
    v_max: float = V_MAX_DEFAULT
    limits: tuple = (-2.967, 2.967)
    zero_offset: float = 0.0      # sensor = angle - zero_offset; unknown to controllers
    reflector: Reflector | None = None
    held: CommandOut | None = None

    def sensor(self) -> float:
        return self.angle - self.zero_offset

    def apply(self, command: CommandOut | None) -> None:
        self.held = command

    def step(self, dt: float) -> None:
        cmd = self.held
        if cmd is not None and cmd.kind == "position":
            # controllers command in the sensor frame
            cmd = CommandOut("position", cmd.value + self.zero_offset)
        motion = local_joint_step(
            JointMotion(self.angle, self.velocity, self.v_max, self.limits), cmd, dt
        )
        self.angle = motion.angle
        self.velocity = motion.velocity


@dataclass
class GripperPlant:
    name: str
    opening: float = GRIPPER_MAX_OPENING
    target: float = GRIPPER_MAX_OPENING
    grasped_fixture: str | None = None
    tip_pose: kin.Pose | None = None   # world pose, refreshed by the runner

    def command(self, target_opening: float) -> None:
        self.target = min(max(target_opening, 0.0), GRIPPER_MAX_OPENING)

    def step(self, dt: float) -> None:
        error = self.target - self.opening
        step = min(max(error, -GRIPPER_SPEED * dt), GRIPPER_SPEED * dt)
        self.opening += step

    @property
    def closing(self) -> bool:
        return self.target < self.opening - 1e-12


@dataclass
class WheelPlant:
    name: str
    left_speed: float = 0.0    # rad/s, held command
    right_speed: float = 0.0
    pose: tuple = (0.0, 0.0, 0.0)   # x, y, heading
    wheel_radius: float = WHEEL_RADIUS
    track: float = WHEEL_TRACK

    def command(self, left: float, right: float) -> None:
        self.left_speed = left
        self.right_speed = right

    def step(self, dt: float) -> None:
        v = self.wheel_radius * (self.left_speed + self.right_speed) / 2.0
        w = self.wheel_radius * (self.right_speed - self.left_speed) / self.track
        x, y, h = self.pose
        self.pose = (x + v * math.cos(h) * dt, y + v * math.sin(h) * dt, h + w * dt)


@dataclass
class Battery:
    level: float = 100.0        # percent
    drain_rate: float = 0.0     # percent/s under load

    def step(self, dt: float, load: bool) -> None:
        if self.level <= 0.0:
            self.level = 0.0
            return
        rate = self.drain_rate if load else 0.1 * self.drain_rate
        self.level = max(0.0, self.level - rate * dt)

    @property
    def online(self) -> bool:
        return self.level > 0.0


@dataclass
class ModulePlant:
    module_id: str
    kind: str
    joints: dict[str, JointPlant] = field(default_factory=dict)
    grippers: dict[str, GripperPlant] = field(default_factory=dict)
    wheel: WheelPlant | None = None
    battery: Battery = field(default_factory=Battery)
    neighbors: list[str] = field(default_factory=list)
    fixture_poses: dict[str, kin.Pose] = field(default_factory=dict)  # world frame


class PlantWorld:
    """All module plants plus the live attachment state.

    Owned exclusively by the simulation loop; everyone else sees it only
    through sensor messages.
    """

    def __init__(self, desc: RobotDescription, seed: int = 0, sensor_noise: float = 0.0):
        self.desc = desc
        self.sensor_noise = sensor_noise
        self._rng = random.Random(seed)
        self.time = 0.0
        self.modules: dict[str, ModulePlant] = {}
        self.attachments: dict[str, str] = {}   # gripper port -> fixture port
        self.ir_events: list[dict] = []
        for m in desc.modules:
            plant = ModulePlant(module_id=m.id, kind=m.kind)
            for j in m.joints:
                plant.joints[j.name] = JointPlant(
                    name=j.name, v_max=j.v_max, limits=j.limits, reflector=Reflector()
                )
            for port in m.gripper_ports:
                plant.grippers[port] = GripperPlant(name=port)
            if m.kind == "Wheel":
                plant.wheel = WheelPlant(name=m.id)
            self.modules[m.id] = plant
        for gripper, fixture in desc.attachments:
            self._attach(gripper, fixture, record_ir=False)

    # -- attachment bookkeeping ---------------------------------------------

    def _attach(self, gripper_port: str, fixture_port: str, record_ir: bool = True) -> None:
        self.attachments[gripper_port] = fixture_port
        gripper_module = gripper_port.split(".", 1)[0]
        fixture_module = fixture_port.split(".", 1)[0]
        gm = self.modules.get(gripper_module)
        if gm is not None and gripper_port in gm.grippers:
            g = gm.grippers[gripper_port]
            g.grasped_fixture = fixture_port
            g.opening = FIXTURE_WIDTH
            g.target = FIXTURE_WIDTH
        fm = self.modules.get(fixture_module)
        if fm is not None and gripper_module not in fm.neighbors:
            fm.neighbors.append(gripper_module)
        if gm is not None and fixture_module not in gm.neighbors:
            gm.neighbors.append(fixture_module)
        if record_ir:
            self.ir_events.append({
                "t": self.time,
                "module": fixture_module,
                "neighbor": gripper_module,
                "fixture": fixture_port,
            })

    def release(self, gripper_port: str) -> None:
        fixture_port = self.attachments.pop(gripper_port, None)
        gripper_module = gripper_port.split(".", 1)[0]
        gm = self.modules.get(gripper_module)
        if gm is not None and gripper_port in gm.grippers:
            g = gm.grippers[gripper_port]
            g.grasped_fixture = None
            g.command(GRIPPER_MAX_OPENING)
        if fixture_port is None:
            return
        fixture_module = fixture_port.split(".", 1)[0]
        fm = self.modules.get(fixture_module)
        if fm is not None and gripper_module in fm.neighbors:
            fm.neighbors.remove(gripper_module)
        if gm is not None and fixture_module in gm.neighbors:
            gm.neighbors.remove(fixture_module)

    def attached_fixture(self, gripper_port: str) -> str | None:
        return self.attachments.get(gripper_port)

    def attachment_pairs(self) -> list[tuple[str, str]]:
        return sorted(self.attachments.items())

    # -- truth access --------------------------------------------------------

    def joint(self, joint_name: str) -> JointPlant:
        module_id = joint_name.split(".", 1)[0]
        return self.modules[module_id].joints[joint_name]

    def all_joints(self) -> list[JointPlant]:
        out = []
        for mid in sorted(self.modules):
            out.extend(self.modules[mid].joints[name] for name in sorted(self.modules[mid].joints))
        return out

    def grasp_detect(self, gripper_port: str) -> str | None:
        """Check one closing gripper against every free fixture.

        Attaches (and emits the IR identity event) when the tip is within
        GRASP_POS_TOL / GRASP_ROT_TOL of a fixture and the jaws have
        reached the fixture width. Closing on empty space just closes.
        """
        module_id = gripper_port.split(".", 1)[0]
        gripper = self.modules[module_id].grippers[gripper_port]
        if gripper.grasped_fixture is not None or gripper.tip_pose is None:
            return None
        # jaws must be right at the fixture width, closing down onto it;
        # a gripper already closed past it grabbed nothing but air
        if not (FIXTURE_WIDTH - 1e-3 <= gripper.opening <= FIXTURE_WIDTH + 1e-9):
            return None
        taken = set(self.attachments.values())
        for mid in sorted(self.modules):
            for fixture_port in sorted(self.modules[mid].fixture_poses):
                if fixture_port in taken or mid == module_id:
                    continue
                pose = self.modules[mid].fixture_poses[fixture_port]
                dp = np.linalg.norm(gripper.tip_pose.position - pose.position)
                rot = (gripper.tip_pose.rotation().inv() * pose.rotation()).magnitude()
                if dp <= GRASP_POS_TOL and rot <= GRASP_ROT_TOL:
                    gripper.opening = FIXTURE_WIDTH
                    gripper.target = FIXTURE_WIDTH
                    self._attach(gripper_port, fixture_port)
                    return fixture_port
        return None

    def step(self, dt: float) -> dict:
        """Advance every plant by dt and return the sensor snapshot.

        Snapshot: {joint name: {"angle": sensed, "velocity", "reflector"}}
        plus gripper openings; modules with a dead battery report nothing.
        """
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.time += dt
        sensors: dict[str, dict] = {}
        for mid in sorted(self.modules):
            module = self.modules[mid]
            load = False
            for name in sorted(module.joints):
                j = module.joints[name]
                j.step(dt)
                load = load or abs(j.velocity) > 1e-12
            for port in sorted(module.grippers):
                g = module.grippers[port]
                g.step(dt)
                if g.grasped_fixture is not None and g.opening > FIXTURE_WIDTH + 2e-3:
                    self.release(port)  # jaws opened off the fixture
                elif g.closing:
                    self.grasp_detect(port)
            if module.wheel is not None:
                module.wheel.step(dt)
                load = load or abs(module.wheel.left_speed) > 1e-12 or abs(module.wheel.right_speed) > 1e-12
            module.battery.step(dt, load)
            if not module.battery.online:
                continue
            for name in sorted(module.joints):
                j = module.joints[name]
                noise = self._rng.uniform(-self.sensor_noise, self.sensor_noise) if self.sensor_noise else 0.0
                sensors[name] = {
                    "angle": j.sensor() + noise,
                    "velocity": j.velocity,
                    "reflector": j.reflector.state(j.angle) if j.reflector else False,
                }
        return sensors
