"""Remote joint-controller strategies and the onboard local controller.

The remote controller runs open-loop on the operator's machine and sends
commands to a closed-loop local controller next to the motor. Four
strategies are provided:

  speed            velocity passthrough: u_dot = r_dot
  integral         position by integrating the velocity target:
                   u = u_prev + r_dot * dt
  offset           position at the latest sensor reading plus a fixed
                   offset in the commanded direction:
                   u = y + sign(r_dot) * delta_offset
  clamped          integral, but the command may never leave a band of
                   +-delta_e around the latest sensor reading:
                   u = max(y - delta_e, min(y + delta_e, u_prev + r_dot * dt))

The clamped strategy is the safety-bearing one: any reconnection jump is
bounded by delta_e, and it needs no liveness probing of the peer. These
step functions deliberately take no connectivity or ping information;
loss of messages is the transport's business.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .model import V_MAX_DEFAULT

__all__ = [
    "StrategyInput",
    "StrategyState",
    "CommandOut",
    "JointMotion",
    "NonMonotonicTimeError",
    "STRATEGIES",
    "make_state",
    "step_speed",
    "step_integral",
    "step_offset",
    "step_clamped",
    "strategy_step",
    "local_joint_step",
    "sign",
]

DELTA_E_DEFAULT = 0.05
DELTA_OFFSET_DEFAULT = 0.3

STRATEGIES = ("speed", "integral", "offset", "clamped")


class NonMonotonicTimeError(ValueError):
    """Strategy stepped with a timestamp not after the previous one."""


def sign(x: float) -> float:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


@dataclass(frozen=True)
class StrategyInput:
    t: float        # time at this step, seconds
    y: float        # latest joint sensor reading, radians
    r_dot: float    # operator velocity target, rad/s


@dataclass
class StrategyState:
    kind: str
    u_prev: float
    t_prev: float
    delta_offset: float = DELTA_OFFSET_DEFAULT
    delta_e: float = DELTA_E_DEFAULT

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.kind!r}")
        if self.delta_e <= 0 or self.delta_offset <= 0:
            raise ValueError("delta_e and delta_offset must be positive")


@dataclass(frozen=True)
class CommandOut:
    kind: str   # "position" | "velocity"
    value: float


def make_state(kind: str, u0: float = 0.0, t0: float = 0.0,
               delta_offset: float = DELTA_OFFSET_DEFAULT,
               delta_e: float = DELTA_E_DEFAULT) -> StrategyState:
    return StrategyState(kind=kind, u_prev=u0, t_prev=t0,
                         delta_offset=delta_offset, delta_e=delta_e)


def _advance_clock(state: StrategyState, inp: StrategyInput) -> float:
    dt = inp.t - state.t_prev
    if dt <= 0:
        raise NonMonotonicTimeError(f"t={inp.t} not after t_prev={state.t_prev}")
    return dt


def step_speed(state: StrategyState, inp: StrategyInput) -> CommandOut:
    """Velocity passthrough. Whether it reaches the robot is the bus's problem,
    which is exactly why this strategy cannot stop a joint on link loss."""
    state.t_prev = inp.t
    return CommandOut("velocity", inp.r_dot)


def step_integral(state: StrategyState, inp: StrategyInput) -> CommandOut:
    dt = _advance_clock(state, inp)
    u = state.u_prev + inp.r_dot * dt
    state.u_prev = u
    state.t_prev = inp.t
    return CommandOut("position", u)


def step_offset(state: StrategyState, inp: StrategyInput) -> CommandOut:
    """Fixed-offset position target. sign(0) = 0, so a zero velocity target
    holds at the sensor reading."""
    state.t_prev = inp.t
    u = inp.y + sign(inp.r_dot) * state.delta_offset
    state.u_prev = u
    return CommandOut("position", u)


def step_clamped(state: StrategyState, inp: StrategyInput) -> CommandOut:
    """Clamped integral. The stored state is the clamped value, so there is
    no wind-up to catch up on after a connection loss."""
    dt = _advance_clock(state, inp)
    raw = state.u_prev + inp.r_dot * dt
    u = max(inp.y - state.delta_e, min(inp.y + state.delta_e, raw))
    state.u_prev = u
    state.t_prev = inp.t
    return CommandOut("position", u)


_STEPPERS = {
    "speed": step_speed,
    "integral": step_integral,
    "offset": step_offset,
    "clamped": step_clamped,
}


def strategy_step(state: StrategyState, inp: StrategyInput) -> CommandOut:
    return _STEPPERS[state.kind](state, inp)


# ---------------------------------------------------------------------------
# Plant-side local controller.

@dataclass(frozen=True)
class JointMotion:
    """Kinematic joint state as seen by the local controller."""

    angle: float
    velocity: float = 0.0
    v_max: float = V_MAX_DEFAULT
    limits: tuple = (-math.inf, math.inf)


def local_joint_step(motion: JointMotion, command: CommandOut | None, dt: float) -> JointMotion:
    """One closed-loop step of the onboard controller.

    Position commands are tracked at up to v_max and clamped to joint
    limits; velocity commands are saturated and integrated. With no
    command the joint stays put.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    lo, hi = motion.limits
    if command is None:
        return replace(motion, velocity=0.0)
    if command.kind == "position":
        target = min(max(command.value, lo), hi)
        error = target - motion.angle
        step = min(max(error, -motion.v_max * dt), motion.v_max * dt)
        new_angle = motion.angle + step
    elif command.kind == "velocity":
        v = min(max(command.value, -motion.v_max), motion.v_max)
        new_angle = min(max(motion.angle + v * dt, lo), hi)
    else:
        raise ValueError(f"unknown command kind {command.kind!r}")
    return replace(motion, angle=new_angle, velocity=(new_angle - motion.angle) / dt)
