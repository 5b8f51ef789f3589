"""Distributed teleoperation stack for simulated modular robots."""

from .bus import Envelope, LinkCondition, MessageBus, VirtualClock
from .ctrl import (
    CommandOut,
    JointMotion,
    StrategyInput,
    StrategyState,
    local_joint_step,
    make_state,
    step_clamped,
    step_integral,
    step_offset,
    step_speed,
    strategy_step,
)
from .kin import IKOptions, Pose, forward_kinematics, inverse_kinematics, jacobian
from .model import (
    JointSpec,
    KinematicChain,
    ModuleSpec,
    NodeRole,
    RobotDescription,
    chain_for_node,
    dragon_description,
    minimal_description,
    motor_count,
    parse_description,
    serialize_description,
    tricycle_description,
    vehicle_description,
)
from .ops import RunRecord, assembly_scenario, fig13_suite, fig14_task, run_scenario, telemetry_aggregate
from .plant import PlantWorld
from .stack import Runtime, SimParams, launch, mover_sync

__version__ = "0.1.0"
