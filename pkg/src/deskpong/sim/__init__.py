from .engine import KERNEL_NAME, get_kernel
from .types import (
    FAR,
    JOINTS,
    NEAR,
    ArmAgentState,
    BallState,
    ContactFlags,
    EventKind,
    InvalidStateError,
    PaddlePose,
    SimEvent,
    WorldState,
)
from .world import (
    SIDE_ABSENT,
    SIDE_ARM,
    SIDE_FREE,
    VecWorld,
    arm_jacobian,
    forward_kinematics,
    make_world_state,
    paddle_velocity_command,
    pd_step,
    predict_landing,
    resolve_contacts,
    step_ball,
)

__all__ = [
    "KERNEL_NAME",
    "get_kernel",
    "NEAR",
    "FAR",
    "JOINTS",
    "ArmAgentState",
    "BallState",
    "ContactFlags",
    "EventKind",
    "InvalidStateError",
    "PaddlePose",
    "SimEvent",
    "WorldState",
    "SIDE_ARM",
    "SIDE_FREE",
    "SIDE_ABSENT",
    "VecWorld",
    "arm_jacobian",
    "forward_kinematics",
    "make_world_state",
    "paddle_velocity_command",
    "pd_step",
    "predict_landing",
    "resolve_contacts",
    "step_ball",
]
