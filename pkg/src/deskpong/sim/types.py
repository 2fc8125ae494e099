"""Value types for the simulation layer.

Table frame: x runs along the long edge (near side negative, far side
positive), y along the short edge, z up. The floor is z = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

NEAR = 0
FAR = 1

JOINTS = 4
JOINT_NAMES = ("shoulder_pitch", "shoulder_yaw", "elbow", "wrist")


class EventKind(IntEnum):
    PADDLE_HIT = 1
    TABLE_BOUNCE_NEAR = 2
    TABLE_BOUNCE_FAR = 3
    NET_HIT = 4
    BALL_OUT = 5
    DOUBLE_BOUNCE = 6
    NET_CROSSED_TOWARD_NEAR = 7
    NET_CROSSED_TOWARD_FAR = 8


@dataclass(frozen=True)
class SimEvent:
    """One detected contact/crossing, in tick order."""

    kind: EventKind
    tick: int
    position: tuple[float, float, float]
    side: int = -1  # NEAR/FAR for paddle hits and bounces, -1 otherwise


class InvalidStateError(ValueError):
    """Raised when a sim operation receives a non-finite or malformed state."""


@dataclass
class BallState:
    position: np.ndarray  # (3,) meters
    velocity: np.ndarray  # (3,) m/s

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3).copy()
        self.velocity = np.asarray(self.velocity, dtype=np.float64).reshape(3).copy()

    def validate(self) -> None:
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise InvalidStateError("ball state must be finite")

    def copy(self) -> "BallState":
        return BallState(self.position.copy(), self.velocity.copy())


@dataclass
class ArmAgentState:
    base_y: float
    joint_angles: np.ndarray      # (JOINTS,) radians
    joint_velocities: np.ndarray  # (JOINTS,) rad/s
    side: int = NEAR

    def __post_init__(self) -> None:
        self.joint_angles = np.asarray(self.joint_angles, dtype=np.float64).reshape(JOINTS).copy()
        self.joint_velocities = (
            np.asarray(self.joint_velocities, dtype=np.float64).reshape(JOINTS).copy()
        )

    def copy(self) -> "ArmAgentState":
        return ArmAgentState(
            self.base_y, self.joint_angles.copy(), self.joint_velocities.copy(), self.side
        )


@dataclass
class PaddlePose:
    position: np.ndarray  # (3,)
    normal: np.ndarray    # (3,), unit
    velocity: np.ndarray  # (3,) m/s linear

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3).copy()
        self.normal = np.asarray(self.normal, dtype=np.float64).reshape(3).copy()
        self.velocity = np.asarray(self.velocity, dtype=np.float64).reshape(3).copy()


@dataclass
class ContactFlags:
    """Per-agent contact history, reset at every ball launch.

    c_bp: the agent's paddle has touched the ball this launch.
    c_bt: the ball has touched the table after this agent's paddle contact.
    """

    c_bp: int = 0
    c_bt: int = 0


@dataclass
class WorldState:
    """Full snapshot of one world; advancing it is a pure function."""

    ball: BallState
    agents: tuple[ArmAgentState, ArmAgentState]
    flags: tuple[ContactFlags, ContactFlags]
    tick: int = 0
    rng_seed: int = 0
    ball_dead: bool = False

    def copy(self) -> "WorldState":
        return WorldState(
            ball=self.ball.copy(),
            agents=(self.agents[0].copy(), self.agents[1].copy()),
            flags=(
                ContactFlags(self.flags[0].c_bp, self.flags[0].c_bt),
                ContactFlags(self.flags[1].c_bp, self.flags[1].c_bt),
            ),
            tick=self.tick,
            rng_seed=self.rng_seed,
            ball_dead=self.ball_dead,
        )
