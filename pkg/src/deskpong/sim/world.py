"""World containers and the elementary simulation operations.

`VecWorld` steps a batch of independent worlds through the active kernel;
it is the production path for training rollouts and matches. The
module-level functions (`step_ball`, `resolve_contacts`, `pd_step`,
`predict_landing`, `paddle_velocity_command`, `forward_kinematics`) are the
elementary single-world operations with their documented contracts.
"""

from __future__ import annotations

import math

import numpy as np

from ..config import SimConfig
from . import params as prm
from .engine import get_kernel, kernel
from .types import (
    JOINTS,
    ArmAgentState,
    BallState,
    ContactFlags,
    EventKind,
    InvalidStateError,
    PaddlePose,
    SimEvent,
    WorldState,
)

SIDE_ARM = prm.SIDE_ARM
SIDE_FREE = prm.SIDE_FREE
SIDE_ABSENT = prm.SIDE_ABSENT

_CONTACT_EPS = 1e-4


class VecWorld:
    """A batch of deterministic worlds stepped in lockstep.

    Worlds never share state; each advances purely as a function of its
    own state and the latched PD targets / paddle velocity commands.
    """

    def __init__(
        self,
        cfg: SimConfig,
        n_worlds: int,
        side_kinds: tuple[int, int] = (SIDE_ARM, SIDE_ABSENT),
        pure_kernel: bool = False,
    ):
        self.cfg = cfg
        self.par = prm.pack(cfg)
        self.n = n_worlds
        self._kernel = get_kernel(pure=pure_kernel)
        n = n_worlds
        self.active = np.ones(n, dtype=np.uint8)
        self.side_kind = np.tile(np.asarray(side_kinds, dtype=np.uint8), (n, 1))
        self.ball_p = np.zeros((n, 3))
        self.ball_v = np.zeros((n, 3))
        self.ball_dead = np.ones(n, dtype=np.uint8)  # dead until first launch
        self.base_y = np.zeros((n, 2))
        self.base_y_target = np.zeros((n, 2))
        self.q = np.zeros((n, 2, JOINTS))
        self.qd = np.zeros((n, 2, JOINTS))
        self.targets = np.zeros((n, 2, JOINTS))
        self.fp_pos = np.zeros((n, 2, 3))
        self.fp_nrm = np.zeros((n, 2, 3))
        self.fp_nrm[:, :, 0] = 1.0
        self.fp_vel = np.zeros((n, 2, 6))
        self.cbp = np.zeros((n, 2), dtype=np.uint8)
        self.cbt = np.zeros((n, 2), dtype=np.uint8)
        self.last_bounce = np.zeros(n, dtype=np.int8)
        self.pad_cool = np.zeros(n, dtype=np.uint8)
        self.tick = np.zeros(n, dtype=np.int64)
        self.vel_cap_hits = np.zeros(n, dtype=np.int64)

    # -- setup ---------------------------------------------------------

    def reset_arm(self, w, side: int, base_y: float = 0.0, q=None, qd=None) -> None:
        idx = np.atleast_1d(w)
        self.base_y[idx, side] = base_y
        self.base_y_target[idx, side] = base_y
        self.q[idx, side] = 0.0 if q is None else np.asarray(q)
        self.qd[idx, side] = 0.0 if qd is None else np.asarray(qd)
        self.targets[idx, side] = self.q[idx, side]

    def launch(self, w, pos, vel) -> None:
        """Put a fresh ball into play; contact history resets here."""
        idx = np.atleast_1d(w)
        self.ball_p[idx] = np.asarray(pos, dtype=np.float64)
        self.ball_v[idx] = np.asarray(vel, dtype=np.float64)
        self.ball_dead[idx] = 0
        self.cbp[idx] = 0
        self.cbt[idx] = 0
        self.last_bounce[idx] = 0
        self.pad_cool[idx] = 0

    def set_targets(self, w, side: int, target_angles) -> None:
        lim = self.cfg.joint_limit
        self.targets[np.atleast_1d(w), side] = np.clip(np.asarray(target_angles), -lim, lim)

    def set_slide_target(self, w, side: int, base_y: float, limit: float = 0.65) -> None:
        self.base_y_target[np.atleast_1d(w), side] = float(np.clip(base_y, -limit, limit))

    def set_free_paddle(self, w, side: int, pos, normal, vel6=None) -> None:
        idx = np.atleast_1d(w)
        nrm = np.asarray(normal, dtype=np.float64)
        nrm = nrm / np.linalg.norm(nrm, axis=-1, keepdims=True)
        self.fp_pos[idx, side] = np.asarray(pos, dtype=np.float64)
        self.fp_nrm[idx, side] = nrm
        if vel6 is not None:
            self.fp_vel[idx, side] = np.asarray(vel6, dtype=np.float64)

    def set_free_paddle_velocity(self, w, side: int, vel6) -> None:
        self.fp_vel[np.atleast_1d(w), side] = np.asarray(vel6, dtype=np.float64)

    # -- stepping ------------------------------------------------------

    def step(self, n_substeps: int = 1) -> list[list[SimEvent]]:
        """Advance active worlds; returns per-world event lists."""
        cap = self.n * n_substeps * 3 + 8
        ev_world = np.zeros(cap, dtype=np.int64)
        ev_kind = np.zeros(cap, dtype=np.int32)
        ev_tick = np.zeros(cap, dtype=np.int64)
        ev_side = np.zeros(cap, dtype=np.int8)
        ev_pos = np.zeros((cap, 3))
        n_ev = self._kernel.step_worlds(
            self.par,
            self.active,
            self.side_kind,
            self.ball_p,
            self.ball_v,
            self.ball_dead,
            self.base_y,
            self.base_y_target,
            self.q,
            self.qd,
            self.targets,
            self.fp_pos,
            self.fp_nrm,
            self.fp_vel,
            self.cbp,
            self.cbt,
            self.last_bounce,
            self.pad_cool,
            self.tick,
            self.vel_cap_hits,
            n_substeps,
            ev_world,
            ev_kind,
            ev_tick,
            ev_side,
            ev_pos,
        )
        if n_ev < 0:
            raise RuntimeError("event buffer overflow in step kernel")
        out: list[list[SimEvent]] = [[] for _ in range(self.n)]
        for i in range(n_ev):
            out[ev_world[i]].append(
                SimEvent(
                    kind=EventKind(int(ev_kind[i])),
                    tick=int(ev_tick[i]),
                    position=(float(ev_pos[i, 0]), float(ev_pos[i, 1]), float(ev_pos[i, 2])),
                    side=int(ev_side[i]),
                )
            )
        return out

    def paddle_poses(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(pos, normal, velocity) arrays of shape (n, 2, 3)."""
        out_pos = np.zeros((self.n, 2, 3))
        out_nrm = np.zeros((self.n, 2, 3))
        out_vel = np.zeros((self.n, 2, 3))
        self._kernel.paddle_poses(
            self.par,
            self.side_kind,
            self.base_y,
            self.q,
            self.qd,
            self.fp_pos,
            self.fp_nrm,
            self.fp_vel,
            out_pos,
            out_nrm,
            out_vel,
        )
        return out_pos, out_nrm, out_vel

    # -- snapshots -----------------------------------------------------

    _STATE_ARRAYS = (
        "active",
        "side_kind",
        "ball_p",
        "ball_v",
        "ball_dead",
        "base_y",
        "base_y_target",
        "q",
        "qd",
        "targets",
        "fp_pos",
        "fp_nrm",
        "fp_vel",
        "cbp",
        "cbt",
        "last_bounce",
        "pad_cool",
        "tick",
        "vel_cap_hits",
    )

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name).copy() for name in self._STATE_ARRAYS}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name in self._STATE_ARRAYS:
            getattr(self, name)[...] = snap[name]


# ---------------------------------------------------------------------
# elementary single-world operations
# ---------------------------------------------------------------------


def step_ball(ball: BallState, dt: float, damping_k: float) -> BallState:
    """One ballistic integration step: a = g - k*v, average-velocity update.

    Exact on drag-free parabolas, so simulated landings agree with
    `predict_landing` to within the contact interpolation error.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if damping_k < 0.0:
        raise ValueError(f"damping_k must be >= 0, got {damping_k}")
    ball.validate()
    g = np.array([0.0, 0.0, -9.8])
    a = g - damping_k * ball.velocity
    v1 = ball.velocity + dt * a
    p1 = ball.position + dt * ball.velocity + 0.5 * dt * dt * a
    return BallState(p1, v1)


def predict_landing(
    ball: BallState, table_z: float, gravity: float = 9.8
) -> tuple[np.ndarray, float] | None:
    """Drag-free landing point and time on the plane z = table_z.

    Deliberately ignores air damping: the anticipated landing is defined on
    the quadratic (point-mass) trajectory. Returns None when the parabola
    never crosses the plane going downward at a positive time.
    """
    ball.validate()
    h = float(ball.position[2]) - table_z
    vz = float(ball.velocity[2])
    disc = vz * vz + 2.0 * gravity * h
    if disc < 0.0:
        return None
    t = (vz + math.sqrt(disc)) / gravity
    if t <= 0.0:
        return None
    xy = ball.position[:2] + ball.velocity[:2] * t
    return xy.copy(), t


def pd_step(
    agent: ArmAgentState,
    target_angles: np.ndarray,
    gains: tuple[float, float],
    dt: float,
    inertia: float = 1.0,
    joint_limit: float = math.pi,
    vel_cap: float = 1e9,
) -> tuple[ArmAgentState, int]:
    """Semi-implicit PD joint update. Returns (new state, velocity-cap hits)."""
    kp, kd = gains
    tgt = np.clip(np.asarray(target_angles, dtype=np.float64), -joint_limit, joint_limit)
    torque = kp * (tgt - agent.joint_angles) - kd * agent.joint_velocities
    w = agent.joint_velocities + dt * torque / inertia
    cap_hits = int(np.sum(np.abs(w) > vel_cap))
    w = np.clip(w, -vel_cap, vel_cap)
    qn = agent.joint_angles + dt * w
    hit_lim = np.abs(qn) > joint_limit
    qn = np.clip(qn, -joint_limit, joint_limit)
    w = np.where(hit_lim, 0.0, w)
    return ArmAgentState(agent.base_y, qn, w, agent.side), cap_hits


def paddle_velocity_command(
    q_user: PaddlePose,
    q_sim: PaddlePose,
    dt: float,
    speed_cap: float = 20.0,
    angular_cap: float = 40.0,
) -> np.ndarray:
    """Velocity command (linear + angular) driving the simulated paddle to
    the user pose over one control interval; magnitudes are clamped."""
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    lin = (q_user.position - q_sim.position) / dt
    speed = float(np.linalg.norm(lin))
    if speed > speed_cap:
        lin = lin * (speed_cap / speed)
    n_sim = q_sim.normal / np.linalg.norm(q_sim.normal)
    n_user = q_user.normal / np.linalg.norm(q_user.normal)
    axis = np.cross(n_sim, n_user)
    s = float(np.linalg.norm(axis))
    c = float(np.clip(np.dot(n_sim, n_user), -1.0, 1.0))
    if s < 1e-12:
        ang = np.zeros(3)
    else:
        angle = math.atan2(s, c)
        ang = axis / s * (angle / dt)
        w = float(np.linalg.norm(ang))
        if w > angular_cap:
            ang = ang * (angular_cap / w)
    return np.concatenate([lin, ang])


def forward_kinematics(agent: ArmAgentState, cfg: SimConfig | None = None) -> PaddlePose:
    """Paddle pose of an arm agent (position, outward normal, velocity)."""
    cfg = cfg or SimConfig()
    if not np.all(np.isfinite(agent.joint_angles)):
        raise InvalidStateError("joint angles must be finite")
    par = prm.pack(cfg)
    buf = np.concatenate([agent.joint_angles, agent.joint_velocities])
    pos = np.zeros(3)
    nrm = np.zeros(3)
    vel = np.zeros(3)
    kernel.fk_one(par, agent.side, agent.base_y, buf, pos, nrm, vel)
    return PaddlePose(pos, nrm, vel)


def arm_jacobian(agent: ArmAgentState, cfg: SimConfig | None = None) -> np.ndarray:
    """3x4 Jacobian of the paddle center w.r.t. the joint angles."""
    cfg = cfg or SimConfig()
    par = prm.pack(cfg)
    jac = np.zeros((3, JOINTS))
    kernel.arm_jacobian(par, agent.side, agent.joint_angles, jac)
    return jac


def resolve_contacts(
    world: WorldState, dt: float, cfg: SimConfig | None = None
) -> tuple[WorldState, list[SimEvent]]:
    """Resolve ball contacts along the segment the ball sweeps in `dt`.

    Pure collision handling: the ball moves along its current velocity
    (no gravity here; integration is `step_ball`'s job), reflecting off
    paddles, net and table in that order. Contact flags and events follow
    the launch-reset semantics.
    """
    cfg = cfg or SimConfig()
    world.ball.validate()
    new = world.copy()
    events: list[SimEvent] = []
    p0 = world.ball.position
    v = new.ball.velocity
    p1 = p0 + v * dt
    tick = world.tick + 1
    new.tick = tick

    c_rad = cfg.paddle_radius + cfg.ball_radius
    table_h = cfg.table_height
    net_top = table_h + cfg.net_height

    contacted = False
    for side in (0, 1):
        if contacted:
            break
        pose = forward_kinematics(world.agents[side], cfg)
        s0 = float(np.dot(p0 - pose.position, pose.normal))
        s1 = float(np.dot(p1 - pose.position, pose.normal))
        if s0 == 0.0 and abs(s1) > 0:
            raise InvalidStateError(
                "ball starts on the paddle plane; rollback the previous substep"
            )
        if s0 * s1 < 0.0:
            tau = s0 / (s0 - s1)
            c = p0 + tau * (p1 - p0)
            if float(np.dot(c - pose.position, c - pose.position)) <= c_rad * c_rad:
                rel = v - pose.velocity
                vn = float(np.dot(rel, pose.normal))
                sgn = 1.0 if s0 > 0.0 else -1.0
                if vn * sgn < 0.0:
                    rel = rel - (1.0 + cfg.restitution_paddle) * vn * pose.normal
                    if cfg.spin_friction > 0.0:
                        t_comp = rel - float(np.dot(rel, pose.normal)) * pose.normal
                        rel = rel - cfg.spin_friction * t_comp
                    v = rel + pose.velocity
                    p1 = c + sgn * _CONTACT_EPS * pose.normal
                    new.flags[side].c_bp = 1
                    contacted = True
                    events.append(
                        SimEvent(EventKind.PADDLE_HIT, tick, tuple(map(float, c)), side)
                    )

    if not contacted and p0[0] * p1[0] < 0.0:
        tau = p0[0] / (p0[0] - p1[0])
        c = p0 + tau * (p1 - p0)
        toward_near = p1[0] < p0[0]
        if table_h <= c[2] <= net_top and abs(c[1]) <= cfg.half_width + cfg.net_overhang:
            v = v.copy()
            v[0] = -cfg.restitution_net * v[0]
            p1 = np.array([math.copysign(_CONTACT_EPS, p0[0]), c[1], c[2]])
            events.append(SimEvent(EventKind.NET_HIT, tick, (0.0, float(c[1]), float(c[2]))))
        elif c[2] > table_h:
            kind = EventKind.NET_CROSSED_TOWARD_NEAR if toward_near else EventKind.NET_CROSSED_TOWARD_FAR
            events.append(SimEvent(kind, tick, (0.0, float(c[1]), float(c[2]))))

    if not contacted and not any(e.kind == EventKind.NET_HIT for e in events):
        if p0[2] > table_h >= p1[2]:
            tau = (p0[2] - table_h) / (p0[2] - p1[2])
            c = p0 + tau * (p1 - p0)
            if abs(c[0]) <= cfg.half_length and abs(c[1]) <= cfg.half_width:
                v = v.copy()
                v[2] = -cfg.restitution_table * v[2]
                p1 = np.array([c[0], c[1], table_h + _CONTACT_EPS])
                side = 0 if c[0] < 0.0 else 1
                kind = EventKind.TABLE_BOUNCE_NEAR if side == 0 else EventKind.TABLE_BOUNCE_FAR
                events.append(SimEvent(kind, tick, (float(c[0]), float(c[1]), table_h), side))
                for a in (0, 1):
                    if new.flags[a].c_bp == 1 and new.flags[a].c_bt == 0:
                        new.flags[a].c_bt = 1

    if p1[2] < cfg.floor_z or abs(p1[0]) > cfg.out_x or abs(p1[1]) > cfg.out_y:
        new.ball_dead = True
        v = np.zeros(3)
        events.append(SimEvent(EventKind.BALL_OUT, tick, tuple(map(float, p1))))

    new.ball.position = np.asarray(p1, dtype=np.float64)
    new.ball.velocity = np.asarray(v, dtype=np.float64)
    return new, events


def make_world_state(cfg: SimConfig | None = None, seed: int = 0) -> WorldState:
    """A fresh two-arm world at rest with no ball in play."""
    cfg = cfg or SimConfig()
    return WorldState(
        ball=BallState(np.array([0.0, 0.0, -1.0]), np.zeros(3)),
        agents=(
            ArmAgentState(0.0, np.zeros(JOINTS), np.zeros(JOINTS), side=0),
            ArmAgentState(0.0, np.zeros(JOINTS), np.zeros(JOINTS), side=1),
        ),
        flags=(ContactFlags(), ContactFlags()),
        tick=0,
        rng_seed=seed,
        ball_dead=True,
    )
