"""Task-level control: shaped rewards, latent-steering ball-control
policies, the joint-wise mixer, and the runtime controller that drives an
agent in a world.

The runtime data flow per agent: a latched strategy command (skill delta,
landing target y) selects a skill; at the control rate the ball-control
policy emits the skill latent and the mixer emits the universal latent
plus per-joint blend weights; at the imitation rate both imitation
policies produce joint targets which are blended joint-wise into the PD
targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import BallControlConfig, MixerConfig, NetConfig, PpoConfig, SimConfig
from .features import (
    BALL_FEATURE_DIM,
    SKILL_STATE_DIM,
    TARGET_FEATURE_DIM,
    ball_features,
    local_paddle_batch,
    skill_state_features,
    target_features,
)
from .imitation import ImitationBundle
from .nn import Adam, GaussianPolicy, Mlp, normalize_rows, sample_sphere
from .ppo import RolloutBuffer, ppo_update
from .refs import READY_POSE, SkillId, steer_latent_yaw
from .sim import SIDE_ABSENT, SIDE_ARM, EventKind, VecWorld

CONTROL_OBS_DIM = SKILL_STATE_DIM + BALL_FEATURE_DIM + TARGET_FEATURE_DIM  # 26
MIXER_OBS_DIM = CONTROL_OBS_DIM + 5  # + one-hot skill command


# ---------------------------------------------------------------------
# rewards
# ---------------------------------------------------------------------


def paddle_reward(x_p: np.ndarray, x_b: np.ndarray, c_bp) -> np.ndarray:
    """Closeness shaping before the strike: exp(-4 d^2), zero once hit."""
    d2 = np.sum((np.asarray(x_p) - np.asarray(x_b)) ** 2, axis=-1)
    r = np.exp(-4.0 * d2)
    return np.where(np.asarray(c_bp) == 0, r, 0.0)


def ball_reward(
    landing_xy: np.ndarray,
    landing_valid: np.ndarray,
    target_xy: np.ndarray,
    c_bp,
    c_bt,
) -> np.ndarray:
    """Post-strike shaping: 1 + exp(-4 ||x_c - x_t||^2) while the return is
    in flight (hit happened, no table contact yet). `landing_xy` is the
    drag-free predicted landing point of the current ball state."""
    d2 = np.sum((np.asarray(landing_xy) - np.asarray(target_xy)) ** 2, axis=-1)
    shaped = 1.0 + np.where(np.asarray(landing_valid), np.exp(-4.0 * d2), 0.0)
    gate = (np.asarray(c_bp) == 1) & (np.asarray(c_bt) == 0)
    return np.where(gate, shaped, 0.0)


def style_reward(d: np.ndarray, prob_clamp: float = 1e-5) -> np.ndarray:
    """-log(1 - D) on the strike-motion transition (clamped)."""
    d_c = np.clip(np.asarray(d), prob_clamp, 1.0 - prob_clamp)
    return -np.log(1.0 - d_c)


def task_reward(r_p, r_b, r_s, weights: tuple[float, float, float]) -> np.ndarray:
    w_p, w_b, w_s = weights
    return w_p * np.asarray(r_p) + w_b * np.asarray(r_b) + w_s * np.asarray(r_s)


def predict_landing_batch(
    ball_p: np.ndarray, ball_v: np.ndarray, table_z: float, gravity: float = 9.8
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized drag-free landing points; returns (xy, valid mask)."""
    ball_p = np.atleast_2d(ball_p)
    ball_v = np.atleast_2d(ball_v)
    h = ball_p[:, 2] - table_z
    vz = ball_v[:, 2]
    disc = vz * vz + 2.0 * gravity * h
    ok = disc >= 0.0
    t = np.where(ok, (vz + np.sqrt(np.maximum(disc, 0.0))) / gravity, 0.0)
    ok = ok & (t > 0.0)
    xy = ball_p[:, :2] + ball_v[:, :2] * t[:, None]
    return xy, ok


# ---------------------------------------------------------------------
# action mixing
# ---------------------------------------------------------------------


def mix_actions(
    phi: np.ndarray,
    a_universal: np.ndarray,
    a_skill_set: np.ndarray,
    delta: np.ndarray,
) -> np.ndarray:
    """Joint-wise blend: phi * universal + (1 - phi) * selected skill action.

    `a_skill_set` holds one action row per skill (5, J) or a batch of them;
    `delta` must be one-hot over the five skills.
    """
    phi = np.asarray(phi, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if phi.min() < 0.0 or phi.max() > 1.0:
        raise ValueError("blend weights must lie in [0, 1]")
    one = np.isclose(delta.sum(axis=-1), 1.0)
    binary = np.all((np.isclose(delta, 0.0)) | (np.isclose(delta, 1.0)), axis=-1)
    if not (np.all(one) and np.all(binary)):
        raise ValueError("delta must be one-hot")
    a_sel = np.einsum("...s,...sj->...j", delta, np.asarray(a_skill_set, dtype=np.float64))
    return phi * np.asarray(a_universal) + (1.0 - phi) * a_sel


def act_ball_control(
    policy: "BallControlPolicy",
    s: np.ndarray,
    b: np.ndarray,
    y: np.ndarray,
    last_z: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, bool]:
    """Unit latent for the skill's imitation policy; deterministic mean when
    rng is None. A degenerate zero output falls back to the previous latent
    (reported via the second return value)."""
    obs = np.concatenate([s, b, y], axis=-1)
    raw = policy.policy.sample(obs, rng) if rng is not None else policy.policy.mean(obs)
    norm = float(np.linalg.norm(raw))
    if norm < 1e-9:
        if last_z is None:
            last_z = np.zeros_like(raw)
            last_z[..., 0] = 1.0
        return np.array(last_z, copy=True), True
    return raw / norm, False


# ---------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------


@dataclass
class BallControlPolicy:
    """Latent-steering policy for one skill: (s, b, y) -> skill latent."""

    skill: int
    policy: GaussianPolicy
    value_net: Mlp
    curve: list[dict] = field(default_factory=list)


@dataclass
class MixerPolicy:
    """(s, b, y, delta) -> universal latent + per-joint blend weights."""

    policy: GaussianPolicy
    value_net: Mlp
    latent_dim: int
    curve: list[dict] = field(default_factory=list)

    def split(self, raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z_raw = raw[..., : self.latent_dim]
        phi_raw = raw[..., self.latent_dim :]
        z = normalize_rows(np.atleast_2d(z_raw))
        z = z.reshape(z_raw.shape)
        phi = 1.0 / (1.0 + np.exp(-phi_raw))
        return z, phi


def make_ball_control(skill: int, net_cfg: NetConfig, rng: np.random.Generator) -> BallControlPolicy:
    d = net_cfg.latent_dim
    mean_net = Mlp([CONTROL_OBS_DIM, *net_cfg.control_hidden, d], rng=rng, final_scale=0.3)
    value_net = Mlp([CONTROL_OBS_DIM, *net_cfg.value_hidden, 1], rng=rng)
    return BallControlPolicy(skill, GaussianPolicy(mean_net, net_cfg.control_sigma_sq), value_net)


def make_mixer(net_cfg: NetConfig, rng: np.random.Generator) -> MixerPolicy:
    d = net_cfg.latent_dim
    mean_net = Mlp([MIXER_OBS_DIM, *net_cfg.control_hidden, d + 4], rng=rng, final_scale=0.3)
    value_net = Mlp([MIXER_OBS_DIM, *net_cfg.value_hidden, 1], rng=rng)
    return MixerPolicy(GaussianPolicy(mean_net, net_cfg.control_sigma_sq), value_net, d)


@dataclass
class ControlStack:
    """Everything needed to drive one agent: imitation bundles, per-skill
    ball-control policies, and the mixer."""

    bundles: dict[int, ImitationBundle]      # 1..5
    universal: ImitationBundle
    ball_controls: dict[int, BallControlPolicy]
    mixer: MixerPolicy | None = None
    version: str = "v0"


# ---------------------------------------------------------------------
# launches
# ---------------------------------------------------------------------


def sample_launch(
    rng: np.random.Generator,
    cfg: SimConfig,
    bc_cfg: BallControlConfig,
    toward_side: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Serve toward a side: crosses the net at a sampled height and speed,
    aimed to bounce at a sampled point on the receiving half."""
    sigma = -1.0 if toward_side == 0 else 1.0  # x sign of the receiving half
    speed = rng.uniform(*bc_cfg.launch_speed)
    entry_h = rng.uniform(*bc_cfg.launch_entry_height)
    depth = rng.uniform(*bc_cfg.launch_depth)
    y_t = rng.uniform(*bc_cfg.launch_lateral)
    # serve angled slightly inward so the post-bounce ball converges on the
    # arm's lateral reach instead of drifting wide
    y0 = float(np.clip(1.6 * y_t, -0.6, 0.6))
    launch_back = rng.uniform(*bc_cfg.launch_backswing)

    # exact two-point solve under linear drag: with a = -g z_hat - k v the
    # position obeys r(t) = r0 + (v0 + g_vec/k) A(t) - g_vec t / k with
    # A(t) = (1 - exp(-k t)) / k, and the horizontal direction is preserved.
    x_t = sigma * depth
    x0 = -sigma * launch_back
    z_net = cfg.table_height + cfg.net_height + entry_h
    dist = float(np.hypot(x_t - x0, y_t - y0))
    t_star = dist / speed  # bounce time, by the sampled nominal speed
    k = cfg.damping_k
    g = cfg.gravity
    if k < 1e-9:
        a_fn = lambda t: t
        v_h = speed
    else:
        a_fn = lambda t: (1.0 - np.exp(-k * t)) / k
        v_h = dist * k / (1.0 - np.exp(-k * t_star))
    # net-plane crossing time along the (monotone) horizontal travel
    d_net = launch_back
    if k < 1e-9:
        t_net = d_net / v_h
    else:
        t_net = -np.log(1.0 - d_net * k / v_h) / k
    # two linear conditions on (z0, vz0): z(t_net) = z_net, z(t*) = table_h
    a_n, a_s = a_fn(t_net), a_fn(t_star)
    if k < 1e-9:
        rhs_n = z_net + 0.5 * g * t_net * t_net
        rhs_s = cfg.table_height + 0.5 * g * t_star * t_star
    else:
        rhs_n = z_net + g * t_net / k - (g / k) * a_n
        rhs_s = cfg.table_height + g * t_star / k - (g / k) * a_s
    vz0 = (rhs_s - rhs_n) / (a_s - a_n)
    z0 = rhs_n - vz0 * a_n
    vx = v_h * (x_t - x0) / dist
    vy = v_h * (y_t - y0) / dist
    return np.array([x0, y0, z0]), np.array([vx, vy, vz0])


def sample_target(
    rng: np.random.Generator, bc_cfg: BallControlConfig, opponent_side: int
) -> np.ndarray:
    """Landing target on the opponent half."""
    sigma = -1.0 if opponent_side == 0 else 1.0
    return np.array(
        [sigma * rng.uniform(*bc_cfg.target_depth), rng.uniform(*bc_cfg.target_lateral)]
    )


# ---------------------------------------------------------------------
# runtime controller
# ---------------------------------------------------------------------


class StackController:
    """Drives one agent at the configured rates inside a play loop.

    mode "mixer": blended control through the mixer policy.
    mode "pure":  the commanded skill's ball-control + imitation policy only.
    mode "et":    pure skill control, except a transition controller takes
                  over from the moment the ball crosses the net toward the
                  agent until the agent returns it.
    """

    def __init__(
        self,
        stack: ControlStack,
        side: int,
        cfg: SimConfig,
        mode: str = "mixer",
        transition_policy: BallControlPolicy | None = None,
    ):
        if mode not in ("mixer", "pure", "et"):
            raise ValueError(f"unknown controller mode {mode!r}")
        if mode == "mixer" and stack.mixer is None:
            raise ValueError("stack has no mixer policy")
        if mode == "et" and transition_policy is None:
            raise ValueError("et mode needs a transition policy")
        self.stack = stack
        self.side = side
        self.cfg = cfg
        self.mode = mode
        self.transition_policy = transition_policy
        self.delta = np.zeros(5)
        self.delta[0] = 1.0
        self.target_xy = np.array([0.8 if side == 0 else -0.8, 0.0])
        self.z_skill = np.zeros(stack.universal.latent_dim)
        self.z_skill[0] = 1.0
        self.z_univ = self.z_skill.copy()
        self.phi = np.full(4, 0.5)
        self.in_transition_window = False
        self.has_command = False
        self.last_phi_log: list[tuple[int, float]] = []

    def begin_point(self) -> None:
        self.has_command = False
        self.in_transition_window = False
        self.last_phi_log.clear()

    def set_command(self, delta: np.ndarray, target_xy: np.ndarray) -> None:
        delta = np.asarray(delta, dtype=np.float64)
        if not (np.isclose(delta.sum(), 1.0) and np.all((delta == 0) | np.isclose(delta, 1.0))):
            raise ValueError("delta must be one-hot")
        self.delta = delta
        self.target_xy = np.asarray(target_xy, dtype=np.float64)
        self.has_command = True

    def on_events(self, events) -> None:
        for e in events:
            if e.kind in (EventKind.NET_CROSSED_TOWARD_NEAR, EventKind.NET_CROSSED_TOWARD_FAR):
                toward = 0 if e.kind == EventKind.NET_CROSSED_TOWARD_NEAR else 1
                if toward == self.side:
                    self.in_transition_window = True
            elif e.kind == EventKind.PADDLE_HIT and e.side == self.side:
                self.in_transition_window = False

    @property
    def skill(self) -> int:
        return int(np.argmax(self.delta)) + 1

    def _observe(self, world: VecWorld, w: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos, _, _ = world.paddle_poses()
        s = skill_state_features(world.q[w, self.side], world.qd[w, self.side], self.cfg)
        b = ball_features(
            world.ball_p[w],
            world.ball_v[w],
            pos[w, self.side],
            self.side,
            np.float64(world.base_y[w, self.side]),
            self.cfg,
        )
        y = target_features(world.ball_p[w], self.target_xy, self.side, self.cfg)
        return s, b, y

    def control_step(self, world: VecWorld, w: int) -> None:
        """15 Hz work: refresh latents and blend weights."""
        if not self.has_command or world.ball_dead[w]:
            return
        s, b, y = self._observe(world, w)
        use_transition = self.mode == "et" and self.in_transition_window
        source = self.transition_policy if use_transition else self.stack.ball_controls[self.skill]
        self.z_skill, _ = act_ball_control(source, s, b, y, last_z=self.z_skill)
        if self.mode == "mixer":
            obs = np.concatenate([s, b, y, self.delta])
            raw = self.stack.mixer.policy.mean(obs)
            z_u, phi = self.stack.mixer.split(raw)
            self.z_univ = z_u
            self.phi = phi

    def imitation_step(self, world: VecWorld, w: int) -> None:
        """30 Hz work: produce joint targets and latch them as PD targets."""
        if not self.has_command or world.ball_dead[w]:
            world.set_targets(w, self.side, READY_POSE)
            return
        s = skill_state_features(world.q[w, self.side], world.qd[w, self.side], self.cfg)
        if self.mode == "mixer":
            a_u = self.stack.universal.act_mean(s, self.z_univ)
            a_i = self.stack.bundles[self.skill].act_mean(s, self.z_skill)
            a = self.phi * a_u + (1.0 - self.phi) * a_i
        elif self.mode == "et" and self.in_transition_window:
            a = self.stack.universal.act_mean(s, self.z_skill)
        else:
            a = self.stack.bundles[self.skill].act_mean(s, self.z_skill)
        self.last_phi_log.append((int(world.tick[w]), float(np.mean(self.phi))))
        world.set_targets(w, self.side, a)


# ---------------------------------------------------------------------
# trainers
# ---------------------------------------------------------------------


class _LaunchTaskEnv:
    """Vectorized single-agent return task: serve balls at the agent, score
    shaped rewards, relaunch after each resolved ball."""

    def __init__(
        self,
        sim_cfg: SimConfig,
        bc_cfg: BallControlConfig,
        rng: np.random.Generator,
        n_envs: int,
        fixed_skill: int | None,
    ):
        self.sim_cfg = sim_cfg
        self.bc_cfg = bc_cfg
        self.rng = rng
        self.n = n_envs
        self.fixed_skill = fixed_skill
        self.world = VecWorld(sim_cfg, n_envs, side_kinds=(SIDE_ARM, SIDE_ABSENT))
        self.targets = np.zeros((n_envs, 2))
        self.skills = np.ones(n_envs, dtype=np.int64)
        self.launch_age = np.zeros(n_envs, dtype=np.int64)
        self.hit_seen = np.zeros(n_envs, dtype=bool)
        self.footwork_done = np.zeros(n_envs, dtype=bool)
        self.landing_errors: list[float] = []
        self.returns_ok = 0
        self.launches = 0
        self.crossed_after_hit = np.zeros(n_envs, dtype=bool)
        for w in range(n_envs):
            self.relaunch(w)

    def relaunch(self, w: int) -> None:
        self.world.reset_arm(w, 0, base_y=0.0, q=READY_POSE, qd=np.zeros(4))
        pos, vel = sample_launch(self.rng, self.sim_cfg, self.bc_cfg, toward_side=0)
        self.world.launch(w, pos, vel)
        self.targets[w] = sample_target(self.rng, self.bc_cfg, opponent_side=1)
        self.skills[w] = self.fixed_skill or int(self.rng.integers(1, 6))
        self.launch_age[w] = 0
        self.hit_seen[w] = False
        self.crossed_after_hit[w] = False
        self.footwork_done[w] = False
        self.launches += 1

    def apply_footwork(self) -> None:
        """Slide each arm base under its incoming ball, once per launch.

        World-side positioning (an automated stand-in for footwork), applied
        identically during demonstration, training, evaluation and matches.
        """
        for w in range(self.n):
            if self.footwork_done[w] or self.hit_seen[w] or self.world.ball_dead[w]:
                continue
            hit = predict_interception(
                self.world.ball_p[w], self.world.ball_v[w], self.sim_cfg, -0.9
            )
            if hit is not None:
                self.world.set_slide_target(w, 0, 0.85 * hit[1])
                self.footwork_done[w] = True

    def observe(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos, _, _ = self.world.paddle_poses()
        s = skill_state_features(self.world.q[:, 0], self.world.qd[:, 0], self.sim_cfg)
        b = ball_features(
            self.world.ball_p,
            self.world.ball_v,
            pos[:, 0],
            0,
            self.world.base_y[:, 0],
            self.sim_cfg,
        )
        y = target_features(self.world.ball_p, self.targets, 0, self.sim_cfg)
        return s, b, y

    def resolve_events(self, events_per_world: list) -> None:
        """Track landings/returns and relaunch resolved balls."""
        for w in range(self.n):
            done = False
            for e in events_per_world[w]:
                if e.kind == EventKind.PADDLE_HIT and e.side == 0:
                    self.hit_seen[w] = True
                elif e.kind == EventKind.NET_CROSSED_TOWARD_FAR and self.hit_seen[w]:
                    self.crossed_after_hit[w] = True
                elif e.kind in (EventKind.TABLE_BOUNCE_FAR, EventKind.TABLE_BOUNCE_NEAR):
                    if self.hit_seen[w]:
                        err = float(
                            np.hypot(
                                e.position[0] - self.targets[w, 0],
                                e.position[1] - self.targets[w, 1],
                            )
                        )
                        self.landing_errors.append(err)
                        if e.kind == EventKind.TABLE_BOUNCE_FAR and self.crossed_after_hit[w]:
                            self.returns_ok += 1
                        done = True
                elif e.kind in (EventKind.BALL_OUT, EventKind.DOUBLE_BOUNCE):
                    done = True
            self.launch_age[w] += 1
            behind = self.world.ball_p[w, 0] < -(self.sim_cfg.base_x + 0.55)
            if done or self.world.ball_dead[w] or behind or self.launch_age[w] > 50:
                self.relaunch(w)

    def reward(self, s30_pairs: list[tuple[np.ndarray, np.ndarray]], style_fn) -> np.ndarray:
        pos, _, _ = self.world.paddle_poses()
        r_p = paddle_reward(pos[:, 0], self.world.ball_p, self.world.cbp[:, 0])
        land_xy, ok = predict_landing_batch(
            self.world.ball_p, self.world.ball_v, self.sim_cfg.table_height, self.sim_cfg.gravity
        )
        r_b = ball_reward(land_xy, ok, self.targets, self.world.cbp[:, 0], self.world.cbt[:, 0])
        r_s = np.mean([style_fn(s0, s1) for s0, s1 in s30_pairs], axis=0)
        w = (
            self.bc_cfg.paddle_reward_weight,
            self.bc_cfg.ball_reward_weight,
            self.bc_cfg.style_reward_weight,
        )
        return task_reward(r_p, r_b, r_s, w)


def _run_control_episode_batch(
    env: _LaunchTaskEnv,
    act_fn,
    horizon: int,
    buf: RolloutBuffer | None,
    sim_cfg: SimConfig,
    episode_length: int,
) -> None:
    """Common 15 Hz loop: act, run two imitation substeps, reward, relaunch."""
    step_in_ep = 0
    for t in range(horizon):
        env.apply_footwork()
        obs, extras = act_fn.observe(env)
        act, logp, val = act_fn.act(obs)
        s_pairs = []
        for k in range(2):
            s0 = skill_state_features(env.world.q[:, 0], env.world.qd[:, 0], sim_cfg)
            targets = act_fn.joint_targets(env, act, extras, s0)
            for w in range(env.n):
                env.world.set_targets(w, 0, targets[w])
            events = env.world.step(sim_cfg.substeps_per_imitation)
            s1 = skill_state_features(env.world.q[:, 0], env.world.qd[:, 0], sim_cfg)
            s_pairs.append((s0, s1))
            if k == 0:
                first_events = events
            else:
                for w in range(env.n):
                    first_events[w].extend(events[w])
        rew = env.reward(s_pairs, act_fn.style)
        step_in_ep += 1
        done = float(step_in_ep >= episode_length)
        if buf is not None:
            buf.add(obs, act, logp, rew, val, np.full(env.n, done))
        env.resolve_events(first_events)
        if done:
            step_in_ep = 0
    if buf is not None:
        obs, _ = act_fn.observe(env)
        buf.set_bootstrap(act_fn.value(obs))


class _BallControlActor:
    """Rollout adapter for training/eval of one ball-control policy."""

    def __init__(self, bc: BallControlPolicy, bundle: ImitationBundle, rng, deterministic=False):
        self.bc = bc
        self.bundle = bundle
        self.rng = rng
        self.deterministic = deterministic
        self.last_z: np.ndarray | None = None

    def observe(self, env: _LaunchTaskEnv):
        s, b, y = env.observe()
        return np.concatenate([s, b, y], axis=-1), None

    def act(self, obs):
        if self.deterministic:
            act = self.bc.policy.mean(obs)
        else:
            act = self.bc.policy.sample(obs, self.rng)
        logp = self.bc.policy.log_prob(obs, act)
        val = self.bc.value_net.forward_np(obs)[:, 0]
        return act, logp, val

    def value(self, obs):
        return self.bc.value_net.forward_np(obs)[:, 0]

    def joint_targets(self, env, act, extras, s30):
        z = normalize_rows(act)
        zero = np.linalg.norm(act, axis=-1) < 1e-9
        if zero.any() and self.last_z is not None:
            z[zero] = self.last_z[zero]
        self.last_z = z
        return self.bundle.act_mean(s30, z)

    def style(self, s0, s1):
        return style_reward(self.bundle.disc_prob(np.concatenate([s0, s1], axis=-1)))


class _MixerActor:
    """Rollout adapter for the mixer: frozen ball-control policies feed the
    skill latents; the mixer's action is the universal latent + blend raw."""

    def __init__(self, mixer: MixerPolicy, stack: ControlStack, rng, deterministic=False):
        self.mixer = mixer
        self.stack = stack
        self.rng = rng
        self.deterministic = deterministic
        self.last_z: dict[int, np.ndarray] = {}

    def observe(self, env: _LaunchTaskEnv):
        s, b, y = env.observe()
        onehot = np.zeros((env.n, 5))
        onehot[np.arange(env.n), env.skills - 1] = 1.0
        return np.concatenate([s, b, y, onehot], axis=-1), (s, b, y)

    def act(self, obs):
        if self.deterministic:
            act = self.mixer.policy.mean(obs)
        else:
            act = self.mixer.policy.sample(obs, self.rng)
        logp = self.mixer.policy.log_prob(obs, act)
        val = self.mixer.value_net.forward_np(obs)[:, 0]
        return act, logp, val

    def value(self, obs):
        return self.mixer.value_net.forward_np(obs)[:, 0]

    def joint_targets(self, env, act, extras, s30):
        s, b, y = extras
        z_u, phi = self.mixer.split(act)
        ctrl_obs = np.concatenate([s, b, y], axis=-1)
        a_u = self.stack.universal.act_mean(s30, z_u)
        a = np.zeros_like(a_u)
        for skill in np.unique(env.skills):
            mask = env.skills == skill
            bc = self.stack.ball_controls[int(skill)]
            z_i = normalize_rows(bc.policy.mean(ctrl_obs[mask]))
            a_i = self.stack.bundles[int(skill)].act_mean(s30[mask], z_i)
            a[mask] = phi[mask] * a_u[mask] + (1.0 - phi[mask]) * a_i
        self._phi_last = phi
        return a

    def style(self, s0, s1):
        # style measured against the commanded skill's discriminator
        out = np.zeros(len(s0))
        trans = np.concatenate([s0, s1], axis=-1)
        for skill in (1, 2, 3, 4, 5):
            mask = self._env_skills == skill
            if mask.any():
                out[mask] = style_reward(self.stack.bundles[skill].disc_prob(trans[mask]))
        return out


def synth_latent(
    pitch_f: float, yaw_f: float, amp_f: float, theta: float, dim: int = 8
) -> np.ndarray:
    """Latent vector built directly in the clip-latent coordinate system
    (aim factors + phase wheel); the inverse of refs.clip_latents."""
    pre = np.zeros(dim)
    pre[0] = 0.8 * pitch_f / 0.30
    pre[1] = 0.8 * yaw_f / 0.40
    pre[2] = 0.8 * amp_f / 0.15
    pre[3] = math.cos(theta)
    pre[4] = math.sin(theta)
    return pre / np.linalg.norm(pre)


def predict_interception(
    ball_p: np.ndarray,
    ball_v: np.ndarray,
    cfg: SimConfig,
    plane_x: float,
    max_time: float = 1.6,
    bounce_offset: float | None = 0.28,
) -> tuple[float, float, float] | None:
    """(time, y, z) where the incoming ball should be struck.

    Simulates forward with drag and table bounces. With `bounce_offset`
    set, the strike plane adapts to sit that far behind the predicted
    bounce (clamped near `plane_x`), so the strike catches the rising
    post-bounce ball; otherwise the fixed plane is used.
    """
    p = np.array(ball_p, dtype=np.float64)
    v = np.array(ball_v, dtype=np.float64)
    dt = cfg.dt
    g = np.array([0.0, 0.0, -cfg.gravity])
    n = int(max_time / dt)
    plane = plane_x
    bounced = False
    for i in range(n):
        a = g - cfg.damping_k * v
        p_new = p + dt * v + 0.5 * dt * dt * a
        v_new = v + dt * a
        if p[2] > cfg.table_height >= p_new[2] and abs(p_new[0]) <= cfg.half_length:
            v_new[2] = -cfg.restitution_table * v_new[2]
            p_new[2] = cfg.table_height + 1e-4
            if not bounced and bounce_offset is not None and p_new[0] < 0.0:
                bounced = True
                plane = float(
                    np.clip(p_new[0] - bounce_offset, plane_x - 0.25, plane_x + 0.22)
                )
        if p_new[0] <= plane and (bounced or bounce_offset is None):
            tau = (p[0] - plane) / max(p[0] - p_new[0], 1e-12)
            c = p + tau * (p_new - p)
            return ((i + tau) * dt, float(c[1]), float(c[2]))
        if p_new[2] < cfg.floor_z:
            return None
        p, v = p_new, v_new
    return None


class LatentStrikeController:
    """Closed-loop scripted returner operating purely through the latent
    channel of a trained imitation bundle.

    Tracks the predicted interception point by steering the latent's aim
    factors (pitch/yaw maps are calibrated against the bundle at init),
    then sweeps the phase wheel through the strike when contact is
    imminent. Used to demonstrate returns for ball-control bootstrapping.
    """

    def __init__(
        self,
        bundle: ImitationBundle,
        sim_cfg: SimConfig,
        plane_x: float = -1.07,
        hold_theta: float = -1.2,
        sweep_rate: float = 0.9,
        lead_time: float = 0.0,
        side: int = 0,
    ):
        self.bundle = bundle
        self.cfg = sim_cfg
        self.side = side
        self.plane_x = plane_x
        self.hold_theta = hold_theta
        self.sweep_rate = sweep_rate
        self.lead_time = lead_time
        self._calibrate()
        self.reset()

    def reset(self) -> None:
        self.sweep_frame = -1
        self.aim = (0.0, 0.0)
        self._t_hit_est: float | None = None
        self._footwork_done = False

    PRE_FRAMES = 8  # 30 Hz frames held cocked before the strike phase

    def _strike_pass(self, pitch_f: float, yaw_f: float, world: VecWorld):
        """Run hold + sweep once; return the paddle pose at peak speed."""
        world.reset_arm(0, 0, q=READY_POSE)
        cocked = self.theta_star - 0.9 * 2.0 * np.pi / 30.0 * self.PRE_FRAMES
        z_hold = synth_latent(pitch_f, yaw_f, 0.0, cocked)
        for _ in range(20):
            s = skill_state_features(world.q[0, 0], world.qd[0, 0], self.cfg)
            world.set_targets(0, 0, self.bundle.act_mean(s, z_hold))
            world.step(self.cfg.substeps_per_imitation)
        best = (0.0, None)
        for k in range(self.PRE_FRAMES + 8):
            theta = min(cocked + 0.9 * 2.0 * np.pi / 30.0 * k, cocked + 5.5)
            z = synth_latent(pitch_f, yaw_f, 0.0, theta)
            s = skill_state_features(world.q[0, 0], world.qd[0, 0], self.cfg)
            world.set_targets(0, 0, self.bundle.act_mean(s, z))
            world.step(self.cfg.substeps_per_imitation)
            pos, _, vel = world.paddle_poses()
            speed = float(vel[0, 0, 0])
            if speed > best[0]:
                best = (speed, pos[0, 0].copy())
        return best

    def _calibrate(self) -> None:
        """Locate the servo's strike phase, then map aim factors to where
        the paddle actually passes at peak speed (short rollouts)."""
        world = VecWorld(self.cfg, 1, side_kinds=(SIDE_ARM, SIDE_ABSENT))
        # 1. strike phase: slow sweep from an early hold
        world.reset_arm(0, 0, q=READY_POSE)
        z_hold = synth_latent(0.05, 0.0, 0.0, self.hold_theta)
        for _ in range(22):
            s = skill_state_features(world.q[0, 0], world.qd[0, 0], self.cfg)
            world.set_targets(0, 0, self.bundle.act_mean(s, z_hold))
            world.step(self.cfg.substeps_per_imitation)
        best_speed, best_theta = 0.0, self.hold_theta + 2.5
        step_theta = 0.9 * 2.0 * np.pi / 30.0
        for k in range(40):
            theta = min(self.hold_theta + step_theta * k, self.hold_theta + 4.8)
            z = synth_latent(0.05, 0.0, 0.0, theta)
            s = skill_state_features(world.q[0, 0], world.qd[0, 0], self.cfg)
            world.set_targets(0, 0, self.bundle.act_mean(s, z))
            world.step(self.cfg.substeps_per_imitation)
            _, _, vel = world.paddle_poses()
            speed = float(vel[0, 0, 0])  # forward component drives the return
            if speed > best_speed:
                best_speed, best_theta = speed, theta
        self.theta_star = best_theta
        self.peak_speed = best_speed
        # 2. aim maps measured at the strike pass
        self._pitch_grid = np.linspace(-0.35, 0.55, 7)
        self._height_grid = np.array(
            [self._strike_pass(pf, 0.0, world)[1][2] for pf in self._pitch_grid]
        )
        self._yaw_grid = np.linspace(-0.8, 0.8, 7)
        passes = [self._strike_pass(0.05, yf, world) for yf in self._yaw_grid]
        self._strikey_grid = np.array([p[1][1] for p in passes])
        self.plane_x = float(np.mean([p[1][0] for p in passes]))

    @property
    def cocked_theta(self) -> float:
        return self.theta_star - self.sweep_rate * 2.0 * np.pi / 30.0 * self.PRE_FRAMES

    def _pitch_for_height(self, z_target: float) -> float:
        lo, hi = min(self._height_grid), max(self._height_grid)
        z_target = min(max(z_target, lo), hi)
        if self._height_grid[0] > self._height_grid[-1]:
            return float(np.interp(z_target, self._height_grid[::-1], self._pitch_grid[::-1]))
        return float(np.interp(z_target, self._height_grid, self._pitch_grid))

    def _yaw_for_y(self, y_target: float) -> float:
        lo, hi = min(self._strikey_grid), max(self._strikey_grid)
        y_target = min(max(y_target, lo), hi)
        if self._strikey_grid[0] > self._strikey_grid[-1]:
            return float(np.interp(y_target, self._strikey_grid[::-1], self._yaw_grid[::-1]))
        return float(np.interp(y_target, self._strikey_grid, self._yaw_grid))

    def command(self, world: VecWorld, w: int, amp_f: float = 0.0) -> np.ndarray:
        """Latent command for this control tick (15 Hz).

        The phase wheel is locked to the predicted time-to-intercept, so the
        strike phase arrives with the ball regardless of tick quantization.
        """
        control_dt = self.cfg.dt * self.cfg.substeps_per_control
        approaching = (
            world.ball_p[w, 0] > self.plane_x - 0.05 and world.ball_v[w, 0] < 0.0
        )
        hit = None
        if approaching:
            hit = predict_interception(
                world.ball_p[w], world.ball_v[w], self.cfg, self.plane_x
            )
            if hit is not None:
                t_hit, y_hit, z_hit = hit
                if not self._footwork_done:
                    # footwork, once per incoming ball: slide the base under
                    # the predicted strike so the face meets it nearly flat
                    world.set_slide_target(w, self.side, 0.85 * y_hit)
                    self._footwork_done = True
                base_strike = float(world.base_y_target[w, self.side])
                reachable = abs(base_strike - world.base_y[w, self.side]) <= (
                    self.cfg.slide_speed * max(t_hit, 0.0)
                )
                base_at_strike = base_strike if reachable else float(world.base_y[w, self.side])
                y_local = y_hit - base_at_strike
                self.aim = (self._pitch_for_height(z_hit), self._yaw_for_y(y_local))
                self._t_hit_est = t_hit
        if hit is None and self._t_hit_est is not None:
            # ball passed (or prediction lost): keep the phase clock running
            self._t_hit_est -= control_dt
        pitch_f, yaw_f = self.aim
        if self._t_hit_est is None:
            return synth_latent(pitch_f, yaw_f, amp_f, self.cocked_theta)
        theta = self.theta_star - self.sweep_rate * 2.0 * np.pi * (
            self._t_hit_est + self.lead_time
        )
        theta = float(np.clip(theta, self.cocked_theta, self.theta_star + 2.2))
        if theta > self.cocked_theta:
            self.sweep_frame = max(self.sweep_frame, 0) + 1
        return synth_latent(pitch_f, yaw_f, amp_f, theta)


def scripted_return_data(
    bundle: ImitationBundle,
    refs,
    skill: int,
    sim_cfg: SimConfig,
    bc_cfg: BallControlConfig,
    rng: np.random.Generator,
    n_serves: int,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Successful-return demonstrations for bootstrapping a ball-control
    policy, produced by the closed-loop latent tracker. Episodes that make
    contact are kept with the landing target relabeled to the actual (or
    drag-free predicted) landing; full successes are weighted up."""
    del refs  # the tracker builds latents directly; clips are not needed
    world = VecWorld(sim_cfg, 1, side_kinds=(SIDE_ARM, SIDE_ABSENT))
    tracker = LatentStrikeController(bundle, sim_cfg)
    obs_rows: list[np.ndarray] = []
    z_rows: list[np.ndarray] = []
    successes = 0
    contacts = 0
    sub_i = sim_cfg.substeps_per_imitation
    per_ctrl = sim_cfg.substeps_per_control // sub_i
    for _ in range(n_serves):
        world.reset_arm(0, 0, base_y=0.0, q=READY_POSE, qd=np.zeros(4))
        pos0, vel0 = sample_launch(rng, sim_cfg, bc_cfg, toward_side=0)
        world.launch(0, pos0, vel0)
        best = None
        for sweep_rate in (0.9, 0.7, 1.2):
            snap = world.snapshot()
            tracker.sweep_rate = sweep_rate
            tracker.reset()
            rows = _tracked_return_episode(
                world, bundle, tracker, sim_cfg, per_ctrl, sub_i
            )
            world.restore(snap)
            if rows is None:
                continue
            if rows[2]:
                best = rows
                break
            if best is None:
                best = rows
        if best is None:
            continue
        weight = 3 if best[2] else 1
        for _ in range(weight):
            obs_rows.extend(best[0])
            z_rows.extend(best[1])
        if best[2]:
            successes += 1
        else:
            contacts += 1
    stats = {
        "serves": n_serves,
        "successes": successes,
        "contacts": contacts,
        "rows": len(obs_rows),
    }
    if not obs_rows:
        return np.zeros((0, CONTROL_OBS_DIM)), np.zeros((0, 1)), stats
    return np.asarray(obs_rows), np.asarray(z_rows), stats


def _tracked_return_episode(
    world: VecWorld,
    bundle: ImitationBundle,
    tracker: LatentStrikeController,
    sim_cfg: SimConfig,
    per_ctrl: int,
    sub_i: int,
):
    hit = False
    crossed = False
    faulted = False
    landed_at = None
    predicted_at = None
    rec_obs: list[np.ndarray] = []
    rec_z: list[np.ndarray] = []
    for _ctrl in range(80):
        pos, _, _ = world.paddle_poses()
        s = skill_state_features(world.q[0, 0], world.qd[0, 0], sim_cfg)
        b = ball_features(
            world.ball_p[0], world.ball_v[0], pos[0, 0], 0,
            np.float64(world.base_y[0, 0]), sim_cfg,
        )
        z_cmd = tracker.command(world, 0)
        rec_obs.append(np.concatenate([s, b, np.zeros(3)]))
        rec_z.append(z_cmd)
        for _ in range(per_ctrl):
            s30 = skill_state_features(world.q[0, 0], world.qd[0, 0], sim_cfg)
            world.set_targets(0, 0, bundle.act_mean(s30, z_cmd))
            events = world.step(sub_i)[0]
            for e in events:
                if e.kind == EventKind.PADDLE_HIT:
                    hit = True
                elif hit and e.kind == EventKind.NET_CROSSED_TOWARD_FAR:
                    crossed = True
                elif hit and crossed and e.kind == EventKind.TABLE_BOUNCE_FAR:
                    landed_at = np.array([e.position[0], e.position[1]])
                elif hit and e.kind in (EventKind.NET_HIT, EventKind.TABLE_BOUNCE_NEAR):
                    faulted = True
            if hit and predicted_at is None and not world.ball_dead[0]:
                xy, ok = predict_landing_batch(
                    world.ball_p[0][None], world.ball_v[0][None],
                    sim_cfg.table_height, sim_cfg.gravity,
                )
                if ok[0]:
                    predicted_at = xy[0].copy()
        if landed_at is not None or faulted:
            break
        if world.ball_dead[0]:
            break
    if not hit:
        return None
    label = landed_at if landed_at is not None else predicted_at
    if label is None:
        return None
    out_rows = []
    for row in rec_obs:
        d_root = row[SKILL_STATE_DIM + 3 : SKILL_STATE_DIM + 6]
        ball_table = np.array(
            [-sim_cfg.base_x + d_root[0], d_root[1] + 0.0, sim_cfg.base_z + d_root[2]]
        )
        tgt = target_features(ball_table, label, 0, sim_cfg)
        row = row.copy()
        row[SKILL_STATE_DIM + BALL_FEATURE_DIM :] = tgt
        out_rows.append(row)
    return out_rows, rec_z, landed_at is not None


def dagger_return_data(
    bc: "BallControlPolicy",
    bundle: ImitationBundle,
    sim_cfg: SimConfig,
    bc_cfg: BallControlConfig,
    rng: np.random.Generator,
    n_serves: int,
    sweep_rate: float = 0.9,
) -> tuple[np.ndarray, np.ndarray]:
    """Roll out the learned policy, label every visited control tick with
    the scripted tracker's latent command (standard distribution-shift
    correction for the cloned controller)."""
    world = VecWorld(sim_cfg, 1, side_kinds=(SIDE_ARM, SIDE_ABSENT))
    tracker = LatentStrikeController(bundle, sim_cfg, sweep_rate=sweep_rate)
    obs_rows: list[np.ndarray] = []
    z_rows: list[np.ndarray] = []
    sub_i = sim_cfg.substeps_per_imitation
    per_ctrl = sim_cfg.substeps_per_control // sub_i
    for _ in range(n_serves):
        world.reset_arm(0, 0, base_y=0.0, q=READY_POSE, qd=np.zeros(4))
        pos0, vel0 = sample_launch(rng, sim_cfg, bc_cfg, toward_side=0)
        world.launch(0, pos0, vel0)
        tracker.reset()
        target = sample_target(rng, bc_cfg, opponent_side=1)
        last_z = None
        for _ctrl in range(60):
            pos, _, _ = world.paddle_poses()
            s = skill_state_features(world.q[0, 0], world.qd[0, 0], sim_cfg)
            b = ball_features(
                world.ball_p[0], world.ball_v[0], pos[0, 0], 0,
                np.float64(world.base_y[0, 0]), sim_cfg,
            )
            y = target_features(world.ball_p[0], target, 0, sim_cfg)
            obs = np.concatenate([s, b, y])
            z_expert = tracker.command(world, 0)
            obs_rows.append(obs)
            z_rows.append(z_expert)
            # act with the LEARNED policy (mean), expert only labels
            z_act, _ = act_ball_control(
                bc, s[None], b[None], y[None], last_z=last_z
            )
            z_act = z_act[0]
            last_z = z_act[None]
            done = False
            for _ in range(per_ctrl):
                s30 = skill_state_features(world.q[0, 0], world.qd[0, 0], sim_cfg)
                world.set_targets(0, 0, bundle.act_mean(s30, z_act))
                events = world.step(sub_i)[0]
                for e in events:
                    if e.kind in (
                        EventKind.BALL_OUT,
                        EventKind.DOUBLE_BOUNCE,
                        EventKind.NET_HIT,
                    ):
                        done = True
                    elif e.kind == EventKind.TABLE_BOUNCE_FAR and world.cbp[0, 0]:
                        done = True
            if done or world.ball_dead[0]:
                break
    return np.asarray(obs_rows), np.asarray(z_rows)


def pretrain_ball_control(
    bc: "BallControlPolicy",
    obs: np.ndarray,
    z_cmd: np.ndarray,
    steps: int,
    lr: float,
    rng: np.random.Generator,
    batch: int = 256,
) -> float:
    """Clone the scripted latent sequences into the policy mean."""
    from .nn import Tensor, grad_of, tape

    if len(obs) == 0:
        return float("nan")
    opt = Adam(bc.policy.params(), lr)
    loss_val = float("nan")
    for _ in range(steps):
        idx = rng.integers(0, len(obs), min(batch, len(obs)))
        mu = bc.policy.mean_net.forward(Tensor(obs[idx]))
        err = mu - Tensor(z_cmd[idx])
        loss = tape.tmean(tape.tsum(err * err, axis=1))
        opt.step([g.data for g in grad_of(loss, bc.policy.params())])
        loss_val = float(loss.data)
    return loss_val


def train_ball_control(
    skill: int,
    bundle: ImitationBundle,
    sim_cfg: SimConfig,
    net_cfg: NetConfig,
    ppo_cfg: PpoConfig,
    bc_cfg: BallControlConfig,
    rng: np.random.Generator,
    total_samples: int | None = None,
    n_envs: int = 32,
    refs=None,
) -> BallControlPolicy:
    """PPO-train the latent-steering policy for one frozen imitation bundle.

    When a reference set is supplied, the policy is first cloned from
    scripted successful returns (see scripted_return_data), then refined.
    """
    bc = make_ball_control(skill, net_cfg, rng)
    if refs is not None and bc_cfg.bootstrap_serves > 0:
        obs, z_cmd, stats = scripted_return_data(
            bundle, refs, skill, sim_cfg, bc_cfg, rng, bc_cfg.bootstrap_serves
        )
        loss = pretrain_ball_control(
            bc, obs, z_cmd, bc_cfg.bootstrap_steps, bc_cfg.bootstrap_lr, rng
        )
        for _ in range(bc_cfg.dagger_rounds):
            d_obs, d_z = dagger_return_data(
                bc, bundle, sim_cfg, bc_cfg, rng, bc_cfg.dagger_serves
            )
            obs = np.concatenate([obs, d_obs])
            z_cmd = np.concatenate([z_cmd, d_z])
            loss = pretrain_ball_control(
                bc, obs, z_cmd, bc_cfg.bootstrap_steps // 2, bc_cfg.bootstrap_lr, rng
            )
        bc.curve.append({"step": 0, "bootstrap_mse": loss, **stats})
    env = _LaunchTaskEnv(sim_cfg, bc_cfg, rng, n_envs, fixed_skill=skill)
    actor = _BallControlActor(bc, bundle, rng)
    opt_p = Adam(bc.policy.params(), ppo_cfg.learning_rate)
    opt_v = Adam(bc.value_net.params(), ppo_cfg.learning_rate)
    total = total_samples if total_samples is not None else bc_cfg.total_samples
    horizon = max(1, ppo_cfg.tuples_per_update // n_envs)
    n_iters = max(0, total // (horizon * n_envs))
    for it in range(n_iters):
        buf = RolloutBuffer(horizon, n_envs, CONTROL_OBS_DIM, net_cfg.latent_dim)
        env.returns_ok = 0
        env.launches = 0
        env.landing_errors.clear()
        _run_control_episode_batch(env, actor, horizon, buf, sim_cfg, bc_cfg.episode_length)
        stats = ppo_update(bc.policy, bc.value_net, buf, ppo_cfg, opt_p, opt_v, rng)
        bc.curve.append(
            {
                "step": (it + 1) * horizon * n_envs,
                "reward_mean": stats["mean_reward"],
                "return_rate": env.returns_ok / max(1, env.launches),
                "landing_error": float(np.mean(env.landing_errors)) if env.landing_errors else float("nan"),
            }
        )
    return bc


def train_mixer(
    stack: ControlStack,
    sim_cfg: SimConfig,
    net_cfg: NetConfig,
    ppo_cfg: PpoConfig,
    bc_cfg: BallControlConfig,
    mix_cfg: MixerConfig,
    rng: np.random.Generator,
    total_samples: int | None = None,
    n_envs: int = 32,
) -> MixerPolicy:
    """PPO-train the mixer over frozen skills: random launches, random skill
    commands, random targets, the same shaped rewards."""
    for skill in (1, 2, 3, 4, 5):
        if skill not in stack.ball_controls:
            raise ValueError(f"stack missing ball-control policy for skill {skill}")
    mixer = make_mixer(net_cfg, rng)
    env = _LaunchTaskEnv(sim_cfg, bc_cfg, rng, n_envs, fixed_skill=None)
    actor = _MixerActor(mixer, stack, rng)
    opt_p = Adam(mixer.policy.params(), ppo_cfg.learning_rate)
    opt_v = Adam(mixer.value_net.params(), ppo_cfg.learning_rate)
    total = total_samples if total_samples is not None else mix_cfg.total_samples
    horizon = max(1, ppo_cfg.tuples_per_update // n_envs)
    n_iters = max(0, total // (horizon * n_envs))
    for it in range(n_iters):
        buf = RolloutBuffer(horizon, n_envs, MIXER_OBS_DIM, net_cfg.latent_dim + 4)
        env.returns_ok = 0
        env.launches = 0
        actor._env_skills = env.skills
        _run_control_episode_batch(env, actor, horizon, buf, sim_cfg, mix_cfg.episode_length)
        stats = ppo_update(mixer.policy, mixer.value_net, buf, ppo_cfg, opt_p, opt_v, rng)
        mixer.curve.append(
            {
                "step": (it + 1) * horizon * n_envs,
                "reward_mean": stats["mean_reward"],
                "return_rate": env.returns_ok / max(1, env.launches),
            }
        )
    return mixer


def collect_strike_segments(
    stack: ControlStack,
    sim_cfg: SimConfig,
    bc_cfg: BallControlConfig,
    seed: int,
    n_launches: int,
    n_envs: int = 16,
    mode: str = "mixer",
    transition_policy: BallControlPolicy | None = None,
) -> tuple[list, dict[int, list]]:
    """Launch balls at a stack-driven agent with random skill commands and
    record per-strike state segments (imitation-rate features) plus the
    contact-tick states, keyed by commanded skill.

    Returns (segments, contact_states_by_command); segments carry the
    commanded skill for the accuracy metric.
    """
    from .metrics import StrikeSegment

    rng = np.random.default_rng(seed)
    env = _LaunchTaskEnv(sim_cfg, bc_cfg, rng, n_envs, fixed_skill=None)
    controllers = [
        StackController(stack, 0, sim_cfg, mode=mode, transition_policy=transition_policy)
        for _ in range(n_envs)
    ]
    history: list[list[np.ndarray]] = [[] for _ in range(n_envs)]
    hit_frame: list[int | None] = [None] * n_envs
    segments: list[StrikeSegment] = []
    contacts: dict[int, list] = {s: [] for s in (1, 2, 3, 4, 5)}

    def begin(w):
        controllers[w].begin_point()
        controllers[w].set_command(
            _one_hot5(env.skills[w]), env.targets[w]
        )
        history[w].clear()
        hit_frame[w] = None

    def finish(w):
        if hit_frame[w] is not None and len(history[w]) >= 2:
            states = np.stack(history[w])
            lo = max(0, hit_frame[w] - 10)
            hi = min(len(states), hit_frame[w] + 6)
            if hi - lo >= 2:
                segments.append(StrikeSegment(states[lo:hi], int(env.skills[w])))
                contacts[int(env.skills[w])].append(states[min(hit_frame[w], len(states) - 1)])

    for w in range(n_envs):
        begin(w)
    sub_i = sim_cfg.substeps_per_imitation
    guard = 0
    while env.launches - n_envs < n_launches and guard < 200000:
        guard += 1
        env.apply_footwork()
        tick0 = int(env.world.tick[0])
        for w in range(n_envs):
            if tick0 % sim_cfg.substeps_per_control == 0:
                controllers[w].control_step(env.world, w)
            controllers[w].imitation_step(env.world, w)
        s_frame = skill_state_features(env.world.q[:, 0], env.world.qd[:, 0], sim_cfg)
        for w in range(n_envs):
            history[w].append(s_frame[w])
        events = env.world.step(sub_i)
        for w in range(n_envs):
            for e in events[w]:
                controllers[w].on_events([e])
                if e.kind == EventKind.PADDLE_HIT and hit_frame[w] is None:
                    hit_frame[w] = len(history[w]) - 1
        prev_age = env.launch_age.copy()
        env.resolve_events(events)
        for w in range(n_envs):
            if env.launch_age[w] < prev_age[w] or env.launch_age[w] == 0:
                finish(w)
                begin(w)
    return segments, contacts


def _one_hot5(skill: int) -> np.ndarray:
    d = np.zeros(5)
    d[int(skill) - 1] = 1.0
    return d


def train_transition_policy(
    universal_bundle: ImitationBundle,
    sim_cfg: SimConfig,
    net_cfg: NetConfig,
    ppo_cfg: PpoConfig,
    bc_cfg: BallControlConfig,
    rng: np.random.Generator,
    total_samples: int | None = None,
    refs=None,
) -> BallControlPolicy:
    """Transition controller for the hard-switching ablation: the same
    ball-control architecture trained over the universal imitation policy."""
    return train_ball_control(
        0, universal_bundle, sim_cfg, net_cfg, ppo_cfg, bc_cfg, rng,
        total_samples=total_samples, refs=refs,
    )


def et_ablation_controller(
    stack: ControlStack, side: int, cfg: SimConfig, transition_policy: BallControlPolicy
) -> StackController:
    """Hard-switching controller: pure skill control except between the
    ball crossing the net toward the agent and the agent's return, when the
    transition policy drives the universal imitation policy."""
    return StackController(stack, side, cfg, mode="et", transition_policy=transition_policy)


def evaluate_return_task(
    stack_or_policy,
    bundle: ImitationBundle | None,
    sim_cfg: SimConfig,
    bc_cfg: BallControlConfig,
    seed: int,
    n_launches: int = 200,
    skill: int | None = None,
    n_envs: int = 16,
) -> dict:
    """Deterministic-policy evaluation on the training launch distribution.

    Pass a BallControlPolicy + its bundle, or a ControlStack (mixer mode).
    Returns return rate, mean landing error, and per-launch records.
    """
    rng = np.random.default_rng(seed)
    if isinstance(stack_or_policy, ControlStack):
        env = _LaunchTaskEnv(sim_cfg, bc_cfg, rng, n_envs, fixed_skill=skill)
        actor = _MixerActor(stack_or_policy.mixer, stack_or_policy, rng, deterministic=True)
        actor._env_skills = env.skills
        obs_dim, act_dim = MIXER_OBS_DIM, stack_or_policy.mixer.latent_dim + 4
    else:
        env = _LaunchTaskEnv(sim_cfg, bc_cfg, rng, n_envs, fixed_skill=stack_or_policy.skill)
        actor = _BallControlActor(stack_or_policy, bundle, rng, deterministic=True)
        obs_dim, act_dim = CONTROL_OBS_DIM, stack_or_policy.policy.action_dim
    while env.launches - n_envs < n_launches:
        if isinstance(actor, _MixerActor):
            actor._env_skills = env.skills
        _run_control_episode_batch(env, actor, 8, None, sim_cfg, episode_length=10**9)
    return {
        "return_rate": env.returns_ok / max(1, env.launches),
        "landing_error": float(np.mean(env.landing_errors)) if env.landing_errors else float("inf"),
        "launches": env.launches,
        "returns": env.returns_ok,
    }
