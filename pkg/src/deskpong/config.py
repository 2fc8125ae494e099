"""Run configuration: every tunable in one place, with "desk" and "paper" presets.

The desk preset is sized so the full pipeline trains on a laptop CPU in
minutes; the paper preset keeps the original hyper-parameter table values
(network widths, batch sizes, learning rate, latent dimension) for anyone
who wants to scale back up.

Configs round-trip through YAML (`RunConfig.to_yaml` / `from_yaml`); unknown
keys are rejected so a typo never silently falls back to a default.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from typing import Any

import yaml


class ConfigError(ValueError):
    """Raised for unknown keys or invalid values in a config document."""


@dataclass
class SimConfig:
    """Physics world parameters (SI units, table frame)."""

    dt: float = 1.0 / 120.0
    gravity: float = 9.8
    # linear air drag, 1/s; landing prediction stays drag-free. Light balls
    # are drag-dominated, so the desk default is deliberately large.
    damping_k: float = 0.30
    table_length: float = 2.74
    table_width: float = 1.525
    table_height: float = 0.76
    net_height: float = 0.1525
    net_overhang: float = 0.1525
    restitution_table: float = 0.88
    restitution_paddle: float = 0.70
    restitution_net: float = 0.15
    paddle_radius: float = 0.18
    ball_radius: float = 0.02
    floor_z: float = 0.05            # ball below this is out
    out_x: float = 3.2
    out_y: float = 2.5
    spin_friction: float = 0.0       # tangential speed loss at paddle contact; 0 = off
    # arm (4 revolute joints on a fixed lateral slide)
    link_lengths: tuple[float, float, float] = (0.40, 0.35, 0.18)
    base_x: float = 1.62             # shoulder distance from table center along x
    base_z: float = 0.90
    joint_limit: float = 2.7         # symmetric, radians
    joint_vel_cap: float = 40.0      # rad/s
    slide_speed: float = 1.6         # lateral base slide speed cap, m/s
    pd_kp: float = 60.0
    pd_kd: float = 6.0
    joint_inertia: float = 1.0
    # control rates, expressed in physics substeps
    substeps_per_imitation: int = 4    # 30 Hz
    substeps_per_control: int = 8      # 15 Hz (ball control + mixer)
    substeps_per_frame: int = 2        # 60 Hz service frames

    @property
    def half_length(self) -> float:
        return self.table_length / 2.0

    @property
    def half_width(self) -> float:
        return self.table_width / 2.0


@dataclass
class NetConfig:
    """Shared network shapes. Hidden sizes follow the preset."""

    policy_hidden: tuple[int, ...] = (64, 64)
    control_hidden: tuple[int, ...] = (128, 128)
    value_hidden: tuple[int, ...] = (64, 64)
    disc_hidden: tuple[int, ...] = (64, 64)
    cvae_hidden: tuple[int, ...] = (64, 64)
    latent_dim: int = 8              # skill latent (unit sphere)
    cvae_latent_dim: int = 8
    policy_sigma_sq: float = 0.0025  # imitation policies
    control_sigma_sq: float = 0.004  # ball control / mixer (paper preset 0.01)
    init_scale: float = 1.0


@dataclass
class PpoConfig:
    """PPO + GAE hyper-parameters."""

    discount: float = 0.99
    gae_lambda: float = 0.95
    clip_threshold: float = 0.2
    learning_rate: float = 3e-4
    tuples_per_update: int = 4096
    policy_batch_size: int = 256
    epochs: int = 5
    episode_length: int = 64
    value_loss_weight: float = 0.5
    normalize_advantages: bool = True

    def __post_init__(self) -> None:
        if not (0.0 < self.discount <= 1.0):
            raise ConfigError(f"discount must be in (0, 1], got {self.discount}")
        if not (0.0 <= self.gae_lambda <= 1.0):
            raise ConfigError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        if self.clip_threshold <= 0.0:
            raise ConfigError(f"clip_threshold must be > 0, got {self.clip_threshold}")


@dataclass
class ImitationConfig:
    """Adversarial imitation (per-skill and universal policies)."""

    gradient_penalty_weight: float = 5.0
    skill_discovery_weight: float = 0.5   # beta: encoder term in the reward
    diversity_weight: float = 0.01
    encoder_loss_weight: float = 0.5
    disc_batch_size: int = 256
    disc_updates_per_iter: int = 4
    disc_learning_rate: float = 1e-3
    prob_clamp: float = 1e-5
    total_samples: int = 200_000
    episode_length: int = 48              # imitation control steps (30 Hz)
    reward_scale: float = 1.0
    latent_resample_prob: float = 0.05    # per step, fresh sphere latent
    # bootstrap: behavior-clone policy/encoder onto the clip latent map
    # before the adversarial stage
    bc_pretrain_steps: int = 2000
    bc_batch_size: int = 256
    bc_learning_rate: float = 1e-3
    anchor_latent_prob: float = 0.5       # rollout latents drawn near clip latents
    bc_anchor_weight: float = 5.0         # auxiliary clone loss during the RL stage
    # Apply the latent-diversity penalty inside training. With phase-wheel
    # clip latents the penalty's KL target is orders of magnitude below the
    # pose differences the servo needs, so the desk preset disables it
    # (the objective itself stays implemented and tested).
    use_diversity_objective: bool = False


@dataclass
class ReferenceConfig:
    """Synthetic stroke-reference generator."""

    clips_per_skill: int = 200
    min_frames: int = 20
    max_frames: int = 40
    frame_hz: float = 30.0


@dataclass
class BallControlConfig:
    """Ball-control policy training (latent steering of a frozen skill)."""

    total_samples: int = 260_000
    episode_length: int = 56              # control steps (15 Hz)
    paddle_reward_weight: float = 0.8
    ball_reward_weight: float = 0.8
    style_reward_weight: float = 0.2
    # scripted-return bootstrap: search clip/timing/intensity per serve,
    # keep successes, behavior-clone the latent sequences (targets relabeled
    # to the actual landing) before PPO refinement
    bootstrap_serves: int = 700
    bootstrap_steps: int = 3000
    bootstrap_lr: float = 1e-3
    dagger_rounds: int = 3
    dagger_serves: int = 350
    launch_speed: tuple[float, float] = (3.2, 4.2)
    launch_entry_height: tuple[float, float] = (0.25, 0.45)
    launch_depth: tuple[float, float] = (0.55, 0.90)   # bounce distance from net
    launch_lateral: tuple[float, float] = (-0.50, 0.50)
    launch_backswing: tuple[float, float] = (1.1, 1.6)  # launch distance behind net
    target_depth: tuple[float, float] = (0.45, 1.25)   # landing targets, other half
    target_lateral: tuple[float, float] = (-0.55, 0.55)


@dataclass
class MixerConfig:
    """Mixer policy training (blend weights + universal latent)."""

    total_samples: int = 260_000
    episode_length: int = 56


@dataclass
class StrategyConfig:
    """CVAE strategy learning via iterative behavior cloning."""

    kl_weight: float = 0.01
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs_per_iteration: int = 60
    rallies_per_iteration: int = 500
    accumulate_demos: bool = True
    warm_start: bool = True
    eval_points: int = 2000
    rl_episode_length: int = 500
    rl_episode_length_cooperation: int = 1000
    rl_goal_reward: float = 10.0


@dataclass
class MatchConfig:
    """Agent-agent match harness."""

    max_rally_ticks: int = 3000
    points_per_eval: int = 2000


@dataclass
class ServiceConfig:
    """Realtime play service."""

    frame_hz: float = 60.0
    paddle_speed_cap: float = 20.0
    min_finetune_rallies: int = 20
    min_adapt_strokes: int = 30


@dataclass
class RunConfig:
    """Top-level config: one section per subsystem."""

    preset: str = "desk"
    seed: int = 0
    sim: SimConfig = field(default_factory=SimConfig)
    nets: NetConfig = field(default_factory=NetConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    imitation: ImitationConfig = field(default_factory=ImitationConfig)
    references: ReferenceConfig = field(default_factory=ReferenceConfig)
    ball_control: BallControlConfig = field(default_factory=BallControlConfig)
    mixer: MixerConfig = field(default_factory=MixerConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    match: MatchConfig = field(default_factory=MatchConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "RunConfig":
        base = preset(str(doc.get("preset", "desk")))
        return _apply_overrides(base, doc)

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        doc = yaml.safe_load(text)
        if doc is None:
            doc = {}
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a mapping")
        return cls.from_dict(doc)

    def digest(self) -> str:
        import hashlib

        return hashlib.sha256(self.to_yaml().encode()).hexdigest()[:16]


def _apply_overrides(cfg: RunConfig, doc: dict[str, Any]) -> RunConfig:
    section_names = {f.name for f in fields(RunConfig)}
    for key, value in doc.items():
        if key not in section_names:
            raise ConfigError(f"unknown config section: {key!r}")
        if key in ("preset", "seed"):
            setattr(cfg, key, value)
            continue
        section = getattr(cfg, key)
        if not isinstance(value, dict):
            raise ConfigError(f"section {key!r} must be a mapping")
        valid = {f.name: f for f in fields(section)}
        for k, v in value.items():
            if k not in valid:
                raise ConfigError(f"unknown key {key}.{k}")
            current = getattr(section, k)
            if isinstance(current, tuple) and isinstance(v, (list, tuple)):
                v = tuple(v)
            setattr(section, k, v)
        if hasattr(section, "__post_init__"):
            section.__post_init__()
    return cfg


def preset(name: str) -> RunConfig:
    """Build a named preset. "desk" trains in minutes; "paper" keeps the
    original hyper-parameter table values."""
    if name == "desk":
        return RunConfig(preset="desk")
    if name == "paper":
        cfg = RunConfig(preset="paper")
        cfg.nets.policy_hidden = (1024, 1024, 512)
        cfg.nets.value_hidden = (1024, 1024, 512)
        cfg.nets.disc_hidden = (1024, 1024, 512)
        cfg.nets.cvae_hidden = (1024, 1024, 512)
        cfg.nets.latent_dim = 64
        cfg.nets.cvae_latent_dim = 64
        cfg.nets.control_sigma_sq = 0.01
        cfg.ppo.learning_rate = 1.0e-5
        cfg.ppo.tuples_per_update = 258944
        cfg.ppo.policy_batch_size = 16384
        cfg.ppo.episode_length = 500
        cfg.imitation.disc_batch_size = 4096
        cfg.imitation.total_samples = 2_000_000_000
        cfg.imitation.use_diversity_objective = True
        cfg.ball_control.total_samples = 4_000_000_000
        cfg.mixer.total_samples = 4_000_000_000
        cfg.strategy.eval_points = 10_000
        cfg.match.points_per_eval = 10_000
        return cfg
    raise ConfigError(f"unknown preset: {name!r}")
