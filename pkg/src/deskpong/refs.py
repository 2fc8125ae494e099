"""Synthetic stroke-reference generator.

Stands in for a motion-capture corpus: produces labeled joint-trajectory
clips for the five stroke skills. Each skill has a characteristic keyframe
template (drives are fast lateral sweeps, pushes slower downward chops
with an open face, the smash an overhead high-speed strike; backhand
variants mirror the shoulder yaw), randomized in amplitude and timing per
clip. Clips start and end near the ready pose so rollouts can chain them.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.interpolate import CubicSpline

from .config import ReferenceConfig, SimConfig
from .features import skill_state_features


class SkillId(IntEnum):
    FOREHAND_DRIVE = 1
    FOREHAND_PUSH = 2
    FOREHAND_SMASH = 3
    BACKHAND_DRIVE = 4
    BACKHAND_PUSH = 5


ALL_SKILLS = tuple(SkillId)

READY_POSE = np.array([0.30, 0.0, -0.60, 0.30])

# keyframe templates: (time fractions, per-joint angle offsets from ready)
# for shoulder pitch (+down), shoulder yaw (+forehand side) and elbow, plus
# an absolute face-angle profile (pitch of the paddle normal: 0 = facing
# the net, negative = open face). The wrist row is derived from the face
# profile, which keeps the face controlled through the punch core (elbow
# cocked deep, then extension through contact carrying forward speed).
_TEMPLATES: dict[SkillId, dict] = {
    SkillId.FOREHAND_DRIVE: {
        "t": [0.0, 0.3, 0.55, 0.75, 1.0],
        "dq": [
            [0.0, 0.06, -0.04, 0.02, 0.0],    # pitch: level drive
            [0.0, 0.40, 0.05, -0.15, 0.0],    # yaw: moderate forehand sweep
            [0.0, -0.85, -0.10, 0.35, 0.0],   # elbow: cock deep, punch out
        ],
        "face": [0.0, 0.05, 0.02, 0.05, 0.0],
        "frames": (20, 26),
        "speed_scale": 1.0,
    },
    SkillId.FOREHAND_PUSH: {
        "t": [0.0, 0.32, 0.6, 0.8, 1.0],
        "dq": [
            [0.0, -0.12, 0.18, 0.28, 0.0],    # pitch: lift then chop under
            [0.0, 0.25, 0.08, -0.05, 0.0],    # yaw: small forehand
            [0.0, -0.60, -0.15, 0.15, 0.0],   # gentler punch
        ],
        "face": [0.0, -0.15, -0.40, -0.25, 0.0],  # open face, brush under
        "frames": (26, 34),
        "speed_scale": 0.55,
    },
    SkillId.FOREHAND_SMASH: {
        "t": [0.0, 0.3, 0.52, 0.72, 1.0],
        "dq": [
            [0.0, -0.55, 0.02, 0.35, 0.0],    # raise overhead, strike down
            [0.0, 0.55, 0.05, -0.25, 0.0],    # wide fast sweep
            [0.0, -1.05, -0.15, 0.45, 0.0],   # hardest punch
        ],
        "face": [0.0, 0.0, 0.18, 0.30, 0.0],  # closing face, downward strike
        "frames": (20, 24),
        "speed_scale": 1.45,
    },
}


def _mirrored(template: dict) -> dict:
    out = {k: v for k, v in template.items()}
    dq = [row[:] for row in template["dq"]]
    dq[1] = [-v for v in dq[1]]  # flip shoulder yaw: backhand side
    out["dq"] = dq
    return out


_TEMPLATES[SkillId.BACKHAND_DRIVE] = _mirrored(_TEMPLATES[SkillId.FOREHAND_DRIVE])
_TEMPLATES[SkillId.BACKHAND_PUSH] = _mirrored(_TEMPLATES[SkillId.FOREHAND_PUSH])


@dataclass
class ReferenceClip:
    skill: SkillId
    angles: np.ndarray       # (T, 4)
    velocities: np.ndarray   # (T, 4), forward differences of angles
    latents: np.ndarray | None = None  # (T, d) per-frame unit latents

    @property
    def duration(self) -> int:
        return self.angles.shape[0]

    @property
    def embedding(self) -> np.ndarray:
        """Whole-clip latent: the mid-swing frame's coordinates."""
        return self.latents[self.latents.shape[0] // 2]


def clip_latents(
    pitch_bias: float,
    yaw_bias: float,
    amp: float,
    n_frames: int,
    rng: np.random.Generator,
    dim: int,
) -> np.ndarray:
    """Per-frame latent path of one clip on the unit sphere.

    The leading axes carry the swing's aim/intensity factors; two axes form
    a phase wheel that advances with the frame index. The imitation policy
    and encoder are bootstrapped onto this map, which turns the policy into
    a phase servo: holding a latent converges on that swing phase's pose,
    sweeping the wheel executes the stroke. Ball-control policies exploit
    exactly that handle at the control rate.
    """
    if dim < 6:
        raise ValueError("clip latents need at least 6 dimensions")
    lead = np.array([pitch_bias / 0.30, yaw_bias / 0.40, (amp - 1.0) / 0.15]) * 0.8
    tail = 0.35 * rng.standard_normal(dim - 5)
    theta = 2.0 * np.pi * np.arange(n_frames) / n_frames
    out = np.zeros((n_frames, dim))
    out[:, :3] = lead
    out[:, 3] = np.cos(theta)
    out[:, 4] = np.sin(theta)
    out[:, 5:] = tail
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def steer_latent_yaw(z: np.ndarray, bearing: float, pitch_adjust: float = 0.0) -> np.ndarray:
    """Replace a frame latent's yaw factor with the given swing bearing
    (radians), optionally shifting the pitch factor. The phase wheel has
    unit pre-normalization magnitude, so the clip's pre-normalization
    coordinates are recoverable from the wheel."""
    wheel = float(np.hypot(z[..., 3], z[..., 4]))
    if wheel < 1e-9:
        return z
    pre = np.asarray(z, dtype=np.float64) / wheel
    pre = pre.copy()
    pre[..., 1] = 0.8 * bearing / 0.40
    if pitch_adjust != 0.0:
        pre[..., 0] = pre[..., 0] + 0.8 * pitch_adjust / 0.30
    return pre / np.linalg.norm(pre, axis=-1, keepdims=True)


def generate_clip(
    skill: SkillId,
    rng: np.random.Generator,
    params: ReferenceConfig | None = None,
    embed_dim: int = 8,
) -> ReferenceClip:
    """One randomized clip of the given skill at the configured frame rate."""
    params = params or ReferenceConfig()
    tpl = _TEMPLATES[SkillId(skill)]
    lo, hi = tpl["frames"]
    lo = max(lo, params.min_frames)
    hi = min(hi, params.max_frames)
    n_frames = int(rng.integers(lo, hi + 1))

    t_key = np.asarray(tpl["t"], dtype=np.float64)
    # jitter interior keyframe times, keep them ordered
    jit = rng.uniform(-0.05, 0.05, size=t_key.size)
    jit[0] = jit[-1] = 0.0
    t_key = np.clip(t_key + jit, 0.0, 1.0)
    t_key = np.maximum.accumulate(t_key + np.linspace(0, 1e-6, t_key.size))

    amp = rng.uniform(0.85, 1.15)
    # whole-swing biases: each clip strikes at its own height and bearing,
    # so the reference manifold covers the strike zone
    pitch_bias = rng.uniform(-0.25, 0.50)
    yaw_bias = rng.uniform(-0.55, 0.55)
    keys = np.zeros((4, t_key.size))
    for j in range(3):
        dq = np.asarray(tpl["dq"][j], dtype=np.float64) * amp * rng.uniform(0.92, 1.08)
        keys[j] = READY_POSE[j] + dq
        if j == 0:
            keys[j] = keys[j] + pitch_bias
        elif j == 1:
            keys[j] = keys[j] + yaw_bias
    # wrist keyframes realize the face profile: face = pitch + elbow + wrist
    face = np.asarray(tpl["face"], dtype=np.float64) * rng.uniform(0.9, 1.1)
    keys[3] = face - keys[0] - keys[2]
    angles = np.zeros((n_frames, 4))
    u = np.linspace(0.0, 1.0, n_frames)
    for j in range(4):
        spline = CubicSpline(t_key, keys[j], bc_type="clamped")
        angles[:, j] = spline(u)

    dt = 1.0 / params.frame_hz
    velocities = np.zeros_like(angles)
    velocities[:-1] = (angles[1:] - angles[:-1]) / dt
    velocities[-1] = velocities[-2]
    lat = clip_latents(pitch_bias, yaw_bias, amp, n_frames, rng, embed_dim)
    return ReferenceClip(SkillId(skill), angles, velocities, lat)


class ReferenceSet:
    """Immutable labeled clip corpus with transition sampling."""

    def __init__(self, clips: list[ReferenceClip], cfg: SimConfig | None = None):
        if not clips:
            raise ValueError("empty reference set")
        self.clips = list(clips)
        self.cfg = cfg or SimConfig()
        self._features: list[np.ndarray] = [
            skill_state_features(c.angles, c.velocities, self.cfg) for c in self.clips
        ]
        self._by_skill: dict[int, list[int]] = {int(s): [] for s in ALL_SKILLS}
        for i, c in enumerate(self.clips):
            self._by_skill[int(c.skill)].append(i)

    @classmethod
    def generate(
        cls,
        rng: np.random.Generator,
        params: ReferenceConfig | None = None,
        cfg: SimConfig | None = None,
        embed_dim: int = 8,
    ) -> "ReferenceSet":
        params = params or ReferenceConfig()
        clips = [
            generate_clip(skill, rng, params, embed_dim)
            for skill in ALL_SKILLS
            for _ in range(params.clips_per_skill)
        ]
        return cls(clips, cfg)

    def clip_indices(self, skill_filter: int | None) -> list[int]:
        if skill_filter is None:
            return list(range(len(self.clips)))
        idx = self._by_skill.get(int(skill_filter), [])
        if not idx:
            raise ValueError(f"no clips for skill filter {skill_filter}")
        return idx

    def sample_transitions(
        self,
        skill_filter: int | None,
        batch: int,
        rng: np.random.Generator,
        return_skills: bool = False,
    ):
        """(s, s') pairs of consecutive frames, i.i.d. across the filtered clips.

        Frames are weighted by clip length, so with filter=None the skill mix
        matches the corpus proportions.
        """
        idx = self.clip_indices(skill_filter)
        lengths = np.array([self.clips[i].duration - 1 for i in idx])
        weights = lengths / lengths.sum()
        chosen = rng.choice(len(idx), size=batch, p=weights)
        s = np.zeros((batch, self._features[0].shape[-1]))
        s_next = np.zeros_like(s)
        skills = np.zeros(batch, dtype=np.int64)
        for k, ci in enumerate(chosen):
            feats = self._features[idx[ci]]
            f = int(rng.integers(0, feats.shape[0] - 1))
            s[k] = feats[f]
            s_next[k] = feats[f + 1]
            skills[k] = int(self.clips[idx[ci]].skill)
        if return_skills:
            return s, s_next, skills
        return s, s_next

    def sample_init_state(
        self, rng: np.random.Generator, skill_filter: int | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """Random reference frame (angles, velocities) for rollout starts."""
        idx = self.clip_indices(skill_filter)
        ci = idx[int(rng.integers(0, len(idx)))]
        clip = self.clips[ci]
        f = int(rng.integers(0, clip.duration))
        return clip.angles[f].copy(), clip.velocities[f].copy()

    def sample_bc_batch(
        self, skill_filter: int | None, batch: int, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Bootstrap tuples for the phase-servo mapping.

        Returns (state, commanded latent, target angles, s, s_next-latent):
        the policy learns (state at frame k, latent of frame k+d) -> angles
        of frame k+d for small leads d, i.e. "move to the commanded phase";
        the encoder learns transition -> the transition's own latent.
        """
        idx = self.clip_indices(skill_filter)
        lengths = np.array([self.clips[i].duration - 1 for i in idx])
        weights = lengths / lengths.sum()
        chosen = rng.choice(len(idx), size=batch, p=weights)
        dim_s = self._features[0].shape[-1]
        dim_z = self.clips[idx[0]].latents.shape[-1]
        s = np.zeros((batch, dim_s))
        sn = np.zeros((batch, dim_s))
        z_cmd = np.zeros((batch, dim_z))
        z_trans = np.zeros((batch, dim_z))
        a = np.zeros((batch, 4))
        for k, ci in enumerate(chosen):
            clip = self.clips[idx[ci]]
            feats = self._features[idx[ci]]
            f = int(rng.integers(0, clip.duration - 1))
            d = int(rng.integers(1, 4))
            g = min(f + d, clip.duration - 1)
            s[k] = feats[f]
            sn[k] = feats[f + 1]
            z_cmd[k] = clip.latents[g]
            z_trans[k] = clip.latents[f + 1]
            a[k] = clip.angles[g]
        return s, z_cmd, a, sn, z_trans

    def feature_dim(self) -> int:
        return self._features[0].shape[-1]

    def split(self, held_out_fraction: float, rng: np.random.Generator):
        """(train, held_out) ReferenceSets with per-skill stratification."""
        train: list[ReferenceClip] = []
        held: list[ReferenceClip] = []
        for skill in ALL_SKILLS:
            idx = list(self._by_skill[int(skill)])
            rng.shuffle(idx)
            n_held = max(1, int(len(idx) * held_out_fraction))
            held += [self.clips[i] for i in idx[:n_held]]
            train += [self.clips[i] for i in idx[n_held:]]
        return ReferenceSet(train, self.cfg), ReferenceSet(held, self.cfg)
