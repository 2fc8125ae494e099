"""Observation feature builders, vectorized over batches of worlds.

All skill-level features live in the agent's local frame: origin at the
shoulder, x toward the net, y lateral, z up (the far agent's frame is the
table frame rotated half a turn about z).
"""

from __future__ import annotations

import numpy as np

from .config import SimConfig

SKILL_STATE_DIM = 14  # 4 angles + 4 velocities + paddle pos (3) + paddle vel (3)
BALL_FEATURE_DIM = 9
TARGET_FEATURE_DIM = 3

# fixed feature scales (deterministic; no running statistics): joint and
# paddle velocities are compressed to the same order as the angles/positions
JOINT_VEL_SCALE = 0.125
PADDLE_VEL_SCALE = 0.2
BALL_VEL_SCALE = 0.2


def local_paddle_batch(q: np.ndarray, qd: np.ndarray, cfg: SimConfig):
    """Local-frame paddle position, normal, velocity for a batch of arms.

    q, qd: (..., 4). Returns three (..., 3) arrays. Matches the kernel FK
    (same chain; shoulder-local coordinates, so side does not matter).
    """
    l1, l2, l3 = cfg.link_lengths
    q1, q2, q3, q4 = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    w1, w2, w3, w4 = qd[..., 0], qd[..., 1], qd[..., 2], qd[..., 3]
    c2, s2 = np.cos(q2), np.sin(q2)
    f1 = q1
    f2 = q1 + q3
    f3 = q1 + q3 + q4
    cf1, sf1 = np.cos(f1), np.sin(f1)
    cf2, sf2 = np.cos(f2), np.sin(f2)
    cf3, sf3 = np.cos(f3), np.sin(f3)

    radial = l1 * cf1 + l2 * cf2 + l3 * cf3
    pos = np.stack([c2 * radial, s2 * radial, -(l1 * sf1 + l2 * sf2 + l3 * sf3)], axis=-1)
    nrm = np.stack([c2 * cf3, s2 * cf3, -sf3], axis=-1)

    dr = -(l1 * sf1 * w1 + l2 * sf2 * (w1 + w3) + l3 * sf3 * (w1 + w3 + w4))
    vx = c2 * dr - s2 * radial * w2
    vy = s2 * dr + c2 * radial * w2
    vz = -(l1 * cf1 * w1 + l2 * cf2 * (w1 + w3) + l3 * cf3 * (w1 + w3 + w4))
    vel = np.stack([vx, vy, vz], axis=-1)
    return pos, nrm, vel


def skill_state_features(q: np.ndarray, qd: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """Per-frame state features: joint angles, scaled joint velocities,
    local paddle position and scaled paddle velocity."""
    pos, _, vel = local_paddle_batch(q, qd, cfg)
    return np.concatenate(
        [q, qd * JOINT_VEL_SCALE, pos, vel * PADDLE_VEL_SCALE], axis=-1
    )


def to_local(vec_table: np.ndarray, side: int | np.ndarray) -> np.ndarray:
    """Rotate table-frame vectors into the agent's local axes (no shift)."""
    sigma = np.where(np.asarray(side) == 0, 1.0, -1.0)
    sigma = np.asarray(sigma)[..., None]
    out = np.array(vec_table, dtype=np.float64, copy=True)
    out[..., 0] = sigma[..., 0] * np.asarray(vec_table)[..., 0]
    out[..., 1] = sigma[..., 0] * np.asarray(vec_table)[..., 1]
    return out


def shoulder_position(side: int | np.ndarray, base_y: np.ndarray, cfg: SimConfig) -> np.ndarray:
    sigma = np.where(np.asarray(side) == 0, 1.0, -1.0)
    base_y = np.asarray(base_y, dtype=np.float64)
    sx = -sigma * cfg.base_x
    out = np.stack(
        [np.broadcast_to(sx, base_y.shape), base_y, np.full(base_y.shape, cfg.base_z)],
        axis=-1,
    )
    return out


def ball_features(
    ball_p: np.ndarray,
    ball_v: np.ndarray,
    paddle_pos_table: np.ndarray,
    side: int,
    base_y: np.ndarray,
    cfg: SimConfig,
) -> np.ndarray:
    """Ball velocity, ball-to-root offset and ball-to-paddle offset in the
    agent's local frame (9 values)."""
    root = shoulder_position(side, base_y, cfg)
    v_loc = to_local(ball_v, side) * BALL_VEL_SCALE
    d_root = to_local(ball_p - root, side)
    d_pad = to_local(ball_p - paddle_pos_table, side)
    return np.concatenate([v_loc, d_root, d_pad], axis=-1)


def target_features(
    ball_p: np.ndarray, target_xy: np.ndarray, side: int, cfg: SimConfig
) -> np.ndarray:
    """Ball-to-target offset (target on the table surface), local frame."""
    tgt = np.concatenate(
        [target_xy, np.full(target_xy.shape[:-1] + (1,), cfg.table_height)], axis=-1
    )
    return to_local(tgt - ball_p, side)
