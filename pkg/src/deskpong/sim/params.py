"""Packed scalar parameter vector shared by both step kernels.

Both kernels (compiled and pure) read the same float64 vector; index names
live here so the layouts can never drift apart.
"""

from __future__ import annotations

import numpy as np

from ..config import SimConfig

P_DT = 0
P_GRAVITY = 1
P_DAMPING = 2
P_HALF_LEN = 3
P_HALF_WID = 4
P_TABLE_H = 5
P_NET_H = 6
P_NET_OVERHANG = 7
P_E_TABLE = 8
P_E_PADDLE = 9
P_E_NET = 10
P_CONTACT_RADIUS = 11
P_FLOOR_Z = 12
P_OUT_X = 13
P_OUT_Y = 14
P_L1 = 15
P_L2 = 16
P_L3 = 17
P_BASE_X = 18
P_BASE_Z = 19
P_KP = 20
P_KD = 21
P_INERTIA = 22
P_QLIM = 23
P_VCAP = 24
P_SPIN_MU = 25
P_SLIDE_SPEED = 26
N_PARAMS = 27

# side_kind codes
SIDE_ARM = 0
SIDE_FREE = 1
SIDE_ABSENT = 2


def pack(cfg: SimConfig) -> np.ndarray:
    par = np.zeros(N_PARAMS, dtype=np.float64)
    par[P_DT] = cfg.dt
    par[P_GRAVITY] = cfg.gravity
    par[P_DAMPING] = cfg.damping_k
    par[P_HALF_LEN] = cfg.half_length
    par[P_HALF_WID] = cfg.half_width
    par[P_TABLE_H] = cfg.table_height
    par[P_NET_H] = cfg.net_height
    par[P_NET_OVERHANG] = cfg.net_overhang
    par[P_E_TABLE] = cfg.restitution_table
    par[P_E_PADDLE] = cfg.restitution_paddle
    par[P_E_NET] = cfg.restitution_net
    par[P_CONTACT_RADIUS] = cfg.paddle_radius + cfg.ball_radius
    par[P_FLOOR_Z] = cfg.floor_z
    par[P_OUT_X] = cfg.out_x
    par[P_OUT_Y] = cfg.out_y
    par[P_L1], par[P_L2], par[P_L3] = cfg.link_lengths
    par[P_BASE_X] = cfg.base_x
    par[P_BASE_Z] = cfg.base_z
    par[P_KP] = cfg.pd_kp
    par[P_KD] = cfg.pd_kd
    par[P_INERTIA] = cfg.joint_inertia
    par[P_QLIM] = cfg.joint_limit
    par[P_VCAP] = cfg.joint_vel_cap
    par[P_SPIN_MU] = cfg.spin_friction
    par[P_SLIDE_SPEED] = cfg.slide_speed
    return par
