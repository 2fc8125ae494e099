"""Pure-Python step kernel (fallback when the compiled extension is absent).

`_speedups.pyx` mirrors this file operation-for-operation; both must produce
bit-identical trajectories (enforced by the kernel parity tests). Keep the
arithmetic order in sync when editing either.

Ball integration uses an average-velocity step (exact on drag-free
parabolas); joints use semi-implicit Euler. Contacts are detected on the
straight segment of each substep and resolved in the order paddle, net,
table, out-of-play.
"""

from __future__ import annotations

import math

from .params import (
    P_BASE_X,
    P_BASE_Z,
    P_CONTACT_RADIUS,
    P_DAMPING,
    P_DT,
    P_E_NET,
    P_E_PADDLE,
    P_E_TABLE,
    P_FLOOR_Z,
    P_GRAVITY,
    P_HALF_LEN,
    P_HALF_WID,
    P_INERTIA,
    P_KD,
    P_KP,
    P_L1,
    P_L2,
    P_L3,
    P_NET_H,
    P_NET_OVERHANG,
    P_OUT_X,
    P_OUT_Y,
    P_QLIM,
    P_SLIDE_SPEED,
    P_SPIN_MU,
    P_TABLE_H,
    P_VCAP,
    SIDE_ARM,
    SIDE_FREE,
)

COMPILED = False

_CONTACT_EPS = 1e-4

# event codes match types.EventKind
_EV_PADDLE_HIT = 1
_EV_BOUNCE_NEAR = 2
_EV_BOUNCE_FAR = 3
_EV_NET_HIT = 4
_EV_BALL_OUT = 5
_EV_DOUBLE_BOUNCE = 6
_EV_CROSS_NEAR = 7
_EV_CROSS_FAR = 8


def fk_one(par, side, base_y, q, out_pos, out_nrm, out_vel):
    """Paddle pose of one arm: position, outward normal, linear velocity.

    `q` is (angles[4], velocities[4]) as a flat 8-slot sequence. The chain
    shares one shoulder yaw; pitch angles accumulate along the links.
    """
    l1 = par[P_L1]
    l2 = par[P_L2]
    l3 = par[P_L3]
    sigma = 1.0 if side == 0 else -1.0

    q1 = q[0]
    q2 = q[1]
    q3 = q[2]
    q4 = q[3]
    w1 = q[4]
    w2 = q[5]
    w3 = q[6]
    w4 = q[7]

    c2 = math.cos(q2)
    s2 = math.sin(q2)
    f1 = q1
    f2 = q1 + q3
    f3 = q1 + q3 + q4
    cf1 = math.cos(f1)
    sf1 = math.sin(f1)
    cf2 = math.cos(f2)
    sf2 = math.sin(f2)
    cf3 = math.cos(f3)
    sf3 = math.sin(f3)

    # local-frame position (origin at the shoulder, x forward)
    px = l1 * c2 * cf1 + l2 * c2 * cf2 + l3 * c2 * cf3
    py = l1 * s2 * cf1 + l2 * s2 * cf2 + l3 * s2 * cf3
    pz = -(l1 * sf1 + l2 * sf2 + l3 * sf3)

    # velocity: dP/dq1..dq4 times joint velocities
    # dP/d(pitch chain): d/df of (c2*cf, s2*cf, -sf) is (-c2*sf, -s2*sf, -cf)
    g1x = -(l1 * c2 * sf1 + l2 * c2 * sf2 + l3 * c2 * sf3)
    g1y = -(l1 * s2 * sf1 + l2 * s2 * sf2 + l3 * s2 * sf3)
    g1z = -(l1 * cf1 + l2 * cf2 + l3 * cf3)
    g2x = -(l1 * s2 * cf1 + l2 * s2 * cf2 + l3 * s2 * cf3)
    g2y = l1 * c2 * cf1 + l2 * c2 * cf2 + l3 * c2 * cf3
    g3x = -(l2 * c2 * sf2 + l3 * c2 * sf3)
    g3y = -(l2 * s2 * sf2 + l3 * s2 * sf3)
    g3z = -(l2 * cf2 + l3 * cf3)
    g4x = -(l3 * c2 * sf3)
    g4y = -(l3 * s2 * sf3)
    g4z = -(l3 * cf3)

    vx = g1x * w1 + g2x * w2 + g3x * w3 + g4x * w4
    vy = g1y * w1 + g2y * w2 + g3y * w3 + g4y * w4
    vz = g1z * w1 + 0.0 * w2 + g3z * w3 + g4z * w4

    # table frame: far side is the local frame rotated pi about z
    bx = -sigma * par[P_BASE_X]
    out_pos[0] = bx + sigma * px
    out_pos[1] = base_y + sigma * py
    out_pos[2] = par[P_BASE_Z] + pz
    out_nrm[0] = sigma * (c2 * cf3)
    out_nrm[1] = sigma * (s2 * cf3)
    out_nrm[2] = -sf3
    out_vel[0] = sigma * vx
    out_vel[1] = sigma * vy
    out_vel[2] = vz


def arm_jacobian(par, side, q4angles, jac):
    """3x4 position Jacobian of the paddle center, table frame."""
    l1 = par[P_L1]
    l2 = par[P_L2]
    l3 = par[P_L3]
    sigma = 1.0 if side == 0 else -1.0
    q1, q2, q3, q4 = q4angles[0], q4angles[1], q4angles[2], q4angles[3]
    c2 = math.cos(q2)
    s2 = math.sin(q2)
    f1 = q1
    f2 = q1 + q3
    f3 = q1 + q3 + q4
    cf1, sf1 = math.cos(f1), math.sin(f1)
    cf2, sf2 = math.cos(f2), math.sin(f2)
    cf3, sf3 = math.cos(f3), math.sin(f3)
    cols = (
        (
            -(l1 * c2 * sf1 + l2 * c2 * sf2 + l3 * c2 * sf3),
            -(l1 * s2 * sf1 + l2 * s2 * sf2 + l3 * s2 * sf3),
            -(l1 * cf1 + l2 * cf2 + l3 * cf3),
        ),
        (
            -(l1 * s2 * cf1 + l2 * s2 * cf2 + l3 * s2 * cf3),
            l1 * c2 * cf1 + l2 * c2 * cf2 + l3 * c2 * cf3,
            0.0,
        ),
        (
            -(l2 * c2 * sf2 + l3 * c2 * sf3),
            -(l2 * s2 * sf2 + l3 * s2 * sf3),
            -(l2 * cf2 + l3 * cf3),
        ),
        (-(l3 * c2 * sf3), -(l3 * s2 * sf3), -(l3 * cf3)),
    )
    for j in range(4):
        jac[0, j] = sigma * cols[j][0]
        jac[1, j] = sigma * cols[j][1]
        jac[2, j] = cols[j][2]


def paddle_poses(par, side_kind, base_y, q, qd, fp_pos, fp_nrm, fp_vel, out_pos, out_nrm, out_vel):
    """Current paddle pose of every world/side into the out arrays."""
    n = side_kind.shape[0]
    buf = [0.0] * 8
    for w in range(n):
        for a in range(2):
            kind = side_kind[w, a]
            if kind == SIDE_ARM:
                for j in range(4):
                    buf[j] = q[w, a, j]
                    buf[4 + j] = qd[w, a, j]
                fk_one(par, a, base_y[w, a], buf, out_pos[w, a], out_nrm[w, a], out_vel[w, a])
            elif kind == SIDE_FREE:
                for k in range(3):
                    out_pos[w, a, k] = fp_pos[w, a, k]
                    out_nrm[w, a, k] = fp_nrm[w, a, k]
                    out_vel[w, a, k] = fp_vel[w, a, k]


def step_worlds(
    par,
    active,
    side_kind,
    ball_p,
    ball_v,
    ball_dead,
    base_y,
    base_y_target,
    q,
    qd,
    targets,
    fp_pos,
    fp_nrm,
    fp_vel,
    cbp,
    cbt,
    last_bounce,
    pad_cool,
    tick,
    vel_cap_hits,
    n_substeps,
    ev_world,
    ev_kind,
    ev_tick,
    ev_side,
    ev_pos,
):
    """Advance every active world by `n_substeps` physics substeps.

    Returns the number of events written, or -1 on event-buffer overflow
    (the caller must treat that as an error; no partial silence).
    """
    n = ball_p.shape[0]
    cap = ev_world.shape[0]
    n_ev = 0

    dt = par[P_DT]
    grav = par[P_GRAVITY]
    damp = par[P_DAMPING]
    half_len = par[P_HALF_LEN]
    half_wid = par[P_HALF_WID]
    table_h = par[P_TABLE_H]
    net_top = table_h + par[P_NET_H]
    net_halfspan = half_wid + par[P_NET_OVERHANG]
    e_table = par[P_E_TABLE]
    e_paddle = par[P_E_PADDLE]
    e_net = par[P_E_NET]
    c_rad = par[P_CONTACT_RADIUS]
    floor_z = par[P_FLOOR_Z]
    out_x = par[P_OUT_X]
    out_y = par[P_OUT_Y]
    kp = par[P_KP]
    kd = par[P_KD]
    inv_inertia = 1.0 / par[P_INERTIA]
    qlim = par[P_QLIM]
    vcap = par[P_VCAP]
    spin_mu = par[P_SPIN_MU]
    slide_dv = par[P_SLIDE_SPEED] * dt

    pp = [0.0, 0.0, 0.0]
    pn = [0.0, 0.0, 0.0]
    pv = [0.0, 0.0, 0.0]
    buf = [0.0] * 8

    for w in range(n):
        if not active[w]:
            continue
        for _ in range(n_substeps):
            # --- joints / free paddles ---
            for a in range(2):
                kind = side_kind[w, a]
                if kind == SIDE_ARM:
                    dy = base_y_target[w, a] - base_y[w, a]
                    if dy > slide_dv:
                        dy = slide_dv
                    elif dy < -slide_dv:
                        dy = -slide_dv
                    base_y[w, a] += dy
                    for j in range(4):
                        qj = q[w, a, j]
                        wj = qd[w, a, j]
                        torque = kp * (targets[w, a, j] - qj) - kd * wj
                        wj = wj + dt * torque * inv_inertia
                        if wj > vcap:
                            wj = vcap
                            vel_cap_hits[w] += 1
                        elif wj < -vcap:
                            wj = -vcap
                            vel_cap_hits[w] += 1
                        qj = qj + dt * wj
                        if qj > qlim:
                            qj = qlim
                            wj = 0.0
                        elif qj < -qlim:
                            qj = -qlim
                            wj = 0.0
                        q[w, a, j] = qj
                        qd[w, a, j] = wj
                elif kind == SIDE_FREE:
                    fp_pos[w, a, 0] += dt * fp_vel[w, a, 0]
                    fp_pos[w, a, 1] += dt * fp_vel[w, a, 1]
                    fp_pos[w, a, 2] += dt * fp_vel[w, a, 2]
                    ox = fp_vel[w, a, 3]
                    oy = fp_vel[w, a, 4]
                    oz = fp_vel[w, a, 5]
                    om = math.sqrt(ox * ox + oy * oy + oz * oz)
                    if om > 1e-12:
                        ang = om * dt
                        ux, uy, uz = ox / om, oy / om, oz / om
                        ca = math.cos(ang)
                        sa = math.sin(ang)
                        nx = fp_nrm[w, a, 0]
                        ny = fp_nrm[w, a, 1]
                        nz = fp_nrm[w, a, 2]
                        dot = ux * nx + uy * ny + uz * nz
                        rx = nx * ca + (uy * nz - uz * ny) * sa + ux * dot * (1.0 - ca)
                        ry = ny * ca + (uz * nx - ux * nz) * sa + uy * dot * (1.0 - ca)
                        rz = nz * ca + (ux * ny - uy * nx) * sa + uz * dot * (1.0 - ca)
                        rm = math.sqrt(rx * rx + ry * ry + rz * rz)
                        if rm > 1e-12:
                            fp_nrm[w, a, 0] = rx / rm
                            fp_nrm[w, a, 1] = ry / rm
                            fp_nrm[w, a, 2] = rz / rm

            if pad_cool[w] > 0:
                pad_cool[w] -= 1

            # --- ball ---
            if not ball_dead[w]:
                p0x = ball_p[w, 0]
                p0y = ball_p[w, 1]
                p0z = ball_p[w, 2]
                v0x = ball_v[w, 0]
                v0y = ball_v[w, 1]
                v0z = ball_v[w, 2]
                ax = -damp * v0x
                ay = -damp * v0y
                az = -grav - damp * v0z
                v1x = v0x + dt * ax
                v1y = v0y + dt * ay
                v1z = v0z + dt * az
                hdt2 = 0.5 * dt * dt
                p1x = p0x + dt * v0x + hdt2 * ax
                p1y = p0y + dt * v0y + hdt2 * ay
                p1z = p0z + dt * v0z + hdt2 * az

                contacted_paddle = False
                hit_net = False

                # paddle contacts, near then far (suppressed briefly after
                # a hit: the rotating face must not re-collect the ball)
                for a in range(2):
                    if contacted_paddle or pad_cool[w] > 0:
                        break
                    kind = side_kind[w, a]
                    if kind == SIDE_ARM:
                        for j in range(4):
                            buf[j] = q[w, a, j]
                            buf[4 + j] = qd[w, a, j]
                        fk_one(par, a, base_y[w, a], buf, pp, pn, pv)
                    elif kind == SIDE_FREE:
                        for k in range(3):
                            pp[k] = fp_pos[w, a, k]
                            pn[k] = fp_nrm[w, a, k]
                            pv[k] = fp_vel[w, a, k]
                    else:
                        continue
                    s0 = (p0x - pp[0]) * pn[0] + (p0y - pp[1]) * pn[1] + (p0z - pp[2]) * pn[2]
                    s1 = (p1x - pp[0]) * pn[0] + (p1y - pp[1]) * pn[1] + (p1z - pp[2]) * pn[2]
                    if s0 * s1 < 0.0:
                        tau = s0 / (s0 - s1)
                        cx = p0x + tau * (p1x - p0x)
                        cy = p0y + tau * (p1y - p0y)
                        cz = p0z + tau * (p1z - p0z)
                        dx = cx - pp[0]
                        dy = cy - pp[1]
                        dz = cz - pp[2]
                        if dx * dx + dy * dy + dz * dz <= c_rad * c_rad:
                            rx = v1x - pv[0]
                            ry = v1y - pv[1]
                            rz = v1z - pv[2]
                            vn = rx * pn[0] + ry * pn[1] + rz * pn[2]
                            sgn = 1.0 if s0 > 0.0 else -1.0
                            if vn * sgn < 0.0:
                                scale = (1.0 + e_paddle) * vn
                                rx -= scale * pn[0]
                                ry -= scale * pn[1]
                                rz -= scale * pn[2]
                                if spin_mu > 0.0:
                                    tnx = rx - (rx * pn[0] + ry * pn[1] + rz * pn[2]) * pn[0]
                                    tny = ry - (rx * pn[0] + ry * pn[1] + rz * pn[2]) * pn[1]
                                    tnz = rz - (rx * pn[0] + ry * pn[1] + rz * pn[2]) * pn[2]
                                    rx -= spin_mu * tnx
                                    ry -= spin_mu * tny
                                    rz -= spin_mu * tnz
                                v1x = rx + pv[0]
                                v1y = ry + pv[1]
                                v1z = rz + pv[2]
                                p1x = cx + sgn * _CONTACT_EPS * pn[0]
                                p1y = cy + sgn * _CONTACT_EPS * pn[1]
                                p1z = cz + sgn * _CONTACT_EPS * pn[2]
                                cbp[w, a] = 1
                                last_bounce[w] = 0
                                pad_cool[w] = 10
                                contacted_paddle = True
                                if n_ev >= cap:
                                    return -1
                                ev_world[n_ev] = w
                                ev_kind[n_ev] = _EV_PADDLE_HIT
                                ev_tick[n_ev] = tick[w] + 1
                                ev_side[n_ev] = a
                                ev_pos[n_ev, 0] = cx
                                ev_pos[n_ev, 1] = cy
                                ev_pos[n_ev, 2] = cz
                                n_ev += 1

                # net plane (skip in the substep of a paddle contact)
                if not contacted_paddle and p0x * p1x < 0.0:
                    tau = p0x / (p0x - p1x)
                    cy = p0y + tau * (p1y - p0y)
                    cz = p0z + tau * (p1z - p0z)
                    toward_near = p1x < p0x
                    if table_h <= cz <= net_top and abs(cy) <= net_halfspan:
                        hit_net = True
                        v1x = -e_net * v1x
                        sgn = 1.0 if p0x > 0.0 else -1.0
                        p1x = sgn * _CONTACT_EPS
                        p1y = cy
                        p1z = cz
                        if n_ev >= cap:
                            return -1
                        ev_world[n_ev] = w
                        ev_kind[n_ev] = _EV_NET_HIT
                        ev_tick[n_ev] = tick[w] + 1
                        ev_side[n_ev] = -1
                        ev_pos[n_ev, 0] = 0.0
                        ev_pos[n_ev, 1] = cy
                        ev_pos[n_ev, 2] = cz
                        n_ev += 1
                    elif cz > table_h:
                        if n_ev >= cap:
                            return -1
                        ev_world[n_ev] = w
                        ev_kind[n_ev] = _EV_CROSS_NEAR if toward_near else _EV_CROSS_FAR
                        ev_tick[n_ev] = tick[w] + 1
                        ev_side[n_ev] = -1
                        ev_pos[n_ev, 0] = 0.0
                        ev_pos[n_ev, 1] = cy
                        ev_pos[n_ev, 2] = cz
                        n_ev += 1

                # table bounce
                if not contacted_paddle and not hit_net and p0z > table_h >= p1z:
                    tau = (p0z - table_h) / (p0z - p1z)
                    cx = p0x + tau * (p1x - p0x)
                    cy = p0y + tau * (p1y - p0y)
                    if abs(cx) <= half_len and abs(cy) <= half_wid:
                        v1z = -e_table * v1z
                        p1x = cx
                        p1y = cy
                        p1z = table_h + _CONTACT_EPS
                        side = 1 if cx < 0.0 else 2  # 1 near, 2 far
                        if n_ev >= cap:
                            return -1
                        ev_world[n_ev] = w
                        ev_kind[n_ev] = _EV_BOUNCE_NEAR if side == 1 else _EV_BOUNCE_FAR
                        ev_tick[n_ev] = tick[w] + 1
                        ev_side[n_ev] = 0 if side == 1 else 1
                        ev_pos[n_ev, 0] = cx
                        ev_pos[n_ev, 1] = cy
                        ev_pos[n_ev, 2] = table_h
                        n_ev += 1
                        for a in range(2):
                            if cbp[w, a] == 1 and cbt[w, a] == 0:
                                cbt[w, a] = 1
                        if last_bounce[w] == side:
                            if n_ev >= cap:
                                return -1
                            ev_world[n_ev] = w
                            ev_kind[n_ev] = _EV_DOUBLE_BOUNCE
                            ev_tick[n_ev] = tick[w] + 1
                            ev_side[n_ev] = 0 if side == 1 else 1
                            ev_pos[n_ev, 0] = cx
                            ev_pos[n_ev, 1] = cy
                            ev_pos[n_ev, 2] = table_h
                            n_ev += 1
                        last_bounce[w] = side

                # out of play
                if p1z < floor_z or abs(p1x) > out_x or abs(p1y) > out_y:
                    ball_dead[w] = 1
                    v1x = 0.0
                    v1y = 0.0
                    v1z = 0.0
                    if n_ev >= cap:
                        return -1
                    ev_world[n_ev] = w
                    ev_kind[n_ev] = _EV_BALL_OUT
                    ev_tick[n_ev] = tick[w] + 1
                    ev_side[n_ev] = -1
                    ev_pos[n_ev, 0] = p1x
                    ev_pos[n_ev, 1] = p1y
                    ev_pos[n_ev, 2] = p1z
                    n_ev += 1

                ball_p[w, 0] = p1x
                ball_p[w, 1] = p1y
                ball_p[w, 2] = p1z
                ball_v[w, 0] = v1x
                ball_v[w, 1] = v1y
                ball_v[w, 2] = v1z

            tick[w] += 1

    return n_ev
