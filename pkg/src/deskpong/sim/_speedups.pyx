# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled step kernel. Mirrors `_pystep.py` operation-for-operation.

Built with -ffp-contract=off so that C arithmetic matches the pure-Python
kernel bit-for-bit (see the kernel parity tests). Keep both files in sync.
"""

from libc.math cimport cos, sin, sqrt, fabs

COMPILED = True

cdef double _CONTACT_EPS = 1e-4

cdef enum:
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

cdef enum:
    SIDE_ARM = 0
    SIDE_FREE = 1
    SIDE_ABSENT = 2

cdef enum:
    EV_PADDLE_HIT = 1
    EV_BOUNCE_NEAR = 2
    EV_BOUNCE_FAR = 3
    EV_NET_HIT = 4
    EV_BALL_OUT = 5
    EV_DOUBLE_BOUNCE = 6
    EV_CROSS_NEAR = 7
    EV_CROSS_FAR = 8


cdef void _fk(const double* par, int side, double base_y, const double* buf,
              double* out_pos, double* out_nrm, double* out_vel) nogil:
    cdef double l1 = par[P_L1]
    cdef double l2 = par[P_L2]
    cdef double l3 = par[P_L3]
    cdef double sigma = 1.0 if side == 0 else -1.0
    cdef double q1 = buf[0]
    cdef double q2 = buf[1]
    cdef double q3 = buf[2]
    cdef double q4 = buf[3]
    cdef double w1 = buf[4]
    cdef double w2 = buf[5]
    cdef double w3 = buf[6]
    cdef double w4 = buf[7]
    cdef double c2 = cos(q2)
    cdef double s2 = sin(q2)
    cdef double f1 = q1
    cdef double f2 = q1 + q3
    cdef double f3 = q1 + q3 + q4
    cdef double cf1 = cos(f1)
    cdef double sf1 = sin(f1)
    cdef double cf2 = cos(f2)
    cdef double sf2 = sin(f2)
    cdef double cf3 = cos(f3)
    cdef double sf3 = sin(f3)

    cdef double px = l1 * c2 * cf1 + l2 * c2 * cf2 + l3 * c2 * cf3
    cdef double py = l1 * s2 * cf1 + l2 * s2 * cf2 + l3 * s2 * cf3
    cdef double pz = -(l1 * sf1 + l2 * sf2 + l3 * sf3)

    cdef double g1x = -(l1 * c2 * sf1 + l2 * c2 * sf2 + l3 * c2 * sf3)
    cdef double g1y = -(l1 * s2 * sf1 + l2 * s2 * sf2 + l3 * s2 * sf3)
    cdef double g1z = -(l1 * cf1 + l2 * cf2 + l3 * cf3)
    cdef double g2x = -(l1 * s2 * cf1 + l2 * s2 * cf2 + l3 * s2 * cf3)
    cdef double g2y = l1 * c2 * cf1 + l2 * c2 * cf2 + l3 * c2 * cf3
    cdef double g3x = -(l2 * c2 * sf2 + l3 * c2 * sf3)
    cdef double g3y = -(l2 * s2 * sf2 + l3 * s2 * sf3)
    cdef double g3z = -(l2 * cf2 + l3 * cf3)
    cdef double g4x = -(l3 * c2 * sf3)
    cdef double g4y = -(l3 * s2 * sf3)
    cdef double g4z = -(l3 * cf3)

    cdef double vx = g1x * w1 + g2x * w2 + g3x * w3 + g4x * w4
    cdef double vy = g1y * w1 + g2y * w2 + g3y * w3 + g4y * w4
    cdef double vz = g1z * w1 + 0.0 * w2 + g3z * w3 + g4z * w4

    cdef double bx = -sigma * par[P_BASE_X]
    out_pos[0] = bx + sigma * px
    out_pos[1] = base_y + sigma * py
    out_pos[2] = par[P_BASE_Z] + pz
    out_nrm[0] = sigma * (c2 * cf3)
    out_nrm[1] = sigma * (s2 * cf3)
    out_nrm[2] = -sf3
    out_vel[0] = sigma * vx
    out_vel[1] = sigma * vy
    out_vel[2] = vz


def paddle_poses(double[:] par, unsigned char[:, :] side_kind, double[:, :] base_y,
                 double[:, :, :] q, double[:, :, :] qd,
                 double[:, :, :] fp_pos, double[:, :, :] fp_nrm, double[:, :, :] fp_vel,
                 double[:, :, :] out_pos, double[:, :, :] out_nrm, double[:, :, :] out_vel):
    cdef Py_ssize_t n = side_kind.shape[0]
    cdef Py_ssize_t w, a, j, k
    cdef int kind
    cdef double buf[8]
    for w in range(n):
        for a in range(2):
            kind = side_kind[w, a]
            if kind == SIDE_ARM:
                for j in range(4):
                    buf[j] = q[w, a, j]
                    buf[4 + j] = qd[w, a, j]
                _fk(&par[0], <int>a, base_y[w, a], buf,
                    &out_pos[w, a, 0], &out_nrm[w, a, 0], &out_vel[w, a, 0])
            elif kind == SIDE_FREE:
                for k in range(3):
                    out_pos[w, a, k] = fp_pos[w, a, k]
                    out_nrm[w, a, k] = fp_nrm[w, a, k]
                    out_vel[w, a, k] = fp_vel[w, a, k]


def fk_one(double[:] par, int side, double base_y, object q8, out_pos, out_nrm, out_vel):
    """Single-arm FK with the same signature as the pure kernel's fk_one."""
    cdef double buf[8]
    cdef double p[3]
    cdef double nn[3]
    cdef double v[3]
    cdef int i
    for i in range(8):
        buf[i] = q8[i]
    _fk(&par[0], side, base_y, buf, p, nn, v)
    for i in range(3):
        out_pos[i] = p[i]
        out_nrm[i] = nn[i]
        out_vel[i] = v[i]


def arm_jacobian(double[:] par, int side, object q4angles, double[:, :] jac):
    cdef double l1 = par[P_L1]
    cdef double l2 = par[P_L2]
    cdef double l3 = par[P_L3]
    cdef double sigma = 1.0 if side == 0 else -1.0
    cdef double q1 = q4angles[0]
    cdef double q2 = q4angles[1]
    cdef double q3 = q4angles[2]
    cdef double q4 = q4angles[3]
    cdef double c2 = cos(q2)
    cdef double s2 = sin(q2)
    cdef double f1 = q1
    cdef double f2 = q1 + q3
    cdef double f3 = q1 + q3 + q4
    cdef double cf1 = cos(f1), sf1 = sin(f1)
    cdef double cf2 = cos(f2), sf2 = sin(f2)
    cdef double cf3 = cos(f3), sf3 = sin(f3)
    jac[0, 0] = sigma * (-(l1 * c2 * sf1 + l2 * c2 * sf2 + l3 * c2 * sf3))
    jac[1, 0] = sigma * (-(l1 * s2 * sf1 + l2 * s2 * sf2 + l3 * s2 * sf3))
    jac[2, 0] = -(l1 * cf1 + l2 * cf2 + l3 * cf3)
    jac[0, 1] = sigma * (-(l1 * s2 * cf1 + l2 * s2 * cf2 + l3 * s2 * cf3))
    jac[1, 1] = sigma * (l1 * c2 * cf1 + l2 * c2 * cf2 + l3 * c2 * cf3)
    jac[2, 1] = 0.0
    jac[0, 2] = sigma * (-(l2 * c2 * sf2 + l3 * c2 * sf3))
    jac[1, 2] = sigma * (-(l2 * s2 * sf2 + l3 * s2 * sf3))
    jac[2, 2] = -(l2 * cf2 + l3 * cf3)
    jac[0, 3] = sigma * (-(l3 * c2 * sf3))
    jac[1, 3] = sigma * (-(l3 * s2 * sf3))
    jac[2, 3] = -(l3 * cf3)


def step_worlds(double[:] par,
                unsigned char[:] active,
                unsigned char[:, :] side_kind,
                double[:, :] ball_p,
                double[:, :] ball_v,
                unsigned char[:] ball_dead,
                double[:, :] base_y,
                double[:, :] base_y_target,
                double[:, :, :] q,
                double[:, :, :] qd,
                double[:, :, :] targets,
                double[:, :, :] fp_pos,
                double[:, :, :] fp_nrm,
                double[:, :, :] fp_vel,
                unsigned char[:, :] cbp,
                unsigned char[:, :] cbt,
                signed char[:] last_bounce,
                unsigned char[:] pad_cool,
                long long[:] tick,
                long long[:] vel_cap_hits,
                int n_substeps,
                long long[:] ev_world,
                int[:] ev_kind,
                long long[:] ev_tick,
                signed char[:] ev_side,
                double[:, :] ev_pos):
    cdef Py_ssize_t n = ball_p.shape[0]
    cdef Py_ssize_t cap = ev_world.shape[0]
    cdef Py_ssize_t n_ev = 0

    cdef double dt = par[P_DT]
    cdef double grav = par[P_GRAVITY]
    cdef double damp = par[P_DAMPING]
    cdef double half_len = par[P_HALF_LEN]
    cdef double half_wid = par[P_HALF_WID]
    cdef double table_h = par[P_TABLE_H]
    cdef double net_top = table_h + par[P_NET_H]
    cdef double net_halfspan = half_wid + par[P_NET_OVERHANG]
    cdef double e_table = par[P_E_TABLE]
    cdef double e_paddle = par[P_E_PADDLE]
    cdef double e_net = par[P_E_NET]
    cdef double c_rad = par[P_CONTACT_RADIUS]
    cdef double floor_z = par[P_FLOOR_Z]
    cdef double out_x = par[P_OUT_X]
    cdef double out_y = par[P_OUT_Y]
    cdef double kp = par[P_KP]
    cdef double kd = par[P_KD]
    cdef double inv_inertia = 1.0 / par[P_INERTIA]
    cdef double qlim = par[P_QLIM]
    cdef double vcap = par[P_VCAP]
    cdef double spin_mu = par[P_SPIN_MU]
    cdef double slide_dv = par[P_SLIDE_SPEED] * dt

    cdef double pp[3]
    cdef double pn[3]
    cdef double pv[3]
    cdef double buf[8]

    cdef Py_ssize_t w, a, j, k, sub
    cdef int kind, side
    cdef bint contacted_paddle, hit_net, toward_near
    cdef double qj, wj, torque, dslide
    cdef double ox, oy, oz, om, ang, ux, uy, uz, ca, sa, nx, ny, nz, dot
    cdef double rxx, ryy, rzz, rm
    cdef double p0x, p0y, p0z, v0x, v0y, v0z
    cdef double axx, ayy, azz, v1x, v1y, v1z, hdt2, p1x, p1y, p1z
    cdef double s0, s1, tau, cx, cy, cz, dx, dy, dz
    cdef double rx, ry, rz, vn, sgn, scale, tnx, tny, tnz, tdot

    for w in range(n):
        if not active[w]:
            continue
        for sub in range(n_substeps):
            for a in range(2):
                kind = side_kind[w, a]
                if kind == SIDE_ARM:
                    dslide = base_y_target[w, a] - base_y[w, a]
                    if dslide > slide_dv:
                        dslide = slide_dv
                    elif dslide < -slide_dv:
                        dslide = -slide_dv
                    base_y[w, a] += dslide
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
                    om = sqrt(ox * ox + oy * oy + oz * oz)
                    if om > 1e-12:
                        ang = om * dt
                        ux = ox / om
                        uy = oy / om
                        uz = oz / om
                        ca = cos(ang)
                        sa = sin(ang)
                        nx = fp_nrm[w, a, 0]
                        ny = fp_nrm[w, a, 1]
                        nz = fp_nrm[w, a, 2]
                        dot = ux * nx + uy * ny + uz * nz
                        rxx = nx * ca + (uy * nz - uz * ny) * sa + ux * dot * (1.0 - ca)
                        ryy = ny * ca + (uz * nx - ux * nz) * sa + uy * dot * (1.0 - ca)
                        rzz = nz * ca + (ux * ny - uy * nx) * sa + uz * dot * (1.0 - ca)
                        rm = sqrt(rxx * rxx + ryy * ryy + rzz * rzz)
                        if rm > 1e-12:
                            fp_nrm[w, a, 0] = rxx / rm
                            fp_nrm[w, a, 1] = ryy / rm
                            fp_nrm[w, a, 2] = rzz / rm

            if pad_cool[w] > 0:
                pad_cool[w] -= 1

            if not ball_dead[w]:
                p0x = ball_p[w, 0]
                p0y = ball_p[w, 1]
                p0z = ball_p[w, 2]
                v0x = ball_v[w, 0]
                v0y = ball_v[w, 1]
                v0z = ball_v[w, 2]
                axx = -damp * v0x
                ayy = -damp * v0y
                azz = -grav - damp * v0z
                v1x = v0x + dt * axx
                v1y = v0y + dt * ayy
                v1z = v0z + dt * azz
                hdt2 = 0.5 * dt * dt
                p1x = p0x + dt * v0x + hdt2 * axx
                p1y = p0y + dt * v0y + hdt2 * ayy
                p1z = p0z + dt * v0z + hdt2 * azz

                contacted_paddle = False
                hit_net = False

                for a in range(2):
                    if contacted_paddle or pad_cool[w] > 0:
                        break
                    kind = side_kind[w, a]
                    if kind == SIDE_ARM:
                        for j in range(4):
                            buf[j] = q[w, a, j]
                            buf[4 + j] = qd[w, a, j]
                        _fk(&par[0], <int>a, base_y[w, a], buf, pp, pn, pv)
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
                                    tdot = rx * pn[0] + ry * pn[1] + rz * pn[2]
                                    tnx = rx - tdot * pn[0]
                                    tny = ry - tdot * pn[1]
                                    tnz = rz - tdot * pn[2]
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
                                ev_kind[n_ev] = EV_PADDLE_HIT
                                ev_tick[n_ev] = tick[w] + 1
                                ev_side[n_ev] = <signed char>a
                                ev_pos[n_ev, 0] = cx
                                ev_pos[n_ev, 1] = cy
                                ev_pos[n_ev, 2] = cz
                                n_ev += 1

                if (not contacted_paddle) and p0x * p1x < 0.0:
                    tau = p0x / (p0x - p1x)
                    cy = p0y + tau * (p1y - p0y)
                    cz = p0z + tau * (p1z - p0z)
                    toward_near = p1x < p0x
                    if table_h <= cz <= net_top and fabs(cy) <= net_halfspan:
                        hit_net = True
                        v1x = -e_net * v1x
                        sgn = 1.0 if p0x > 0.0 else -1.0
                        p1x = sgn * _CONTACT_EPS
                        p1y = cy
                        p1z = cz
                        if n_ev >= cap:
                            return -1
                        ev_world[n_ev] = w
                        ev_kind[n_ev] = EV_NET_HIT
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
                        ev_kind[n_ev] = EV_CROSS_NEAR if toward_near else EV_CROSS_FAR
                        ev_tick[n_ev] = tick[w] + 1
                        ev_side[n_ev] = -1
                        ev_pos[n_ev, 0] = 0.0
                        ev_pos[n_ev, 1] = cy
                        ev_pos[n_ev, 2] = cz
                        n_ev += 1

                if (not contacted_paddle) and (not hit_net) and p0z > table_h >= p1z:
                    tau = (p0z - table_h) / (p0z - p1z)
                    cx = p0x + tau * (p1x - p0x)
                    cy = p0y + tau * (p1y - p0y)
                    if fabs(cx) <= half_len and fabs(cy) <= half_wid:
                        v1z = -e_table * v1z
                        p1x = cx
                        p1y = cy
                        p1z = table_h + _CONTACT_EPS
                        side = 1 if cx < 0.0 else 2
                        if n_ev >= cap:
                            return -1
                        ev_world[n_ev] = w
                        ev_kind[n_ev] = EV_BOUNCE_NEAR if side == 1 else EV_BOUNCE_FAR
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
                            ev_kind[n_ev] = EV_DOUBLE_BOUNCE
                            ev_tick[n_ev] = tick[w] + 1
                            ev_side[n_ev] = 0 if side == 1 else 1
                            ev_pos[n_ev, 0] = cx
                            ev_pos[n_ev, 1] = cy
                            ev_pos[n_ev, 2] = table_h
                            n_ev += 1
                        last_bounce[w] = <signed char>side

                if p1z < floor_z or fabs(p1x) > out_x or fabs(p1y) > out_y:
                    ball_dead[w] = 1
                    v1x = 0.0
                    v1y = 0.0
                    v1z = 0.0
                    if n_ev >= cap:
                        return -1
                    ev_world[n_ev] = w
                    ev_kind[n_ev] = EV_BALL_OUT
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
