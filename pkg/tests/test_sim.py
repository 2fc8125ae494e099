"""Simulation core: elementary ops, invariants, kernel parity."""

import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deskpong.config import SimConfig
from deskpong.sim import (
    SIDE_ABSENT,
    SIDE_ARM,
    SIDE_FREE,
    ArmAgentState,
    BallState,
    ContactFlags,
    EventKind,
    InvalidStateError,
    PaddlePose,
    VecWorld,
    WorldState,
    arm_jacobian,
    forward_kinematics,
    make_world_state,
    paddle_velocity_command,
    pd_step,
    predict_landing,
    resolve_contacts,
    step_ball,
)
from deskpong.sim import trajectory
from deskpong.sim.engine import get_kernel


def simulate_drop_to_plane(ball, dt, damping, plane_z):
    """Step until the plane is crossed; linear interpolation inside the
    crossing step (the independent landing oracle used by the examples)."""
    prev = ball
    t = 0.0
    for _ in range(100000):
        nxt = step_ball(prev, dt, damping)
        t += dt
        if nxt.position[2] <= plane_z:
            tau = (prev.position[2] - plane_z) / (prev.position[2] - nxt.position[2])
            x = prev.position[0] + tau * (nxt.position[0] - prev.position[0])
            return x, t - dt + tau * dt
        prev = nxt
    raise AssertionError("never crossed")


class TestStepBall:
    def test_drop_lands_at_closed_form(self):
        # closed-form kinematics oracle: t = sqrt(2h/g), x = vx * t
        t_oracle = math.sqrt(2.0 * 1.0 / 9.8)
        x_oracle = 2.0 * t_oracle
        x, t = simulate_drop_to_plane(BallState([0, 0, 1], [2, 0, 0]), 1 / 120, 0.0, 0.0)
        assert abs(x - x_oracle) < 1e-3
        assert abs(t - t_oracle) < 1e-3
        assert abs(x_oracle - 0.9035) < 1e-4  # frozen value
        assert abs(t_oracle - 0.4518) < 1e-4

    def test_free_fall_from_rest_single_step(self):
        dt = 1 / 120
        nxt = step_ball(BallState([0.3, -0.1, 1.0], [0, 0, 0]), dt, 0.0)
        assert np.allclose(nxt.velocity, [0, 0, -9.8 * dt])
        # position unchanged to O(dt^2)
        assert abs(nxt.position[0] - 0.3) == 0.0
        assert abs(nxt.position[2] - 1.0) <= 9.8 * dt * dt

    def test_damping_law_single_step(self):
        dt = 1 / 120
        nxt = step_ball(BallState([0, 0, 5], [10, 0, 0]), dt, 0.1)
        assert abs(nxt.velocity[0] - (10 - 0.1 * 10 * dt)) < 1e-12
        assert abs(nxt.velocity[0] - 9.99167) < 1e-5

    def test_rejects_bad_inputs(self):
        with pytest.raises(InvalidStateError):
            step_ball(BallState([0, 0, np.nan], [0, 0, 0]), 1 / 120, 0.0)
        with pytest.raises(ValueError):
            step_ball(BallState([0, 0, 1], [0, 0, 0]), -1.0, 0.0)
        with pytest.raises(ValueError):
            step_ball(BallState([0, 0, 1], [0, 0, 0]), 1 / 120, -0.5)

    @given(
        vx=st.floats(-5, 5),
        vz=st.floats(-3, 3),
        h=st.floats(0.1, 2.0),
    )
    @settings(max_examples=30, deadline=None)
    def test_dragfree_step_exact_on_parabola(self, vx, vz, h):
        dt = 1 / 120
        ball = BallState([0, 0, h], [vx, 0, vz])
        stepped = ball
        for k in range(1, 25):
            stepped = step_ball(stepped, dt, 0.0)
            t = k * dt
            assert abs(stepped.position[0] - (vx * t)) < 1e-12
            assert abs(stepped.position[2] - (h + vz * t - 4.9 * t * t)) < 1e-9


class TestPredictLanding:
    def test_basic_drop(self):
        xy, t = predict_landing(BallState([0, 0, 1], [2, 0, 0]), 0.0)
        assert abs(t - math.sqrt(2 / 9.8)) < 1e-12
        assert abs(xy[0] - 2 * t) < 1e-12

    def test_below_plane_moving_down_is_none(self):
        assert predict_landing(BallState([0, 0, -0.5], [0, 0, -1]), 0.0) is None

    def test_upward_launch_quadratic_root(self):
        # quadratic-root oracle: t = (vz + sqrt(vz^2 + 2 g h)) / g
        t_oracle = (4 + math.sqrt(16 + 2 * 9.8 * 0.5)) / 9.8
        res = predict_landing(BallState([0, 0, 0.5], [0, 0, 4]), 0.0)
        assert res is not None
        xy, t = res
        assert abs(t - t_oracle) < 1e-12
        assert abs(t - 0.926466) < 1e-6
        assert np.allclose(xy, [0, 0])

    def test_ignores_damping_by_definition(self):
        # prediction is drag-free even though the simulated world has drag
        ball = BallState([0, 0, 1], [3, 0, 0])
        xy, t = predict_landing(ball, 0.0)
        assert abs(xy[0] - 3 * t) < 1e-12


class TestResolveContacts:
    def test_table_bounce_restitution(self):
        cfg = SimConfig(restitution_table=0.9)
        world = make_world_state(cfg)
        world.ball = BallState([0.5, 0.2, cfg.table_height + 0.01], [0, 0, -3.0])
        world.ball_dead = False
        new, events = resolve_contacts(world, 1 / 120, cfg)
        assert any(e.kind == EventKind.TABLE_BOUNCE_FAR for e in events)
        assert abs(new.ball.velocity[2] - 2.7) < 1e-12

    def test_paddle_reflection_formula(self):
        cfg = SimConfig(restitution_paddle=0.8)
        world = make_world_state(cfg)
        pose = forward_kinematics(world.agents[1], cfg)
        assert np.allclose(pose.normal, [-1, 0, 0], atol=1e-12)
        start = pose.position - np.array([0.01, 0, 0])
        world.ball = BallState(start, [4.0, 0, 0])
        world.ball_dead = False
        new, events = resolve_contacts(world, 1 / 120, cfg)
        kinds = [e.kind for e in events]
        assert EventKind.PADDLE_HIT in kinds
        # v' = v - (1+e)(v.n)n
        assert abs(new.ball.velocity[0] - (-3.2)) < 1e-12
        assert world.flags[1].c_bp == 0 and new.flags[1].c_bp == 1

    def test_net_crossing_above_net_keeps_velocity(self):
        cfg = SimConfig()
        world = make_world_state(cfg)
        z = cfg.table_height + cfg.net_height + 0.2
        world.ball = BallState([0.01, 0.0, z], [-4.0, 0, 0])
        world.ball_dead = False
        new, events = resolve_contacts(world, 1 / 120, cfg)
        assert any(e.kind == EventKind.NET_CROSSED_TOWARD_NEAR for e in events)
        assert np.allclose(new.ball.velocity, [-4.0, 0, 0])


class TestPdStep:
    def test_equilibrium(self):
        agent = ArmAgentState(0.0, [0.1, 0.2, -0.3, 0.4], np.zeros(4))
        new, _ = pd_step(agent, agent.joint_angles, (10.0, 0.0), 0.01)
        assert np.allclose(new.joint_angles, agent.joint_angles)
        assert np.allclose(new.joint_velocities, 0.0)

    def test_hand_integrated_step(self):
        agent = ArmAgentState(0.0, np.zeros(4), np.zeros(4))
        target = np.array([1.0, 0, 0, 0])
        new, _ = pd_step(agent, target, (10.0, 0.0), 0.01, inertia=1.0)
        assert abs(new.joint_velocities[0] - 0.1) < 1e-12
        assert abs(new.joint_angles[0] - 0.001) < 1e-12

    def test_pure_damping_decreases_speed(self):
        agent = ArmAgentState(0.0, [0.5, 0, 0, 0], [3.0, -2.0, 1.0, 0.5])
        new, _ = pd_step(agent, agent.joint_angles, (0.0, 50.0), 1 / 120)
        assert np.all(np.abs(new.joint_velocities) < np.abs(agent.joint_velocities))

    def test_velocity_cap_recorded(self):
        agent = ArmAgentState(0.0, np.zeros(4), np.zeros(4))
        _, hits = pd_step(agent, np.full(4, 1.0), (1e6, 0.0), 0.01, vel_cap=5.0)
        assert hits == 4


class TestPaddleVelocityCommand:
    def test_direct_formula(self):
        user = PaddlePose([1, 0, 0], [1, 0, 0], [0, 0, 0])
        sim = PaddlePose([0, 0, 0], [1, 0, 0], [0, 0, 0])
        cmd = paddle_velocity_command(user, sim, 1 / 120, speed_cap=1e9)
        assert np.allclose(cmd[:3], [120, 0, 0])

    def test_identity_pose_zero(self):
        pose = PaddlePose([0.3, -0.2, 1.1], [0, 1, 0], [0, 0, 0])
        cmd = paddle_velocity_command(pose, pose, 1 / 120)
        assert np.allclose(cmd, np.zeros(6))

    def test_speed_clamp(self):
        user = PaddlePose([0.5, 0, 0], [1, 0, 0], [0, 0, 0])
        sim = PaddlePose([0, 0, 0], [1, 0, 0], [0, 0, 0])
        cmd = paddle_velocity_command(user, sim, 1 / 60, speed_cap=20.0)
        assert np.allclose(cmd[:3], [20, 0, 0])

    def test_zero_dt_rejected(self):
        pose = PaddlePose([0, 0, 0], [1, 0, 0], [0, 0, 0])
        with pytest.raises(ValueError):
            paddle_velocity_command(pose, pose, 0.0)

    def test_angular_part_aligns_normals(self):
        user = PaddlePose([0, 0, 0], [0, 1, 0], [0, 0, 0])
        sim = PaddlePose([0, 0, 0], [1, 0, 0], [0, 0, 0])
        cmd = paddle_velocity_command(user, sim, 1.0, angular_cap=1e9)
        # rotating (1,0,0) to (0,1,0): +z axis, angle pi/2
        assert np.allclose(cmd[3:], [0, 0, math.pi / 2], atol=1e-12)


class TestForwardKinematics:
    def test_rest_pose(self):
        cfg = SimConfig()
        pose = forward_kinematics(ArmAgentState(0.0, np.zeros(4), np.zeros(4), side=0), cfg)
        reach = sum(cfg.link_lengths)
        assert np.allclose(pose.position, [-cfg.base_x + reach, 0.0, cfg.base_z])
        assert np.allclose(pose.normal, [1, 0, 0])
        assert np.allclose(pose.velocity, np.zeros(3))

    def test_wrist_rotates_normal_90deg(self):
        cfg = SimConfig()
        rest = forward_kinematics(ArmAgentState(0.0, np.zeros(4), np.zeros(4)), cfg)
        bent = forward_kinematics(
            ArmAgentState(0.0, [0, 0, 0, math.pi / 2], np.zeros(4)), cfg
        )
        assert abs(np.dot(rest.normal, bent.normal)) < 1e-12

    def test_jacobian_matches_finite_differences(self):
        cfg = SimConfig()
        rng = np.random.default_rng(3)
        for side in (0, 1):
            q = rng.uniform(-1.0, 1.0, 4)
            agent = ArmAgentState(0.1, q, np.zeros(4), side=side)
            jac = arm_jacobian(agent, cfg)
            eps = 1e-6
            for j in range(4):
                qp, qm = q.copy(), q.copy()
                qp[j] += eps
                qm[j] -= eps
                pp = forward_kinematics(ArmAgentState(0.1, qp, np.zeros(4), side=side), cfg)
                pm = forward_kinematics(ArmAgentState(0.1, qm, np.zeros(4), side=side), cfg)
                fd = (pp.position - pm.position) / (2 * eps)
                denom = np.maximum(np.abs(fd) + np.abs(jac[:, j]), 1e-8)
                assert np.all(np.abs(fd - jac[:, j]) / denom < 1e-4)

    def test_velocity_is_jacobian_times_qd(self):
        cfg = SimConfig()
        rng = np.random.default_rng(4)
        q = rng.uniform(-1, 1, 4)
        qd = rng.uniform(-3, 3, 4)
        agent = ArmAgentState(0.0, q, qd, side=0)
        pose = forward_kinematics(agent, cfg)
        jac = arm_jacobian(agent, cfg)
        assert np.allclose(pose.velocity, jac @ qd, atol=1e-12)


class TestWorldInvariants:
    def test_deterministic_replay_bit_exact(self):
        cfg = SimConfig()

        def run():
            w = VecWorld(cfg, 2, side_kinds=(SIDE_ARM, SIDE_ARM))
            rng = np.random.default_rng(11)
            for i in range(2):
                w.reset_arm(i, 0, q=rng.uniform(-0.5, 0.5, 4))
                w.reset_arm(i, 1, q=rng.uniform(-0.5, 0.5, 4))
                w.set_targets(i, 0, rng.uniform(-1, 1, 4))
                w.set_targets(i, 1, rng.uniform(-1, 1, 4))
            w.launch([0, 1], rng.uniform(-0.3, 0.3, (2, 3)) + [0, 0, 1.3], rng.uniform(-3, 3, (2, 3)))
            evs = [w.step(8) for _ in range(40)]
            return w.snapshot(), evs

        s1, e1 = run()
        s2, e2 = run()
        for key in s1:
            assert np.array_equal(s1[key], s2[key]), key
        assert e1 == e2

    def test_ballistic_fidelity_vs_predictor(self):
        cfg = SimConfig(damping_k=0.0)
        rng = np.random.default_rng(5)
        w = VecWorld(cfg, 1)
        for _ in range(12):
            p = np.array([rng.uniform(-1.0, -0.2), rng.uniform(-0.5, 0.5), cfg.table_height + rng.uniform(0.2, 2.0)])
            v = np.array([rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(-1, 1)])
            pred = predict_landing(BallState(p, v), cfg.table_height)
            assert pred is not None
            xy, _ = pred
            if abs(xy[0]) > cfg.half_length - 0.05 or abs(xy[1]) > cfg.half_width - 0.05:
                continue  # must land on the table for a bounce event
            w.launch(0, p, v)
            landing = None
            for _ in range(600):
                for e in w.step(1)[0]:
                    if e.kind in (EventKind.TABLE_BOUNCE_NEAR, EventKind.TABLE_BOUNCE_FAR):
                        landing = np.array(e.position[:2])
                        break
                if landing is not None or w.ball_dead[0]:
                    break
            assert landing is not None
            assert np.linalg.norm(landing - xy) < 1e-3

    def test_static_paddle_never_adds_energy(self):
        cfg = SimConfig()
        w = VecWorld(cfg, 1, side_kinds=(SIDE_FREE, SIDE_ABSENT))
        rng = np.random.default_rng(6)
        checked = 0
        for _ in range(60):
            w.set_free_paddle(0, 0, [-1.0, 0, 1.0], rng.standard_normal(3), np.zeros(6))
            p0 = np.array([-0.7, rng.uniform(-0.05, 0.05), rng.uniform(0.95, 1.05)])
            v0 = np.array([rng.uniform(-6, -3), rng.uniform(-1, 1), rng.uniform(-1, 1)])
            w.launch(0, p0, v0)
            for _ in range(60):
                speed_before = float(np.linalg.norm(w.ball_v[0]))
                events = w.step(1)[0]
                if any(e.kind == EventKind.PADDLE_HIT for e in events):
                    checked += 1
                    assert float(np.linalg.norm(w.ball_v[0])) <= speed_before + 1e-9
                    break
                if w.ball_dead[0]:
                    break
        assert checked >= 10

    def test_restitution_bound_along_normal(self):
        cfg = SimConfig()
        w = VecWorld(cfg, 1, side_kinds=(SIDE_FREE, SIDE_ABSENT))
        n = np.array([1.0, 0, 0])
        w.set_free_paddle(0, 0, [-1.0, 0, 1.0], n, np.zeros(6))
        w.launch(0, [-0.8, 0, 1.0], [-5.0, 0.4, 0.3])
        for _ in range(60):
            pre = -float(w.ball_v[0] @ n)
            events = w.step(1)[0]
            if any(e.kind == EventKind.PADDLE_HIT for e in events):
                post = float(w.ball_v[0] @ n)
                assert post <= cfg.restitution_paddle * pre + 1e-9
                return
        raise AssertionError("no contact")

    def test_contact_flags_monotone_and_reset_at_launch(self):
        cfg = SimConfig()
        w = VecWorld(cfg, 1, side_kinds=(SIDE_ARM, SIDE_ARM))
        w.launch(0, [0.5, 0, 1.2], [-3.0, 0, 0.5])
        seen = []
        for _ in range(200):
            w.step(1)
            seen.append((int(w.cbp[0, 0]), int(w.cbt[0, 0])))
            if w.ball_dead[0]:
                break
        for (a0, b0), (a1, b1) in zip(seen, seen[1:]):
            assert a1 >= a0 and b1 >= b0  # monotone within launch
        w.launch(0, [0.5, 0, 1.2], [-3.0, 0, 0.5])
        assert w.cbp[0, 0] == 0 and w.cbt[0, 0] == 0

    def test_double_bounce_has_prior_same_side_bounce(self):
        cfg = SimConfig()
        w = VecWorld(cfg, 1)
        w.launch(0, [-0.7, 0, 1.1], [0.0, 0, -1.0])
        events = []
        for _ in range(1000):
            events.extend(w.step(1)[0])
            if any(e.kind == EventKind.DOUBLE_BOUNCE for e in events):
                break
        idx = next(i for i, e in enumerate(events) if e.kind == EventKind.DOUBLE_BOUNCE)
        side = events[idx].side
        kind = EventKind.TABLE_BOUNCE_NEAR if side == 0 else EventKind.TABLE_BOUNCE_FAR
        prior = [e for e in events[:idx] if e.kind == kind]
        assert len(prior) >= 2  # two touches precede the double-bounce verdict


class TestKernelParity:
    def test_compiled_and_pure_kernels_bit_identical(self):
        compiled = get_kernel(pure=False)
        if not compiled.COMPILED:
            pytest.skip("compiled kernel unavailable")
        cfg = SimConfig()

        def run(pure):
            w = VecWorld(cfg, 3, side_kinds=(SIDE_ARM, SIDE_ARM), pure_kernel=pure)
            rng = np.random.default_rng(7)
            for i in range(3):
                w.reset_arm(i, 0, base_y=0.05 * i, q=rng.uniform(-0.5, 0.5, 4), qd=rng.uniform(-1, 1, 4))
                w.reset_arm(i, 1, base_y=-0.05 * i, q=rng.uniform(-0.5, 0.5, 4), qd=rng.uniform(-1, 1, 4))
                w.set_targets(i, 0, rng.uniform(-1, 1, 4))
                w.set_targets(i, 1, rng.uniform(-1, 1, 4))
                w.set_slide_target(i, 0, 0.2)
            w.launch([0, 1, 2], rng.uniform(-0.4, 0.4, (3, 3)) + [0, 0, 1.3], rng.uniform(-3, 3, (3, 3)))
            evs = [w.step(8) for _ in range(35)]
            return w.snapshot(), evs

        s1, e1 = run(False)
        s2, e2 = run(True)
        for key in s1:
            assert np.array_equal(s1[key], s2[key]), f"array {key} diverged"
        assert e1 == e2

    def test_fk_parity(self):
        compiled = get_kernel(pure=False)
        if not compiled.COMPILED:
            pytest.skip("compiled kernel unavailable")
        pure = get_kernel(pure=True)
        from deskpong.sim import params as prm

        par = prm.pack(SimConfig())
        rng = np.random.default_rng(8)
        for side in (0, 1):
            buf = rng.uniform(-1, 1, 8)
            out = [np.zeros(3) for _ in range(6)]
            compiled.fk_one(par, side, 0.12, buf, out[0], out[1], out[2])
            pure.fk_one(par, side, 0.12, list(buf), out[3], out[4], out[5])
            for a, b in zip(out[:3], out[3:]):
                assert np.array_equal(a, b)


class TestTrajectoryDump:
    def test_round_trip(self):
        cfg = SimConfig()
        w = VecWorld(cfg, 1, side_kinds=(SIDE_ARM, SIDE_ARM))
        w.launch(0, [0.3, 0, 1.2], [-3, 0.2, 0.5])
        buf = io.StringIO()
        trajectory.write_header(buf)
        rows = []
        for _ in range(50):
            events = w.step(1)[0]
            trajectory.write_record(
                buf, int(w.tick[0]), w.ball_p[0], w.ball_v[0], w.q[0, 0], w.q[0, 1], events
            )
            rows.append((int(w.tick[0]), w.ball_p[0].copy(), w.ball_v[0].copy()))
        parsed = trajectory.read_records(buf.getvalue().splitlines())
        assert len(parsed) == 50
        for rec, (tick, p, v) in zip(parsed, rows):
            assert rec["tick"] == tick
            assert np.array_equal(rec["ball_p"], p)
            assert np.array_equal(rec["ball_v"], v)

    def test_malformed_record_rejected(self):
        with pytest.raises(ValueError):
            trajectory.read_records(["1 2 3"])
