"""Networks, tape gradients, optimizer, policies, sphere sampling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deskpong.nn import (
    Adam,
    GaussianPolicy,
    Mlp,
    NonFiniteGradError,
    Tensor,
    adam_step,
    finite_difference_grad,
    grad_of,
    sample_sphere,
    tape,
)


class TestMlpForward:
    def test_zero_params_zero_output(self):
        net = Mlp([3, 4, 2])
        net.set_flat(np.zeros(net.n_params))
        assert np.allclose(net.forward_np(np.ones(3)), 0.0)

    def test_identity_single_layer(self):
        net = Mlp([3, 3])
        net.weights[0].data = np.eye(3)
        net.biases[0].data = np.zeros(3)
        x = np.array([0.5, -1.0, 2.0])
        assert np.allclose(net.forward_np(x), x)

    def test_param_count_formula(self):
        sizes = [5, 7, 3]
        net = Mlp(sizes)
        expected = sum(a * b + b for a, b in zip(sizes, sizes[1:]))
        assert net.n_params == expected

    def test_shape_mismatch_rejected(self):
        net = Mlp([3, 2])
        with pytest.raises(ValueError):
            net.forward_np(np.ones(4))

    def test_taped_and_raw_forward_agree(self):
        rng = np.random.default_rng(0)
        net = Mlp([4, 8, 8, 2], out_activation="logistic", rng=rng)
        x = rng.standard_normal((6, 4))
        assert np.array_equal(net.forward(Tensor(x)).data, net.forward_np(x))

    def test_flat_round_trip(self):
        net = Mlp([3, 5, 2], rng=np.random.default_rng(1))
        flat = net.get_flat()
        net2 = Mlp([3, 5, 2])
        net2.set_flat(flat)
        assert np.array_equal(net2.get_flat(), flat)


class TestGradients:
    def test_squared_loss_grad_matches_fd(self):
        rng = np.random.default_rng(3)
        net = Mlp([2, 3, 1], rng=rng)
        x = rng.standard_normal((4, 2))
        y = rng.standard_normal((4, 1))

        def loss_at(flat):
            net.set_flat(flat)
            out = net.forward_np(x)
            return float(np.sum((out - y) ** 2))

        flat0 = net.get_flat()
        fd = finite_difference_grad(loss_at, flat0.copy())
        net.set_flat(flat0)
        out = net.forward(Tensor(x))
        diff = out - Tensor(y)
        gs = grad_of(tape.tsum(diff * diff), net.params())
        analytic = np.concatenate([g.data.reshape(-1) for g in gs])
        rel = np.abs(analytic - fd) / np.maximum(np.abs(analytic) + np.abs(fd), 1e-8)
        assert rel.max() < 1e-4

    def test_double_backprop_input_gradient_penalty(self):
        rng = np.random.default_rng(5)
        net = Mlp([3, 4, 1], out_activation="logistic", rng=rng)
        x = rng.standard_normal((5, 3))

        def penalty_at(flat):
            net.set_flat(flat)
            xt = Tensor(x, requires_grad=True)
            d = net.forward(xt)
            gx = grad_of(tape.tsum(d), [xt], create_graph=True)[0]
            return float(tape.tmean(tape.tsum(gx * gx, axis=1)).data)

        flat0 = net.get_flat()
        fd = finite_difference_grad(penalty_at, flat0.copy())
        net.set_flat(flat0)
        xt = Tensor(x, requires_grad=True)
        d = net.forward(xt)
        gx = grad_of(tape.tsum(d), [xt], create_graph=True)[0]
        pen = tape.tmean(tape.tsum(gx * gx, axis=1))
        gs = grad_of(pen, net.params())
        analytic = np.concatenate([g.data.reshape(-1) for g in gs])
        rel = np.abs(analytic - fd) / np.maximum(np.abs(analytic) + np.abs(fd), 1e-8)
        assert rel.max() < 1e-4

    def test_forward_backward_purity(self):
        rng = np.random.default_rng(6)
        net = Mlp([2, 3, 1], rng=rng)
        x = rng.standard_normal((3, 2))
        r1 = net.forward_np(x).copy()
        out = net.forward(Tensor(x))
        grad_of(tape.tsum(out), net.params())
        r2 = net.forward_np(x)
        assert np.array_equal(r1, r2)

    def test_clip_min_max_ops_grads(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(8)

        def f(arr):
            t = Tensor(arr, requires_grad=True)
            v = tape.tsum(
                tape.clip(t, -0.5, 0.5) * Tensor(2.0)
                + tape.minimum(t, Tensor(np.zeros(8)))
                + tape.maximum(t * t, Tensor(np.full(8, 0.2)))
            )
            return t, v

        t, v = f(x)
        g = grad_of(v, [t])[0].data
        fd = finite_difference_grad(lambda a: float(f(a)[1].data), x.copy())
        assert np.allclose(g, fd, atol=1e-6)


class TestGaussianPolicy:
    def test_log_prob_at_mean_closed_form(self):
        # closed-form Gaussian density oracle: -0.5 k log(2 pi sigma^2)
        net = Mlp([2, 1])
        net.set_flat(np.zeros(net.n_params))
        pol = GaussianPolicy(net, sigma_sq=0.0025)
        lp = float(pol.log_prob(np.zeros(2), np.zeros(1)))
        oracle = -0.5 * math.log(2 * math.pi * 0.0025)
        assert abs(lp - oracle) < 1e-12
        assert abs(oracle - 2.0768) < 1e-4  # frozen from the oracle

    def test_one_sigma_offset_costs_half(self):
        net = Mlp([2, 1])
        net.set_flat(np.zeros(net.n_params))
        pol = GaussianPolicy(net, sigma_sq=0.0025)
        at_mean = float(pol.log_prob(np.zeros(2), np.zeros(1)))
        offset = float(pol.log_prob(np.zeros(2), np.array([math.sqrt(0.0025)])))
        assert abs((at_mean - offset) - 0.5) < 1e-12

    def test_sampling_reproducible(self):
        net = Mlp([2, 3], rng=np.random.default_rng(1))
        pol = GaussianPolicy(net, 0.01)
        a1 = pol.sample(np.ones(2), np.random.default_rng(42))
        a2 = pol.sample(np.ones(2), np.random.default_rng(42))
        assert np.array_equal(a1, a2)

    def test_taped_log_prob_matches_numpy(self):
        rng = np.random.default_rng(2)
        net = Mlp([3, 4, 2], rng=rng)
        pol = GaussianPolicy(net, 0.01)
        obs = rng.standard_normal((5, 3))
        act = rng.standard_normal((5, 2))
        lp_np = pol.log_prob(obs, act)
        lp_taped = pol.log_prob_taped(Tensor(obs), act).data
        assert np.allclose(lp_np, lp_taped, atol=1e-12)


class TestSampleSphere:
    def test_unit_norm(self):
        rng = np.random.default_rng(0)
        z = sample_sphere(8, rng, 100)
        assert np.all(np.abs(np.linalg.norm(z, axis=1) - 1.0) < 1e-6)

    def test_mean_concentration(self):
        # Monte Carlo concentration: mean of 1e5 uniform sphere samples
        rng = np.random.default_rng(1)
        z = sample_sphere(8, rng, 100_000)
        assert np.linalg.norm(z.mean(axis=0)) < 0.02

    def test_seeded_reproducibility(self):
        z1 = sample_sphere(8, np.random.default_rng(9))
        z2 = sample_sphere(8, np.random.default_rng(9))
        assert np.array_equal(z1, z2)

    def test_dim_validation(self):
        with pytest.raises(ValueError):
            sample_sphere(1, np.random.default_rng(0))


class TestAdam:
    def test_zero_gradient_no_change(self):
        params = [np.array([1.0, 2.0])]
        out = adam_step(params, [np.zeros(2)], 1e-3, {})
        assert np.array_equal(out[0], params[0])

    def test_constant_gradient_descends(self):
        p = np.array([0.0])
        state = {}
        for _ in range(200):
            p = adam_step([p], [np.array([1.0])], 1e-2, state)[0]
        assert p[0] < -1.0  # moved opposite the gradient sign

    def test_first_step_bias_corrected(self):
        # hand-computed first update: m_hat = g, v_hat = g^2 -> lr * g/|g|
        out = adam_step([np.array([0.0])], [np.array([1.0])], 1e-3, {})
        assert abs(out[0][0] - (-1e-3)) < 1e-9

    def test_nonfinite_grad_raises_and_skips(self):
        state = {}
        with pytest.raises(NonFiniteGradError):
            adam_step([np.array([0.0])], [np.array([np.nan])], 1e-3, state)

    def test_stateful_wrapper_updates_in_place(self):
        t = Tensor(np.zeros(3), requires_grad=True)
        opt = Adam([t], 1e-3)
        opt.step([np.ones(3)])
        assert np.all(t.data < 0)
