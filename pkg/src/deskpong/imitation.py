"""Adversarial skill imitation.

Per-skill policies (plus one universal policy over every skill) are trained
with PPO against a reward combining a transition discriminator and a
hypersphere-latent encoder; a diversity penalty ties latent distance to
action-distribution distance. Discriminator and encoder share one trunk
network whose head is split into a logistic discriminator column and an
encoder mean block (normalized onto the unit sphere).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ImitationConfig, NetConfig, PpoConfig, SimConfig
from .features import SKILL_STATE_DIM, skill_state_features
from .nn import Adam, GaussianPolicy, Mlp, Tensor, grad_of, normalize_rows, sample_sphere, tape
from .ppo import RolloutBuffer, TrainingDivergedError, ppo_update
from .refs import READY_POSE, ReferenceSet
from .sim import SIDE_ABSENT, SIDE_ARM, VecWorld


@dataclass
class ImitationBundle:
    """Policy + discriminator/encoder trunk for one skill (or universal)."""

    skill: int | None                  # None = universal
    policy: GaussianPolicy             # (state ++ latent) -> joint targets
    value_net: Mlp
    disc_enc: Mlp                      # (s, s') -> [disc logit, encoder mean...]
    latent_dim: int
    curve: list[dict] = field(default_factory=list)

    def disc_prob(self, transitions: np.ndarray) -> np.ndarray:
        out = self.disc_enc.forward_np(transitions)
        return _sigmoid(out[..., 0])

    def encoder_mean(self, transitions: np.ndarray) -> np.ndarray:
        out = self.disc_enc.forward_np(transitions)
        return normalize_rows(out[..., 1:])

    def act_mean(self, state: np.ndarray, z: np.ndarray) -> np.ndarray:
        return self.policy.mean(np.concatenate([state, z], axis=-1))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def disc_enc_heads(net: Mlp, x: Tensor) -> tuple[Tensor, Tensor]:
    """Split the trunk output into (clampable disc probability, unit encoder mean)."""
    out = net.forward(x)
    logit = out[:, 0:1]
    d = tape.sigmoid(logit)
    mu_raw = out[:, 1:]
    norm = tape.tsqrt(tape.tsum(mu_raw * mu_raw, axis=1, keepdims=True) + Tensor(1e-12))
    mu = mu_raw / norm
    return d, mu


def discriminator_loss(
    disc_enc: Mlp,
    positives: np.ndarray,
    negatives: np.ndarray,
    gp_weight: float,
    prob_clamp: float = 1e-5,
) -> tuple[Tensor, dict]:
    """Binary cross-entropy on real/policy transitions plus a gradient
    penalty on the real samples. Returns (loss tensor, logged parts)."""
    if len(positives) == 0 or len(negatives) == 0:
        raise ValueError("discriminator batches must be non-empty")
    eps = prob_clamp

    pos_in = Tensor(np.asarray(positives, dtype=np.float64), requires_grad=True)
    d_pos, _ = disc_enc_heads(disc_enc, pos_in)
    d_pos_c = tape.clip(d_pos, eps, 1.0 - eps)
    loss_pos = -tape.tmean(tape.tlog(d_pos_c))

    d_neg, _ = disc_enc_heads(disc_enc, Tensor(np.asarray(negatives, dtype=np.float64)))
    d_neg_c = tape.clip(d_neg, eps, 1.0 - eps)
    loss_neg = -tape.tmean(tape.tlog(Tensor(1.0) - d_neg_c))

    grad_x = grad_of(tape.tsum(d_pos), [pos_in], create_graph=True)[0]
    penalty = tape.tmean(tape.tsum(grad_x * grad_x, axis=1))

    loss = loss_pos + loss_neg + Tensor(gp_weight) * penalty
    parts = {
        "bce": float(loss_pos.data + loss_neg.data),
        "gp": float(penalty.data),
        "d_pos": float(d_pos.data.mean()),
        "d_neg": float(d_neg.data.mean()),
    }
    return loss, parts


def vmf_log_likelihood(mu_q: np.ndarray, z: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Sphere-encoder log-likelihood up to its normalization constant:
    the alignment mu_q . z. Both arguments must be unit vectors."""
    mu_q = np.asarray(mu_q, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    for name, v in (("mu_q", mu_q), ("z", z)):
        norms = np.linalg.norm(v, axis=-1)
        if np.any(np.abs(norms - 1.0) > tol):
            raise ValueError(f"{name} must be unit-norm (got norm {norms})")
    return np.sum(mu_q * z, axis=-1)


def imitation_reward(
    d: np.ndarray,
    mu_dot_z: np.ndarray,
    beta: float,
    prob_clamp: float = 1e-5,
) -> np.ndarray:
    """Per-transition reward: -log(1 - D) plus beta times encoder alignment."""
    d_c = np.clip(d, prob_clamp, 1.0 - prob_clamp)
    return -np.log(1.0 - d_c) + beta * mu_dot_z


def diversity_loss(
    policy: GaussianPolicy,
    state_batch: np.ndarray,
    z1: np.ndarray,
    z2: np.ndarray,
    weight: float,
) -> Tensor:
    """Penalty tying latent separation to action-distribution separation:
    mean((KL(pi(.|s,z1), pi(.|s,z2)) / (0.5 (1 - z1.z2)) - 1)^2), scaled.

    For fixed-covariance Gaussians the KL is ||mu1 - mu2||^2 / (2 sigma^2).
    """
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    dots = np.sum(z1 * z2, axis=-1)
    if np.any(dots >= 1.0 - 1e-12):
        raise ValueError("z1 and z2 must differ (diversity denominator is zero)")
    mu1 = policy.mean_net.forward(Tensor(np.concatenate([state_batch, z1], axis=-1)))
    mu2 = policy.mean_net.forward(Tensor(np.concatenate([state_batch, z2], axis=-1)))
    diff = mu1 - mu2
    kl = tape.tsum(diff * diff, axis=1) * Tensor(1.0 / (2.0 * policy.sigma_sq))
    denom = Tensor(0.5 * (1.0 - dots))
    ratio = kl / denom - Tensor(1.0)
    return Tensor(weight) * tape.tmean(ratio * ratio)


def make_bundle(
    skill: int | None,
    net_cfg: NetConfig,
    rng: np.random.Generator,
    state_dim: int = SKILL_STATE_DIM,
    action_dim: int = 4,
) -> ImitationBundle:
    d = net_cfg.latent_dim
    mean_net = Mlp(
        [state_dim + d, *net_cfg.policy_hidden, action_dim], rng=rng, final_scale=0.02
    )
    # start at the ready pose so early rollouts stay in a sane posture
    mean_net.biases[-1].data = READY_POSE.copy()
    policy = GaussianPolicy(mean_net, net_cfg.policy_sigma_sq)
    value_net = Mlp([state_dim + d, *net_cfg.value_hidden, 1], rng=rng)
    disc_enc = Mlp([2 * state_dim, *net_cfg.disc_hidden, 1 + d], rng=rng, final_scale=0.1)
    return ImitationBundle(skill, policy, value_net, disc_enc, d)


class ImitationTrainer:
    """PPO + adversarial reward training loop for one bundle."""

    def __init__(
        self,
        skill_filter: int | None,
        references: ReferenceSet,
        sim_cfg: SimConfig,
        net_cfg: NetConfig,
        ppo_cfg: PpoConfig,
        im_cfg: ImitationConfig,
        rng: np.random.Generator,
        n_envs: int = 32,
    ):
        self.refs = references
        self.skill_filter = skill_filter
        self.sim_cfg = sim_cfg
        self.net_cfg = net_cfg
        self.ppo_cfg = ppo_cfg
        self.im_cfg = im_cfg
        self.rng = rng
        self.n_envs = n_envs
        self.bundle = make_bundle(skill_filter, net_cfg, rng)
        self.world = VecWorld(sim_cfg, n_envs, side_kinds=(SIDE_ARM, SIDE_ABSENT))
        self.z = sample_sphere(net_cfg.latent_dim, rng, n_envs)
        self.steps_in_episode = np.zeros(n_envs, dtype=np.int64)
        self.opt_policy = Adam(self.bundle.policy.params(), ppo_cfg.learning_rate)
        self.opt_value = Adam(self.bundle.value_net.params(), ppo_cfg.learning_rate)
        self.opt_disc = Adam(self.bundle.disc_enc.params(), im_cfg.disc_learning_rate)
        self._reset_envs(np.arange(n_envs))

    def _sample_latents(self, n: int) -> np.ndarray:
        """Rollout latents: uniform sphere mixed with jittered clip latents,
        so exploration stays anchored to the reference manifold."""
        z = sample_sphere(self.net_cfg.latent_dim, self.rng, n)
        anchored = self.rng.random(n) < self.im_cfg.anchor_latent_prob
        idx = self.refs.clip_indices(self.skill_filter)
        for i in np.flatnonzero(anchored):
            clip = self.refs.clips[idx[int(self.rng.integers(0, len(idx)))]]
            frame = int(self.rng.integers(0, clip.duration))
            v = clip.latents[frame] + 0.25 * self.rng.standard_normal(clip.latents.shape[-1])
            z[i] = v / np.linalg.norm(v)
        return z

    def _reset_envs(self, idx: np.ndarray) -> None:
        if len(idx) == 0:
            return
        fresh = self._sample_latents(len(idx))
        for k, w in enumerate(idx):
            q, qd = self.refs.sample_init_state(self.rng, self.skill_filter)
            self.world.reset_arm(int(w), 0, base_y=0.0, q=q, qd=qd)
            self.z[w] = fresh[k]
            self.steps_in_episode[w] = 0

    def _state_features(self) -> np.ndarray:
        return skill_state_features(self.world.q[:, 0], self.world.qd[:, 0], self.sim_cfg)

    def collect(self, horizon: int) -> tuple[RolloutBuffer, np.ndarray, np.ndarray, np.ndarray]:
        """Roll out `horizon` imitation-rate steps in every env."""
        d_lat = self.net_cfg.latent_dim
        buf = RolloutBuffer(horizon, self.n_envs, SKILL_STATE_DIM + d_lat, 4)
        tr_s = np.zeros((horizon, self.n_envs, SKILL_STATE_DIM))
        tr_sn = np.zeros_like(tr_s)
        tr_z = np.zeros((horizon, self.n_envs, d_lat))
        for t in range(horizon):
            resample = self.rng.random(self.n_envs) < self.im_cfg.latent_resample_prob
            if resample.any():
                self.z[resample] = self._sample_latents(int(resample.sum()))
            s = self._state_features()
            obs = np.concatenate([s, self.z], axis=-1)
            act = self.bundle.policy.sample(obs, self.rng)
            logp = self.bundle.policy.log_prob(obs, act)
            val = self.bundle.value_net.forward_np(obs)[:, 0]
            for w in range(self.n_envs):
                self.world.set_targets(w, 0, act[w])
            self.world.step(self.sim_cfg.substeps_per_imitation)
            s_next = self._state_features()
            trans = np.concatenate([s, s_next], axis=-1)
            d_out = self.bundle.disc_prob(trans)
            mu = self.bundle.encoder_mean(trans)
            rew = imitation_reward(
                d_out,
                np.sum(mu * self.z, axis=-1),
                self.im_cfg.skill_discovery_weight,
                self.im_cfg.prob_clamp,
            ) * self.im_cfg.reward_scale
            self.steps_in_episode += 1
            done = self.steps_in_episode >= self.im_cfg.episode_length
            buf.add(obs, act, logp, rew, val, done.astype(np.float64))
            tr_s[t] = s
            tr_sn[t] = s_next
            tr_z[t] = self.z
            if done.any():
                self._reset_envs(np.flatnonzero(done))
        s = self._state_features()
        obs = np.concatenate([s, self.z], axis=-1)
        buf.set_bootstrap(self.bundle.value_net.forward_np(obs)[:, 0])
        return buf, tr_s.reshape(-1, SKILL_STATE_DIM), tr_sn.reshape(-1, SKILL_STATE_DIM), tr_z.reshape(-1, d_lat)

    def update_discriminator(self, neg_s, neg_sn, neg_z) -> dict:
        batch = min(self.im_cfg.disc_batch_size, len(neg_s))
        pos_s, pos_sn = self.refs.sample_transitions(self.skill_filter, batch, self.rng)
        pick = self.rng.integers(0, len(neg_s), batch)
        positives = np.concatenate([pos_s, pos_sn], axis=-1)
        negatives = np.concatenate([neg_s[pick], neg_sn[pick]], axis=-1)
        loss, parts = discriminator_loss(
            self.bundle.disc_enc,
            positives,
            negatives,
            self.im_cfg.gradient_penalty_weight,
            self.im_cfg.prob_clamp,
        )
        # encoder head: maximize alignment with the latents that produced
        # the policy transitions (shared trunk, combined update)
        _, mu = disc_enc_heads(self.bundle.disc_enc, Tensor(negatives))
        enc_term = tape.tmean(tape.tsum(mu * Tensor(neg_z[pick]), axis=1))
        total = loss - Tensor(self.im_cfg.encoder_loss_weight) * enc_term
        if not np.isfinite(total.data):
            raise TrainingDivergedError("discriminator loss diverged")
        grads = [g.data for g in grad_of(total, self.bundle.disc_enc.params())]
        self.opt_disc.step(grads)
        parts["enc_align"] = float(enc_term.data)
        return parts

    def _aux_policy_loss(self, state_batch: np.ndarray) -> Tensor:
        # strip the stored latent; diversity compares fresh latent pairs
        s_part = state_batch[:, :SKILL_STATE_DIM]
        n = len(s_part)
        z1 = sample_sphere(self.net_cfg.latent_dim, self.rng, n)
        z2 = sample_sphere(self.net_cfg.latent_dim, self.rng, n)
        self._last_div = diversity_loss(
            self.bundle.policy, s_part, z1, z2, self.im_cfg.diversity_weight
        )
        total = self._last_div if self.im_cfg.use_diversity_objective else Tensor(0.0)
        if self.im_cfg.bc_anchor_weight > 0.0:
            # keep the phase-servo mapping pinned while RL refines realism
            s, z_cmd, a, _, _ = self.refs.sample_bc_batch(self.skill_filter, n, self.rng)
            mu = self.bundle.policy.mean_net.forward(
                Tensor(np.concatenate([s, z_cmd], axis=-1))
            )
            err = mu - Tensor(a)
            total = total + Tensor(self.im_cfg.bc_anchor_weight) * tape.tmean(
                tape.tsum(err * err, axis=1)
            )
        return total

    def pretrain(self, steps: int | None = None) -> dict:
        """Bootstrap the policy and encoder onto the clip latent map by
        behavior cloning: policy(state ++ clip latent) -> next-frame targets,
        encoder(transition) -> clip latent. Gives the latent real control
        authority before the adversarial stage has to discover it."""
        steps = self.im_cfg.bc_pretrain_steps if steps is None else steps
        opt_bc = Adam(self.bundle.policy.params(), self.im_cfg.bc_learning_rate)
        opt_enc = Adam(self.bundle.disc_enc.params(), self.im_cfg.bc_learning_rate)
        stats = {"bc_mse": math.nan, "enc_align": math.nan}
        for k in range(steps):
            s, z_cmd, a, sn, z_trans = self.refs.sample_bc_batch(
                self.skill_filter, self.im_cfg.bc_batch_size, self.rng
            )
            mu = self.bundle.policy.mean_net.forward(
                Tensor(np.concatenate([s, z_cmd], axis=-1))
            )
            err = mu - Tensor(a)
            loss = tape.tmean(tape.tsum(err * err, axis=1))
            opt_bc.step([g.data for g in grad_of(loss, self.bundle.policy.params())])
            _, mu_q = disc_enc_heads(self.bundle.disc_enc, Tensor(np.concatenate([s, sn], axis=-1)))
            align = tape.tmean(tape.tsum(mu_q * Tensor(z_trans), axis=1))
            opt_enc.step(
                [g.data for g in grad_of(-align, self.bundle.disc_enc.params())]
            )
            if k == steps - 1:
                stats = {"bc_mse": float(loss.data), "enc_align": float(align.data)}
        return stats

    def train(self, total_samples: int | None = None, log_every: int = 1) -> ImitationBundle:
        total = total_samples or self.im_cfg.total_samples
        if self.im_cfg.bc_pretrain_steps > 0:
            self.pretrain()
        horizon = max(1, self.ppo_cfg.tuples_per_update // self.n_envs)
        n_iters = max(1, total // (horizon * self.n_envs))
        step = 0
        for it in range(n_iters):
            buf, tr_s, tr_sn, tr_z = self.collect(horizon)
            stats = ppo_update(
                self.bundle.policy,
                self.bundle.value_net,
                buf,
                self.ppo_cfg,
                self.opt_policy,
                self.opt_value,
                self.rng,
                extra_policy_loss=self._aux_policy_loss,
            )
            disc_parts = {}
            for _ in range(self.im_cfg.disc_updates_per_iter):
                disc_parts = self.update_discriminator(tr_s, tr_sn, tr_z)
            step += horizon * self.n_envs
            if it % log_every == 0:
                self.bundle.curve.append(
                    {
                        "step": step,
                        "disc_loss": disc_parts.get("bce", math.nan),
                        "reward_mean": stats["mean_reward"],
                        "diversity_loss": float(getattr(self, "_last_div", Tensor(0.0)).data),
                        "d_on_policy": disc_parts.get("d_neg", math.nan),
                    }
                )
        return self.bundle

    def evaluate_disc_on_policy(self, n_steps: int = 256) -> float:
        """Mean discriminator output on fresh mean-action rollouts."""
        world = VecWorld(self.sim_cfg, 8, side_kinds=(SIDE_ARM, SIDE_ABSENT))
        rng = np.random.default_rng(12345)
        z = sample_sphere(self.net_cfg.latent_dim, rng, 8)
        for w in range(8):
            qi, qdi = self.refs.sample_init_state(rng, self.skill_filter)
            world.reset_arm(w, 0, q=qi, qd=qdi)
        vals = []
        for t in range(n_steps):
            s = skill_state_features(world.q[:, 0], world.qd[:, 0], self.sim_cfg)
            act = self.bundle.act_mean(s, z)
            for w in range(8):
                world.set_targets(w, 0, act[w])
            world.step(self.sim_cfg.substeps_per_imitation)
            sn = skill_state_features(world.q[:, 0], world.qd[:, 0], self.sim_cfg)
            vals.append(self.bundle.disc_prob(np.concatenate([s, sn], axis=-1)))
            if (t + 1) % self.im_cfg.episode_length == 0:
                z = sample_sphere(self.net_cfg.latent_dim, rng, 8)
                for w in range(8):
                    qi, qdi = self.refs.sample_init_state(rng, self.skill_filter)
                    world.reset_arm(w, 0, q=qi, qd=qdi)
        return float(np.mean(vals))


def train_imitation(
    skill_filter: int | None,
    references: ReferenceSet,
    sim_cfg: SimConfig,
    net_cfg: NetConfig,
    ppo_cfg: PpoConfig,
    im_cfg: ImitationConfig,
    rng: np.random.Generator,
    total_samples: int | None = None,
) -> ImitationBundle:
    """Train one imitation bundle (skill_filter=None trains the universal)."""
    trainer = ImitationTrainer(
        skill_filter, references, sim_cfg, net_cfg, ppo_cfg, im_cfg, rng
    )
    return trainer.train(total_samples)
