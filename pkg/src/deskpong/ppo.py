"""Proximal policy optimization with generalized advantage estimation.

One implementation serves every trainer in the package (imitation, ball
control, mixer, and the RL strategy baseline). Rollouts are collected from
vectorized environments as (T, n_envs) arrays; episode boundaries are
carried by the `dones` mask and a bootstrap value row closes each stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import PpoConfig
from .nn import Adam, GaussianPolicy, Mlp, Tensor, grad_of, tape


class TrainingDivergedError(RuntimeError):
    """Loss went non-finite; training aborted with diagnostics."""


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Exponentially weighted advantages and returns.

    `values` must carry one bootstrap row beyond the last step (the value
    of the state following step T-1; irrelevant when that step is done).
    Shapes: rewards/dones (T,) or (T, N); values (T+1,) or (T+1, N).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if rewards.shape != dones.shape:
        raise ValueError("rewards and dones must have identical shapes")
    if values.shape[0] != rewards.shape[0] + 1 or values.shape[1:] != rewards.shape[1:]:
        raise ValueError("values must have one bootstrap entry beyond rewards")
    if not np.all(np.isfinite(rewards)):
        raise ValueError("rewards must be finite")
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    last = np.zeros_like(rewards[0] if T else rewards)
    for t in range(T - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * live - values[t]
        last = delta + gamma * lam * live * last
        adv[t] = last
    return adv, adv + values[:-1]


def gae_bruteforce(rewards, values, dones, gamma, lam):
    """O(T^2) double-sum oracle used by the tests; keep independent of gae()."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    for t in range(T):
        total = 0.0
        weight = 1.0
        for k in range(t, T):
            live_k = 1.0 - dones[k]
            delta = rewards[k] + gamma * values[k + 1] * live_k - values[k]
            total += weight * delta
            if dones[k]:
                break
            weight *= gamma * lam
        adv[t] = total
    return adv, adv + values[:-1]


@dataclass
class RolloutBuffer:
    """Fixed-horizon storage for vectorized rollouts."""

    horizon: int
    n_envs: int
    obs_dim: int
    act_dim: int
    states: np.ndarray = field(init=False)
    actions: np.ndarray = field(init=False)
    log_probs: np.ndarray = field(init=False)
    rewards: np.ndarray = field(init=False)
    values: np.ndarray = field(init=False)
    dones: np.ndarray = field(init=False)
    _t: int = field(default=0, init=False)

    def __post_init__(self):
        T, N = self.horizon, self.n_envs
        self.states = np.zeros((T, N, self.obs_dim))
        self.actions = np.zeros((T, N, self.act_dim))
        self.log_probs = np.zeros((T, N))
        self.rewards = np.zeros((T, N))
        self.values = np.zeros((T + 1, N))
        self.dones = np.zeros((T, N))

    def add(self, obs, act, logp, rew, val, done) -> None:
        t = self._t
        if t >= self.horizon:
            raise IndexError("rollout buffer full")
        self.states[t] = obs
        self.actions[t] = act
        self.log_probs[t] = logp
        self.rewards[t] = rew
        self.values[t] = val
        self.dones[t] = done
        self._t += 1

    def set_bootstrap(self, values) -> None:
        self.values[self.horizon] = values

    @property
    def full(self) -> bool:
        return self._t == self.horizon

    def size(self) -> int:
        return self._t * self.n_envs


def ppo_update(
    policy: GaussianPolicy,
    value_net: Mlp,
    buf: RolloutBuffer,
    cfg: PpoConfig,
    opt_policy: Adam,
    opt_value: Adam,
    rng: np.random.Generator,
    extra_policy_loss=None,
) -> dict:
    """One PPO update over a full buffer; returns logged statistics.

    `extra_policy_loss(state_batch) -> Tensor` lets callers add auxiliary
    objectives (the imitation trainer injects the latent-diversity term).
    """
    if buf.size() == 0:
        raise ValueError("empty rollout buffer")
    adv, ret = gae(buf.rewards, buf.values, buf.dones, cfg.discount, cfg.gae_lambda)

    n = buf.size()
    states = buf.states[: buf._t].reshape(n, -1)
    actions = buf.actions[: buf._t].reshape(n, -1)
    logp_old = buf.log_probs[: buf._t].reshape(n)
    adv = adv.reshape(n)
    ret = ret.reshape(n)

    if cfg.normalize_advantages:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    stats = {"policy_loss": 0.0, "value_loss": 0.0, "approx_kl": 0.0, "minibatches": 0}
    mb = min(cfg.policy_batch_size, n)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            idx = order[start : start + mb]
            s_mb = states[idx]
            lp_new = policy.log_prob_taped(Tensor(s_mb), actions[idx])
            ratio = tape.texp(lp_new - Tensor(logp_old[idx]))
            adv_t = Tensor(adv[idx])
            unclipped = ratio * adv_t
            clipped = tape.clip(ratio, 1.0 - cfg.clip_threshold, 1.0 + cfg.clip_threshold) * adv_t
            pi_loss = -tape.tmean(tape.minimum(unclipped, clipped))
            total = pi_loss
            if extra_policy_loss is not None:
                total = total + extra_policy_loss(s_mb)
            if not np.isfinite(total.data):
                raise TrainingDivergedError(f"policy loss diverged: {total.data}")
            grads = [g.data for g in grad_of(total, policy.params())]
            opt_policy.step(grads)

            v_pred = value_net.forward(Tensor(s_mb))
            v_err = v_pred - Tensor(ret[idx][:, None])
            v_loss = tape.tmean(v_err * v_err) * Tensor(cfg.value_loss_weight)
            if not np.isfinite(v_loss.data):
                raise TrainingDivergedError(f"value loss diverged: {v_loss.data}")
            vgrads = [g.data for g in grad_of(v_loss, value_net.params())]
            opt_value.step(vgrads)

            stats["policy_loss"] += float(pi_loss.data)
            stats["value_loss"] += float(v_loss.data)
            stats["approx_kl"] += float(np.mean(logp_old[idx] - lp_new.data))
            stats["minibatches"] += 1

    for key in ("policy_loss", "value_loss", "approx_kl"):
        stats[key] /= max(1, stats["minibatches"])
    stats["mean_reward"] = float(buf.rewards[: buf._t].mean())
    return stats
