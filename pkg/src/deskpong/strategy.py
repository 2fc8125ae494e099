"""Strategy-level control: choosing the skill and ball target per incoming
ball.

The learned controller is a conditional VAE trained by iterative behavior
cloning: collect rallies, filter the demonstrations (wins for competition,
successfully-returned strokes for cooperation), fit the CVAE, repeat. A
uniform random strategy serves as the bootstrap data collector and the
fixed opponent; a PPO-trained strategy is the RL baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .config import BallControlConfig, NetConfig, PpoConfig, SimConfig, StrategyConfig
from .nn import Adam, GaussianPolicy, Mlp, Tensor, grad_of, tape
from .sim import EventKind, SimEvent

STRATEGY_OBS_DIM = 18   # own root+paddle (6), opponent root+paddle (6), ball p+v (6)
STRATEGY_ACT_DIM = 7    # 5 skill logits/one-hot + 2 target coordinates


class FilterMode(str, Enum):
    COMPETITION = "competition"
    COOPERATION = "cooperation"


@dataclass(frozen=True)
class StrategyAction:
    delta: np.ndarray      # one-hot over 5 skills
    target_xy: np.ndarray  # landing target, table frame

    @property
    def skill(self) -> int:
        return int(np.argmax(self.delta)) + 1


def one_hot(skill_index: int) -> np.ndarray:
    d = np.zeros(5)
    d[skill_index - 1] = 1.0
    return d


# ---------------------------------------------------------------------
# CVAE
# ---------------------------------------------------------------------


def kl_gaussian_to_standard(mu: np.ndarray, sigma_sq: np.ndarray) -> float:
    """KL(N(mu, diag sigma_sq) || N(0, I)) in closed form."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma_sq = np.asarray(sigma_sq, dtype=np.float64)
    if np.any(sigma_sq <= 0.0):
        raise ValueError("variances must be positive")
    return float(0.5 * np.sum(mu * mu + sigma_sq - 1.0 - np.log(sigma_sq)))


@dataclass
class CvaeModel:
    """Encoder (o ++ c) -> posterior; decoder (u ++ o) -> action."""

    encoder: Mlp           # -> [mu, log sigma_sq] (2 * latent_dim)
    decoder: Mlp           # -> reconstructed action (7)
    latent_dim: int
    version: str = "v0"

    def params(self):
        return self.encoder.params() + self.decoder.params()

    def copy(self) -> "CvaeModel":
        return CvaeModel(self.encoder.copy(), self.decoder.copy(), self.latent_dim, self.version)


def make_cvae(net_cfg: NetConfig, rng: np.random.Generator) -> CvaeModel:
    d = net_cfg.cvae_latent_dim
    enc = Mlp([STRATEGY_OBS_DIM + STRATEGY_ACT_DIM, *net_cfg.cvae_hidden, 2 * d], rng=rng, final_scale=0.1)
    dec = Mlp([d + STRATEGY_OBS_DIM, *net_cfg.cvae_hidden, STRATEGY_ACT_DIM], rng=rng)
    return CvaeModel(enc, dec, d)


def cvae_loss(
    model: CvaeModel,
    obs: np.ndarray,
    actions: np.ndarray,
    kl_weight: float,
    rng: np.random.Generator,
) -> tuple[Tensor, dict]:
    """Reconstruction (Euclidean norm over the concatenated action) plus
    weighted KL of the posterior to the standard normal; reparameterized."""
    if len(obs) == 0:
        raise ValueError("empty batch")
    obs_t = Tensor(np.asarray(obs, dtype=np.float64))
    act_t = Tensor(np.asarray(actions, dtype=np.float64))
    enc_out = model.encoder.forward(tape.concat([obs_t, act_t], axis=1))
    d = model.latent_dim
    mu = enc_out[:, :d]
    log_var = tape.clip(enc_out[:, d:], -8.0, 8.0)
    sigma = tape.texp(log_var * Tensor(0.5))
    eps = rng.standard_normal((len(obs), d))
    u = mu + sigma * Tensor(eps)
    recon = model.decoder.forward(tape.concat([u, obs_t], axis=1))
    diff = recon - act_t
    norm = tape.tsqrt(tape.tsum(diff * diff, axis=1) + Tensor(1e-12))
    recon_term = tape.tsum(norm)
    var = tape.texp(log_var)
    kl = tape.tsum(Tensor(0.5) * (mu * mu + var - Tensor(1.0) - log_var))
    loss = (recon_term + Tensor(kl_weight) * kl) * Tensor(1.0 / len(obs))
    parts = {"recon": float(recon_term.data) / len(obs), "kl": float(kl.data) / len(obs)}
    return loss, parts


def decode_strategy(
    model: CvaeModel,
    obs: np.ndarray,
    rng: np.random.Generator,
    table_bounds: tuple[float, float, float, float] = (0.10, 1.30, -0.70, 0.70),
) -> StrategyAction:
    """Sample u ~ N(0, I), decode, convert the skill block to one-hot by
    argmax and clamp the target onto the opponent half."""
    u = rng.standard_normal(model.latent_dim)
    out = model.decoder.forward_np(np.concatenate([u, np.asarray(obs, dtype=np.float64)]))
    skill_idx = int(np.argmax(out[:5]))
    x_lo, x_hi, y_lo, y_hi = table_bounds
    target = np.array(
        [float(np.clip(out[5], x_lo, x_hi)), float(np.clip(out[6], y_lo, y_hi))]
    )
    return StrategyAction(one_hot(skill_idx + 1), target)


# ---------------------------------------------------------------------
# strategies
# ---------------------------------------------------------------------


class RandomStrategy:
    """Uniform skill and uniform landing target on the opponent half."""

    def __init__(self, bc_cfg: BallControlConfig | None = None):
        self.bc_cfg = bc_cfg or BallControlConfig()

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> StrategyAction:
        skill = int(rng.integers(1, 6))
        target = np.array(
            [rng.uniform(*self.bc_cfg.target_depth), rng.uniform(*self.bc_cfg.target_lateral)]
        )
        return StrategyAction(one_hot(skill), target)


class CvaeStrategy:
    """Wraps a CvaeModel as a match-ready strategy."""

    def __init__(self, model: CvaeModel):
        self.model = model

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> StrategyAction:
        action = decode_strategy(self.model, obs, rng)
        # decoded targets live in canonical (own side negative x) frame:
        # x is depth on the opponent half, already positive via clamping
        return action


@dataclass
class RlStrategy:
    """Gaussian policy over (5 skill logits, 2 target coords)."""

    policy: GaussianPolicy
    value_net: Mlp
    version: str = "rl-v0"

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None) -> StrategyAction:
        raw = self.policy.mean(np.asarray(obs, dtype=np.float64))
        skill_idx = int(np.argmax(raw[:5]))
        target = np.array([float(np.clip(raw[5], 0.10, 1.30)), float(np.clip(raw[6], -0.70, 0.70))])
        return StrategyAction(one_hot(skill_idx + 1), target)

    def act_stochastic(self, obs: np.ndarray, rng: np.random.Generator):
        raw = self.policy.sample(np.asarray(obs, dtype=np.float64), rng)
        logp = self.policy.log_prob(obs, raw)
        skill_idx = int(np.argmax(raw[:5]))
        target = np.array([float(np.clip(raw[5], 0.10, 1.30)), float(np.clip(raw[6], -0.70, 0.70))])
        return StrategyAction(one_hot(skill_idx + 1), target), raw, float(logp)


def make_rl_strategy(net_cfg: NetConfig, rng: np.random.Generator) -> RlStrategy:
    mean_net = Mlp([STRATEGY_OBS_DIM, *net_cfg.policy_hidden, STRATEGY_ACT_DIM], rng=rng, final_scale=0.3)
    mean_net.biases[-1].data = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.7, 0.0])
    value_net = Mlp([STRATEGY_OBS_DIM, *net_cfg.value_hidden, 1], rng=rng)
    return RlStrategy(GaussianPolicy(mean_net, 0.04), value_net)


# ---------------------------------------------------------------------
# demonstration filtering
# ---------------------------------------------------------------------


def strategy_trigger_ticks(
    events: list[SimEvent], side: int, serve_toward: int | None = None, serve_tick: int = 0
) -> list[int]:
    """Ticks at which the given side's strategy command refreshes: when the
    ball starts moving toward it (the serve, and every opponent hit)."""
    ticks = []
    if serve_toward == side:
        ticks.append(serve_tick)
    for e in events:
        if e.kind == EventKind.PADDLE_HIT and e.side == 1 - side:
            ticks.append(e.tick)
    return ticks


def strategy_trigger(
    events: list[SimEvent],
    side: int,
    after_tick: int = -1,
    serve_toward: int | None = None,
    serve_tick: int = 0,
) -> int | None:
    """First trigger tick for a side after the given tick, or None."""
    for t in strategy_trigger_ticks(events, side, serve_toward, serve_tick):
        if t > after_tick:
            return t
    return None


def successful_return_follows(events: list[SimEvent], side: int, after_tick: int) -> bool:
    """True when the opponent of `side` hits the ball after `after_tick` and
    that return legally crosses the net back toward `side`."""
    opp = 1 - side
    hit_tick = None
    for e in events:
        if e.tick <= after_tick:
            continue
        if hit_tick is None:
            if e.kind == EventKind.PADDLE_HIT and e.side == opp:
                hit_tick = e.tick
            continue
        if e.kind == EventKind.NET_HIT:
            return False
        toward = (
            EventKind.NET_CROSSED_TOWARD_NEAR if side == 0 else EventKind.NET_CROSSED_TOWARD_FAR
        )
        if e.kind == toward:
            return True
        if e.kind == EventKind.PADDLE_HIT:
            return False
    return False


def filter_demos(rally_logs: list, mode: FilterMode, side: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Select (observation, action) strategy tuples from rally logs.

    competition: every tuple of `side` from rallies it won.
    cooperation: tuples whose stroke the opponent successfully returned.
    """
    mode = FilterMode(mode)
    demos: list[tuple[np.ndarray, np.ndarray]] = []
    for log in rally_logs:
        tuples = log.strategy_tuples[side]
        if mode is FilterMode.COMPETITION:
            if log.winner == side:
                demos.extend((obs, act) for _, obs, act in tuples)
        else:
            for tick, obs, act in tuples:
                if successful_return_follows(log.events, side, tick):
                    demos.append((obs, act))
    return demos


class DemoStarvationError(RuntimeError):
    """The filter produced no demonstrations; the iteration must be skipped."""


# ---------------------------------------------------------------------
# iterative behavior cloning (the strategy-learning loop)
# ---------------------------------------------------------------------


def fit_cvae(
    model: CvaeModel,
    demos: list[tuple[np.ndarray, np.ndarray]],
    strat_cfg: StrategyConfig,
    rng: np.random.Generator,
    opt: Adam | None = None,
) -> dict:
    """Stochastic-gradient behavior cloning on the filtered demonstrations."""
    if not demos:
        raise DemoStarvationError("no demonstrations to fit")
    obs = np.stack([d[0] for d in demos])
    act = np.stack([d[1] for d in demos])
    opt = opt or Adam(model.params(), strat_cfg.learning_rate)
    n = len(demos)
    parts = {}
    for _ in range(strat_cfg.epochs_per_iteration):
        order = rng.permutation(n)
        for start in range(0, n, strat_cfg.batch_size):
            idx = order[start : start + strat_cfg.batch_size]
            loss, parts = cvae_loss(model, obs[idx], act[idx], strat_cfg.kl_weight, rng)
            grads = [g.data for g in grad_of(loss, model.params())]
            opt.step(grads)
    return parts


def iterative_bc(
    env,
    n_iterations: int,
    mode: FilterMode,
    net_cfg: NetConfig,
    strat_cfg: StrategyConfig,
    rng: np.random.Generator,
    eval_points: int | None = None,
    log: list | None = None,
) -> CvaeModel:
    """Iterated collect-filter-clone loop.

    `env` must provide `collect(strategy, n_rallies, rng) -> list[RallyLog]`
    and `evaluate(strategy, n_points, seed) -> dict` against the fixed
    opponent. Iteration 1 collects with the uniform random strategy (the
    freshly initialized decoder can be degenerate); later iterations collect
    with the current model. Demonstrations accumulate across iterations.
    """
    mode = FilterMode(mode)
    model = make_cvae(net_cfg, rng)
    opt = Adam(model.params(), strat_cfg.learning_rate) if strat_cfg.warm_start else None
    eval_points = eval_points or strat_cfg.eval_points
    demos: list[tuple[np.ndarray, np.ndarray]] = []
    bootstrap = RandomStrategy()

    if log is not None:
        stats = env.evaluate(bootstrap, eval_points, seed=1000)
        log.append({"iteration": 0, **stats})

    for it in range(1, n_iterations + 1):
        collector = bootstrap if it == 1 else CvaeStrategy(model)
        logs = env.collect(collector, strat_cfg.rallies_per_iteration, rng)
        fresh = filter_demos(logs, mode, side=0)
        if not fresh and not demos:
            raise DemoStarvationError(f"iteration {it}: filter kept no demonstrations")
        if strat_cfg.accumulate_demos:
            demos.extend(fresh)
        else:
            demos = fresh or demos
        if not strat_cfg.warm_start:
            model = make_cvae(net_cfg, rng)
            opt = None
        fit_cvae(model, demos, strat_cfg, rng, opt)
        model.version = f"iter{it}"
        if log is not None:
            stats = env.evaluate(CvaeStrategy(model), eval_points, seed=1000 + it)
            log.append({"iteration": it, "demos": len(demos), **stats})
    return model


def train_rl_strategy(
    env,
    mode: FilterMode,
    net_cfg: NetConfig,
    ppo_cfg: PpoConfig,
    strat_cfg: StrategyConfig,
    rng: np.random.Generator,
    n_updates: int = 30,
) -> RlStrategy:
    """PPO baseline over strategy decisions.

    competition: +/- goal reward at the final decision of each point;
    cooperation: +1 per decision step, episodes capped by config.
    `env` must provide `play_rl_episode(policy_fn, rng, max_decisions)`
    returning (obs list, raw-action list, logp list, rewards list).
    """
    mode = FilterMode(mode)
    strat = make_rl_strategy(net_cfg, rng)
    opt_p = Adam(strat.policy.params(), ppo_cfg.learning_rate)
    opt_v = Adam(strat.value_net.params(), ppo_cfg.learning_rate)
    from .ppo import RolloutBuffer, ppo_update

    cap = (
        strat_cfg.rl_episode_length_cooperation
        if mode is FilterMode.COOPERATION
        else strat_cfg.rl_episode_length
    )
    for _ in range(n_updates):
        rows_obs, rows_act, rows_logp, rows_rew, rows_done, rows_val = [], [], [], [], [], []
        while len(rows_obs) < ppo_cfg.tuples_per_update // 8:
            obs_l, act_l, logp_l, rew_l = env.play_rl_episode(strat, rng, cap, mode.value)
            if not obs_l:
                continue
            vals = strat.value_net.forward_np(np.stack(obs_l))[:, 0]
            for i in range(len(obs_l)):
                rows_obs.append(obs_l[i])
                rows_act.append(act_l[i])
                rows_logp.append(logp_l[i])
                rows_rew.append(rew_l[i])
                rows_done.append(1.0 if i == len(obs_l) - 1 else 0.0)
                rows_val.append(vals[i])
        n = len(rows_obs)
        buf = RolloutBuffer(n, 1, STRATEGY_OBS_DIM, STRATEGY_ACT_DIM)
        for i in range(n):
            buf.add(
                rows_obs[i][None],
                rows_act[i][None],
                np.array([rows_logp[i]]),
                np.array([rows_rew[i]]),
                np.array([rows_val[i]]),
                np.array([rows_done[i]]),
            )
        buf.set_bootstrap(np.zeros(1))
        ppo_update(strat.policy, strat.value_net, buf, ppo_cfg, opt_p, opt_v, rng)
    return strat
