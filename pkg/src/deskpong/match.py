"""Agent-agent gameplay: serves, the rally loop, scoring, and rally logs.

Points start from a neutral launcher serve (alternating receiver), both
agents run their control stacks at the configured rates, and strategy
commands refresh whenever the ball starts moving toward a side. Scoring
walks the event stream; rallies that hit the tick cap are lets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import BallControlConfig, MatchConfig, SimConfig
from .control import (
    ControlStack,
    StackController,
    predict_interception,
    sample_launch,
)
from .features import shoulder_position
from .refs import READY_POSE
from .sim import SIDE_ARM, EventKind, SimEvent, VecWorld
from .strategy import STRATEGY_OBS_DIM, StrategyAction


@dataclass
class RallyLog:
    """One point: strategy tuples per side, events, outcome."""

    serve_toward: int
    serve_tick: int = 0
    strategy_tuples: tuple[list, list] = field(default_factory=lambda: ([], []))
    events: list[SimEvent] = field(default_factory=list)
    winner: int | None = None
    hit_count: int = 0
    let: bool = False
    landings: tuple[list, list] = field(default_factory=lambda: ([], []))
    commanded_targets: tuple[list, list] = field(default_factory=lambda: ([], []))


@dataclass
class MatchStats:
    points: int = 0
    decided: int = 0
    lets: int = 0
    wins: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=np.int64))
    total_hits: int = 0
    skill_histogram: np.ndarray = field(default_factory=lambda: np.zeros((2, 5), dtype=np.int64))
    landing_points: list = field(default_factory=list)

    @property
    def winning_rate(self) -> tuple[float, float]:
        if self.decided == 0:
            return (0.0, 0.0)
        return (self.wins[0] / self.decided, self.wins[1] / self.decided)

    @property
    def avg_rounds(self) -> float:
        return self.total_hits / max(1, self.points)

    def add(self, log: RallyLog) -> None:
        self.points += 1
        self.total_hits += log.hit_count
        if log.winner is None:
            self.lets += 1
        else:
            self.decided += 1
            self.wins[log.winner] += 1
        for side in (0, 1):
            for _, _, act in log.strategy_tuples[side]:
                self.skill_histogram[side, int(np.argmax(act[:5]))] += 1
        self.landing_points.extend(log.landings[0])

    def merge(self, other: "MatchStats") -> "MatchStats":
        out = MatchStats()
        out.points = self.points + other.points
        out.decided = self.decided + other.decided
        out.lets = self.lets + other.lets
        out.wins = self.wins + other.wins
        out.total_hits = self.total_hits + other.total_hits
        out.skill_histogram = self.skill_histogram + other.skill_histogram
        out.landing_points = self.landing_points + other.landing_points
        return out


class ScoringError(ValueError):
    pass


def score_rally(events: list[SimEvent], server: int, max_ticks: int | None = None) -> int | None:
    """Winner of a terminated rally by walking its events; None for a let.

    Failures and their losers: net hit (hitter), bounce on the hitter's own
    half before crossing (hitter), second bounce on a half (that half's
    side), ball out after a legal bounce (the receiver missed) or without
    one (the hitter).
    """
    last_hitter = server
    crossed = False
    opp_bounced = False
    terminal = False
    winner: int | None = None
    for e in events:
        if e.kind == EventKind.PADDLE_HIT:
            last_hitter = e.side
            crossed = False
            opp_bounced = False
        elif e.kind in (EventKind.NET_CROSSED_TOWARD_NEAR, EventKind.NET_CROSSED_TOWARD_FAR):
            toward = 0 if e.kind == EventKind.NET_CROSSED_TOWARD_NEAR else 1
            if toward != last_hitter:
                crossed = True
        elif e.kind in (EventKind.TABLE_BOUNCE_NEAR, EventKind.TABLE_BOUNCE_FAR):
            if e.side == last_hitter and not crossed:
                winner = 1 - last_hitter
                terminal = True
                break
            if e.side != last_hitter:
                opp_bounced = True
        elif e.kind == EventKind.DOUBLE_BOUNCE:
            winner = 1 - e.side
            terminal = True
            break
        elif e.kind == EventKind.NET_HIT:
            winner = 1 - last_hitter
            terminal = True
            break
        elif e.kind == EventKind.BALL_OUT:
            winner = last_hitter if opp_bounced else 1 - last_hitter
            terminal = True
            break
    if not terminal:
        if max_ticks is None:
            raise ScoringError("event list is not terminated")
        return None
    return winner


def build_strategy_obs(world: VecWorld, w: int, side: int, cfg: SimConfig) -> np.ndarray:
    """18-dim strategy observation in the side's canonical frame (own half
    at negative x): own root and paddle, opponent root and paddle, ball."""
    pos, _, _ = world.paddle_poses()
    sigma = 1.0 if side == 0 else -1.0

    def canon(v):
        out = np.array(v, dtype=np.float64)
        out[0] *= sigma
        out[1] *= sigma
        return out

    own_root = shoulder_position(side, np.float64(world.base_y[w, side]), cfg)
    opp_root = shoulder_position(1 - side, np.float64(world.base_y[w, 1 - side]), cfg)
    return np.concatenate(
        [
            canon(own_root),
            canon(pos[w, side]),
            canon(opp_root),
            canon(pos[w, 1 - side]),
            canon(world.ball_p[w]),
            canon(world.ball_v[w]),
        ]
    )


def target_to_table(target_canonical: np.ndarray, side: int) -> np.ndarray:
    sigma = 1.0 if side == 0 else -1.0
    return np.array([sigma * target_canonical[0], sigma * target_canonical[1]])


class PointRunner:
    """Simulates points between two strategies on two control stacks."""

    def __init__(
        self,
        stack_a: ControlStack,
        stack_b: ControlStack,
        sim_cfg: SimConfig,
        bc_cfg: BallControlConfig,
        match_cfg: MatchConfig,
        mode_a: str = "mixer",
        mode_b: str = "mixer",
        transition_a=None,
        transition_b=None,
    ):
        self.sim_cfg = sim_cfg
        self.bc_cfg = bc_cfg
        self.match_cfg = match_cfg
        self.world = VecWorld(sim_cfg, 1, side_kinds=(SIDE_ARM, SIDE_ARM))
        self.controllers = (
            StackController(stack_a, 0, sim_cfg, mode=mode_a, transition_policy=transition_a),
            StackController(stack_b, 1, sim_cfg, mode=mode_b, transition_policy=transition_b),
        )
        self._footwork_pending = [False, False]

    def play_point(
        self,
        strategy_a,
        strategy_b,
        serve_toward: int,
        rng: np.random.Generator,
        decision_hook=None,
    ) -> RallyLog:
        """One point; strategies refresh their side's command at triggers.

        `decision_hook(side, obs, rng) -> StrategyAction | None` overrides a
        side's strategy for RL rollouts.
        """
        cfg = self.sim_cfg
        world = self.world
        strategies = (strategy_a, strategy_b)
        world.reset_arm(0, 0, base_y=0.0, q=READY_POSE, qd=np.zeros(4))
        world.reset_arm(0, 1, base_y=0.0, q=READY_POSE, qd=np.zeros(4))
        pos0, vel0 = sample_launch(rng, cfg, self.bc_cfg, toward_side=serve_toward)
        world.launch(0, pos0, vel0)
        log = RallyLog(serve_toward=serve_toward, serve_tick=int(world.tick[0]))
        for c in self.controllers:
            c.begin_point()
        self._footwork_pending = [True, True]
        self._trigger(serve_toward, strategies, log, rng, decision_hook)

        sub_i = cfg.substeps_per_imitation
        per_ctrl = cfg.substeps_per_control // sub_i
        max_ticks = self.match_cfg.max_rally_ticks
        terminal = False
        t = 0
        while t < max_ticks and not terminal:
            for side in (0, 1):
                if t % cfg.substeps_per_control == 0:
                    self._apply_footwork(side)
                    self.controllers[side].control_step(world, 0)
                self.controllers[side].imitation_step(world, 0)
            events = world.step(sub_i)[0]
            t += sub_i
            for e in events:
                log.events.append(e)
                if e.kind == EventKind.PADDLE_HIT:
                    log.hit_count += 1
                    self._footwork_pending[1 - e.side] = True
                    self._trigger(1 - e.side, strategies, log, rng, decision_hook)
                elif e.kind in (EventKind.TABLE_BOUNCE_NEAR, EventKind.TABLE_BOUNCE_FAR):
                    hitter = self._last_hitter(log)
                    if hitter is not None and e.side != hitter:
                        log.landings[hitter].append((e.position[0], e.position[1]))
                for c in self.controllers:
                    c.on_events([e])
                if e.kind in (EventKind.DOUBLE_BOUNCE, EventKind.NET_HIT, EventKind.BALL_OUT):
                    terminal = True
            if world.ball_dead[0] and not terminal:
                terminal = True
        if terminal:
            log.winner = score_rally(log.events, server=1 - log.serve_toward, max_ticks=max_ticks)
        else:
            log.winner = None
            log.let = True
        return log

    def _last_hitter(self, log: RallyLog) -> int | None:
        for e in reversed(log.events):
            if e.kind == EventKind.PADDLE_HIT:
                return e.side
        return None

    def _trigger(self, side: int, strategies, log: RallyLog, rng, decision_hook) -> None:
        obs = build_strategy_obs(self.world, 0, side, self.sim_cfg)
        action: StrategyAction | None = None
        if decision_hook is not None:
            action = decision_hook(side, obs, rng)
        if action is None:
            action = strategies[side].act(obs, rng)
        table_target = target_to_table(action.target_xy, side)
        self.controllers[side].set_command(action.delta, table_target)
        log.strategy_tuples[side].append(
            (int(self.world.tick[0]), obs, np.concatenate([action.delta, action.target_xy]))
        )
        log.commanded_targets[side].append(table_target)

    def _apply_footwork(self, side: int) -> None:
        """One-shot slide positioning per incoming ball (same rule as the
        training environment)."""
        if not self._footwork_pending[side] or self.world.ball_dead[0]:
            return
        sigma = -1.0 if side == 0 else 1.0
        moving_toward = self.world.ball_v[0, 0] * sigma > 0.0
        if not moving_toward:
            return
        plane = sigma * 0.9
        hit = predict_interception(
            self.world.ball_p[0] * np.array([sigma, 1.0, 1.0]),
            self.world.ball_v[0] * np.array([sigma, 1.0, 1.0]),
            self.sim_cfg,
            -abs(plane),
        )
        if hit is not None:
            self.world.set_slide_target(0, side, 0.85 * hit[1])
            self._footwork_pending[side] = False


def play_match(
    runner: PointRunner,
    strategy_a,
    strategy_b,
    n_points: int,
    rng: np.random.Generator,
    collect_logs: bool = False,
) -> tuple[MatchStats, list[RallyLog]]:
    """n points with alternating serves; lets are re-played (counted)."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    stats = MatchStats()
    logs: list[RallyLog] = []
    for k in range(n_points):
        log = runner.play_point(strategy_a, strategy_b, serve_toward=k % 2, rng=rng)
        stats.add(log)
        if collect_logs:
            logs.append(log)
    return stats, logs


class AgentAgentEnv:
    """Environment adapter for strategy learning: our agent on side 0, a
    fixed opponent strategy on side 1, symmetric stacks."""

    def __init__(
        self,
        stack: ControlStack,
        opponent_strategy,
        sim_cfg: SimConfig,
        bc_cfg: BallControlConfig,
        match_cfg: MatchConfig,
        opponent_stack: ControlStack | None = None,
    ):
        self.runner = PointRunner(
            stack, opponent_stack or stack, sim_cfg, bc_cfg, match_cfg
        )
        self.opponent = opponent_strategy

    def collect(self, strategy, n_rallies: int, rng: np.random.Generator) -> list[RallyLog]:
        logs = []
        for k in range(n_rallies):
            logs.append(
                self.runner.play_point(strategy, self.opponent, serve_toward=k % 2, rng=rng)
            )
        return logs

    def evaluate(self, strategy, n_points: int, seed: int) -> dict:
        rng = np.random.default_rng(seed)
        stats, _ = play_match(self.runner, strategy, self.opponent, n_points, rng)
        return {
            "winning_rate": stats.winning_rate[0],
            "avg_rounds": stats.avg_rounds,
            "lets": stats.lets,
            "points": stats.points,
        }

    def play_rl_episode(self, rl_strategy, rng: np.random.Generator, cap: int, mode: str):
        """One point driven by the stochastic RL strategy on side 0.

        Returns per-decision (obs, raw action, logp, reward) rows:
        competition pays +/- goal reward on the final decision; cooperation
        pays 1 per decision.
        """
        rows_obs, rows_act, rows_logp = [], [], []

        def hook(side, obs, hook_rng):
            if side != 0 or len(rows_obs) >= cap:
                return None
            action, raw, logp = rl_strategy.act_stochastic(obs, hook_rng)
            rows_obs.append(obs)
            rows_act.append(raw)
            rows_logp.append(logp)
            return action

        log = self.runner.play_point(
            rl_strategy, self.opponent, serve_toward=int(rng.integers(0, 2)),
            rng=rng, decision_hook=hook,
        )
        n = len(rows_obs)
        if n == 0:
            return [], [], [], []
        if mode == "cooperation":
            rewards = [1.0] * n
        else:
            rewards = [0.0] * n
            goal = 10.0
            if log.winner == 0:
                rewards[-1] = goal
            elif log.winner == 1:
                rewards[-1] = -goal
        return rows_obs, rows_act, rows_logp, rewards
