"""Realtime human-vs-agent session: one deterministic loop per session.

The human drives a free paddle through pose messages; each control tick
the session converts the latest latched pose into a velocity command for
the simulated paddle. The agent plays through its control stack with the
strategy refreshed whenever the ball starts moving toward it. Frames
stream out at the configured rate; rallies are logged for fine-tuning.
"""

from __future__ import annotations

import itertools
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..config import RunConfig
from ..control import ControlStack, StackController, predict_interception
from ..match import RallyLog, build_strategy_obs, score_rally, target_to_table
from ..refs import READY_POSE
from ..sim import (
    SIDE_ARM,
    SIDE_FREE,
    EventKind,
    PaddlePose,
    VecWorld,
    paddle_velocity_command,
)
from ..strategy import CvaeStrategy, FilterMode, StrategyAction
from ..control import sample_launch

AGENT_SIDE = 0
HUMAN_SIDE = 1

HUMAN_PADDLE_REST = np.array([1.05, 0.0, 1.0])
HUMAN_PADDLE_NORMAL = np.array([-1.0, 0.0, 0.0])


class SessionState(str, Enum):
    LOBBY = "lobby"
    RALLYING = "rallying"
    POINT_OVER = "point_over"
    CLOSED = "closed"


@dataclass
class SessionStats:
    points: int = 0
    agent_wins: int = 0
    human_wins: int = 0
    lets: int = 0
    total_hits: int = 0
    model_version: str = "v0"
    stack_version: str = "v0"
    mode: str = "competition"
    history: list = field(default_factory=list)  # (point index, winner, hits, version)

    @property
    def agent_winning_rate(self) -> float:
        decided = self.agent_wins + self.human_wins
        return self.agent_wins / decided if decided else 0.0

    @property
    def avg_hits(self) -> float:
        return self.total_hits / self.points if self.points else 0.0

    def payload(self) -> dict:
        return {
            "points": self.points,
            "agent_wins": self.agent_wins,
            "human_wins": self.human_wins,
            "lets": self.lets,
            "agent_winning_rate": self.agent_winning_rate,
            "avg_hits": self.avg_hits,
            "model_version": self.model_version,
            "stack_version": self.stack_version,
            "mode": self.mode,
            "history": self.history,
        }


class Session:
    """One live world, one human stream, one agent."""

    _ids = itertools.count(1)

    def __init__(
        self,
        stack: ControlStack,
        strategy_model,
        cfg: RunConfig,
        mode: str = "competition",
        pace: str = "fast",
        seed: int = 0,
    ):
        self.id = f"s{next(self._ids)}-{uuid.uuid4().hex[:8]}"
        self.cfg = cfg
        self.mode = FilterMode(mode)
        self.pace = pace
        self.rng = np.random.default_rng(seed)
        self.stack = stack
        self.strategy = CvaeStrategy(strategy_model) if strategy_model is not None else None
        self.pending_strategy = None  # swap between points only
        self.world = VecWorld(cfg.sim, 1, side_kinds=(SIDE_ARM, SIDE_FREE))
        self.controller = StackController(stack, AGENT_SIDE, cfg.sim, mode="mixer")
        self.state = SessionState.LOBBY
        self.stats = SessionStats(mode=mode)
        self.rally_logs: list[RallyLog] = []
        self.current_log: RallyLog | None = None
        self.frame_tick = 0
        self.user_pose: PaddlePose | None = None
        self.last_pose_t = -1.0
        self.dropped_poses = 0
        self.rejected_messages = 0
        self._footwork_pending = False
        self._serve_requested = False
        self.world.set_free_paddle(0, HUMAN_SIDE, HUMAN_PADDLE_REST, HUMAN_PADDLE_NORMAL)
        self.world.reset_arm(0, AGENT_SIDE, q=READY_POSE)

    # -- client inputs -------------------------------------------------

    def ingest_paddle(self, pos, quat, t: float) -> bool:
        """Latch the latest user pose; stale timestamps are dropped."""
        if self.state is SessionState.CLOSED:
            return False
        if t <= self.last_pose_t:
            self.dropped_poses += 1
            return False
        pos = np.asarray(pos, dtype=np.float64)
        normal = _quat_rotate(np.asarray(quat, dtype=np.float64), np.array([-1.0, 0.0, 0.0]))
        if pos.shape != (3,) or not np.all(np.isfinite(pos)) or not np.all(np.isfinite(normal)):
            raise ValueError("malformed pose")
        self.user_pose = PaddlePose(pos, normal, np.zeros(3))
        self.last_pose_t = t
        return True

    def request_serve(self) -> None:
        self._serve_requested = True

    def set_mode(self, mode: str) -> None:
        self.mode = FilterMode(mode)
        self.stats.mode = self.mode.value

    def swap_strategy(self, model) -> None:
        """Queued; applied between points only."""
        self.pending_strategy = model

    # -- loop ----------------------------------------------------------

    def _serve(self) -> None:
        toward = self.rng.integers(0, 2)
        self.world.reset_arm(0, AGENT_SIDE, q=READY_POSE, qd=np.zeros(4))
        pos0, vel0 = sample_launch(self.rng, self.cfg.sim, self.cfg.ball_control, int(toward))
        self.world.launch(0, pos0, vel0)
        self.current_log = RallyLog(serve_toward=int(toward), serve_tick=int(self.world.tick[0]))
        self.controller.begin_point()
        self._footwork_pending = True
        if toward == AGENT_SIDE:
            self._agent_strategy_update()
        self.state = SessionState.RALLYING

    def _agent_strategy_update(self) -> None:
        obs = build_strategy_obs(self.world, 0, AGENT_SIDE, self.cfg.sim)
        if self.strategy is not None:
            action = self.strategy.act(obs, self.rng)
        else:
            from ..strategy import RandomStrategy

            action = RandomStrategy(self.cfg.ball_control).act(obs, self.rng)
        self.controller.set_command(action.delta, target_to_table(action.target_xy, AGENT_SIDE))
        if self.current_log is not None:
            self.current_log.strategy_tuples[AGENT_SIDE].append(
                (int(self.world.tick[0]), obs, np.concatenate([action.delta, action.target_xy]))
            )

    def _apply_footwork(self) -> None:
        if not self._footwork_pending or self.world.ball_dead[0]:
            return
        if self.world.ball_v[0, 0] >= 0.0:
            return
        hit = predict_interception(self.world.ball_p[0], self.world.ball_v[0], self.cfg.sim, -0.9)
        if hit is not None:
            self.world.set_slide_target(0, AGENT_SIDE, 0.85 * hit[1])
            self._footwork_pending = False

    def advance_frame(self) -> dict:
        """One service frame: ingest latched pose, run the physics chunk,
        return the state-frame message."""
        cfg = self.cfg.sim
        events_out: list = []
        if self._serve_requested and self.state in (
            SessionState.LOBBY,
            SessionState.POINT_OVER,
        ):
            self._serve_requested = False
            if self.pending_strategy is not None:
                self.strategy = CvaeStrategy(self.pending_strategy)
                self.stats.model_version = self.pending_strategy.version
                self.pending_strategy = None
            self._serve()

        # human paddle velocity command at the frame rate
        if self.user_pose is not None:
            pos, nrm, _ = self.world.paddle_poses()
            sim_pose = PaddlePose(pos[0, HUMAN_SIDE], nrm[0, HUMAN_SIDE], np.zeros(3))
            dt_cmd = cfg.dt * cfg.substeps_per_frame
            cmd = paddle_velocity_command(
                self.user_pose, sim_pose, dt_cmd, self.cfg.service.paddle_speed_cap
            )
            self.world.set_free_paddle_velocity(0, HUMAN_SIDE, cmd)

        if self.state is SessionState.RALLYING:
            tick = int(self.world.tick[0])
            if tick % cfg.substeps_per_control == 0:
                self._apply_footwork()
                self.controller.control_step(self.world, 0)
            if tick % cfg.substeps_per_imitation == 0:
                self.controller.imitation_step(self.world, 0)
            events = self.world.step(cfg.substeps_per_frame)[0]
            terminal = False
            for e in events:
                events_out.append(e)
                self.current_log.events.append(e)
                self.controller.on_events([e])
                if e.kind == EventKind.PADDLE_HIT:
                    self.current_log.hit_count += 1
                    if e.side == HUMAN_SIDE:
                        self._footwork_pending = True
                        self._agent_strategy_update()
                if e.kind in (EventKind.DOUBLE_BOUNCE, EventKind.NET_HIT, EventKind.BALL_OUT):
                    terminal = True
            cap = self.cfg.match.max_rally_ticks
            rally_ticks = tick - self.current_log.serve_tick
            if terminal or self.world.ball_dead[0] or rally_ticks > cap:
                self._finish_point(rally_ticks > cap)
        else:
            # keep the world stepping so the human paddle stays live
            self.world.step(cfg.substeps_per_frame)

        self.frame_tick += 1
        return self._frame_message(events_out)

    def _finish_point(self, capped: bool) -> None:
        log = self.current_log
        if capped:
            log.winner = None
            log.let = True
        else:
            log.winner = score_rally(
                log.events, server=1 - log.serve_toward, max_ticks=self.cfg.match.max_rally_ticks
            )
        self.rally_logs.append(log)
        self.stats.points += 1
        self.stats.total_hits += log.hit_count
        if log.winner is None:
            self.stats.lets += 1
        elif log.winner == AGENT_SIDE:
            self.stats.agent_wins += 1
        else:
            self.stats.human_wins += 1
        self.stats.history.append(
            {
                "point": self.stats.points,
                "winner": "agent" if log.winner == AGENT_SIDE else ("human" if log.winner == HUMAN_SIDE else "let"),
                "hits": log.hit_count,
                "model_version": self.stats.model_version,
            }
        )
        self.state = SessionState.POINT_OVER

    def _frame_message(self, events) -> dict:
        pos, nrm, _ = self.world.paddle_poses()
        return {
            "type": "frame",
            "t": self.frame_tick,
            "tick": int(self.world.tick[0]),
            "state": self.state.value,
            "ball": np.concatenate([self.world.ball_p[0], self.world.ball_v[0]]).tolist(),
            "joints": self.world.q[0, AGENT_SIDE].tolist(),
            "agent_paddle": pos[0, AGENT_SIDE].tolist(),
            "pos": pos[0, HUMAN_SIDE].tolist(),
            "quat": _normal_to_quat(nrm[0, HUMAN_SIDE]).tolist(),
            "score": [int(self.stats.agent_wins), int(self.stats.human_wins)],
            "events": [e.kind.name.lower() for e in events],
        }

    def close(self) -> None:
        self.state = SessionState.CLOSED


def _quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate v by unit quaternion (w, x, y, z)."""
    w, x, y, z = q / max(np.linalg.norm(q), 1e-12)
    u = np.array([x, y, z])
    return 2.0 * np.dot(u, v) * u + (w * w - np.dot(u, u)) * v + 2.0 * w * np.cross(u, v)


def _normal_to_quat(n: np.ndarray) -> np.ndarray:
    """Quaternion rotating the rest normal (-1, 0, 0) onto n."""
    a = np.array([-1.0, 0.0, 0.0])
    n = n / max(np.linalg.norm(n), 1e-12)
    c = float(np.dot(a, n))
    if c > 1.0 - 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    if c < -1.0 + 1e-12:
        return np.array([0.0, 0.0, 0.0, 1.0])
    axis = np.cross(a, n)
    s = np.linalg.norm(axis)
    axis = axis / s
    half = np.arccos(np.clip(c, -1.0, 1.0)) / 2.0
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])
