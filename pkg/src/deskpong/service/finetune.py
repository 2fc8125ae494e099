"""Fine-tuning from logged play: strategy iterations and skill-stack
adaptation to the opponent's observed return distribution."""

from __future__ import annotations

import numpy as np

from ..config import RunConfig
from ..control import ControlStack, train_ball_control
from ..match import RallyLog
from ..sim import EventKind
from ..strategy import CvaeModel, DemoStarvationError, FilterMode, filter_demos, fit_cvae


class InsufficientDataError(RuntimeError):
    """Not enough logged rallies/strokes; the fine-tune is refused."""


def finetune_strategy(
    model: CvaeModel,
    rally_logs: list[RallyLog],
    mode: FilterMode,
    cfg: RunConfig,
    rng: np.random.Generator,
    min_rallies: int | None = None,
) -> CvaeModel:
    """One behavior-cloning iteration on session logs; returns a new model
    version (the input model is not mutated)."""
    minimum = cfg.service.min_finetune_rallies if min_rallies is None else min_rallies
    if len(rally_logs) < minimum:
        raise InsufficientDataError(
            f"need >= {minimum} logged rallies, have {len(rally_logs)}"
        )
    demos = filter_demos(rally_logs, FilterMode(mode), side=0)
    if not demos:
        raise InsufficientDataError(
            f"{FilterMode(mode).value} filter kept 0 of {len(rally_logs)} rallies"
        )
    new = model.copy()
    fit_cvae(new, demos, cfg.strategy, rng)
    base = model.version or "v0"
    try:
        n = int(base.rsplit("v", 1)[-1])
    except ValueError:
        n = 0
    new.version = f"v{n + 1}"
    return new


def estimate_return_distribution(rally_logs: list[RallyLog], cfg: RunConfig) -> dict:
    """Launch-distribution parameters estimated from the opponent's logged
    returns: speed band, entry height band and lateral band of balls
    arriving at the agent."""
    speeds: list[float] = []
    heights: list[float] = []
    laterals: list[float] = []
    min_strokes = cfg.service.min_adapt_strokes
    for log in rally_logs:
        hits = [e for e in log.events if e.kind == EventKind.PADDLE_HIT and e.side == 1]
        crossings = [
            e for e in log.events if e.kind == EventKind.NET_CROSSED_TOWARD_NEAR
        ]
        for hit in hits:
            after = [c for c in crossings if c.tick > hit.tick]
            if not after:
                continue
            cross = after[0]
            dt = (cross.tick - hit.tick) * cfg.sim.dt
            if dt <= 0:
                continue
            dist = float(
                np.hypot(cross.position[0] - hit.position[0], cross.position[1] - hit.position[1])
            )
            speeds.append(dist / dt)
            heights.append(cross.position[2] - cfg.sim.table_height - cfg.sim.net_height)
            laterals.append(cross.position[1])
    if len(speeds) < min_strokes:
        raise InsufficientDataError(
            f"need >= {min_strokes} opponent strokes, have {len(speeds)}"
        )
    speeds_a = np.asarray(speeds)
    heights_a = np.clip(np.asarray(heights), 0.05, 0.8)
    laterals_a = np.asarray(laterals)
    return {
        "n_strokes": len(speeds),
        "speed_mean": float(speeds_a.mean()),
        "speed": (float(np.percentile(speeds_a, 15)), float(np.percentile(speeds_a, 85))),
        "entry_height": (
            float(np.percentile(heights_a, 15)),
            float(np.percentile(heights_a, 85)),
        ),
        "lateral": (
            float(np.clip(np.percentile(laterals_a, 10), -0.65, 0.0)),
            float(np.clip(np.percentile(laterals_a, 90), 0.0, 0.65)),
        ),
    }


def adapt_skill_stack(
    stack: ControlStack,
    rally_logs: list[RallyLog],
    cfg: RunConfig,
    rng: np.random.Generator,
    refs=None,
    budget: int | None = None,
    skills: tuple[int, ...] = (1, 2, 3, 4, 5),
) -> tuple[ControlStack, dict]:
    """Re-train the ball-control layer on the launch distribution estimated
    from logged opponent strokes. Returns a new versioned stack; zero
    budget is a no-op (the original stack objects are reused)."""
    est = estimate_return_distribution(rally_logs, cfg)
    if budget == 0:
        return stack, est
    bc_cfg = type(cfg.ball_control)(**vars(cfg.ball_control))
    lo, hi = est["speed"]
    bc_cfg.launch_speed = (max(2.5, lo), max(3.0, hi))
    bc_cfg.launch_entry_height = est["entry_height"]
    bc_cfg.launch_lateral = est["lateral"]
    new_controls = {}
    for skill in skills:
        new_controls[skill] = train_ball_control(
            skill,
            stack.bundles[skill],
            cfg.sim,
            cfg.nets,
            cfg.ppo,
            bc_cfg,
            rng,
            total_samples=budget,
            refs=refs,
        )
    adapted = ControlStack(
        bundles=stack.bundles,
        universal=stack.universal,
        ball_controls={**stack.ball_controls, **new_controls},
        mixer=stack.mixer,
        version=stack.version + "+adapted",
    )
    return adapted, est
