"""Motion-quality and task metrics, plus strategy evaluation reports.

Evaluation discriminators are trained per skill on reference transitions
only (skill i positive, all others negative), independently of any
training-time discriminator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import NetConfig, SimConfig
from .nn import Adam, Mlp, Tensor, grad_of, tape
from .refs import ReferenceSet

PROB_CLAMP = 1e-5


@dataclass
class EvalDiscriminatorSet:
    """Five transition classifiers, one per skill."""

    nets: dict[int, Mlp]

    def score_transitions(self, skill: int, transitions: np.ndarray) -> np.ndarray:
        out = self.nets[skill].forward_np(transitions)
        return 1.0 / (1.0 + np.exp(-out[..., 0]))


def train_eval_discriminators(
    refs: ReferenceSet,
    net_cfg: NetConfig,
    rng: np.random.Generator,
    steps: int = 600,
    batch: int = 256,
    gp_weight: float = 5.0,
    lr: float = 1e-3,
) -> EvalDiscriminatorSet:
    """Skill-i reference transitions positive, all other skills negative."""
    nets: dict[int, Mlp] = {}
    dim = 2 * refs.feature_dim()
    for skill in (1, 2, 3, 4, 5):
        net = Mlp([dim, *net_cfg.disc_hidden, 1], rng=rng, final_scale=0.1)
        opt = Adam(net.params(), lr)
        others = [s for s in (1, 2, 3, 4, 5) if s != skill]
        for _ in range(steps):
            ps, psn = refs.sample_transitions(skill, batch // 2, rng)
            neg_skill = int(rng.choice(others))
            ns, nsn = refs.sample_transitions(neg_skill, batch // 2, rng)
            pos = Tensor(np.concatenate([ps, psn], axis=-1), requires_grad=True)
            neg = Tensor(np.concatenate([ns, nsn], axis=-1))
            d_pos = tape.clip(tape.sigmoid(net.forward(pos)), PROB_CLAMP, 1 - PROB_CLAMP)
            d_neg = tape.clip(tape.sigmoid(net.forward(neg)), PROB_CLAMP, 1 - PROB_CLAMP)
            bce = -tape.tmean(tape.tlog(d_pos)) - tape.tmean(tape.tlog(Tensor(1.0) - d_neg))
            gx = grad_of(tape.tsum(d_pos), [pos], create_graph=True)[0]
            loss = bce + Tensor(gp_weight) * tape.tmean(tape.tsum(gx * gx, axis=1))
            opt.step([g.data for g in grad_of(loss, net.params())])
        nets[skill] = net
    return EvalDiscriminatorSet(nets)


@dataclass
class StrikeSegment:
    """State-transition sequence of one strike and its commanded skill."""

    states: np.ndarray  # (T, ds), T >= 2
    commanded_skill: int

    def transitions(self) -> np.ndarray:
        return np.concatenate([self.states[:-1], self.states[1:]], axis=-1)


def discriminator_score(
    eval_set: EvalDiscriminatorSet, skill: int, segment: StrikeSegment
) -> float:
    """Mean of -log(1 - D_i) over the segment's transitions."""
    if segment.states.shape[0] < 2:
        raise ValueError("segment needs at least two states")
    d = eval_set.score_transitions(skill, segment.transitions())
    d = np.clip(d, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.mean(-np.log(1.0 - d)))


def classify_skill(
    segment: StrikeSegment, eval_set: EvalDiscriminatorSet, tie_log: list | None = None
) -> int:
    """Index of the highest-scoring discriminator; ties break low and are
    reported through `tie_log`."""
    scores = np.array(
        [discriminator_score(eval_set, s, segment) for s in (1, 2, 3, 4, 5)]
    )
    best = float(scores.max())
    winners = np.flatnonzero(np.isclose(scores, best, rtol=0.0, atol=1e-12))
    if len(winners) > 1 and tie_log is not None:
        tie_log.append({"scores": scores.tolist(), "chosen": int(winners[0]) + 1})
    return int(winners[0]) + 1


def skill_accuracy(segments: list[StrikeSegment], eval_set: EvalDiscriminatorSet) -> float:
    if not segments:
        raise ValueError("no segments")
    hits = sum(1 for seg in segments if classify_skill(seg, eval_set) == seg.commanded_skill)
    return hits / len(segments)


def diversity_score(hit_states_by_command: dict[int, np.ndarray]) -> float:
    """Mean pairwise contact-state distance between each drive command and
    its paired push command: (1/(2 N^2)) sum over both hands of the full
    cross sum of distances. Requires N states per command for the four
    drive/push commands (forehand 1 vs 2, backhand 4 vs 5)."""
    pairs = ((1, 2), (4, 5))
    for pair in pairs:
        for s in pair:
            if s not in hit_states_by_command or len(hit_states_by_command[s]) == 0:
                raise ValueError(f"missing contact states for command {s}")
    n = len(next(iter(hit_states_by_command.values())))
    total = 0.0
    for a, b in pairs:
        sa = np.asarray(hit_states_by_command[a])
        sb = np.asarray(hit_states_by_command[b])
        if len(sa) != n or len(sb) != n:
            raise ValueError("every command needs the same number of contact states")
        diff = sa[:, None, :] - sb[None, :, :]
        total += float(np.sqrt((diff**2).sum(-1)).sum())
    return total / (2.0 * n * n)


def within_skill_spread(hit_states_by_command: dict[int, np.ndarray]) -> float:
    """Mean pairwise distance of contact states within each drive/push
    command (the comparison baseline for the diversity score)."""
    total = 0.0
    count = 0
    for s in (1, 2, 4, 5):
        states = np.asarray(hit_states_by_command[s])
        n = len(states)
        diff = states[:, None, :] - states[None, :, :]
        total += float(np.sqrt((diff**2).sum(-1)).sum()) / (n * n)
        count += 1
    return total / count


def task_metrics(rally_logs: list) -> tuple[float, float]:
    """(average hits per rally, mean distance between commanded target and
    the actual landing of the stroke)."""
    hits = [log.hit_count for log in rally_logs]
    errors = []
    for log in rally_logs:
        for side in (0, 1):
            lands = log.landings[side]
            targets = log.commanded_targets[side]
            for land, tgt in zip(lands, targets):
                errors.append(math.hypot(land[0] - tgt[0], land[1] - tgt[1]))
    avg_hits = float(np.mean(hits)) if hits else 0.0
    avg_error = float(np.mean(errors)) if errors else float("nan")
    return avg_hits, avg_error


@dataclass
class StrategyReport:
    """Per-iteration strategy evaluation with histogram/scatter data."""

    rows: list[dict] = field(default_factory=list)
    skill_histogram: np.ndarray = field(default_factory=lambda: np.zeros(5, dtype=np.int64))
    landing_scatter: list = field(default_factory=list)

    def table_text(self) -> str:
        if not self.rows:
            return "iteration\n"
        cols = ["iteration"] + [k for k in self.rows[0] if k != "iteration"]
        lines = ["\t".join(cols)]
        for row in self.rows:
            lines.append(
                "\t".join(
                    f"{row.get(c, ''):.4f}" if isinstance(row.get(c), float) else str(row.get(c, ""))
                    for c in cols
                )
            )
        return "\n".join(lines) + "\n"


def strategy_report(per_iteration_stats: list[dict], match_stats=None) -> StrategyReport:
    if not per_iteration_stats:
        raise ValueError("need at least one iteration of stats")
    report = StrategyReport(rows=list(per_iteration_stats))
    if match_stats is not None:
        report.skill_histogram = match_stats.skill_histogram[0].copy()
        report.landing_scatter = list(match_stats.landing_points)
    return report
