"""Stage orchestration over a run directory.

Layout: <run>/refs/, <run>/models/, <run>/logs/, <run>/reports/. Every
stage writes its artifacts and a columnar metrics file; re-running a stage
with the same config and seed reproduces identical outputs.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import numpy as np

from .config import RunConfig
from .control import (
    ControlStack,
    train_ball_control,
    train_mixer,
    train_transition_policy,
)
from .imitation import ImitationTrainer
from .match import AgentAgentEnv, PointRunner, play_match
from .metrics import train_eval_discriminators
from .refs import ReferenceSet
from .strategy import (
    CvaeStrategy,
    FilterMode,
    RandomStrategy,
    iterative_bc,
    train_rl_strategy,
)
from . import persist


class MissingArtifactError(FileNotFoundError):
    """A stage prerequisite has not been produced yet."""


class RunDir:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        for sub in ("refs", "models", "logs", "reports"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    def refs_path(self) -> Path:
        return self.root / "refs" / "references.pptt"

    def models(self) -> Path:
        return self.root / "models"

    def require(self, path: Path, produced_by: str) -> Path:
        if not path.exists():
            raise MissingArtifactError(
                f"missing {path.name}; run the '{produced_by}' stage first"
            )
        return path

    def write_curve(self, name: str, rows: list[dict]) -> Path:
        path = self.root / "logs" / f"{name}.tsv"
        if rows:
            cols = list(rows[0].keys())
            with open(path, "w") as fh:
                fh.write("\t".join(cols) + "\n")
                for row in rows:
                    fh.write(
                        "\t".join(
                            f"{row.get(c):.6g}" if isinstance(row.get(c), float) else str(row.get(c))
                            for c in cols
                        )
                        + "\n"
                    )
        return path

    def write_report(self, name: str, payload: dict) -> Path:
        path = self.root / "reports" / f"{name}.json"
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        return path


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not jsonable: {type(v)}")


def stage_gen_refs(run: RunDir, cfg: RunConfig, seed: int | None = None) -> ReferenceSet:
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    refs = ReferenceSet.generate(rng, cfg.references, cfg.sim, embed_dim=cfg.nets.latent_dim)
    persist.save_reference_set(run.refs_path(), refs, cfg.digest())
    return refs


def load_refs(run: RunDir, cfg: RunConfig) -> ReferenceSet:
    run.require(run.refs_path(), "gen-refs")
    return persist.load_reference_set(run.refs_path(), cfg.sim)


def stage_train_imitation(
    run: RunDir, cfg: RunConfig, skills: list | None = None, seed: int | None = None
) -> None:
    refs = load_refs(run, cfg)
    base_seed = cfg.seed if seed is None else seed
    todo = skills if skills is not None else [1, 2, 3, 4, 5, None]
    for skill in todo:
        rng = np.random.default_rng(base_seed * 1000 + (0 if skill is None else skill))
        trainer = ImitationTrainer(
            skill, refs, cfg.sim, cfg.nets, cfg.ppo, cfg.imitation, rng
        )
        bundle = trainer.train()
        tag = "universal" if skill is None else f"s{skill}"
        persist.save_bundle(run.models() / f"imitation_{tag}.pptt", bundle, cfg.digest())
        run.write_curve(f"imitation_{tag}", bundle.curve)


def _load_bundles(run: RunDir, cfg: RunConfig) -> tuple[dict, object]:
    bundles = {}
    for s in (1, 2, 3, 4, 5):
        path = run.require(run.models() / f"imitation_s{s}.pptt", "train-imitation")
        bundles[s] = persist.load_bundle(path)
    upath = run.require(run.models() / "imitation_universal.pptt", "train-imitation")
    return bundles, persist.load_bundle(upath)


def stage_train_ball_control(
    run: RunDir, cfg: RunConfig, skills: list[int] | None = None, seed: int | None = None
) -> None:
    refs = load_refs(run, cfg)
    bundles, universal = _load_bundles(run, cfg)
    base_seed = cfg.seed if seed is None else seed
    for skill in skills or [1, 2, 3, 4, 5]:
        rng = np.random.default_rng(base_seed * 2000 + skill)
        bc = train_ball_control(
            skill, bundles[skill], cfg.sim, cfg.nets, cfg.ppo, cfg.ball_control, rng,
            refs=refs,
        )
        persist.save_ball_control(run.models() / f"ballctl_s{skill}.pptt", bc, cfg.digest())
        run.write_curve(f"ballctl_s{skill}", bc.curve)


def stage_train_mixer(run: RunDir, cfg: RunConfig, seed: int | None = None) -> None:
    stack = load_stack_stage(run, cfg, need_mixer=False)
    rng = np.random.default_rng((cfg.seed if seed is None else seed) * 3000 + 77)
    mixer = train_mixer(
        stack, cfg.sim, cfg.nets, cfg.ppo, cfg.ball_control, cfg.mixer, rng
    )
    persist.save_mixer(run.models() / "mixer.pptt", mixer, cfg.digest())
    run.write_curve("mixer", mixer.curve)


def stage_train_transition(run: RunDir, cfg: RunConfig, seed: int | None = None) -> None:
    refs = load_refs(run, cfg)
    _, universal = _load_bundles(run, cfg)
    rng = np.random.default_rng((cfg.seed if seed is None else seed) * 4000 + 9)
    tp = train_transition_policy(
        universal, cfg.sim, cfg.nets, cfg.ppo, cfg.ball_control, rng, refs=refs
    )
    persist.save_ball_control(run.models() / "transition.pptt", tp, cfg.digest())


def load_stack_stage(run: RunDir, cfg: RunConfig, need_mixer: bool = True) -> ControlStack:
    bundles, universal = _load_bundles(run, cfg)
    ball_controls = {}
    for s in (1, 2, 3, 4, 5):
        path = run.require(run.models() / f"ballctl_s{s}.pptt", "train-ball-control")
        ball_controls[s] = persist.load_ball_control(path)
    mixer = None
    mixer_path = run.models() / "mixer.pptt"
    if mixer_path.exists():
        mixer = persist.load_mixer(mixer_path)
    elif need_mixer:
        raise MissingArtifactError("missing mixer.pptt; run the 'train-mixer' stage first")
    return ControlStack(bundles, universal, ball_controls, mixer)


def make_env(
    run: RunDir, cfg: RunConfig, opponent: str = "random"
) -> AgentAgentEnv:
    stack = load_stack_stage(run, cfg)
    if opponent == "random":
        opp = RandomStrategy(cfg.ball_control)
    elif opponent.startswith("model:"):
        opp = CvaeStrategy(persist.load_cvae(opponent.split(":", 1)[1]))
    else:
        raise ValueError(f"unknown opponent spec {opponent!r}")
    return AgentAgentEnv(stack, opp, cfg.sim, cfg.ball_control, cfg.match)


def stage_train_strategy(
    run: RunDir,
    cfg: RunConfig,
    mode: str,
    iterations: int,
    opponent: str = "random",
    seed: int | None = None,
    eval_points: int | None = None,
) -> list[dict]:
    env = make_env(run, cfg, opponent)
    rng = np.random.default_rng((cfg.seed if seed is None else seed) * 5000 + 13)
    log: list[dict] = []
    model = iterative_bc(
        env, iterations, FilterMode(mode), cfg.nets, cfg.strategy, rng,
        eval_points=eval_points, log=log,
    )
    persist.save_cvae(run.models() / f"strategy_{mode}.pptt", model, cfg.digest())
    run.write_curve(f"strategy_{mode}", log)
    run.write_report(f"strategy_{mode}", {"iterations": log})
    return log


def stage_train_rl_strategy(
    run: RunDir, cfg: RunConfig, mode: str, opponent: str = "random",
    seed: int | None = None, n_updates: int = 25,
) -> None:
    env = make_env(run, cfg, opponent)
    rng = np.random.default_rng((cfg.seed if seed is None else seed) * 6000 + 21)
    strat = train_rl_strategy(
        env, FilterMode(mode), cfg.nets, cfg.ppo, cfg.strategy, rng, n_updates=n_updates
    )
    persist.save_rl_strategy(run.models() / f"rl_strategy_{mode}.pptt", strat, cfg.digest())


def stage_eval_discriminators(run: RunDir, cfg: RunConfig, seed: int | None = None):
    refs = load_refs(run, cfg)
    rng = np.random.default_rng((cfg.seed if seed is None else seed) * 7000 + 3)
    eval_set = train_eval_discriminators(refs, cfg.nets, rng)
    persist.save_eval_discriminators(run.models() / "eval_discs.pptt", eval_set, cfg.digest())
    return eval_set


def stage_eval_skills(run: RunDir, cfg: RunConfig, n_launches: int = 1000, seed: int = 4242) -> dict:
    from .control import collect_strike_segments, evaluate_return_task
    from .metrics import diversity_score, skill_accuracy, within_skill_spread

    stack = load_stack_stage(run, cfg)
    discs_path = run.models() / "eval_discs.pptt"
    if discs_path.exists():
        eval_set = persist.load_eval_discriminators(discs_path)
    else:
        eval_set = stage_eval_discriminators(run, cfg)

    segments, contacts = collect_strike_segments(
        stack, cfg.sim, cfg.ball_control, seed, n_launches
    )
    acc = skill_accuracy(segments, eval_set)
    n_min = min(len(contacts[s]) for s in (1, 2, 4, 5))
    clipped = {s: np.stack(contacts[s][:n_min]) for s in (1, 2, 4, 5) if n_min > 0}
    div = diversity_score(clipped) if n_min > 0 else float("nan")
    spread = within_skill_spread(clipped) if n_min > 0 else float("nan")
    ret = evaluate_return_task(stack, None, cfg.sim, cfg.ball_control, seed=seed + 1,
                               n_launches=max(200, n_launches // 4))
    payload = {
        "skill_accuracy": acc,
        "diversity_score": div,
        "within_skill_spread": spread,
        "return_rate": ret["return_rate"],
        "landing_error": ret["landing_error"],
        "segments": len(segments),
    }
    run.write_report("skills", payload)
    return payload


def stage_eval_strategy(
    run: RunDir, cfg: RunConfig, model_a: str, model_b: str, n_points: int | None = None,
    seed: int = 99,
) -> dict:
    """Head-to-head between two saved strategies (cvae or rl files)."""
    stack = load_stack_stage(run, cfg)
    runner = PointRunner(stack, stack, cfg.sim, cfg.ball_control, cfg.match)

    def load_any(path: str):
        from .persist import load_file

        kind = load_file(path).kind
        if kind == "cvae_strategy":
            return CvaeStrategy(persist.load_cvae(path))
        if kind == "rl_strategy":
            return persist.load_rl_strategy(path)
        raise persist.UnsupportedKindError(f"not a strategy file: {path} ({kind})")

    a = load_any(model_a)
    b = load_any(model_b)
    rng = np.random.default_rng(seed)
    stats, _ = play_match(runner, a, b, n_points or cfg.match.points_per_eval, rng)
    wr = stats.winning_rate
    payload = {
        "winning_rate_a": wr[0],
        "winning_rate_b": wr[1],
        "avg_rounds": stats.avg_rounds,
        "lets": stats.lets,
        "points": stats.points,
    }
    run.write_report("head_to_head", payload)
    return payload


def train_full_stack(run: RunDir, cfg: RunConfig, log=print) -> ControlStack:
    """The whole skill pipeline: references, imitation, ball control, mixer."""
    t0 = time.time()
    stage_gen_refs(run, cfg)
    log(f"[{time.time()-t0:6.1f}s] references generated")
    stage_train_imitation(run, cfg)
    log(f"[{time.time()-t0:6.1f}s] imitation bundles trained")
    stage_train_ball_control(run, cfg)
    log(f"[{time.time()-t0:6.1f}s] ball-control policies trained")
    stage_train_mixer(run, cfg)
    log(f"[{time.time()-t0:6.1f}s] mixer trained")
    return load_stack_stage(run, cfg)
