"""Command-line workflow chaining the training stages.

Every command takes --run (the run directory; default from DESKPONG_RUN_ROOT
or ./runs/default), --config (YAML overrides), --preset and --seed, writes
artifacts and metric files under the run directory, and exits non-zero with
an actionable message when a prerequisite stage has not been run.
"""

from __future__ import annotations

import os
import sys

import click
import numpy as np

from .config import ConfigError, RunConfig, preset as make_preset
from .pipeline import (
    MissingArtifactError,
    RunDir,
    load_refs,
    load_stack_stage,
    make_env,
    stage_eval_discriminators,
    stage_eval_skills,
    stage_eval_strategy,
    stage_gen_refs,
    stage_train_ball_control,
    stage_train_imitation,
    stage_train_mixer,
    stage_train_rl_strategy,
    stage_train_strategy,
    stage_train_transition,
)


def _default_run() -> str:
    root = os.environ.get("DESKPONG_RUN_ROOT", os.path.join(".", "runs"))
    return os.path.join(root, "default")


def _load_cfg(preset_name: str, config_path: str | None, seed: int | None) -> RunConfig:
    cfg = make_preset(preset_name)
    if config_path:
        with open(config_path) as fh:
            cfg = RunConfig.from_yaml(fh.read())
    if seed is not None:
        cfg.seed = seed
    return cfg


def common_options(fn):
    fn = click.option("--run", "run_dir", default=_default_run, help="run directory")(fn)
    fn = click.option("--preset", default="desk", help="config preset: desk or paper")(fn)
    fn = click.option("--config", "config_path", default=None, help="YAML config file")(fn)
    fn = click.option("--seed", type=int, default=None, help="override config seed")(fn)
    return fn


@click.group()
def main():
    """deskpong: table-tennis control stack workbench."""


def _stage(fn):
    """Shared error handling: missing artifacts exit 2 with the stage name."""

    def wrapper(run_dir, preset, config_path, seed, **kwargs):
        try:
            cfg = _load_cfg(preset, config_path, seed)
            run = RunDir(run_dir)
            fn(run, cfg, **kwargs)
        except (MissingArtifactError, ConfigError, FileNotFoundError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)

    wrapper.__name__ = fn.__name__
    return wrapper


@main.command("gen-refs")
@common_options
@_stage
def gen_refs(run, cfg):
    refs = stage_gen_refs(run, cfg)
    click.echo(f"generated {len(refs.clips)} clips -> {run.refs_path()}")


@main.command("train-imitation")
@click.option("--skill", type=str, default="all", help="1..5, universal, or all")
@common_options
@_stage
def train_imitation(run, cfg, skill):
    if skill == "all":
        skills = None
    elif skill == "universal":
        skills = [None]
    else:
        skills = [int(skill)]
    stage_train_imitation(run, cfg, skills)
    click.echo("imitation bundles written")


@main.command("train-ball-control")
@click.option("--skill", type=str, default="all")
@common_options
@_stage
def train_ball_control_cmd(run, cfg, skill):
    skills = None if skill == "all" else [int(skill)]
    stage_train_ball_control(run, cfg, skills)
    click.echo("ball-control policies written")


@main.command("train-mixer")
@common_options
@_stage
def train_mixer_cmd(run, cfg):
    stage_train_mixer(run, cfg)
    click.echo("mixer written")


@main.command("train-transition")
@common_options
@_stage
def train_transition_cmd(run, cfg):
    stage_train_transition(run, cfg)
    click.echo("transition policy written")


@main.command("train-strategy")
@click.option("--mode", type=click.Choice(["competition", "cooperation"]), default="competition")
@click.option("--iterations", "-N", type=int, default=3)
@click.option("--opponent", default="random", help="random or model:<path>")
@click.option("--eval-points", type=int, default=None)
@common_options
@_stage
def train_strategy_cmd(run, cfg, mode, iterations, opponent, eval_points):
    log = stage_train_strategy(run, cfg, mode, iterations, opponent, eval_points=eval_points)
    for row in log:
        click.echo(
            f"iteration {row['iteration']}: winning_rate={row['winning_rate']:.3f} "
            f"avg_rounds={row['avg_rounds']:.2f}"
        )


@main.command("train-rl-strategy")
@click.option("--mode", type=click.Choice(["competition", "cooperation"]), default="competition")
@click.option("--opponent", default="random")
@click.option("--updates", type=int, default=25)
@common_options
@_stage
def train_rl_strategy_cmd(run, cfg, mode, opponent, updates):
    stage_train_rl_strategy(run, cfg, mode, opponent, n_updates=updates)
    click.echo("RL strategy written")


@main.command("eval-skills")
@click.option("--launches", type=int, default=1000)
@common_options
@_stage
def eval_skills_cmd(run, cfg, launches):
    payload = stage_eval_skills(run, cfg, n_launches=launches)
    for key, value in payload.items():
        click.echo(f"{key}: {value}")


@main.command("eval-strategy")
@click.argument("model_a")
@click.argument("model_b")
@click.option("--points", type=int, default=None)
@common_options
@_stage
def eval_strategy_cmd(run, cfg, model_a, model_b, points):
    payload = stage_eval_strategy(run, cfg, model_a, model_b, n_points=points)
    click.echo(
        f"winning rates: {payload['winning_rate_a']:.3f} vs {payload['winning_rate_b']:.3f} "
        f"(decided {payload['points'] - payload['lets']}, lets {payload['lets']})"
    )


@main.command("play")
@click.option("--points", type=int, default=100)
@click.option("--strategy-a", default=None, help="path to a strategy file (default random)")
@click.option("--strategy-b", default=None)
@common_options
@_stage
def play_cmd(run, cfg, points, strategy_a, strategy_b):
    from .match import PointRunner, play_match
    from .strategy import CvaeStrategy, RandomStrategy
    from . import persist

    stack = load_stack_stage(run, cfg)
    runner = PointRunner(stack, stack, cfg.sim, cfg.ball_control, cfg.match)

    def pick(path):
        if path is None:
            return RandomStrategy(cfg.ball_control)
        return CvaeStrategy(persist.load_cvae(path))

    stats, _ = play_match(
        runner, pick(strategy_a), pick(strategy_b), points, np.random.default_rng(cfg.seed)
    )
    wr = stats.winning_rate
    click.echo(
        f"points={stats.points} decided={stats.decided} lets={stats.lets} "
        f"winning_rate={wr[0]:.3f}/{wr[1]:.3f} avg_rounds={stats.avg_rounds:.2f}"
    )


@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8800)
@click.option("--strategy", "strategy_path", default=None)
@common_options
@_stage
def serve_cmd(run, cfg, host, port, strategy_path):
    import uvicorn

    from . import persist
    from .service import ServiceHub, build_app

    stack = load_stack_stage(run, cfg)
    strategy = None
    if strategy_path:
        strategy = persist.load_cvae(strategy_path)
    else:
        default = run.models() / "strategy_competition.pptt"
        if default.exists():
            strategy = persist.load_cvae(default)
    refs = load_refs(run, cfg)
    hub = ServiceHub(cfg, stack, strategy, refs=refs)
    app = build_app(hub)
    click.echo(f"play service on http://{host}:{port} (health: /health)")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command("report")
@common_options
@_stage
def report_cmd(run, cfg):
    import json

    reports = sorted((run.root / "reports").glob("*.json"))
    if not reports:
        click.echo("no reports yet; run eval stages first")
        return
    for path in reports:
        click.echo(f"== {path.name}")
        payload = json.loads(path.read_text())
        for key, value in payload.items():
            if isinstance(value, (int, float, str)):
                click.echo(f"  {key}: {value}")


if __name__ == "__main__":
    main()
