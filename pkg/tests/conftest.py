"""Shared fixtures.

The trained-stack fixtures build the full desk pipeline once and cache the
artifacts under .cache/ keyed by the config digest, so repeated test runs
(and the acceptance suite) reuse them. Deleting .cache forces a rebuild.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from deskpong.config import preset
from deskpong.pipeline import (
    RunDir,
    load_refs,
    load_stack_stage,
    stage_eval_discriminators,
    stage_gen_refs,
    train_full_stack,
)

CACHE_ROOT = Path(__file__).resolve().parent.parent / ".cache"


def desk_config():
    return preset("desk")


@pytest.fixture(scope="session")
def desk_cfg():
    return desk_config()


@pytest.fixture(scope="session")
def desk_run(desk_cfg):
    """A fully trained desk-budget run directory (cached across sessions)."""
    run_root = CACHE_ROOT / f"stack-{desk_cfg.digest()}"
    marker = run_root / "reports" / "pipeline_done.json"
    run = RunDir(run_root)
    if not marker.exists():
        train_full_stack(run, desk_cfg)
        stage_eval_discriminators(run, desk_cfg)
        run.write_report("pipeline_done", {"digest": desk_cfg.digest()})
    return run


@pytest.fixture(scope="session")
def desk_stack(desk_run, desk_cfg):
    return load_stack_stage(desk_run, desk_cfg)


@pytest.fixture(scope="session")
def desk_refs(desk_run, desk_cfg):
    return load_refs(desk_run, desk_cfg)


@pytest.fixture(scope="session")
def tiny_refs():
    """Small reference corpus for unit tests (fast to generate)."""
    from deskpong.config import ReferenceConfig
    from deskpong.refs import ReferenceSet

    return ReferenceSet.generate(np.random.default_rng(0), ReferenceConfig(clips_per_skill=40))
