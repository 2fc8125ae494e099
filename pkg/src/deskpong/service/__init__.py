from .app import ServiceHub, build_app
from .clients import (
    FuzzClient,
    NoisyReturnClient,
    PerfectReturnClient,
    ScriptedClient,
    StationaryClient,
)
from .finetune import (
    InsufficientDataError,
    adapt_skill_stack,
    estimate_return_distribution,
    finetune_strategy,
)
from .session import Session, SessionState, SessionStats

__all__ = [
    "ServiceHub",
    "build_app",
    "ScriptedClient",
    "StationaryClient",
    "PerfectReturnClient",
    "NoisyReturnClient",
    "FuzzClient",
    "InsufficientDataError",
    "adapt_skill_stack",
    "estimate_return_distribution",
    "finetune_strategy",
    "Session",
    "SessionState",
    "SessionStats",
]
