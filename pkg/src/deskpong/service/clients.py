"""Scripted clients: deterministic stand-ins for a human player, so every
service test runs without a browser. They speak the wire schema through a
send/receive callback pair (works with any WebSocket-like transport)."""

from __future__ import annotations

import json

import numpy as np

from ..config import RunConfig
from ..control import predict_interception
from ..sim import BallState, predict_landing

HUMAN_REST = np.array([1.05, 0.0, 1.0])


class ScriptedClient:
    """Base: consumes frames, produces paddle poses at the frame rate."""

    def __init__(self, cfg: RunConfig, seed: int = 0):
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.t = 0.0
        self.frames_seen = 0

    def pose_for_frame(self, frame: dict) -> np.ndarray:
        raise NotImplementedError

    def messages_for_frame(self, frame: dict) -> list[str]:
        """Wire messages to send in response to one state frame."""
        self.frames_seen += 1
        out = []
        if frame.get("state") in ("lobby", "point_over"):
            out.append(json.dumps({"type": "serve"}))
        pos = self.pose_for_frame(frame)
        self.t += 1.0
        out.append(
            json.dumps(
                {"type": "paddle", "t": self.t, "pos": list(map(float, pos)), "quat": [1, 0, 0, 0]}
            )
        )
        return out


class StationaryClient(ScriptedClient):
    """Never moves; every reachable ball goes unanswered."""

    def pose_for_frame(self, frame: dict) -> np.ndarray:
        return HUMAN_REST


class PerfectReturnClient(ScriptedClient):
    """Moves the paddle onto the incoming ball's predicted path (the pose
    target; the server-side velocity controller does the actual motion)."""

    def __init__(self, cfg: RunConfig, seed: int = 0, noise: float = 0.0, plane_x: float = 0.95):
        super().__init__(cfg, seed)
        self.noise = noise
        self.plane_x = plane_x

    def pose_for_frame(self, frame: dict) -> np.ndarray:
        ball = np.asarray(frame["ball"], dtype=np.float64)
        p, v = ball[:3], ball[3:]
        if v[0] <= 0.05:
            return HUMAN_REST
        # mirror into the near-side convention used by the predictor
        hit = predict_interception(
            p * np.array([-1.0, 1.0, 1.0]),
            v * np.array([-1.0, 1.0, 1.0]),
            self.cfg.sim,
            -self.plane_x,
        )
        if hit is None:
            return HUMAN_REST
        _, y_hit, z_hit = hit
        target = np.array([self.plane_x, y_hit, max(z_hit, self.cfg.sim.table_height + 0.03)])
        if self.noise > 0.0:
            target = target + self.rng.normal(0.0, self.noise, 3)
        return target


class NoisyReturnClient(PerfectReturnClient):
    def __init__(self, cfg: RunConfig, seed: int = 0, noise: float = 0.12):
        super().__init__(cfg, seed, noise=noise)


class FuzzClient(ScriptedClient):
    """Sends garbage: random bytes, wrong types, out-of-order timestamps."""

    def pose_for_frame(self, frame: dict) -> np.ndarray:
        return HUMAN_REST

    def messages_for_frame(self, frame: dict) -> list[str]:
        self.frames_seen += 1
        r = self.rng.random()
        if r < 0.2:
            return ["{not json at all"]
        if r < 0.4:
            return [json.dumps({"type": "paddle", "pos": "nope", "t": -1})]
        if r < 0.6:
            return [json.dumps({"type": "mystery", "payload": [1, 2, 3]})]
        if r < 0.8:
            n = self.rng.integers(1, 40)
            return ["".join(chr(int(c)) for c in self.rng.integers(32, 1000, n))]
        return [json.dumps({"type": "paddle", "t": 0.0, "pos": [1e9, None, float("nan")] })]
