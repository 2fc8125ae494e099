"""Adam with bias correction."""

from __future__ import annotations

import numpy as np

from .tape import Tensor


class NonFiniteGradError(RuntimeError):
    """A gradient contained NaN/inf; the step was skipped."""


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    lr: float,
    state: dict,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> list[np.ndarray]:
    """One functional Adam update; `state` carries (m, v, t) across calls."""
    if "m" not in state:
        state["m"] = [np.zeros_like(p) for p in params]
        state["v"] = [np.zeros_like(p) for p in params]
        state["t"] = 0
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradError("non-finite gradient; update skipped")
    state["t"] += 1
    t = state["t"]
    out = []
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if p.shape != g.shape:
            raise ValueError(f"param/grad shape mismatch: {p.shape} vs {g.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        out.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
    return out


class Adam:
    """Stateful wrapper updating tape parameters in place."""

    def __init__(self, params: list[Tensor], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state: dict = {}

    def step(self, grads: list[np.ndarray]) -> None:
        new = adam_step(
            [p.data for p in self.params],
            grads,
            self.lr,
            self.state,
            self.beta1,
            self.beta2,
            self.eps,
        )
        for p, n in zip(self.params, new):
            p.data = n
